//! REMI token sequences: bar and position tokens place every event on the
//! metrical grid.
//!
//! Within a bar, occupied positions come in ascending order. A position is
//! followed by its tempo change, then its chord change, then its notes in
//! descending pitch, each note as pitch, duration and (piano only) velocity.
//! The conditional layout interleaves a lead-sheet track and a piano track
//! bar by bar.

use std::fmt;

use thiserror::Error;

use crate::symbolic::{ChordEvent, LeadSheet, MelodyNote, Note, Onset, Song, TempoEvent};
use crate::vocab::{Task, Token, TrackKind, Vocabulary};

/// Reference cap on REMI length per song.
pub const DEFAULT_MAX_REMI_LEN: usize = 10_240;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemiError {
    #[error("token {index}: {reason}")]
    Grammar { index: usize, reason: String },
    #[error("sequence of {len} tokens exceeds the cap of {cap}")]
    TooLong { len: usize, cap: usize },
    #[error("token {token} is outside the vocabulary: {reason}")]
    Value { token: String, reason: String },
    #[error("lead sheet has {lead} bars but piano has {piano}")]
    BarMismatch { lead: u32, piano: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub task: Task,
    pub tokens: Vec<Token>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn from_text(text: &str, task: Task) -> Result<Self, crate::vocab::VocabError> {
        let tokens = text
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<Vec<Token>, _>>()?;
        Ok(Self { task, tokens })
    }

    pub fn to_ids(&self, vocab: &Vocabulary) -> Result<Vec<u32>, crate::vocab::VocabError> {
        self.tokens.iter().map(|&t| vocab.token_to_id(t)).collect()
    }

    pub fn from_ids(ids: &[u32], vocab: &Vocabulary) -> Result<Self, crate::vocab::VocabError> {
        Ok(Self {
            task: vocab.task,
            tokens: ids.iter().map(|&i| vocab.id_to_token(i)).collect::<Result<_, _>>()?,
        })
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Which optional token kinds a track carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Style {
    pub tempo: bool,
    pub velocity: bool,
}

pub(crate) const PIANO: Style = Style {
    tempo: true,
    velocity: true,
};
pub(crate) const LEAD: Style = Style {
    tempo: false,
    velocity: false,
};

fn check(vocab: &Vocabulary, token: Token) -> Result<Token, RemiError> {
    vocab.token_to_id(token).map_err(|e| RemiError::Value {
        token: token.to_string(),
        reason: e.to_string(),
    })?;
    Ok(token)
}

/// Tokens of one bar of `song` (without the leading bar token).
fn bar_content(song: &Song, bar: u32, style: Style, vocab: &Vocabulary, out: &mut Vec<Token>) -> Result<(), RemiError> {
    let ranges = &vocab.ranges;
    let in_bar = |o: Onset| o.bar == bar;
    let notes: Vec<&Note> = song.notes.iter().filter(|n| in_bar(n.onset)).collect();
    let tempos: Vec<&TempoEvent> = if style.tempo {
        song.tempos.iter().filter(|t| in_bar(t.onset)).collect()
    } else {
        Vec::new()
    };
    let chords: Vec<&ChordEvent> = song.chords.iter().filter(|c| in_bar(c.onset)).collect();
    let mut positions: Vec<u32> = notes
        .iter()
        .map(|n| n.onset.pos)
        .chain(tempos.iter().map(|t| t.onset.pos))
        .chain(chords.iter().map(|c| c.onset.pos))
        .collect();
    positions.sort_unstable();
    positions.dedup();
    for pos in positions {
        out.push(check(vocab, Token::Position(pos as u8))?);
        if let Some(t) = tempos.iter().find(|t| t.onset.pos == pos) {
            out.push(check(vocab, Token::Tempo(t.class))?);
        }
        if let Some(c) = chords.iter().find(|c| c.onset.pos == pos) {
            out.push(check(vocab, Token::Chord(c.label))?);
        }
        let mut here: Vec<&&Note> = notes.iter().filter(|n| n.onset.pos == pos).collect();
        here.sort_by(|a, b| b.pitch.cmp(&a.pitch));
        for n in here {
            out.push(check(vocab, Token::Pitch(n.pitch))?);
            out.push(check(vocab, Token::Duration(n.duration))?);
            if style.velocity {
                out.push(check(vocab, Token::Velocity(ranges.velocity_class(n.velocity)))?);
            }
        }
    }
    Ok(())
}

pub fn encode_remi(song: &Song, vocab: &Vocabulary) -> Result<TokenSeq, RemiError> {
    encode_remi_capped(song, vocab, None)
}

pub fn encode_remi_capped(song: &Song, vocab: &Vocabulary, cap: Option<usize>) -> Result<TokenSeq, RemiError> {
    let mut tokens = Vec::new();
    for bar in 0..song.n_bars {
        tokens.push(Token::Bar);
        bar_content(song, bar, PIANO, vocab, &mut tokens)?;
        if let Some(cap) = cap {
            if tokens.len() > cap {
                return Err(RemiError::TooLong { len: tokens.len(), cap });
            }
        }
    }
    Ok(TokenSeq {
        task: Task::Unconditional,
        tokens,
    })
}

/// Interleaves lead sheet and piano bar by bar:
/// `bar, track=leadsheet, <lead bar>, track=piano, <piano bar>, bar, ...`.
pub fn interleave_conditional(lead: &LeadSheet, piano: &Song, vocab: &Vocabulary) -> Result<TokenSeq, RemiError> {
    if lead.n_bars != piano.n_bars {
        return Err(RemiError::BarMismatch {
            lead: lead.n_bars,
            piano: piano.n_bars,
        });
    }
    let lead_song = lead.as_song();
    let mut tokens = Vec::new();
    for bar in 0..piano.n_bars {
        tokens.push(Token::Bar);
        tokens.push(Token::Track(TrackKind::LeadSheet));
        bar_content(&lead_song, bar, LEAD, vocab, &mut tokens)?;
        tokens.push(Token::Track(TrackKind::Piano));
        bar_content(piano, bar, PIANO, vocab, &mut tokens)?;
    }
    Ok(TokenSeq {
        task: Task::Conditional,
        tokens,
    })
}

/// Incremental REMI grammar state for one track.
#[derive(Debug, Clone, Default)]
pub(crate) struct TrackState {
    pub position: Option<u32>,
    pub has_tempo: bool,
    pub has_chord: bool,
    pub has_notes: bool,
    pub last_pitch: Option<u8>,
}

impl TrackState {
    pub fn new_bar(&mut self) {
        *self = TrackState::default();
    }
}

#[derive(Debug, Default)]
struct Builder {
    notes: Vec<Note>,
    tempos: Vec<TempoEvent>,
    chords: Vec<ChordEvent>,
    state: TrackState,
}

struct Decoder<'a> {
    vocab: &'a Vocabulary,
    tokens: &'a [Token],
    bar: Option<u32>,
    tracks: [Builder; 2],
    current: usize,
    interleaved: bool,
}

impl<'a> Decoder<'a> {
    fn err(index: usize, reason: impl Into<String>) -> RemiError {
        RemiError::Grammar {
            index,
            reason: reason.into(),
        }
    }

    fn style(&self) -> Style {
        if self.current == 0 {
            LEAD
        } else {
            PIANO
        }
    }

    fn run(&mut self) -> Result<(), RemiError> {
        let mut i = 0;
        while i < self.tokens.len() {
            let tok = self.tokens[i];
            check(self.vocab, tok).map_err(|e| Self::err(i, e.to_string()))?;
            match tok {
                Token::Bar => {
                    if self.interleaved && self.bar.is_some() && self.current != 1 {
                        return Err(Self::err(i, "bar ended without a piano track"));
                    }
                    self.bar = Some(self.bar.map_or(0, |b| b + 1));
                    for t in &mut self.tracks {
                        t.state.new_bar();
                    }
                    if self.interleaved {
                        self.current = 2; // expect a track token
                    }
                }
                Token::Track(kind) => {
                    if !self.interleaved {
                        return Err(Self::err(i, "track token in a single-track sequence"));
                    }
                    if self.bar.is_none() {
                        return Err(Self::err(i, "track before any bar"));
                    }
                    let want = match self.current {
                        2 => TrackKind::LeadSheet,
                        0 => TrackKind::Piano,
                        _ => return Err(Self::err(i, "unexpected track token")),
                    };
                    if kind != want {
                        return Err(Self::err(i, format!("expected {}", Token::Track(want))));
                    }
                    self.current = if kind == TrackKind::LeadSheet { 0 } else { 1 };
                }
                Token::Position(p) => {
                    self.bar.ok_or_else(|| Self::err(i, "position before any bar"))?;
                    let track = self.track_mut(i)?;
                    if track.state.position.is_some_and(|q| u32::from(p) <= q) {
                        return Err(Self::err(i, "positions must increase within a bar"));
                    }
                    track.state = TrackState {
                        position: Some(u32::from(p)),
                        ..TrackState::default()
                    };
                }
                Token::Tempo(class) => {
                    if !self.style().tempo {
                        return Err(Self::err(i, "tempo token in lead-sheet track"));
                    }
                    let onset = self.meta_onset(i, "tempo")?;
                    let track = self.track_mut(i)?;
                    if track.state.has_tempo || track.state.has_chord || track.state.has_notes {
                        return Err(Self::err(i, "tempo must directly follow its position"));
                    }
                    track.state.has_tempo = true;
                    track.tempos.push(TempoEvent { onset, class });
                }
                Token::Chord(label) => {
                    let onset = self.meta_onset(i, "chord")?;
                    let track = self.track_mut(i)?;
                    if track.state.has_chord || track.state.has_notes {
                        return Err(Self::err(i, "chord must precede the notes of its position"));
                    }
                    track.state.has_chord = true;
                    track.chords.push(ChordEvent { onset, label });
                }
                Token::Pitch(pitch) => {
                    let style = self.style();
                    let width = if style.velocity { 3 } else { 2 };
                    for j in i + 1..(i + width).min(self.tokens.len()) {
                        check(self.vocab, self.tokens[j]).map_err(|e| Self::err(j, e.to_string()))?;
                    }
                    let duration = match self.tokens.get(i + 1) {
                        Some(Token::Duration(d)) => *d,
                        _ => return Err(Self::err(i, "note missing duration")),
                    };
                    let velocity = if style.velocity {
                        match self.tokens.get(i + 2) {
                            Some(Token::Velocity(v)) => Some(*v),
                            _ => return Err(Self::err(i, "note missing velocity")),
                        }
                    } else {
                        None
                    };
                    let bar = self.bar.ok_or_else(|| Self::err(i, "note before any bar"))?;
                    let track = self.track_mut(i)?;
                    let pos = track.state.position.ok_or_else(|| Self::err(i, "note before any position"))?;
                    if track.state.last_pitch.is_some_and(|p| pitch >= p) {
                        return Err(Self::err(i, "pitches must descend within a position"));
                    }
                    track.state.last_pitch = Some(pitch);
                    track.state.has_notes = true;
                    let ranges = self.vocab.ranges;
                    let velocity = velocity.map_or(64, |v| ranges.velocity_of_class(v));
                    self.track_mut(i)?.notes.push(Note {
                        pitch,
                        onset: Onset::new(bar, pos),
                        duration,
                        velocity,
                    });
                    i += width - 1;
                }
                Token::Duration(_) => return Err(Self::err(i, "duration without a pitch")),
                Token::Velocity(_) => {
                    return Err(Self::err(
                        i,
                        if self.current == 0 {
                            "velocity token in lead-sheet track"
                        } else {
                            "velocity without a note"
                        },
                    ))
                }
                Token::Ignore(_) | Token::Conti(_) | Token::Family(_) | Token::Bos => {
                    return Err(Self::err(i, format!("{tok} is not a REMI event token")))
                }
            }
            i += 1;
        }
        Ok(())
    }

    fn track_mut(&mut self, i: usize) -> Result<&mut Builder, RemiError> {
        match self.current {
            0 | 1 => Ok(&mut self.tracks[self.current]),
            _ => Err(Self::err(i, "expected a track token after bar")),
        }
    }

    fn meta_onset(&mut self, i: usize, what: &str) -> Result<Onset, RemiError> {
        let grid = self.vocab.grid;
        let bar = self.bar.ok_or_else(|| Self::err(i, format!("{what} before any bar")))?;
        let track = self.track_mut(i)?;
        let pos = track
            .state
            .position
            .ok_or_else(|| Self::err(i, format!("{what} before any position")))?;
        if !grid.is_beat(pos) {
            return Err(Self::err(i, format!("{what} change off the beat")));
        }
        Ok(Onset::new(bar, pos))
    }
}

fn decode(seq: &TokenSeq, vocab: &Vocabulary, interleaved: bool) -> Result<(Song, Song), RemiError> {
    let mut dec = Decoder {
        vocab,
        tokens: &seq.tokens,
        bar: None,
        tracks: [Builder::default(), Builder::default()],
        current: 1,
        interleaved,
    };
    dec.run()?;
    if interleaved && dec.bar.is_some() && dec.current != 1 {
        return Err(Decoder::err(seq.tokens.len(), "sequence ends without a piano track"));
    }
    let n_bars = dec.bar.map_or(0, |b| b + 1);
    let [lead, piano] = dec.tracks;
    let to_song = |b: Builder| Song {
        grid: vocab.grid,
        n_bars,
        notes: b.notes,
        tempos: b.tempos,
        chords: b.chords,
    };
    Ok((to_song(lead), to_song(piano)))
}

/// Inverse of [`encode_remi`]; reports the index of the first bad token.
pub fn decode_remi(seq: &TokenSeq, vocab: &Vocabulary) -> Result<Song, RemiError> {
    Ok(decode(seq, vocab, false)?.1)
}

/// Splits an interleaved sequence back into its lead sheet and piano song.
pub fn deinterleave_conditional(seq: &TokenSeq, vocab: &Vocabulary) -> Result<(LeadSheet, Song), RemiError> {
    let (lead, piano) = decode(seq, vocab, true)?;
    let lead = LeadSheet {
        grid: lead.grid,
        n_bars: lead.n_bars,
        melody: lead
            .notes
            .iter()
            .map(|n| MelodyNote {
                pitch: n.pitch,
                onset: n.onset,
                duration: n.duration,
            })
            .collect(),
        chords: lead.chords,
    };
    Ok((lead, piano))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{ChordLabel, GridConfig, Quality};

    fn vocab() -> Vocabulary {
        Vocabulary::new(Task::Unconditional)
    }

    fn one_note() -> Song {
        let r = crate::symbolic::Ranges::default();
        Song {
            grid: GridConfig::default(),
            n_bars: 1,
            notes: vec![Note {
                pitch: 60,
                onset: Onset::new(0, 0),
                duration: 2,
                velocity: r.velocity_of_class(12),
            }],
            tempos: vec![TempoEvent {
                onset: Onset::new(0, 0),
                class: 30,
            }],
            chords: vec![],
        }
    }

    fn text(seq: &TokenSeq) -> String {
        seq.to_text()
    }

    #[test]
    fn one_note_trace() {
        let seq = encode_remi(&one_note(), &vocab()).unwrap();
        assert_eq!(text(&seq), "bar position=1 tempo=30 pitch=60 duration=2 velocity=12");
        assert_eq!(decode_remi(&seq, &vocab()).unwrap(), one_note());
    }

    #[test]
    fn empty_bars() {
        let seq = encode_remi(&Song::empty(GridConfig::default(), 2), &vocab()).unwrap();
        assert_eq!(seq.tokens, vec![Token::Bar, Token::Bar]);
        assert_eq!(decode_remi(&seq, &vocab()).unwrap(), Song::empty(GridConfig::default(), 2));
    }

    #[test]
    fn orphan_tokens_are_errors() {
        let v = vocab();
        let seq = TokenSeq::from_text("bar pitch=60", Task::Unconditional).unwrap();
        let err = decode_remi(&seq, &v).unwrap_err();
        assert_eq!(
            err,
            RemiError::Grammar {
                index: 1,
                reason: "note missing duration".into()
            }
        );
        let seq = TokenSeq::from_text("position=1", Task::Unconditional).unwrap();
        assert!(matches!(decode_remi(&seq, &v), Err(RemiError::Grammar { index: 0, .. })));
        let seq = TokenSeq::from_text("bar position=1 duration=3", Task::Unconditional).unwrap();
        assert!(matches!(decode_remi(&seq, &v), Err(RemiError::Grammar { index: 2, .. })));
        let seq = TokenSeq::from_text("bar position=2 tempo=3", Task::Unconditional).unwrap();
        assert!(decode_remi(&seq, &v).unwrap_err().to_string().contains("off the beat"));
    }

    #[test]
    fn order_is_tempo_chord_notes_descending() {
        let mut s = one_note();
        s.notes.insert(
            0,
            Note {
                pitch: 67,
                onset: Onset::new(0, 0),
                duration: 1,
                velocity: 100,
            },
        );
        s.chords.push(ChordEvent {
            onset: Onset::new(0, 0),
            label: ChordLabel::chord(0, Quality::Maj),
        });
        let seq = encode_remi(&s, &vocab()).unwrap();
        assert_eq!(
            text(&seq),
            "bar position=1 tempo=30 chord=C:maj pitch=67 duration=1 velocity=19 pitch=60 duration=2 velocity=12"
        );
    }

    #[test]
    fn cap_is_enforced() {
        let err = encode_remi_capped(&one_note(), &vocab(), Some(3)).unwrap_err();
        assert_eq!(err, RemiError::TooLong { len: 6, cap: 3 });
    }

    #[test]
    fn empty_interleave() {
        let v = Vocabulary::new(Task::Conditional);
        let lead = LeadSheet {
            grid: GridConfig::default(),
            n_bars: 1,
            ..Default::default()
        };
        let seq = interleave_conditional(&lead, &Song::empty(GridConfig::default(), 1), &v).unwrap();
        assert_eq!(text(&seq), "bar track=leadsheet track=piano");
        let (l, p) = deinterleave_conditional(&seq, &v).unwrap();
        assert_eq!(l, lead);
        assert_eq!(p, Song::empty(GridConfig::default(), 1));
    }

    #[test]
    fn interleave_rejects_bar_mismatch() {
        let v = Vocabulary::new(Task::Conditional);
        let lead = LeadSheet {
            grid: GridConfig::default(),
            n_bars: 2,
            ..Default::default()
        };
        assert!(matches!(
            interleave_conditional(&lead, &one_note(), &v),
            Err(RemiError::BarMismatch { .. })
        ));
    }

    #[test]
    fn lead_track_rejects_velocity() {
        let v = Vocabulary::new(Task::Conditional);
        let seq = TokenSeq::from_text(
            "bar track=leadsheet position=1 pitch=60 duration=4 velocity=3 track=piano",
            Task::Conditional,
        )
        .unwrap();
        assert!(deinterleave_conditional(&seq, &v).is_err());
    }
}
