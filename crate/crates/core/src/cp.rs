//! Compound words: REMI tokens that describe one event are grouped into a
//! single time step holding one slot per token type plus a family token.
//!
//! Grouping rules:
//! - `pitch, duration[, velocity]` becomes a note word;
//! - `position[, tempo][, chord]` becomes a metric word; on beat positions
//!   a missing tempo or chord change is written as `[conti]`;
//! - `bar` becomes a metric word whose position/bar slot holds the bar value;
//! - `track=...` becomes a track word.
//!
//! Every unused slot holds its type's `[ignore]`. Sequences open with a
//! start word; unconditional sequences close with an EOS word.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::remi::{decode_remi, deinterleave_conditional, RemiError, TokenSeq};
use crate::vocab::{Family, Task, Token, TokenType, TrackKind, Vocabulary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpError {
    #[error(transparent)]
    Remi(#[from] RemiError),
    #[error("word {index}: {reason}")]
    Invalid { index: usize, reason: String },
}

/// Family of a compound word, including the reserved start word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordKind {
    Bos,
    Family(Family),
}

impl WordKind {
    /// Row in the family embedding table.
    pub fn row(self) -> usize {
        match self {
            WordKind::Bos => Family::BOS_ROW,
            WordKind::Family(f) => f.index(),
        }
    }

    pub fn token(self) -> Token {
        match self {
            WordKind::Bos => Token::Bos,
            WordKind::Family(f) => Token::Family(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompoundWord {
    pub kind: WordKind,
    /// One token per modelled type, in the vocabulary's column order.
    pub slots: Vec<Token>,
}

impl CompoundWord {
    pub fn blank(kind: WordKind, vocab: &Vocabulary) -> Self {
        Self {
            kind,
            slots: vocab.types().iter().map(|&t| Token::Ignore(t)).collect(),
        }
    }

    pub fn bos(vocab: &Vocabulary) -> Self {
        Self::blank(WordKind::Bos, vocab)
    }

    pub fn eos(vocab: &Vocabulary) -> Self {
        Self::blank(WordKind::Family(Family::Eos), vocab)
    }

    pub fn bar(vocab: &Vocabulary) -> Self {
        let mut w = Self::blank(WordKind::Family(Family::Metric), vocab);
        w.set(vocab, Token::Bar);
        w
    }

    pub fn track(kind: TrackKind, vocab: &Vocabulary) -> Self {
        let mut w = Self::blank(WordKind::Family(Family::Track), vocab);
        w.set(vocab, Token::Track(kind));
        w
    }

    /// Places `token` into its type's column; ignored if the type is not modelled.
    pub fn set(&mut self, vocab: &Vocabulary, token: Token) {
        if let Some(col) = token.token_type().and_then(|t| vocab.column(t)) {
            self.slots[col] = token;
        }
    }

    pub fn get(&self, vocab: &Vocabulary, ty: TokenType) -> Option<Token> {
        vocab.column(ty).and_then(|c| self.slots.get(c).copied())
    }

    pub fn family(&self) -> Option<Family> {
        match self.kind {
            WordKind::Family(f) => Some(f),
            WordKind::Bos => None,
        }
    }

    /// Family row plus per-column head indices.
    pub fn indices(&self, vocab: &Vocabulary) -> Result<(usize, Vec<usize>), CpError> {
        let slots = self
            .slots
            .iter()
            .map(|&t| {
                vocab.local_index(t).map(|(_, i)| i).map_err(|e| CpError::Invalid {
                    index: 0,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok((self.kind.row(), slots))
    }

    pub fn from_indices(vocab: &Vocabulary, family_row: usize, slots: &[usize]) -> Option<Self> {
        let kind = if family_row == Family::BOS_ROW {
            WordKind::Bos
        } else {
            WordKind::Family(Family::from_index(family_row)?)
        };
        if slots.len() != vocab.k() {
            return None;
        }
        let slots = vocab
            .types()
            .iter()
            .zip(slots)
            .map(|(&t, &i)| vocab.token_at(t, i))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { kind, slots })
    }

    /// The family token followed by all K slots.
    pub fn symbol_count(&self) -> usize {
        self.slots.len() + 1
    }
}

impl fmt::Display for CompoundWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}", self.kind.token())?;
        for s in &self.slots {
            write!(f, " {s}")?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpSeq {
    pub task: Task,
    pub words: Vec<CompoundWord>,
}

impl CpSeq {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Rows of global ids: K type columns then the family column.
    pub fn to_id_rows(&self, vocab: &Vocabulary) -> Result<Vec<Vec<u32>>, CpError> {
        self.words
            .iter()
            .enumerate()
            .map(|(index, w)| {
                let mut row = w
                    .slots
                    .iter()
                    .map(|&t| vocab.token_to_id(t))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CpError::Invalid {
                        index,
                        reason: e.to_string(),
                    })?;
                row.push(vocab.token_to_id(w.kind.token()).expect("family ids exist"));
                Ok(row)
            })
            .collect()
    }

    pub fn from_id_rows(rows: &[Vec<u32>], vocab: &Vocabulary) -> Result<Self, CpError> {
        let k = vocab.k();
        let words = rows
            .iter()
            .enumerate()
            .map(|(index, row)| {
                let bad = |reason: String| CpError::Invalid { index, reason };
                if row.len() != k + 1 {
                    return Err(bad(format!("expected {} columns, found {}", k + 1, row.len())));
                }
                let kind = match vocab.id_to_token(row[k]).map_err(|e| bad(e.to_string()))? {
                    Token::Bos => WordKind::Bos,
                    Token::Family(f) => WordKind::Family(f),
                    other => return Err(bad(format!("{other} in the family column"))),
                };
                let slots = row[..k]
                    .iter()
                    .map(|&id| vocab.id_to_token(id).map_err(|e| bad(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(CompoundWord { kind, slots })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { task: vocab.task, words })
    }
}

/// Groups a grammatical REMI sequence into compound words.
pub fn group_to_cp(seq: &TokenSeq, vocab: &Vocabulary) -> Result<CpSeq, CpError> {
    // reject ungrammatical input with the decoder's diagnostics
    match vocab.task {
        Task::Conditional => {
            deinterleave_conditional(seq, vocab)?;
        }
        Task::Unconditional => {
            decode_remi(seq, vocab)?;
        }
    }
    let tokens = &seq.tokens;
    let mut words = vec![CompoundWord::bos(vocab)];
    let mut lead_track = false;
    let mut i = 0;
    while i < tokens.len() {
        match tokens[i] {
            Token::Bar => words.push(CompoundWord::bar(vocab)),
            Token::Track(kind) => {
                lead_track = kind == TrackKind::LeadSheet;
                words.push(CompoundWord::track(kind, vocab));
            }
            Token::Position(p) => {
                let mut w = CompoundWord::blank(WordKind::Family(Family::Metric), vocab);
                w.set(vocab, Token::Position(p));
                if vocab.grid.is_beat(u32::from(p)) {
                    if !lead_track {
                        w.set(vocab, Token::Conti(TokenType::Tempo));
                    }
                    w.set(vocab, Token::Conti(TokenType::Chord));
                }
                while let Some(&next @ (Token::Tempo(_) | Token::Chord(_))) = tokens.get(i + 1) {
                    w.set(vocab, next);
                    i += 1;
                }
                words.push(w);
            }
            Token::Pitch(p) => {
                let mut w = CompoundWord::blank(WordKind::Family(Family::Note), vocab);
                w.set(vocab, Token::Pitch(p));
                while let Some(&next @ (Token::Duration(_) | Token::Velocity(_))) = tokens.get(i + 1) {
                    w.set(vocab, next);
                    i += 1;
                }
                words.push(w);
            }
            other => {
                return Err(CpError::Invalid {
                    index: words.len(),
                    reason: format!("unexpected token {other}"),
                })
            }
        }
        i += 1;
    }
    if vocab.task == Task::Unconditional {
        words.push(CompoundWord::eos(vocab));
    }
    Ok(CpSeq {
        task: vocab.task,
        words,
    })
}

/// Expands compound words back into REMI tokens; inverse of [`group_to_cp`].
pub fn ungroup_from_cp(cps: &CpSeq, vocab: &Vocabulary) -> Result<TokenSeq, CpError> {
    if let Some(v) = validate_cp(cps, vocab).into_iter().next() {
        return Err(CpError::Invalid {
            index: v.index,
            reason: v.to_string(),
        });
    }
    let mut tokens = Vec::new();
    for w in &cps.words {
        match w.kind {
            WordKind::Bos => {}
            WordKind::Family(Family::Eos) => break,
            WordKind::Family(Family::Track) => {
                tokens.extend(w.get(vocab, TokenType::Track));
            }
            WordKind::Family(family) => {
                let order = match family {
                    Family::Metric => [TokenType::PositionBar, TokenType::Tempo, TokenType::Chord],
                    _ => [TokenType::Pitch, TokenType::Duration, TokenType::Velocity],
                };
                // [ignore] and [conti] expand to nothing
                tokens.extend(order.iter().filter_map(|&ty| w.get(vocab, ty)).filter(|t| !t.is_special()));
            }
        }
    }
    Ok(TokenSeq {
        task: cps.task,
        tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    SlotCount,
    SlotType,
    FamilySlot,
    FamilyNotInTask,
    BosPlacement,
    EosNotTerminal,
    MissingEos,
    ContiOffBeat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::SlotCount => "wrong slot count",
            ViolationKind::SlotType => "slot holds a token of another type",
            ViolationKind::FamilySlot => "family/slot mismatch",
            ViolationKind::FamilyNotInTask => "family not used by this task",
            ViolationKind::BosPlacement => "start word misplaced",
            ViolationKind::EosNotTerminal => "EOS not terminal",
            ViolationKind::MissingEos => "missing EOS",
            ViolationKind::ContiOffBeat => "[conti] off the beat",
        };
        if self.detail.is_empty() {
            write!(f, "word {}: {what}", self.index)
        } else {
            write!(f, "word {}: {what} ({})", self.index, self.detail)
        }
    }
}

/// Structural check: each word names exactly one token per type (real or
/// `[ignore]`) consistent with its family. Empty result means valid.
pub fn validate_cp(cps: &CpSeq, vocab: &Vocabulary) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = vocab.k();
    let last = cps.words.len().saturating_sub(1);
    let mut push = |index: usize, kind: ViolationKind, detail: String| out.push(Violation { index, kind, detail });
    if cps.words.first().map(|w| w.kind) != Some(WordKind::Bos) {
        push(0, ViolationKind::BosPlacement, "sequence must open with the start word".into());
    }
    for (index, w) in cps.words.iter().enumerate() {
        if w.slots.len() != k {
            push(index, ViolationKind::SlotCount, format!("expected {k}, found {}", w.slots.len()));
            continue;
        }
        let mut typed_ok = true;
        for (&ty, &slot) in vocab.types().iter().zip(&w.slots) {
            if slot.token_type() != Some(ty) || vocab.local_index(slot).is_err() {
                push(index, ViolationKind::SlotType, format!("{slot} in {ty} column"));
                typed_ok = false;
            }
        }
        if !typed_ok {
            continue;
        }
        let real = |ty: TokenType| w.get(vocab, ty).is_some_and(|t| !t.is_special());
        let wrong_real: Vec<&str> = |fam: Option<Family>| -> Vec<&str> {
            vocab
                .types()
                .iter()
                .filter(|&&t| Some(t.family()) != fam && w.get(vocab, t).is_some_and(|s| !matches!(s, Token::Ignore(_))))
                .map(|t| t.name())
                .collect()
        }(w.family());
        match w.kind {
            WordKind::Bos => {
                if index != 0 {
                    push(index, ViolationKind::BosPlacement, "start word after position 0".into());
                }
                if !wrong_real.is_empty() {
                    push(index, ViolationKind::FamilySlot, format!("start word with real slots: {}", wrong_real.join(", ")));
                }
                continue;
            }
            WordKind::Family(f) => {
                if !vocab.families().contains(&f) {
                    push(index, ViolationKind::FamilyNotInTask, f.name().into());
                }
            }
        }
        if !wrong_real.is_empty() {
            push(
                index,
                ViolationKind::FamilySlot,
                format!("family={} with non-ignore slots: {}", w.family().map_or("bos", |f| f.name()), wrong_real.join(", ")),
            );
        }
        match w.family() {
            Some(Family::Note) => {
                for ty in [TokenType::Pitch, TokenType::Duration] {
                    if !real(ty) {
                        push(index, ViolationKind::FamilySlot, format!("note word without {}", ty.name()));
                    }
                }
                if matches!(w.get(vocab, TokenType::Velocity), Some(Token::Conti(_))) {
                    push(index, ViolationKind::FamilySlot, "velocity cannot be [conti]".into());
                }
            }
            Some(Family::Metric) => {
                match w.get(vocab, TokenType::PositionBar) {
                    Some(Token::Bar) => {
                        for ty in [TokenType::Tempo, TokenType::Chord] {
                            if w.get(vocab, ty).is_some_and(|t| !matches!(t, Token::Ignore(_))) {
                                push(index, ViolationKind::FamilySlot, format!("bar word with {} content", ty.name()));
                            }
                        }
                    }
                    Some(Token::Position(p)) => {
                        if !vocab.grid.is_beat(u32::from(p)) {
                            for ty in [TokenType::Tempo, TokenType::Chord] {
                                if w.get(vocab, ty).is_some_and(|t| !matches!(t, Token::Ignore(_))) {
                                    push(index, ViolationKind::ContiOffBeat, format!("{} at off-beat position", ty.name()));
                                }
                            }
                        }
                    }
                    _ => push(index, ViolationKind::FamilySlot, "metric word without position/bar".into()),
                }
            }
            Some(Family::Track) => {
                if !real(TokenType::Track) {
                    push(index, ViolationKind::FamilySlot, "track word without track".into());
                }
            }
            Some(Family::Eos) => {
                if index != last {
                    push(index, ViolationKind::EosNotTerminal, String::new());
                }
            }
            None => {}
        }
    }
    if vocab.task == Task::Unconditional
        && cps.words.last().and_then(|w| w.family()) != Some(Family::Eos)
    {
        push(last, ViolationKind::MissingEos, String::new());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub max: usize,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[usize]) -> Summary {
        if values.is_empty() {
            return Summary {
                mean: 0.0,
                std: 0.0,
                max: 0,
                count: 0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<usize>() as f64 / n;
        let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        Summary {
            mean,
            std: var.sqrt(),
            max: values.iter().copied().max().unwrap_or(0),
            count: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SongLengths {
    pub name: String,
    /// REMI tokens, without start/end tokens.
    pub remi: usize,
    /// Compound words, without start/end words.
    pub cp: usize,
    /// REMI tokens with a start and an end token counted.
    pub remi_with_specials: usize,
    /// Compound words including the start word and any EOS word.
    pub cp_with_specials: usize,
}

impl SongLengths {
    pub fn measure(name: impl Into<String>, remi: &TokenSeq, cp: &CpSeq) -> Self {
        let specials = cp
            .words
            .iter()
            .filter(|w| matches!(w.kind, WordKind::Bos | WordKind::Family(Family::Eos)))
            .count();
        SongLengths {
            name: name.into(),
            remi: remi.len(),
            cp: cp.len() - specials,
            remi_with_specials: remi.len() + 2,
            cp_with_specials: cp.len(),
        }
    }

    /// `T_CP < T_REMI < K * T_CP` under both counting conventions.
    pub fn inequality_holds(&self, k: usize) -> bool {
        let strict = |cp: usize, remi: usize| cp < remi && remi < k * cp;
        strict(self.cp, self.remi) && strict(self.cp_with_specials, self.remi_with_specials)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub songs: Vec<SongLengths>,
    pub remi: Summary,
    pub cp: Summary,
    pub remi_with_specials: Summary,
    pub cp_with_specials: Summary,
}

pub fn corpus_stats(songs: Vec<SongLengths>) -> CorpusStats {
    let col = |f: fn(&SongLengths) -> usize| Summary::of(&songs.iter().map(f).collect::<Vec<_>>());
    CorpusStats {
        remi: col(|s| s.remi),
        cp: col(|s| s.cp),
        remi_with_specials: col(|s| s.remi_with_specials),
        cp_with_specials: col(|s| s.cp_with_specials),
        songs,
    }
}

impl CorpusStats {
    /// Two-row table in the `mean (±std)` style.
    pub fn table(&self) -> String {
        let fmt_row = |name: &str, s: &Summary| {
            format!(
                "{name:<6} {:>10} (±{}) max {}\n",
                group_thousands(s.mean.round() as usize),
                group_thousands(s.std.round() as usize),
                group_thousands(s.max)
            )
        };
        let mut out = format!("#words (T) over {} songs\n", self.remi.count);
        out += &fmt_row("REMI", &self.remi);
        out += &fmt_row("CP", &self.cp);
        out
    }
}

fn group_thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::remi::encode_remi;
    use crate::symbolic::{GridConfig, Note, Onset, Ranges, Song};

    fn uncond() -> Vocabulary {
        Vocabulary::new(Task::Unconditional)
    }

    fn seq(text: &str, task: Task) -> TokenSeq {
        TokenSeq::from_text(text, task).unwrap()
    }

    #[test]
    fn metric_run_becomes_one_word() {
        let v = uncond();
        let cps = group_to_cp(&seq("bar position=1 tempo=30 chord=C:maj", Task::Unconditional), &v).unwrap();
        assert_eq!(cps.len(), 4);
        let w = &cps.words[2];
        assert_eq!(w.kind, WordKind::Family(Family::Metric));
        assert_eq!(w.get(&v, TokenType::PositionBar), Some(Token::Position(0)));
        assert_eq!(w.get(&v, TokenType::Tempo), Some(Token::Tempo(30)));
        assert_eq!(w.get(&v, TokenType::Chord).unwrap().to_string(), "chord=C:maj");
        for ty in [TokenType::Pitch, TokenType::Duration, TokenType::Velocity] {
            assert_eq!(w.get(&v, ty), Some(Token::Ignore(ty)));
        }
    }

    #[test]
    fn note_run_becomes_one_word() {
        let v = uncond();
        let cps = group_to_cp(
            &seq("bar position=2 pitch=60 duration=2 velocity=12", Task::Unconditional),
            &v,
        )
        .unwrap();
        let w = &cps.words[3];
        assert_eq!(w.kind, WordKind::Family(Family::Note));
        assert_eq!(w.slots[3..], [Token::Pitch(60), Token::Duration(2), Token::Velocity(12)]);
        assert_eq!(w.slots[..3], [Token::Ignore(TokenType::Tempo), Token::Ignore(TokenType::PositionBar), Token::Ignore(TokenType::Chord)]);
        // off-beat position: tempo/chord are ignore, not conti
        assert_eq!(cps.words[2].get(&v, TokenType::Chord), Some(Token::Ignore(TokenType::Chord)));
        let back = ungroup_from_cp(&cps, &v).unwrap();
        assert_eq!(back.to_text(), "bar position=2 pitch=60 duration=2 velocity=12");
    }

    #[test]
    fn beat_positions_get_conti() {
        let v = uncond();
        let cps = group_to_cp(&seq("bar position=5 pitch=60 duration=2 velocity=12", Task::Unconditional), &v).unwrap();
        assert_eq!(cps.words[2].get(&v, TokenType::Tempo), Some(Token::Conti(TokenType::Tempo)));
        assert_eq!(cps.words[2].get(&v, TokenType::Chord), Some(Token::Conti(TokenType::Chord)));
        assert!(validate_cp(&cps, &v).is_empty());
    }

    #[test]
    fn single_note_lengths() {
        let v = uncond();
        let r = Ranges::default();
        let song = Song {
            grid: GridConfig::default(),
            n_bars: 1,
            notes: vec![Note {
                pitch: 60,
                onset: Onset::new(0, 0),
                duration: 4,
                velocity: r.velocity_of_class(10),
            }],
            tempos: vec![],
            chords: vec![],
        };
        let remi = encode_remi(&song, &v).unwrap();
        let cps = group_to_cp(&remi, &v).unwrap();
        let l = SongLengths::measure("one", &remi, &cps);
        // [BOS] [bar] [position] [note] [EOS] vs bos bar position pitch duration velocity eos
        assert_eq!((l.cp_with_specials, l.remi_with_specials), (5, 7));
        assert_eq!((l.cp, l.remi), (3, 5));
        assert!(l.inequality_holds(v.k()));
    }

    #[test]
    fn eos_word_expands_to_nothing() {
        let v = uncond();
        let cps = CpSeq {
            task: Task::Unconditional,
            words: vec![CompoundWord::bos(&v), CompoundWord::eos(&v)],
        };
        assert!(validate_cp(&cps, &v).is_empty());
        assert!(ungroup_from_cp(&cps, &v).unwrap().is_empty());
    }

    #[test]
    fn eos_mid_sequence_is_flagged() {
        let v = uncond();
        let cps = CpSeq {
            task: Task::Unconditional,
            words: vec![CompoundWord::bos(&v), CompoundWord::eos(&v), CompoundWord::bar(&v), CompoundWord::eos(&v)],
        };
        let diag = validate_cp(&cps, &v);
        assert_eq!(diag.len(), 1);
        assert_eq!(diag[0].kind, ViolationKind::EosNotTerminal);
        assert!(diag[0].to_string().contains("EOS not terminal"));
    }

    #[test]
    fn note_word_with_metric_slots_lists_them() {
        let v = uncond();
        let mut w = CompoundWord::blank(WordKind::Family(Family::Note), &v);
        w.set(&v, Token::Pitch(60));
        w.set(&v, Token::Duration(2));
        w.set(&v, Token::Velocity(3));
        w.set(&v, Token::Position(0));
        w.set(&v, Token::Tempo(4));
        let cps = CpSeq {
            task: Task::Unconditional,
            words: vec![CompoundWord::bos(&v), CompoundWord::bar(&v), w, CompoundWord::eos(&v)],
        };
        let diag = validate_cp(&cps, &v);
        assert_eq!(diag.len(), 1, "{diag:?}");
        assert_eq!(diag[0].index, 2);
        assert_eq!(diag[0].kind, ViolationKind::FamilySlot);
        assert!(diag[0].detail.contains("tempo") && diag[0].detail.contains("position/bar"));
    }

    #[test]
    fn note_word_without_pitch_fails_ungroup() {
        let v = uncond();
        let mut w = CompoundWord::blank(WordKind::Family(Family::Note), &v);
        w.set(&v, Token::Duration(2));
        let cps = CpSeq {
            task: Task::Unconditional,
            words: vec![CompoundWord::bos(&v), CompoundWord::bar(&v), w, CompoundWord::eos(&v)],
        };
        match ungroup_from_cp(&cps, &v) {
            Err(CpError::Invalid { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn track_family_rejected_for_unconditional_and_k_mismatch_flagged() {
        let c = Vocabulary::new(Task::Conditional);
        let v = uncond();
        let cps = CpSeq {
            task: Task::Unconditional,
            words: vec![CompoundWord::bos(&v), CompoundWord::bar(&c), CompoundWord::eos(&v)],
        };
        let diag = validate_cp(&cps, &v);
        assert_eq!(diag[0].kind, ViolationKind::SlotCount);
    }

    #[test]
    fn id_rows_round_trip() {
        let v = Vocabulary::new(Task::Conditional);
        let cps = group_to_cp(
            &seq("bar track=leadsheet position=1 chord=C:maj pitch=72 duration=4 track=piano position=1 tempo=3 pitch=60 duration=4 velocity=3", Task::Conditional),
            &v,
        )
        .unwrap();
        assert!(validate_cp(&cps, &v).is_empty());
        assert!(cps.words.iter().all(|w| w.symbol_count() == 8));
        let rows = cps.to_id_rows(&v).unwrap();
        assert_eq!(rows[0][7], v.bos_id());
        assert_eq!(CpSeq::from_id_rows(&rows, &v).unwrap(), cps);
        // lead-track beat positions carry [ignore] tempo, [conti]-free chord slot is real here
        assert_eq!(cps.words[3].get(&v, TokenType::Tempo), Some(Token::Ignore(TokenType::Tempo)));
    }

    #[test]
    fn stats_table_format() {
        let s = corpus_stats(vec![
            SongLengths { name: "a".into(), remi: 6000, cp: 3000, remi_with_specials: 6002, cp_with_specials: 3002 },
            SongLengths { name: "b".into(), remi: 7000, cp: 3400, remi_with_specials: 7002, cp_with_specials: 3402 },
        ]);
        assert_eq!(s.remi.mean, 6500.0);
        assert_eq!(s.remi.std, 500.0);
        assert_eq!(s.cp.max, 3400);
        assert!(s.table().contains("6,500 (±500)"), "{}", s.table());
    }
}
