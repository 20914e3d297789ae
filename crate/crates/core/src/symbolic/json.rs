use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChordEvent, ChordLabel, GridConfig, LeadSheet, MelodyNote, Note, Onset, Ranges, Song, TempoEvent};

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: {message}")]
    Range { path: String, message: String },
    #[error("invalid song: {0}")]
    Song(#[from] super::SongError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SongDoc {
    grid: GridConfig,
    n_bars: u32,
    notes: Vec<NoteDoc>,
    tempos: Vec<TempoDoc>,
    chords: Vec<ChordDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoteDoc {
    pitch: i64,
    bar: u32,
    pos: u32,
    dur: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vel: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TempoDoc {
    bar: u32,
    pos: u32,
    bpm_class: i64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChordDoc {
    bar: u32,
    pos: u32,
    root: u8,
    quality: String,
}

fn chord_doc(c: &ChordEvent) -> ChordDoc {
    let (root, quality) = match c.label {
        ChordLabel::NoChord => (0, super::NO_CHORD.to_string()),
        ChordLabel::Chord { root, quality } => (root, quality.name().to_string()),
    };
    ChordDoc {
        bar: c.onset.bar,
        pos: c.onset.pos,
        root,
        quality,
    }
}

fn read_doc(text: &str) -> Result<SongDoc, JsonError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| JsonError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn range_err(path: String, message: impl Into<String>) -> JsonError {
    JsonError::Range {
        path,
        message: message.into(),
    }
}

fn chords_from(doc: &[ChordDoc]) -> Result<Vec<ChordEvent>, JsonError> {
    doc.iter()
        .enumerate()
        .map(|(i, c)| {
            let label = if c.quality == super::NO_CHORD {
                ChordLabel::NoChord
            } else {
                let q = super::Quality::from_name(&c.quality).ok_or_else(|| {
                    range_err(format!("chords[{i}].quality"), format!("unknown quality `{}`", c.quality))
                })?;
                if c.root > 11 {
                    return Err(range_err(format!("chords[{i}].root"), "root out of range"));
                }
                ChordLabel::chord(c.root, q)
            };
            Ok(ChordEvent {
                onset: Onset::new(c.bar, c.pos),
                label,
            })
        })
        .collect()
}

fn checked_pitch_dur(i: usize, n: &NoteDoc, ranges: &Ranges) -> Result<(u8, u8), JsonError> {
    if n.pitch < i64::from(ranges.pitch_min) || n.pitch > i64::from(ranges.pitch_max) {
        return Err(range_err(format!("notes[{i}].pitch"), "pitch out of range"));
    }
    if n.dur < 1 || n.dur > i64::from(ranges.duration_classes) {
        return Err(range_err(format!("notes[{i}].dur"), "duration out of range"));
    }
    Ok((n.pitch as u8, n.dur as u8))
}

pub fn parse_json_song(text: &str, ranges: &Ranges) -> Result<Song, JsonError> {
    let doc = read_doc(text)?;
    let mut notes = Vec::with_capacity(doc.notes.len());
    for (i, n) in doc.notes.iter().enumerate() {
        let (pitch, duration) = checked_pitch_dur(i, n, ranges)?;
        let vel = n
            .vel
            .ok_or_else(|| range_err(format!("notes[{i}].vel"), "missing velocity"))?;
        if !(1..=127).contains(&vel) {
            return Err(range_err(format!("notes[{i}].vel"), "velocity out of range"));
        }
        notes.push(Note {
            pitch,
            onset: Onset::new(n.bar, n.pos),
            duration,
            velocity: vel as u8,
        });
    }
    let mut tempos = Vec::with_capacity(doc.tempos.len());
    for (i, t) in doc.tempos.iter().enumerate() {
        if t.bpm_class < 1 || t.bpm_class > i64::from(ranges.tempo_classes) {
            return Err(range_err(format!("tempos[{i}].bpm_class"), "tempo class out of range"));
        }
        tempos.push(TempoEvent {
            onset: Onset::new(t.bar, t.pos),
            class: t.bpm_class as u8,
        });
    }
    let song = Song {
        grid: doc.grid,
        n_bars: doc.n_bars,
        notes,
        tempos,
        chords: chords_from(&doc.chords)?,
    };
    song.validate(ranges)?;
    Ok(song)
}

pub fn serialize_json_song(song: &Song) -> String {
    let doc = SongDoc {
        grid: song.grid,
        n_bars: song.n_bars,
        notes: song
            .notes
            .iter()
            .map(|n| NoteDoc {
                pitch: i64::from(n.pitch),
                bar: n.onset.bar,
                pos: n.onset.pos,
                dur: i64::from(n.duration),
                vel: Some(i64::from(n.velocity)),
            })
            .collect(),
        tempos: song
            .tempos
            .iter()
            .map(|t| TempoDoc {
                bar: t.onset.bar,
                pos: t.onset.pos,
                bpm_class: i64::from(t.class),
            })
            .collect(),
        chords: song.chords.iter().map(chord_doc).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("song document serializes")
}

/// Lead sheets share the song schema; note velocities are omitted and
/// the tempo list is empty.
pub fn serialize_json_leadsheet(lead: &LeadSheet) -> String {
    let doc = SongDoc {
        grid: lead.grid,
        n_bars: lead.n_bars,
        notes: lead
            .melody
            .iter()
            .map(|n| NoteDoc {
                pitch: i64::from(n.pitch),
                bar: n.onset.bar,
                pos: n.onset.pos,
                dur: i64::from(n.duration),
                vel: None,
            })
            .collect(),
        tempos: Vec::new(),
        chords: lead.chords.iter().map(chord_doc).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("lead sheet document serializes")
}

pub fn parse_json_leadsheet(text: &str, ranges: &Ranges) -> Result<LeadSheet, JsonError> {
    let doc = read_doc(text)?;
    if !doc.tempos.is_empty() {
        return Err(range_err("tempos".into(), "lead sheets carry no tempo events"));
    }
    let mut melody = Vec::with_capacity(doc.notes.len());
    for (i, n) in doc.notes.iter().enumerate() {
        let (pitch, duration) = checked_pitch_dur(i, n, ranges)?;
        melody.push(MelodyNote {
            pitch,
            onset: Onset::new(n.bar, n.pos),
            duration,
        });
    }
    let lead = LeadSheet {
        grid: doc.grid,
        n_bars: doc.n_bars,
        melody,
        chords: chords_from(&doc.chords)?,
    };
    lead.validate(ranges)?;
    Ok(lead)
}
