//! Quantized song model shared by every codec in the crate.
//!
//! A [`Song`] lives on a bar/position grid: with the default [`GridConfig`]
//! there are 16 positions (sixteenth notes) per 4/4 bar and 480 ticks per
//! beat. Notes carry MIDI pitch and velocity, a duration in sixteenth
//! units, and an onset on that grid. Tempo and chord changes are only
//! allowed on beat positions.

mod json;
mod quantize;
mod smf;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::{
    parse_json_leadsheet, parse_json_song, serialize_json_leadsheet, serialize_json_song,
    JsonError,
};
pub use quantize::{quantize_raw, song_to_raw, Diagnostics, RawChord, RawEvents, RawNote, RawTempo};
pub use smf::{decode_vlq, parse_smf, write_smf, SmfError};

/// Lowest MIDI pitch representable by the pitch vocabulary.
pub const PITCH_MIN: u8 = 22;
/// Highest MIDI pitch representable by the pitch vocabulary.
pub const PITCH_MAX: u8 = 107;
pub const VELOCITY_CLASSES: u8 = 24;
pub const TEMPO_CLASSES: u8 = 58;
pub const TEMPO_MIN_BPM: f64 = 32.0;
pub const TEMPO_MAX_BPM: f64 = 224.0;
/// Duration classes 1..=16 are exact sixteenth counts; 17 is the overflow class.
pub const DURATION_CLASSES: u8 = 17;
/// Number of sixteenths an overflow-duration note sounds for when rendered.
pub const OVERFLOW_DURATION_UNITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub ticks_per_beat: u32,
    pub positions_per_bar: u32,
    pub beats_per_bar: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            ticks_per_beat: 480,
            positions_per_bar: 16,
            beats_per_bar: 4,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), SongError> {
        if self.ticks_per_beat == 0 || self.beats_per_bar == 0 || self.positions_per_bar == 0 {
            return Err(SongError::Grid("grid sizes must be positive".into()));
        }
        if self.positions_per_bar % self.beats_per_bar != 0 {
            return Err(SongError::Grid(
                "positions_per_bar must be divisible by beats_per_bar".into(),
            ));
        }
        if self.ticks_per_beat % self.positions_per_beat() != 0 {
            return Err(SongError::Grid(
                "ticks_per_beat must be divisible by positions per beat".into(),
            ));
        }
        Ok(())
    }

    pub fn positions_per_beat(&self) -> u32 {
        self.positions_per_bar / self.beats_per_bar
    }

    pub fn ticks_per_position(&self) -> u32 {
        self.ticks_per_beat / self.positions_per_beat()
    }

    pub fn ticks_per_bar(&self) -> u64 {
        u64::from(self.ticks_per_beat) * u64::from(self.beats_per_bar)
    }

    pub fn is_beat(&self, pos: u32) -> bool {
        pos % self.positions_per_beat() == 0
    }

    /// Position index counted from the start of the song.
    pub fn absolute(&self, onset: Onset) -> u64 {
        u64::from(onset.bar) * u64::from(self.positions_per_bar) + u64::from(onset.pos)
    }

    pub fn onset_at(&self, absolute: u64) -> Onset {
        let ppb = u64::from(self.positions_per_bar);
        Onset {
            bar: (absolute / ppb) as u32,
            pos: (absolute % ppb) as u32,
        }
    }
}

/// Value ranges of the quantized attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ranges {
    pub pitch_min: u8,
    pub pitch_max: u8,
    pub velocity_classes: u8,
    pub tempo_classes: u8,
    pub tempo_min_bpm: f64,
    pub tempo_max_bpm: f64,
    pub duration_classes: u8,
}

impl Default for Ranges {
    fn default() -> Self {
        Self {
            pitch_min: PITCH_MIN,
            pitch_max: PITCH_MAX,
            velocity_classes: VELOCITY_CLASSES,
            tempo_classes: TEMPO_CLASSES,
            tempo_min_bpm: TEMPO_MIN_BPM,
            tempo_max_bpm: TEMPO_MAX_BPM,
            duration_classes: DURATION_CLASSES,
        }
    }
}

impl Ranges {
    pub fn validate(&self) -> Result<(), SongError> {
        if self.pitch_min > self.pitch_max || self.pitch_max > 127 {
            return Err(SongError::Grid("invalid pitch range".into()));
        }
        if self.pitch_max - self.pitch_min < 11 {
            return Err(SongError::Grid("pitch range must span an octave".into()));
        }
        if self.velocity_classes == 0 || self.velocity_classes > 127 {
            return Err(SongError::Grid("velocity class count must be 1..=127".into()));
        }
        if self.tempo_classes == 0 || !(self.tempo_min_bpm < self.tempo_max_bpm) {
            return Err(SongError::Grid("invalid tempo range".into()));
        }
        if self.duration_classes < 2 {
            return Err(SongError::Grid("need at least two duration classes".into()));
        }
        Ok(())
    }

    pub fn pitch_count(&self) -> usize {
        usize::from(self.pitch_max - self.pitch_min) + 1
    }

    /// Uniform binning of MIDI velocity 1..=127 into 1-based classes.
    pub fn velocity_class(&self, velocity: u8) -> u8 {
        let v = u32::from(velocity.clamp(1, 127)) - 1;
        (v * u32::from(self.velocity_classes) / 127) as u8 + 1
    }

    /// Midpoint of the integer velocities that fall into `class`.
    pub fn velocity_of_class(&self, class: u8) -> u8 {
        let c = u32::from(self.velocity_classes);
        let k = u32::from(class.clamp(1, self.velocity_classes)) - 1;
        // smallest v-1 with floor((v-1)*c/127) == k is ceil(k*127/c)
        let lo = (k * 127).div_ceil(c);
        let hi = ((k + 1) * 127).div_ceil(c) - 1;
        ((lo + hi) / 2 + 1) as u8
    }

    pub fn canonical_velocity(&self, velocity: u8) -> u8 {
        self.velocity_of_class(self.velocity_class(velocity))
    }

    fn tempo_width(&self) -> f64 {
        (self.tempo_max_bpm - self.tempo_min_bpm) / f64::from(self.tempo_classes)
    }

    pub fn tempo_class(&self, bpm: f64) -> u8 {
        let idx = ((bpm - self.tempo_min_bpm) / self.tempo_width()).floor();
        (idx.clamp(0.0, f64::from(self.tempo_classes) - 1.0) as u8) + 1
    }

    pub fn bpm_of_class(&self, class: u8) -> f64 {
        self.tempo_min_bpm + (f64::from(class) - 0.5) * self.tempo_width()
    }

    /// Sixteenth count a duration class sounds for.
    pub fn duration_units(&self, class: u8) -> u32 {
        if class >= self.duration_classes {
            OVERFLOW_DURATION_UNITS.max(u32::from(self.duration_classes))
        } else {
            u32::from(class)
        }
    }

    pub fn duration_class(&self, units: u64) -> u8 {
        units.clamp(1, u64::from(self.duration_classes)) as u8
    }

    /// Moves `pitch` by whole octaves until it lies inside the range.
    pub fn fold_pitch(&self, pitch: u8) -> u8 {
        let mut p = i32::from(pitch);
        while p < i32::from(self.pitch_min) {
            p += 12;
        }
        while p > i32::from(self.pitch_max) {
            p -= 12;
        }
        p as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Onset {
    pub bar: u32,
    pub pos: u32,
}

impl Onset {
    pub fn new(bar: u32, pos: u32) -> Self {
        Self { bar, pos }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Note {
    pub pitch: u8,
    pub onset: Onset,
    /// Duration class: sixteenth count, or the overflow class.
    pub duration: u8,
    pub velocity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TempoEvent {
    pub onset: Onset,
    /// 1-based tempo class.
    pub class: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quality {
    Maj,
    Min,
    Dim,
    Aug,
    Sus2,
    Sus4,
    Maj7,
    Min7,
    Dom7,
    Dim7,
    HalfDim7,
}

impl Quality {
    pub const ALL: [Quality; 11] = [
        Quality::Maj,
        Quality::Min,
        Quality::Dim,
        Quality::Aug,
        Quality::Sus2,
        Quality::Sus4,
        Quality::Maj7,
        Quality::Min7,
        Quality::Dom7,
        Quality::Dim7,
        Quality::HalfDim7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quality::Maj => "maj",
            Quality::Min => "min",
            Quality::Dim => "dim",
            Quality::Aug => "aug",
            Quality::Sus2 => "sus2",
            Quality::Sus4 => "sus4",
            Quality::Maj7 => "maj7",
            Quality::Min7 => "min7",
            Quality::Dom7 => "dom7",
            Quality::Dim7 => "dim7",
            Quality::HalfDim7 => "half-dim7",
        }
    }

    pub fn from_name(name: &str) -> Option<Quality> {
        Quality::ALL.into_iter().find(|q| q.name() == name)
    }

    /// Semitone offsets of the chord tones above the root.
    pub fn intervals(self) -> &'static [u8] {
        match self {
            Quality::Maj => &[0, 4, 7],
            Quality::Min => &[0, 3, 7],
            Quality::Dim => &[0, 3, 6],
            Quality::Aug => &[0, 4, 8],
            Quality::Sus2 => &[0, 2, 7],
            Quality::Sus4 => &[0, 5, 7],
            Quality::Maj7 => &[0, 4, 7, 11],
            Quality::Min7 => &[0, 3, 7, 10],
            Quality::Dom7 => &[0, 4, 7, 10],
            Quality::Dim7 => &[0, 3, 6, 9],
            Quality::HalfDim7 => &[0, 3, 6, 10],
        }
    }

    pub fn index(self) -> usize {
        Quality::ALL.iter().position(|&q| q == self).unwrap_or(0)
    }
}

/// The string used for the no-chord label in text and JSON forms.
pub const NO_CHORD: &str = "N";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChordLabel {
    NoChord,
    Chord { root: u8, quality: Quality },
}

impl ChordLabel {
    pub fn chord(root: u8, quality: Quality) -> Self {
        ChordLabel::Chord {
            root: root % 12,
            quality,
        }
    }

    /// Dense index: 0 is no-chord, then root-major blocks of qualities.
    pub fn index(self) -> usize {
        match self {
            ChordLabel::NoChord => 0,
            ChordLabel::Chord { root, quality } => {
                1 + usize::from(root) * Quality::ALL.len() + quality.index()
            }
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        if index == 0 {
            return Some(ChordLabel::NoChord);
        }
        let i = index - 1;
        let q = Quality::ALL.len();
        if i >= 12 * q {
            return None;
        }
        Some(ChordLabel::Chord {
            root: (i / q) as u8,
            quality: Quality::ALL[i % q],
        })
    }

    pub fn count() -> usize {
        1 + 12 * Quality::ALL.len()
    }

    /// Pitch classes of the chord tones.
    pub fn pitch_classes(self) -> Vec<u8> {
        match self {
            ChordLabel::NoChord => Vec::new(),
            ChordLabel::Chord { root, quality } => quality
                .intervals()
                .iter()
                .map(|i| (root + i) % 12)
                .collect(),
        }
    }
}

const ROOT_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChordLabel::NoChord => f.write_str(NO_CHORD),
            ChordLabel::Chord { root, quality } => {
                write!(f, "{}:{}", ROOT_NAMES[usize::from(*root % 12)], quality.name())
            }
        }
    }
}

impl std::str::FromStr for ChordLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == NO_CHORD {
            return Ok(ChordLabel::NoChord);
        }
        let (root, quality) = s.split_once(':').ok_or_else(|| format!("bad chord `{s}`"))?;
        let root = ROOT_NAMES
            .iter()
            .position(|r| *r == root)
            .ok_or_else(|| format!("bad chord root `{root}`"))?;
        let quality =
            Quality::from_name(quality).ok_or_else(|| format!("bad chord quality `{quality}`"))?;
        Ok(ChordLabel::chord(root as u8, quality))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChordEvent {
    pub onset: Onset,
    pub label: ChordLabel,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SongError {
    #[error("invalid configuration: {0}")]
    Grid(String),
    #[error("{what} at {onset:?}: {reason}")]
    Event {
        what: &'static str,
        onset: Onset,
        reason: String,
    },
    #[error("events out of order: {0}")]
    Order(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Song {
    pub grid: GridConfig,
    pub n_bars: u32,
    pub notes: Vec<Note>,
    pub tempos: Vec<TempoEvent>,
    pub chords: Vec<ChordEvent>,
}

impl Song {
    pub fn empty(grid: GridConfig, n_bars: u32) -> Self {
        Self {
            grid,
            n_bars,
            ..Self::default()
        }
    }

    /// Sorts events into canonical order: notes by onset then descending pitch.
    pub fn normalize(&mut self) {
        self.notes
            .sort_by(|a, b| a.onset.cmp(&b.onset).then(b.pitch.cmp(&a.pitch)));
        self.tempos.sort_by_key(|t| t.onset);
        self.chords.sort_by_key(|c| c.onset);
    }

    pub fn validate(&self, ranges: &Ranges) -> Result<(), SongError> {
        self.grid.validate()?;
        let check_onset = |what: &'static str, onset: Onset| -> Result<(), SongError> {
            if onset.bar >= self.n_bars || onset.pos >= self.grid.positions_per_bar {
                return Err(SongError::Event {
                    what,
                    onset,
                    reason: format!("outside {} bars", self.n_bars),
                });
            }
            Ok(())
        };
        for pair in self.notes.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a.onset > b.onset || (a.onset == b.onset && a.pitch <= b.pitch) {
                return Err(SongError::Order(format!(
                    "note {} at {:?} before note {} at {:?}",
                    a.pitch, a.onset, b.pitch, b.onset
                )));
            }
        }
        for n in &self.notes {
            check_onset("note", n.onset)?;
            let bad = |reason: String| SongError::Event {
                what: "note",
                onset: n.onset,
                reason,
            };
            if n.pitch < ranges.pitch_min || n.pitch > ranges.pitch_max {
                return Err(bad(format!("pitch {} out of range", n.pitch)));
            }
            if n.duration == 0 || n.duration > ranges.duration_classes {
                return Err(bad(format!("duration {} out of range", n.duration)));
            }
            if n.velocity == 0 || n.velocity > 127 {
                return Err(bad(format!("velocity {} out of range", n.velocity)));
            }
        }
        for pair in self.tempos.windows(2) {
            if pair[0].onset >= pair[1].onset {
                return Err(SongError::Order("tempo events not strictly increasing".into()));
            }
        }
        for t in &self.tempos {
            check_onset("tempo", t.onset)?;
            if !self.grid.is_beat(t.onset.pos) {
                return Err(SongError::Event {
                    what: "tempo",
                    onset: t.onset,
                    reason: "not on a beat".into(),
                });
            }
            if t.class == 0 || t.class > ranges.tempo_classes {
                return Err(SongError::Event {
                    what: "tempo",
                    onset: t.onset,
                    reason: format!("class {} out of range", t.class),
                });
            }
        }
        for pair in self.chords.windows(2) {
            if pair[0].onset >= pair[1].onset {
                return Err(SongError::Order("chord events not strictly increasing".into()));
            }
        }
        for c in &self.chords {
            check_onset("chord", c.onset)?;
            if !self.grid.is_beat(c.onset.pos) {
                return Err(SongError::Event {
                    what: "chord",
                    onset: c.onset,
                    reason: "not on a beat".into(),
                });
            }
        }
        Ok(())
    }

    /// Onset tick of a grid position.
    pub fn tick_of(&self, onset: Onset) -> u64 {
        self.grid.absolute(onset) * u64::from(self.grid.ticks_per_position())
    }
}

/// A melody note of a lead sheet; velocity is not part of the composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MelodyNote {
    pub pitch: u8,
    pub onset: Onset,
    pub duration: u8,
}

/// Melody line plus chord labels, both on beat positions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LeadSheet {
    pub grid: GridConfig,
    pub n_bars: u32,
    pub melody: Vec<MelodyNote>,
    pub chords: Vec<ChordEvent>,
}

impl LeadSheet {
    pub fn validate(&self, ranges: &Ranges) -> Result<(), SongError> {
        for pair in self.melody.windows(2) {
            if pair[0].onset >= pair[1].onset {
                return Err(SongError::Order(
                    "melody onsets must be strictly increasing".into(),
                ));
            }
        }
        for m in &self.melody {
            if !self.grid.is_beat(m.onset.pos) {
                return Err(SongError::Event {
                    what: "melody note",
                    onset: m.onset,
                    reason: "not on a beat".into(),
                });
            }
        }
        self.as_song().validate(ranges)
    }

    /// The lead sheet viewed as a song with placeholder velocities.
    pub fn as_song(&self) -> Song {
        Song {
            grid: self.grid,
            n_bars: self.n_bars,
            notes: self
                .melody
                .iter()
                .map(|m| Note {
                    pitch: m.pitch,
                    onset: m.onset,
                    duration: m.duration,
                    velocity: 64,
                })
                .collect(),
            tempos: Vec::new(),
            chords: self.chords.clone(),
        }
    }

    pub fn from_song(song: &Song) -> LeadSheet {
        LeadSheet {
            grid: song.grid,
            n_bars: song.n_bars,
            melody: song
                .notes
                .iter()
                .map(|n| MelodyNote {
                    pitch: n.pitch,
                    onset: n.onset,
                    duration: n.duration,
                })
                .collect(),
            chords: song.chords.clone(),
        }
    }
}
