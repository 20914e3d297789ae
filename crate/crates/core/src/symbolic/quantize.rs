use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ChordEvent, ChordLabel, GridConfig, Note, Onset, Ranges, Song, TempoEvent};

/// A note with absolute tick times at the grid's tick resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawNote {
    pub pitch: u8,
    pub start_tick: u64,
    pub end_tick: u64,
    pub velocity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawTempo {
    pub tick: u64,
    pub bpm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawChord {
    pub tick: u64,
    pub label: ChordLabel,
}

/// Unquantized timed events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawEvents {
    pub notes: Vec<RawNote>,
    pub tempos: Vec<RawTempo>,
    pub chords: Vec<RawChord>,
    /// Last tick of the material, if known; extends the bar count.
    pub end_tick: Option<u64>,
}

/// Counts of lossy adjustments made while quantizing or parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub pitches_transposed: usize,
    pub durations_clamped: usize,
    pub duplicate_notes_dropped: usize,
    pub tempo_events_merged: usize,
    pub chord_events_merged: usize,
    pub dangling_notes: usize,
    pub unmatched_note_offs: usize,
}

impl Diagnostics {
    pub fn is_clean(&self) -> bool {
        *self == Diagnostics::default()
    }
}

fn round_div(n: u64, d: u64) -> u64 {
    // half rounds toward the later position
    (n + d / 2) / d
}

/// Snaps raw events onto the grid and into the configured classes.
pub fn quantize_raw(events: &RawEvents, grid: GridConfig, ranges: &Ranges) -> (Song, Diagnostics) {
    quantize_with(events, grid, ranges, true)
}

/// With `bin_velocity` false, MIDI velocities are kept as they are.
pub(crate) fn quantize_with(
    events: &RawEvents,
    grid: GridConfig,
    ranges: &Ranges,
    bin_velocity: bool,
) -> (Song, Diagnostics) {
    let mut diag = Diagnostics::default();
    let tpp = u64::from(grid.ticks_per_position());
    let tpb = u64::from(grid.ticks_per_beat);
    let ppbeat = u64::from(grid.positions_per_beat());

    let mut by_key: BTreeMap<(Onset, u8), Note> = BTreeMap::new();
    for raw in &events.notes {
        let pitch = ranges.fold_pitch(raw.pitch);
        if pitch != raw.pitch {
            diag.pitches_transposed += 1;
        }
        let onset = grid.onset_at(round_div(raw.start_tick, tpp));
        let units = round_div(raw.end_tick.saturating_sub(raw.start_tick), tpp);
        let duration = ranges.duration_class(units);
        if units == 0 || units > u64::from(ranges.duration_classes) {
            diag.durations_clamped += 1;
        }
        let note = Note {
            pitch,
            onset,
            duration,
            velocity: if bin_velocity {
                ranges.canonical_velocity(raw.velocity)
            } else {
                raw.velocity.clamp(1, 127)
            },
        };
        match by_key.get_mut(&(onset, pitch)) {
            Some(existing) => {
                diag.duplicate_notes_dropped += 1;
                if note.duration > existing.duration {
                    *existing = note;
                }
            }
            None => {
                by_key.insert((onset, pitch), note);
            }
        }
    }

    let mut tempo_at: BTreeMap<Onset, u8> = BTreeMap::new();
    let mut sorted_tempos = events.tempos.clone();
    sorted_tempos.sort_by_key(|t| t.tick);
    for t in &sorted_tempos {
        let onset = grid.onset_at(round_div(t.tick, tpb) * ppbeat);
        if tempo_at.insert(onset, ranges.tempo_class(t.bpm)).is_some() {
            diag.tempo_events_merged += 1;
        }
    }
    let mut tempos = Vec::new();
    let mut last = None;
    for (onset, class) in tempo_at {
        if last == Some(class) {
            diag.tempo_events_merged += 1;
            continue;
        }
        last = Some(class);
        tempos.push(TempoEvent { onset, class });
    }

    let mut chord_at: BTreeMap<Onset, ChordLabel> = BTreeMap::new();
    let mut sorted_chords = events.chords.clone();
    sorted_chords.sort_by_key(|c| c.tick);
    for c in &sorted_chords {
        let onset = grid.onset_at(round_div(c.tick, tpb) * ppbeat);
        if chord_at.insert(onset, c.label).is_some() {
            diag.chord_events_merged += 1;
        }
    }
    let mut chords = Vec::new();
    let mut last = None;
    for (onset, label) in chord_at {
        if last == Some(label) {
            diag.chord_events_merged += 1;
            continue;
        }
        last = Some(label);
        chords.push(ChordEvent { onset, label });
    }

    let mut notes: Vec<Note> = by_key.into_values().collect();
    let last_bar = notes
        .iter()
        .map(|n| n.onset.bar)
        .chain(tempos.iter().map(|t| t.onset.bar))
        .chain(chords.iter().map(|c| c.onset.bar))
        .max()
        .map(|b| b + 1)
        .unwrap_or(0);
    let end_bars = events
        .end_tick
        .map(|t| t.div_ceil(grid.ticks_per_bar()) as u32)
        .unwrap_or(0);
    let mut song = Song {
        grid,
        n_bars: last_bar.max(end_bars),
        notes: Vec::new(),
        tempos,
        chords,
    };
    notes.sort_by(|a, b| a.onset.cmp(&b.onset).then(b.pitch.cmp(&a.pitch)));
    song.notes = notes;
    (song, diag)
}

/// Expands a quantized song back into tick-timed events.
pub fn song_to_raw(song: &Song, ranges: &Ranges) -> RawEvents {
    let tpp = u64::from(song.grid.ticks_per_position());
    RawEvents {
        notes: song
            .notes
            .iter()
            .map(|n| {
                let start = song.tick_of(n.onset);
                RawNote {
                    pitch: n.pitch,
                    start_tick: start,
                    end_tick: start + u64::from(ranges.duration_units(n.duration)) * tpp,
                    velocity: n.velocity,
                }
            })
            .collect(),
        tempos: song
            .tempos
            .iter()
            .map(|t| RawTempo {
                tick: song.tick_of(t.onset),
                bpm: ranges.bpm_of_class(t.class),
            })
            .collect(),
        chords: song
            .chords
            .iter()
            .map(|c| RawChord {
                tick: song.tick_of(c.onset),
                label: c.label,
            })
            .collect(),
        end_tick: Some(u64::from(song.n_bars) * song.grid.ticks_per_bar()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(start: u64, end: u64, vel: u8) -> RawEvents {
        RawEvents {
            notes: vec![RawNote {
                pitch: 60,
                start_tick: start,
                end_tick: end,
                velocity: vel,
            }],
            ..Default::default()
        }
    }

    #[test]
    fn onset_snaps_to_nearest_position() {
        let (s, _) = quantize_raw(&one(121, 600, 64), GridConfig::default(), &Ranges::default());
        assert_eq!(s.notes[0].onset, Onset::new(0, 1));
        // exact half goes to the later position
        let (s, _) = quantize_raw(&one(60, 600, 64), GridConfig::default(), &Ranges::default());
        assert_eq!(s.notes[0].onset, Onset::new(0, 1));
    }

    #[test]
    fn zero_duration_clamps_to_one() {
        let (s, d) = quantize_raw(&one(0, 0, 64), GridConfig::default(), &Ranges::default());
        assert_eq!(s.notes[0].duration, 1);
        assert_eq!(d.durations_clamped, 1);
    }

    #[test]
    fn long_note_goes_to_overflow_class() {
        let (s, _) = quantize_raw(&one(0, 480 * 12, 64), GridConfig::default(), &Ranges::default());
        assert_eq!(s.notes[0].duration, 17);
    }

    #[test]
    fn top_velocity_lands_in_last_class() {
        let r = Ranges::default();
        let (s, _) = quantize_raw(&one(0, 480, 127), GridConfig::default(), &r);
        assert_eq!(r.velocity_class(s.notes[0].velocity), 24);
    }

    #[test]
    fn quantize_is_idempotent_on_its_output() {
        let r = Ranges::default();
        let g = GridConfig::default();
        let raw = RawEvents {
            notes: vec![
                RawNote { pitch: 12, start_tick: 33, end_tick: 500, velocity: 3 },
                RawNote { pitch: 64, start_tick: 1000, end_tick: 9000, velocity: 100 },
                RawNote { pitch: 64, start_tick: 1010, end_tick: 1100, velocity: 90 },
            ],
            tempos: vec![RawTempo { tick: 10, bpm: 120.0 }, RawTempo { tick: 1900, bpm: 90.0 }],
            chords: vec![RawChord { tick: 470, label: ChordLabel::NoChord }],
            end_tick: Some(4000),
        };
        let (s, d) = quantize_raw(&raw, g, &r);
        assert_eq!(d.duplicate_notes_dropped, 1);
        assert_eq!(d.pitches_transposed, 1);
        s.validate(&r).unwrap();
        let (again, d2) = quantize_raw(&song_to_raw(&s, &r), g, &r);
        assert_eq!(again, s);
        assert!(d2.duplicate_notes_dropped == 0 && d2.pitches_transposed == 0);
    }
}
