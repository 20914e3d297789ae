//! Deterministic example songs for tests, demos and smoke runs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::analysis::make_leadsheet;
use crate::sampling::session_rng;
use crate::symbolic::{ChordEvent, ChordLabel, GridConfig, LeadSheet, Note, Onset, Quality, Ranges, Song, TempoEvent};

/// A random song that passes `Song::validate` and survives the codecs unchanged.
pub fn random_song<R: Rng + ?Sized>(rng: &mut R, ranges: &Ranges, max_bars: u32) -> Song {
    let grid = GridConfig::default();
    let mut song = Song::empty(grid, rng.gen_range(1..=max_bars.max(1)));
    let pitches: Vec<u8> = (ranges.pitch_min..=ranges.pitch_max).collect();
    for bar in 0..song.n_bars {
        for pos in 0..grid.positions_per_bar {
            if !rng.gen_bool(0.3) {
                continue;
            }
            let onset = Onset::new(bar, pos);
            if grid.is_beat(pos) && rng.gen_bool(0.2) {
                let class = rng.gen_range(1..=ranges.tempo_classes);
                if song.tempos.last().map(|t| t.class) != Some(class) {
                    song.tempos.push(TempoEvent { onset, class });
                }
            }
            if grid.is_beat(pos) && rng.gen_bool(0.3) {
                let label = ChordLabel::from_index(rng.gen_range(0..ChordLabel::count())).expect("in range");
                if song.chords.last().map(|c| c.label) != Some(label) {
                    song.chords.push(ChordEvent { onset, label });
                }
            }
            let n = rng.gen_range(0..=4);
            for &pitch in pitches.choose_multiple(rng, n) {
                song.notes.push(Note {
                    pitch,
                    onset,
                    duration: rng.gen_range(1..=ranges.duration_classes),
                    velocity: ranges.canonical_velocity(rng.gen_range(1..=127)),
                });
            }
        }
    }
    song.normalize();
    song
}

fn note(bar: u32, pos: u32, pitch: u8, duration: u8, ranges: &Ranges) -> Note {
    Note { pitch, onset: Onset::new(bar, pos), duration, velocity: ranges.canonical_velocity(80) }
}

/// Four short songs that first differ in the opening tempo and then throughout.
/// Every other slot of the first position word is identical.
pub fn overfit_songs(ranges: &Ranges) -> Vec<(String, Song)> {
    let roots = [0u8, 7, 2, 9];
    (0..4u8)
        .map(|s| {
            let mut song = Song::empty(GridConfig::default(), 4);
            song.tempos.push(TempoEvent { onset: Onset::new(0, 0), class: 20 + 6 * s });
            for bar in 0..4u32 {
                let root = if bar == 0 { 0 } else { roots[((u32::from(s) + bar) % 4) as usize] };
                let quality = if bar == 0 || (s + bar as u8) % 2 == 0 { Quality::Maj } else { Quality::Min };
                let label = ChordLabel::chord(root, quality);
                song.chords.push(ChordEvent { onset: Onset::new(bar, 0), label });
                let tones = label.pitch_classes();
                let base = 48 + root;
                for (k, pos) in [0u32, 4, 8, 12].into_iter().enumerate() {
                    let top = 60 + tones[(k + usize::from(s)) % tones.len()] + 12 * u8::from(k % 2 == 1);
                    song.notes.push(note(bar, pos, top, 4, ranges));
                    song.notes.push(note(bar, pos, base, 2, ranges));
                }
                for pos in [2u32 + 4 * u32::from(s % 2), 10] {
                    song.notes.push(note(bar, pos, base + 7, 2, ranges));
                }
            }
            song.normalize();
            (format!("overfit_{s}"), song)
        })
        .collect()
}

/// Songs whose top line sits on the beats above sustained chord tones, so the
/// skyline lead sheet recovers the melody; pairs are `(name, lead, piano)`.
pub fn matchness_corpus(n: usize, seed: u64, ranges: &Ranges) -> Vec<(String, LeadSheet, Song)> {
    let mut rng = session_rng(seed, 0xf1);
    let qualities = [Quality::Maj, Quality::Min, Quality::Dom7, Quality::Min7];
    (0..n)
        .map(|i| {
            let mut song = Song::empty(GridConfig::default(), 8);
            song.tempos.push(TempoEvent { onset: Onset::new(0, 0), class: rng.gen_range(10..40) });
            for bar in 0..song.n_bars {
                let label = ChordLabel::chord(rng.gen_range(0..12), *qualities.choose(&mut rng).expect("nonempty"));
                let tones = label.pitch_classes();
                for &pc in &tones {
                    song.notes.push(note(bar, 0, 48 + pc, 16, ranges));
                }
                for pos in [0u32, 4, 8, 12] {
                    let pc = *tones.choose(&mut rng).expect("nonempty");
                    song.notes.push(note(bar, pos, 72 + pc, 4, ranges));
                }
            }
            song.normalize();
            let lead = make_leadsheet(&song, ranges);
            (format!("song_{i:03}"), lead, song)
        })
        .collect()
}
