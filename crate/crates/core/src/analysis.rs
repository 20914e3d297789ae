//! Lead-sheet extraction: skyline melody and template chord recognition.

use std::collections::BTreeMap;

use crate::symbolic::{ChordEvent, ChordLabel, LeadSheet, MelodyNote, Quality, Ranges, Song};

/// Minimum cosine score for a chord label to be emitted.
pub const CHORD_THRESHOLD: f64 = 0.5;

pub type Chroma = [f64; 12];

/// Energy per pitch class, scaled so the largest entry is 1.
pub fn chroma_of<I>(weighted: I) -> Chroma
where
    I: IntoIterator<Item = (u8, f64)>,
{
    let mut c = [0.0; 12];
    for (pitch, w) in weighted {
        c[usize::from(pitch % 12)] += w.max(0.0);
    }
    let max = c.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut c {
            *v /= max;
        }
    }
    c
}

/// Binary chord-tone indicator.
pub fn template(label: ChordLabel) -> Chroma {
    let mut c = [0.0; 12];
    for pc in label.pitch_classes() {
        c[usize::from(pc)] = 1.0;
    }
    c
}

pub fn cosine(a: &Chroma, b: &Chroma) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Chroma of the notes sounding in `[start, end)` (grid positions),
/// weighted by how long each note overlaps the window.
pub fn window_chroma(song: &Song, ranges: &Ranges, start: u64, end: u64) -> Chroma {
    chroma_of(song.notes.iter().filter_map(|n| {
        let a = song.grid.absolute(n.onset);
        let b = a + u64::from(ranges.duration_units(n.duration));
        let overlap = b.min(end).saturating_sub(a.max(start));
        (overlap > 0).then_some((n.pitch, overlap as f64))
    }))
}

/// Best-scoring label for a chroma vector; no-chord when silent or when
/// nothing reaches [`CHORD_THRESHOLD`].
pub fn best_label(chroma: &Chroma) -> ChordLabel {
    if chroma.iter().all(|&v| v == 0.0) {
        return ChordLabel::NoChord;
    }
    let mut best = (ChordLabel::NoChord, f64::NEG_INFINITY);
    for root in 0..12u8 {
        for q in Quality::ALL {
            let label = ChordLabel::chord(root, q);
            let score = cosine(&template(label), chroma);
            if score > best.1 + 1e-12 {
                best = (label, score);
            }
        }
    }
    if best.1 >= CHORD_THRESHOLD {
        best.0
    } else {
        ChordLabel::NoChord
    }
}

/// One label per beat window, consecutive repeats merged.
pub fn recognize_chords(song: &Song, ranges: &Ranges) -> Vec<ChordEvent> {
    let grid = song.grid;
    let step = u64::from(grid.positions_per_beat());
    let beats = u64::from(song.n_bars) * u64::from(grid.beats_per_bar);
    let mut out = Vec::new();
    let mut current = ChordLabel::NoChord;
    for beat in 0..beats {
        let start = beat * step;
        let label = best_label(&window_chroma(song, ranges, start, start + step));
        if label != current {
            out.push(ChordEvent {
                onset: grid.onset_at(start),
                label,
            });
            current = label;
        }
    }
    out
}

/// Highest note per onset, cut at the next kept onset, then moved to the
/// nearest beat with beat-multiple durations.
pub fn skyline_melody(song: &Song, ranges: &Ranges) -> Vec<MelodyNote> {
    let grid = song.grid;
    let mut top: BTreeMap<u64, (u8, u64)> = BTreeMap::new();
    for n in &song.notes {
        let at = grid.absolute(n.onset);
        let len = u64::from(ranges.duration_units(n.duration));
        let e = top.entry(at).or_insert((n.pitch, len));
        if n.pitch > e.0 {
            *e = (n.pitch, len);
        }
    }
    let kept: Vec<(u64, u8, u64)> = top.into_iter().map(|(at, (p, len))| (at, p, len)).collect();
    let step = u64::from(grid.positions_per_beat());
    let total = u64::from(song.n_bars) * u64::from(grid.positions_per_bar);

    // truncate at the next kept onset, then snap to beats
    let mut on_beats: BTreeMap<u64, (u8, u64)> = BTreeMap::new();
    for (i, &(at, pitch, len)) in kept.iter().enumerate() {
        let end = kept.get(i + 1).map_or(at + len, |next| (at + len).min(next.0));
        let beat_at = ((at + step / 2) / step) * step;
        if beat_at >= total {
            continue;
        }
        let e = on_beats.entry(beat_at).or_insert((pitch, end));
        if pitch > e.0 {
            *e = (pitch, end);
        }
    }
    let snapped: Vec<(u64, u8, u64)> = on_beats.into_iter().map(|(at, (p, end))| (at, p, end)).collect();
    let max_units = u64::from(ranges.duration_classes.saturating_sub(1)).max(step);
    snapped
        .iter()
        .enumerate()
        .map(|(i, &(at, pitch, end))| {
            let raw = end.saturating_sub(at);
            let mut units = ((raw + step / 2) / step).max(1) * step;
            if let Some(next) = snapped.get(i + 1) {
                units = units.min(next.0 - at);
            }
            units = units.min(total - at).min(max_units / step * step).max(1);
            MelodyNote {
                pitch,
                onset: grid.onset_at(at),
                duration: units as u8,
            }
        })
        .collect()
}

pub fn make_leadsheet(song: &Song, ranges: &Ranges) -> LeadSheet {
    LeadSheet {
        grid: song.grid,
        n_bars: song.n_bars,
        melody: skyline_melody(song, ranges),
        chords: recognize_chords(song, ranges),
    }
}
