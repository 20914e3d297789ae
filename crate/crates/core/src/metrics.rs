//! Melody and chord matchness between a lead sheet and a piano rendition.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{chroma_of, cosine, template};
use crate::sampling::session_rng;
use crate::symbolic::{ChordLabel, LeadSheet, Ranges, Song};

/// Onset tolerance for a melody match, in grid positions (an eighth note).
pub const ONSET_TOLERANCE: u64 = 2;

/// Longest common subsequence length under an arbitrary match predicate.
pub fn lcs_by<A, B>(a: &[A], b: &[B], matches: impl Fn(&A, &B) -> bool) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            row[j + 1] = if matches(x, y) {
                prev[j] + 1
            } else {
                prev[j + 1].max(row[j])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

/// Mean over bars (with at least one melody note) of LCS / melody notes in bar.
/// `None` when the lead has no melody inside the compared bars.
pub fn melody_matchness(lead: &LeadSheet, piano: &Song) -> Option<f64> {
    let grid = lead.grid;
    let bars = lead.n_bars.min(piano.n_bars);
    let per_bar = u64::from(grid.positions_per_bar);
    let mut keys: Vec<(u64, u8)> = piano.notes.iter().map(|n| (piano.grid.absolute(n.onset), n.pitch)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));

    let mut ratios = Vec::new();
    for bar in 0..bars {
        let target: Vec<(u64, u8)> = lead
            .melody
            .iter()
            .filter(|m| m.onset.bar == bar)
            .map(|m| (grid.absolute(m.onset), m.pitch))
            .collect();
        if target.is_empty() {
            continue;
        }
        let lo = (u64::from(bar) * per_bar).saturating_sub(ONSET_TOLERANCE);
        let hi = u64::from(bar + 1) * per_bar + ONSET_TOLERANCE;
        let cand: Vec<(u64, u8)> = keys.iter().copied().filter(|k| k.0 >= lo && k.0 < hi).collect();
        let hit = lcs_by(&target, &cand, |t, p| t.1 == p.1 && t.0.abs_diff(p.0) <= ONSET_TOLERANCE);
        ratios.push(hit as f64 / target.len() as f64);
    }
    (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Duration-weighted mean cosine between each chord label's template and the
/// piano chroma under its segment. No-chord segments are skipped.
pub fn chord_matchness(lead: &LeadSheet, piano: &Song, ranges: &Ranges) -> Option<f64> {
    let grid = lead.grid;
    let end = u64::from(lead.n_bars.min(piano.n_bars)) * u64::from(grid.positions_per_bar);
    let mut total = 0.0;
    let mut weight = 0.0;
    for (i, c) in lead.chords.iter().enumerate() {
        let start = grid.absolute(c.onset);
        let stop = lead.chords.get(i + 1).map_or(end, |n| grid.absolute(n.onset)).min(end);
        if c.label == ChordLabel::NoChord || stop <= start {
            continue;
        }
        let chroma = chroma_of(piano.notes.iter().filter_map(|n| {
            let a = piano.grid.absolute(n.onset);
            let b = a + u64::from(ranges.duration_units(n.duration));
            let overlap = b.min(stop).saturating_sub(a.max(start));
            (overlap > 0).then_some((n.pitch, overlap as f64))
        }));
        let w = (stop - start) as f64;
        total += w * cosine(&template(c.label), &chroma);
        weight += w;
    }
    (weight > 0.0).then(|| total / weight)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongMatch {
    pub name: String,
    pub melody: Option<f64>,
    pub chord: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub label: String,
    pub songs: usize,
    pub melody_mean: Option<f64>,
    pub melody_std: Option<f64>,
    pub chord_mean: Option<f64>,
    pub chord_std: Option<f64>,
}

impl MatchRow {
    pub fn of(label: &str, songs: &[SongMatch]) -> Self {
        let stats = |vals: Vec<f64>| -> (Option<f64>, Option<f64>) {
            if vals.is_empty() {
                return (None, None);
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (Some(mean), Some(var.sqrt()))
        };
        let (melody_mean, melody_std) = stats(songs.iter().filter_map(|s| s.melody).collect());
        let (chord_mean, chord_std) = stats(songs.iter().filter_map(|s| s.chord).collect());
        MatchRow {
            label: label.to_string(),
            songs: songs.len(),
            melody_mean,
            melody_std,
            chord_mean,
            chord_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchnessReport {
    pub songs: Vec<SongMatch>,
    pub rows: Vec<MatchRow>,
}

impl MatchnessReport {
    pub fn table(&self) -> String {
        let cell = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{m:.3} (±{s:.3})"),
            _ => "-".to_string(),
        };
        let mut out = format!("{:<24} {:>6} {:>16} {:>16}\n", "", "songs", "melody", "chord");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>6} {:>16} {:>16}\n",
                r.label,
                r.songs,
                cell(r.melody_mean, r.melody_std),
                cell(r.chord_mean, r.chord_std)
            ));
        }
        out
    }
}

/// A fixed-point-free pairing of `n` items: item `i` is paired with `out[i]`.
/// Empty for fewer than two items.
pub fn shuffled_pairing(n: usize, seed: u64) -> Vec<usize> {
    if n < 2 {
        return Vec::new();
    }
    let shift = session_rng(seed, 0x5eed).gen_range(1..n);
    (0..n).map(|i| (i + shift) % n).collect()
}

fn score(name: &str, lead: &LeadSheet, piano: &Song, ranges: &Ranges) -> SongMatch {
    SongMatch {
        name: name.to_string(),
        melody: melody_matchness(lead, piano),
        chord: chord_matchness(lead, piano, ranges),
    }
}

/// Scores true pairs and a seeded shuffled pairing as a baseline row.
pub fn evaluate_pairs(pairs: &[(String, LeadSheet, Song)], ranges: &Ranges, seed: u64) -> MatchnessReport {
    let songs: Vec<SongMatch> = pairs
        .par_iter()
        .map(|(name, lead, piano)| score(name, lead, piano, ranges))
        .collect();
    let mut rows = vec![MatchRow::of("true pairs", &songs)];
    let perm = shuffled_pairing(pairs.len(), seed);
    if !perm.is_empty() {
        let shuffled: Vec<SongMatch> = perm
            .par_iter()
            .enumerate()
            .map(|(i, &j)| score(&pairs[i].0, &pairs[i].1, &pairs[j].2, ranges))
            .collect();
        rows.push(MatchRow::of("randomized pairs", &shuffled));
    }
    MatchnessReport { songs, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{ChordEvent, GridConfig, MelodyNote, Note, Onset, Quality};

    fn brute_lcs(a: &[(u64, u8)], b: &[(u64, u8)]) -> usize {
        if a.is_empty() || b.is_empty() {
            return 0;
        }
        let skip = brute_lcs(&a[1..], b).max(brute_lcs(a, &b[1..]));
        let ok = a[0].1 == b[0].1 && a[0].0.abs_diff(b[0].0) <= ONSET_TOLERANCE;
        if ok {
            skip.max(1 + brute_lcs(&a[1..], &b[1..]))
        } else {
            skip
        }
    }

    fn lead(melody: &[(u8, u32)], chords: Vec<ChordEvent>) -> LeadSheet {
        LeadSheet {
            grid: GridConfig::default(),
            n_bars: 1,
            melody: melody
                .iter()
                .map(|&(p, pos)| MelodyNote { pitch: p, onset: Onset::new(0, pos), duration: 4 })
                .collect(),
            chords,
        }
    }

    fn piano(notes: &[(u8, u32, u8)]) -> Song {
        let mut s = Song::empty(GridConfig::default(), 1);
        s.notes = notes
            .iter()
            .map(|&(p, pos, d)| Note { pitch: p, onset: Onset::new(0, pos), duration: d, velocity: 80 })
            .collect();
        s.normalize();
        s
    }

    #[test]
    fn two_of_three() {
        let l = lead(&[(60, 0), (64, 4), (67, 8)], vec![]);
        let p = piano(&[(60, 0, 4), (67, 8, 4)]);
        let m = melody_matchness(&l, &p).unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn exact_and_disjoint() {
        let l = lead(&[(60, 0), (64, 4)], vec![]);
        assert_eq!(melody_matchness(&l, &piano(&[(60, 0, 4), (64, 4, 4), (48, 0, 8)])), Some(1.0));
        assert_eq!(melody_matchness(&l, &piano(&[(61, 0, 4), (65, 4, 4)])), Some(0.0));
        assert_eq!(melody_matchness(&lead(&[], vec![]), &piano(&[])), None);
    }

    #[test]
    fn onset_tolerance_is_an_eighth() {
        let l = lead(&[(60, 4)], vec![]);
        assert_eq!(melody_matchness(&l, &piano(&[(60, 6, 2)])), Some(1.0));
        assert_eq!(melody_matchness(&l, &piano(&[(60, 7, 2)])), Some(0.0));
    }

    #[test]
    fn dp_agrees_with_enumeration() {
        let mut rng = session_rng(11, 0);
        for _ in 0..300 {
            let mut gen = |n: usize| -> Vec<(u64, u8)> {
                let mut v: Vec<(u64, u8)> = (0..n).map(|_| (rng.gen_range(0..12), rng.gen_range(60..64))).collect();
                v.sort();
                v
            };
            let a = gen(5);
            let b = gen(6);
            let dp = lcs_by(&a, &b, |x, y| x.1 == y.1 && x.0.abs_diff(y.0) <= ONSET_TOLERANCE);
            assert_eq!(dp, brute_lcs(&a, &b));
        }
    }

    #[test]
    fn chord_cosine_closed_form() {
        let r = Ranges::default();
        let cmaj = ChordLabel::chord(0, Quality::Maj);
        let expect = 2.5 / (3f64.sqrt() * 2.25f64.sqrt());
        let chroma = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0];
        assert!((cosine(&template(cmaj), &chroma) - expect).abs() < 1e-12);
        assert!((expect - 0.962).abs() < 5e-4);

        let mut l = lead(&[], vec![ChordEvent { onset: Onset::new(0, 0), label: cmaj }]);
        l.n_bars = 1;
        let p = piano(&[(60, 0, 16), (64, 0, 16), (67, 0, 8)]);
        assert!((chord_matchness(&l, &p, &r).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn chord_extremes() {
        let r = Ranges::default();
        let l = lead(&[], vec![ChordEvent { onset: Onset::new(0, 0), label: ChordLabel::chord(0, Quality::Maj) }]);
        assert!((chord_matchness(&l, &piano(&[(48, 0, 16), (52, 0, 16), (55, 0, 16)]), &r).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(chord_matchness(&l, &piano(&[(61, 0, 16), (66, 0, 16)]), &r), Some(0.0));
        assert_eq!(chord_matchness(&l, &piano(&[]), &r), Some(0.0));
    }

    #[test]
    fn segments_weight_by_length() {
        let r = Ranges::default();
        let l = lead(
            &[],
            vec![
                ChordEvent { onset: Onset::new(0, 0), label: ChordLabel::chord(0, Quality::Maj) },
                ChordEvent { onset: Onset::new(0, 12), label: ChordLabel::chord(2, Quality::Min) },
            ],
        );
        let p = piano(&[(60, 0, 12), (64, 0, 12), (67, 0, 12)]);
        assert!((chord_matchness(&l, &p, &r).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pairing_has_no_fixed_points() {
        for n in 2..20 {
            let p = shuffled_pairing(n, n as u64);
            let mut seen = p.clone();
            seen.sort();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
            assert!(p.iter().enumerate().all(|(i, &j)| i != j));
        }
        assert!(shuffled_pairing(1, 0).is_empty());
    }
}
