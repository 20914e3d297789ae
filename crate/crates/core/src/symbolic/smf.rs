//! Standard MIDI File reading and writing.
//!
//! Only note-on/note-off and set-tempo events matter; everything else is
//! skipped. Files are assumed to be beat-aligned at their own division.

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use super::quantize::{quantize_with, song_to_raw, Diagnostics, RawEvents, RawNote, RawTempo};
use super::{GridConfig, Ranges, Song};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmfError {
    #[error("malformed header chunk: {0}")]
    Header(String),
    #[error("unsupported SMF format {0}")]
    UnsupportedFormat(u16),
    #[error("SMPTE time division is not supported")]
    SmpteDivision,
    #[error("truncated data at byte {0}")]
    Truncated(usize),
    #[error("malformed track {track}: {reason}")]
    Track { track: usize, reason: String },
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self) -> Result<u8, SmfError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or(SmfError::Truncated(self.base + self.pos))?;
        self.pos += 1;
        Ok(b)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], SmfError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(SmfError::Truncated(self.base + self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn vlq(&mut self) -> Result<u32, SmfError> {
        let (value, used) = decode_vlq(&self.bytes[self.pos..])
            .ok_or(SmfError::Truncated(self.base + self.pos))?;
        self.pos += used;
        Ok(value)
    }
}

/// Decodes a MIDI variable-length quantity, returning the value and the
/// number of bytes consumed. At most four bytes are accepted.
pub fn decode_vlq(bytes: &[u8]) -> Option<(u32, usize)> {
    let mut value = 0u32;
    for (i, &b) in bytes.iter().take(4).enumerate() {
        value = (value << 7) | u32::from(b & 0x7f);
        if b & 0x80 == 0 {
            return Some((value, i + 1));
        }
    }
    None
}

fn encode_vlq(mut value: u32, out: &mut Vec<u8>) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

#[derive(Debug)]
enum Event {
    On { ch: u8, pitch: u8, vel: u8 },
    Off { ch: u8, pitch: u8 },
    Tempo { micros_per_beat: u32 },
}

fn read_track(data: &[u8], base: usize, track: usize, out: &mut Vec<(u64, usize, Event)>) -> Result<u64, SmfError> {
    let mut cur = Cursor { bytes: data, pos: 0, base };
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let bad = |reason: &str| SmfError::Track {
        track,
        reason: reason.to_string(),
    };
    while cur.peek().is_some() {
        tick += u64::from(cur.vlq()?);
        let mut status = cur.u8()?;
        let first_data;
        if status < 0x80 {
            first_data = Some(status);
            status = running.ok_or_else(|| bad("running status without a prior status byte"))?;
        } else {
            first_data = None;
        }
        match status {
            0xff => {
                running = None;
                let kind = cur.u8()?;
                let len = cur.vlq()? as usize;
                let payload = cur.take(len)?;
                match kind {
                    0x51 if len == 3 => {
                        let us = (u32::from(payload[0]) << 16) | (u32::from(payload[1]) << 8) | u32::from(payload[2]);
                        if us > 0 {
                            out.push((tick, out.len(), Event::Tempo { micros_per_beat: us }));
                        }
                    }
                    0x2f => return Ok(tick),
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = cur.vlq()? as usize;
                cur.take(len)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let d1 = match first_data {
                    Some(d) => d,
                    None => cur.u8()?,
                };
                let ch = status & 0x0f;
                match status & 0xf0 {
                    0x80 => {
                        cur.u8()?;
                        out.push((tick, out.len(), Event::Off { ch, pitch: d1 }));
                    }
                    0x90 => {
                        let vel = cur.u8()?;
                        let ev = if vel == 0 {
                            Event::Off { ch, pitch: d1 }
                        } else {
                            Event::On { ch, pitch: d1, vel }
                        };
                        out.push((tick, out.len(), ev));
                    }
                    0xc0 | 0xd0 => {}
                    _ => {
                        cur.u8()?;
                    }
                }
            }
            _ => return Err(bad(&format!("unexpected status byte {status:#04x}"))),
        }
    }
    Ok(tick)
}

/// Parses a type-0 or type-1 SMF and quantizes it onto `grid`.
///
/// Note velocities are kept at their MIDI values; the token codecs bin them.
pub fn parse_smf(bytes: &[u8], grid: GridConfig, ranges: &Ranges) -> Result<(Song, Diagnostics), SmfError> {
    if bytes.len() < 14 || &bytes[0..4] != b"MThd" {
        return Err(SmfError::Header("missing MThd".into()));
    }
    let header_len = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    if header_len < 6 || bytes.len() < 8 + header_len {
        return Err(SmfError::Header(format!("header length {header_len}")));
    }
    let format = u16::from_be_bytes([bytes[8], bytes[9]]);
    let n_tracks = u16::from_be_bytes([bytes[10], bytes[11]]);
    let division = u16::from_be_bytes([bytes[12], bytes[13]]);
    if format == 2 {
        return Err(SmfError::UnsupportedFormat(2));
    }
    if format > 2 {
        return Err(SmfError::Header(format!("unknown format {format}")));
    }
    if division & 0x8000 != 0 {
        return Err(SmfError::SmpteDivision);
    }
    if division == 0 {
        return Err(SmfError::Header("zero ticks per beat".into()));
    }

    let mut events = Vec::new();
    let mut pos = 8 + header_len;
    let mut track = 0usize;
    let mut end_tick = 0u64;
    while pos + 8 <= bytes.len() && track < usize::from(n_tracks) {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_be_bytes([bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7]]) as usize;
        let start = pos + 8;
        let end = start.checked_add(len).filter(|&e| e <= bytes.len()).ok_or(SmfError::Truncated(start))?;
        if id == b"MTrk" {
            let mut track_events = Vec::new();
            end_tick = end_tick.max(read_track(&bytes[start..end], start, track, &mut track_events)?);
            events.extend(track_events.into_iter().map(|(t, i, e)| (t, track, i, e)));
            track += 1;
        }
        pos = end;
    }
    // stable merge across tracks: tick, then track, then file order
    events.sort_by_key(|(t, tr, i, _)| (*t, *tr, *i));

    let scale = |tick: u64| -> u64 {
        ((u128::from(tick) * u128::from(grid.ticks_per_beat) + u128::from(division / 2)) / u128::from(division)) as u64
    };

    let mut open: BTreeMap<(u8, u8), VecDeque<(u64, u8)>> = BTreeMap::new();
    let mut raw = RawEvents::default();
    let mut unmatched = 0usize;
    for (tick, _, _, ev) in &events {
        let t = scale(*tick);
        match *ev {
            Event::On { ch, pitch, vel } => open.entry((ch, pitch)).or_default().push_back((t, vel)),
            Event::Off { ch, pitch } => match open.get_mut(&(ch, pitch)).and_then(|q| q.pop_front()) {
                Some((start, vel)) => raw.notes.push(RawNote {
                    pitch,
                    start_tick: start,
                    end_tick: t,
                    velocity: vel,
                }),
                None => unmatched += 1,
            },
            Event::Tempo { micros_per_beat } => raw.tempos.push(RawTempo {
                tick: t,
                bpm: 60_000_000.0 / f64::from(micros_per_beat),
            }),
        }
    }
    let tpp = u64::from(grid.ticks_per_position());
    let mut dangling = 0usize;
    for ((_, pitch), queue) in open {
        for (start, vel) in queue {
            dangling += 1;
            raw.notes.push(RawNote {
                pitch,
                start_tick: start,
                end_tick: start + tpp,
                velocity: vel,
            });
        }
    }
    raw.end_tick = Some(scale(end_tick));
    let (song, mut diag) = quantize_with(&raw, grid, ranges, false);
    diag.dangling_notes = dangling;
    diag.unmatched_note_offs = unmatched;
    Ok((song, diag))
}

/// Renders a song as a format-0 SMF at the song grid's tick resolution.
pub fn write_smf(song: &Song, ranges: &Ranges) -> Vec<u8> {
    let raw = song_to_raw(song, ranges);
    // (tick, order, bytes): tempo first, then note-offs, then note-ons
    let mut events: Vec<(u64, u8, u8, Vec<u8>)> = Vec::new();
    for t in &raw.tempos {
        let us = (60_000_000.0 / t.bpm).round() as u32;
        events.push((t.tick, 0, 0, vec![0xff, 0x51, 0x03, (us >> 16) as u8, (us >> 8) as u8, us as u8]));
    }
    for n in &raw.notes {
        events.push((n.end_tick, 1, n.pitch, vec![0x80, n.pitch, 0]));
        events.push((n.start_tick, 2, n.pitch, vec![0x90, n.pitch, n.velocity.max(1)]));
    }
    events.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));

    let mut track = Vec::new();
    let mut last = 0u64;
    for (tick, _, _, bytes) in &events {
        encode_vlq((tick - last) as u32, &mut track);
        track.extend_from_slice(bytes);
        last = *tick;
    }
    let end = raw.end_tick.unwrap_or(last).max(last);
    encode_vlq((end - last) as u32, &mut track);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(song.grid.ticks_per_beat as u16).to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
