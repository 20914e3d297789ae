//! Reading song and lead-sheet directories, writing artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use cpword::analysis::make_leadsheet;
use cpword::symbolic::{parse_json_leadsheet, parse_json_song, parse_smf, Diagnostics, LeadSheet, Song};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub name: String,
    pub file: String,
    pub item: T,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub file: String,
    pub error: String,
}

const SONG_EXTENSIONS: [&str; 3] = ["mid", "midi", "json"];

/// Song-like files of `dir`, sorted by file name.
pub fn song_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && ext(p).is_some_and(|e| SONG_EXTENSIONS.contains(&e.as_str())))
        .collect();
    files.sort();
    Ok(files)
}

fn ext(p: &Path) -> Option<String> {
    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

pub fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

fn file_name(p: &Path) -> String {
    p.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

pub fn read_song(path: &Path, cfg: &RunConfig) -> Result<(Song, Diagnostics), String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    if ext(path).as_deref() == Some("json") {
        let text = String::from_utf8(bytes).map_err(|e| e.to_string())?;
        let song = parse_json_song(&text, &cfg.ranges).map_err(|e| e.to_string())?;
        Ok((song, Diagnostics::default()))
    } else {
        parse_smf(&bytes, cfg.grid, &cfg.ranges).map_err(|e| e.to_string())
    }
}

/// JSON documents without velocities or tempos are lead sheets; anything
/// else is read as a song and reduced to its lead sheet.
pub fn read_lead(path: &Path, cfg: &RunConfig) -> Result<LeadSheet, String> {
    if ext(path).as_deref() == Some("json") {
        let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
        let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        let has_vel = doc["notes"].as_array().is_some_and(|ns| ns.iter().any(|n| n.get("vel").is_some()));
        let has_tempo = doc["tempos"].as_array().is_some_and(|t| !t.is_empty());
        if !has_vel && !has_tempo {
            return parse_json_leadsheet(&text, &cfg.ranges).map_err(|e| e.to_string());
        }
    }
    let (song, _) = read_song(path, cfg)?;
    Ok(make_leadsheet(&song, &cfg.ranges))
}

pub fn read_songs(dir: &Path, cfg: &RunConfig) -> Result<(Vec<Loaded<Song>>, Vec<Failure>), CliError> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for p in song_files(dir)? {
        match read_song(&p, cfg) {
            Ok((item, diagnostics)) => ok.push(Loaded { name: stem(&p), file: file_name(&p), item, diagnostics }),
            Err(error) => failed.push(Failure { file: file_name(&p), error }),
        }
    }
    Ok((ok, failed))
}

pub fn read_leads(dir: &Path, cfg: &RunConfig) -> Result<(Vec<Loaded<LeadSheet>>, Vec<Failure>), CliError> {
    let files = if dir.is_dir() { song_files(dir)? } else { vec![dir.to_path_buf()] };
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for p in files {
        match read_lead(&p, cfg) {
            Ok(item) => ok.push(Loaded { name: stem(&p), file: file_name(&p), item, diagnostics: Diagnostics::default() }),
            Err(error) => failed.push(Failure { file: file_name(&p), error }),
        }
    }
    Ok((ok, failed))
}

pub fn report_failures(failed: &[Failure]) {
    for f in failed {
        eprintln!("warning: skipped {}: {}", f.file, f.error);
    }
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write(path, text)
}

pub fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}
