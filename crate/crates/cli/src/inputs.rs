//! Input discovery and loading.
//!
//! An input entry is a recording file, a directory (its `.jsonl` and `.csv`
//! recordings), or a path whose last component holds `*` or `?` wildcards.
//! A recording `x.jsonl` may have two sidecars next to it: `x.meta.json`
//! (id, trial, nominal rate, labels) and `x.clicks.jsonl`. The id defaults to
//! the file stem.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use gazelab_core::recording::{parse_clicks, parse_recording, LogFormat, RecordingMeta};
use gazelab_core::{ClickEvent, Recording};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::CliError;

pub const CLICKS_SUFFIX: &str = ".clicks.jsonl";
pub const META_SUFFIX: &str = ".meta.json";

/// `*` matches any run of characters, `?` exactly one.
pub fn wildcard(pattern: &str, name: &str) -> bool {
    let (p, n): (Vec<char>, Vec<char>) = (pattern.chars().collect(), name.chars().collect());
    // Greedy match with backtracking to the last star.
    let (mut i, mut j) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while j < n.len() {
        if i < p.len() && (p[i] == '?' || p[i] == n[j]) {
            i += 1;
            j += 1;
        } else if i < p.len() && p[i] == '*' {
            star = Some((i, j));
            i += 1;
        } else if let Some((si, sj)) = star {
            i = si + 1;
            j = sj + 1;
            star = Some((si, sj + 1));
        } else {
            return false;
        }
    }
    p[i..].iter().all(|&c| c == '*')
}

fn is_recording(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    path.is_file() && !name.ends_with(CLICKS_SUFFIX) && (name.ends_with(".jsonl") || name.ends_with(".csv"))
}

fn sorted_dir(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::at(dir, e))?;
    let mut out: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| keep(p)).collect();
    out.sort();
    Ok(out)
}

/// Recording paths named by `entries`, in entry order, each directory or
/// pattern sorted by name, duplicates dropped.
pub fn expand(entries: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for entry in entries {
        let path = PathBuf::from(entry);
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let found = if name.contains(['*', '?']) {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            sorted_dir(&dir, |p| {
                is_recording(p) && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| wildcard(name, n))
            })?
        } else if path.is_dir() {
            sorted_dir(&path, is_recording)?
        } else if path.is_file() {
            vec![path.clone()]
        } else {
            return Err(CliError::at(&path, "no such recording"));
        };
        if found.is_empty() {
            return Err(CliError::at(&path, "matches no recordings"));
        }
        out.extend(found.into_iter().filter(|p| seen.insert(p.clone())));
    }
    Ok(out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct MetaSidecar {
    id: Option<String>,
    trial: String,
    nominal_rate: Option<f64>,
    labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Input {
    pub path: PathBuf,
    pub recording: Recording,
    pub clicks: Vec<ClickEvent>,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    path.with_file_name(format!("{stem}{suffix}"))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::at(path, e))
}

pub fn load(path: &Path) -> Result<Input, CliError> {
    let meta_path = sidecar(path, META_SUFFIX);
    let side: MetaSidecar = if meta_path.is_file() {
        serde_json::from_reader(open(&meta_path)?).map_err(|e| CliError::at(&meta_path, e))?
    } else {
        MetaSidecar::default()
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("recording").to_string();
    let meta = RecordingMeta {
        id: side.id.unwrap_or(stem),
        trial: side.trial,
        nominal_rate: side.nominal_rate,
        labels: side.labels,
    };
    let recording = parse_recording(open(path)?, LogFormat::from_path(path), meta).map_err(|e| CliError::at(path, e))?;
    let clicks_path = sidecar(path, CLICKS_SUFFIX);
    let clicks = if clicks_path.is_file() {
        parse_clicks(open(&clicks_path)?).map_err(|e| CliError::at(&clicks_path, e))?
    } else {
        Vec::new()
    };
    Ok(Input { path: path.to_path_buf(), recording, clicks })
}

/// Load every input in parallel; order follows `expand`.
pub fn load_all(entries: &[String]) -> Result<Vec<Input>, CliError> {
    if entries.is_empty() {
        return Err(CliError::Usage("no inputs: set `inputs` in the config or pass --input".into()));
    }
    let inputs: Vec<Input> = expand(entries)?.par_iter().map(|p| load(p)).collect::<Result<_, _>>()?;
    let mut ids = BTreeSet::new();
    for i in &inputs {
        if !ids.insert(i.recording.id.as_str()) {
            return Err(CliError::at(&i.path, format!("duplicate recording id `{}`", i.recording.id)));
        }
    }
    Ok(inputs)
}
