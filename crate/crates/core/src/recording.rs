//! Raw sensor logs: parsing, canonicalization, tracking quality and gaze gap repair.
//!
//! A log is either JSON Lines, one frame per line:
//!
//! ```text
//! {"t_ms": 0.0, "gaze": [0,0,1], "head": [1,0,0,0], "pupil_l": 3.1, "pupil_r": 3.0, "valid": true, "aoi": "screen"}
//! ```
//!
//! or CSV with the columns `t_ms, gaze_x, gaze_y, gaze_z, head_w, head_x, head_y,
//! head_z, pupil_l, pupil_r, valid, aoi` where an empty cell means missing.
//! `t_ms`, the four head components and `valid` are mandatory.
//! Lines starting with `#` are comments in both formats.
//!
//! Gaze is the world-space combined (head + eye) direction. Parsing produces a
//! canonical recording: vectors renormalized, frames sorted by time, duplicate
//! timestamps collapsed to the last occurrence, invalid frames stripped of gaze.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Quat, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t_ms: f64,
    pub gaze: Option<Vec3>,
    pub head: Quat,
    pub pupil_l: Option<f64>,
    pub pupil_r: Option<f64>,
    pub valid: bool,
    pub aoi: Option<String>,
}

impl SensorFrame {
    /// Mean of the valid eyes, or the single valid eye.
    pub fn fused_pupil(&self) -> Option<f64> {
        match (self.pupil_l, self.pupil_r) {
            (Some(l), Some(r)) => Some(0.5 * (l + r)),
            (Some(v), None) | (None, Some(v)) => Some(v),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub id: String,
    pub trial: String,
    pub frames: Vec<SensorFrame>,
    pub nominal_rate: f64,
    pub labels: BTreeMap<String, String>,
}

impl Recording {
    pub fn sample_period_ms(&self) -> f64 {
        1000.0 / self.nominal_rate
    }

    pub fn start_ms(&self) -> f64 {
        self.frames.first().map_or(0.0, |f| f.t_ms)
    }

    pub fn end_ms(&self) -> f64 {
        self.frames.last().map_or(0.0, |f| f.t_ms)
    }

    /// Time spanned from the first to the last frame.
    pub fn duration_ms(&self) -> f64 {
        self.end_ms() - self.start_ms()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t_ms).collect()
    }

    pub fn gaze(&self) -> Vec<Option<Vec3>> {
        self.frames.iter().map(|f| f.gaze).collect()
    }

    pub fn heads(&self) -> Vec<Quat> {
        self.frames.iter().map(|f| f.head).collect()
    }

    /// Forward interval of frame `i`; the last frame uses the nominal period.
    pub fn frame_interval_ms(&self, i: usize) -> f64 {
        match self.frames.get(i + 1) {
            Some(next) => next.t_ms - self.frames[i].t_ms,
            None => self.sample_period_ms(),
        }
    }

    /// Shift every timestamp by `offset_ms`.
    pub fn translated(&self, offset_ms: f64) -> Recording {
        let mut out = self.clone();
        for f in &mut out.frames {
            f.t_ms += offset_ms;
        }
        out
    }
}

/// Identity and labels attached to a parsed log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub id: String,
    #[serde(default)]
    pub trial: String,
    #[serde(default)]
    pub nominal_rate: Option<f64>,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Jsonl,
    Csv,
}

impl LogFormat {
    pub fn from_path(path: &std::path::Path) -> LogFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => LogFormat::Csv,
            _ => LogFormat::Jsonl,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonFrame {
    t_ms: f64,
    #[serde(default)]
    gaze: Option<[f64; 3]>,
    head: [f64; 4],
    #[serde(default)]
    pupil_l: Option<f64>,
    #[serde(default)]
    pupil_r: Option<f64>,
    valid: bool,
    #[serde(default)]
    aoi: Option<String>,
}

fn canonical_frame(raw: JsonFrame, line: usize) -> Result<SensorFrame> {
    let bad = |message: String| Error::Parse { line, message };
    if !raw.t_ms.is_finite() {
        return Err(bad("non-finite t_ms".into()));
    }
    let head = Quat::from(raw.head)
        .normalized()
        .ok_or_else(|| bad("head quaternion has zero or non-finite norm".into()))?;
    // Invalid frames carry no trusted gaze; absent gaze implies invalid.
    let gaze = if raw.valid {
        raw.gaze.and_then(|g| Vec3::from(g).normalized())
    } else {
        None
    };
    let pupil = |p: Option<f64>| p.filter(|v| v.is_finite() && *v > 0.0);
    Ok(SensorFrame {
        t_ms: raw.t_ms,
        valid: gaze.is_some(),
        gaze,
        head,
        pupil_l: pupil(raw.pupil_l),
        pupil_r: pupil(raw.pupil_r),
        aoi: raw.aoi.filter(|s| !s.is_empty()),
    })
}

fn parse_jsonl_frames<R: BufRead>(reader: R) -> Result<Vec<SensorFrame>> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let raw: JsonFrame = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        frames.push(canonical_frame(raw, i + 1)?);
    }
    Ok(frames)
}

const CSV_MANDATORY: [&str; 6] = ["t_ms", "head_w", "head_x", "head_y", "head_z", "valid"];
pub const CSV_HEADER: [&str; 12] = [
    "t_ms", "gaze_x", "gaze_y", "gaze_z", "head_w", "head_x", "head_y", "head_z", "pupil_l",
    "pupil_r", "valid", "aoi",
];

fn parse_csv_frames<R: BufRead>(reader: R) -> Result<Vec<SensorFrame>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    for m in CSV_MANDATORY {
        if col(m).is_none() {
            return Err(Error::MissingColumn(m.to_string()));
        }
    }
    let idx: Vec<Option<usize>> = CSV_HEADER.iter().map(|c| col(c)).collect();
    let mut frames = Vec::new();
    for (row_no, rec) in rdr.records().enumerate() {
        let line = row_no + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let cell = |k: usize| idx[k].and_then(|i| rec.get(i)).filter(|s| !s.is_empty());
        let num = |k: usize| -> Result<Option<f64>> {
            cell(k)
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("column `{}`: `{s}` is not a number", CSV_HEADER[k]),
                    })
                })
                .transpose()
        };
        let req = |k: usize| -> Result<f64> {
            num(k)?.ok_or_else(|| Error::Parse {
                line,
                message: format!("empty mandatory cell `{}`", CSV_HEADER[k]),
            })
        };
        let gaze = match (num(1)?, num(2)?, num(3)?) {
            (Some(x), Some(y), Some(z)) => Some([x, y, z]),
            (None, None, None) => None,
            _ => {
                return Err(Error::Parse { line, message: "partially missing gaze vector".into() })
            }
        };
        let valid = match cell(10).map(str::to_ascii_lowercase).as_deref() {
            Some("true") | Some("1") => true,
            Some("false") | Some("0") => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("column `valid`: expected bool, got {other:?}"),
                })
            }
        };
        let raw = JsonFrame {
            t_ms: req(0)?,
            gaze,
            head: [req(4)?, req(5)?, req(6)?, req(7)?],
            pupil_l: num(8)?,
            pupil_r: num(9)?,
            valid,
            aoi: cell(11).map(str::to_string),
        };
        frames.push(canonical_frame(raw, line)?);
    }
    Ok(frames)
}

/// Sort by time (stable) and keep the last frame of every run of equal timestamps.
fn sort_dedup(frames: Vec<SensorFrame>) -> Vec<SensorFrame> {
    let mut frames = frames;
    frames.sort_by(|a, b| a.t_ms.total_cmp(&b.t_ms));
    let mut out: Vec<SensorFrame> = Vec::with_capacity(frames.len());
    for f in frames {
        match out.last_mut() {
            Some(last) if last.t_ms == f.t_ms => *last = f,
            _ => out.push(f),
        }
    }
    out
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Parse a log into a canonical [`Recording`].
///
/// The nominal rate comes from `meta` when given, otherwise from the median
/// frame interval.
pub fn parse_recording<R: BufRead>(source: R, format: LogFormat, meta: RecordingMeta) -> Result<Recording> {
    let frames = match format {
        LogFormat::Jsonl => parse_jsonl_frames(source)?,
        LogFormat::Csv => parse_csv_frames(source)?,
    };
    if frames.is_empty() {
        return Err(Error::Empty(format!("recording `{}` has no frames", meta.id)));
    }
    let frames = sort_dedup(frames);
    let nominal_rate = match meta.nominal_rate {
        Some(r) if r > 0.0 && r.is_finite() => r,
        Some(r) => return Err(Error::invalid(format!("nominal_rate must be positive, got {r}"))),
        None => {
            let mut dts: Vec<f64> = frames.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect();
            match median(&mut dts) {
                Some(dt) => 1000.0 / dt,
                None => {
                    return Err(Error::invalid(format!(
                        "recording `{}`: cannot infer the sampling rate from one frame",
                        meta.id
                    )))
                }
            }
        }
    };
    Ok(Recording { id: meta.id, trial: meta.trial, frames, nominal_rate, labels: meta.labels })
}

pub fn write_jsonl<W: Write>(rec: &Recording, mut out: W) -> Result<()> {
    for f in &rec.frames {
        let raw = JsonFrame {
            t_ms: f.t_ms,
            gaze: f.gaze.map(Into::into),
            head: f.head.into(),
            pupil_l: f.pupil_l,
            pupil_r: f.pupil_r,
            valid: f.valid,
            aoi: f.aoi.clone(),
        };
        serde_json::to_writer(&mut out, &raw)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(rec: &Recording, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for f in &rec.frames {
        let g = f.gaze;
        w.write_record([
            f.t_ms.to_string(),
            opt(g.map(|g| g.x)),
            opt(g.map(|g| g.y)),
            opt(g.map(|g| g.z)),
            f.head.w.to_string(),
            f.head.x.to_string(),
            f.head.y.to_string(),
            f.head.z.to_string(),
            opt(f.pupil_l),
            opt(f.pupil_r),
            f.valid.to_string(),
            f.aoi.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingQuality {
    pub tracking_ratio: f64,
    /// Missing-run length in samples → number of such runs.
    pub gap_histogram: BTreeMap<usize, usize>,
    pub duration_ms: f64,
    pub n_frames: usize,
}

impl TrackingQuality {
    pub fn passes(&self, min_ratio: f64) -> bool {
        self.tracking_ratio >= min_ratio
    }
}

/// Runs of consecutive indices where `missing(i)` holds, as half-open ranges.
pub(crate) fn missing_runs(n: usize, missing: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        if missing(i) {
            let start = i;
            while i < n && missing(i) {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    runs
}

/// Tracking ratio and gap histogram from the eye-tracker validity flags.
///
/// Gap interpolation never touches `valid`, so the report is the same before
/// and after repair.
pub fn quality_report(rec: &Recording) -> TrackingQuality {
    let n = rec.frames.len();
    let valid = rec.frames.iter().filter(|f| f.valid).count();
    let mut gap_histogram = BTreeMap::new();
    for (s, e) in missing_runs(n, |i| !rec.frames[i].valid) {
        *gap_histogram.entry(e - s).or_insert(0) += 1;
    }
    TrackingQuality {
        tracking_ratio: if n == 0 { 0.0 } else { valid as f64 / n as f64 },
        gap_histogram,
        duration_ms: rec.duration_ms(),
        n_frames: n,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSpan {
    pub start_ms: f64,
    pub end_ms: f64,
    pub samples: usize,
    pub duration_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapFill {
    pub recording: Recording,
    pub filled: Vec<GapSpan>,
    /// Runs left missing: longer than the cap or touching a recording edge.
    pub unfilled: Vec<GapSpan>,
}

pub const DEFAULT_MAX_GAP_MS: f64 = 75.0;

/// Fill short gaze gaps by spherical interpolation between the flanking directions.
///
/// A run's duration is the time its missing samples cover,
/// `t(next valid) − t(previous valid) − one period`. Pupil values and validity
/// flags are left untouched.
pub fn interpolate_gaps(rec: &Recording, max_gap_ms: f64) -> Result<GapFill> {
    if !(max_gap_ms > 0.0) {
        return Err(Error::invalid(format!("max_gap_ms must be positive, got {max_gap_ms}")));
    }
    let period = rec.sample_period_ms();
    let mut out = rec.clone();
    let mut filled = Vec::new();
    let mut unfilled = Vec::new();
    let n = rec.frames.len();
    for (s, e) in missing_runs(n, |i| rec.frames[i].gaze.is_none()) {
        let start_ms = rec.frames[s].t_ms;
        let end_ms = rec.frames[e - 1].t_ms;
        let flanks = if s > 0 && e < n { Some((s - 1, e)) } else { None };
        let duration_ms = match flanks {
            Some((a, b)) => rec.frames[b].t_ms - rec.frames[a].t_ms - period,
            None => (e - s) as f64 * period,
        };
        let span = GapSpan { start_ms, end_ms, samples: e - s, duration_ms };
        match flanks {
            Some((a, b)) if duration_ms <= max_gap_ms + 1e-9 => {
                let (ga, gb) = (rec.frames[a].gaze.unwrap(), rec.frames[b].gaze.unwrap());
                let (ta, tb) = (rec.frames[a].t_ms, rec.frames[b].t_ms);
                for f in &mut out.frames[s..e] {
                    f.gaze = Some(ga.slerp(gb, (f.t_ms - ta) / (tb - ta)));
                }
                filled.push(span);
            }
            _ => unfilled.push(span),
        }
    }
    Ok(GapFill { recording: out, filled, unfilled })
}

/// Controller click on a scene target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub t_ms: f64,
    pub target: String,
}

pub fn parse_clicks<R: BufRead>(source: R) -> Result<Vec<ClickEvent>> {
    let mut clicks = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let c: ClickEvent = serde_json::from_str(line.trim())
            .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if c.target.is_empty() || !c.t_ms.is_finite() {
            return Err(Error::Parse { line: i + 1, message: "click needs a finite t_ms and a non-empty target".into() });
        }
        clicks.push(c);
    }
    clicks.sort_by(|a, b| a.t_ms.total_cmp(&b.t_ms));
    Ok(clicks)
}

pub fn write_clicks<W: Write>(clicks: &[ClickEvent], mut out: W) -> Result<()> {
    for c in clicks {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
