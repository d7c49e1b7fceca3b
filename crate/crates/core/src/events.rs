//! Velocity-threshold event detection with head gating.
//!
//! Velocities use backward differences, so sample `k` describes the motion over
//! `(t[k-1], t[k]]`. A run of samples `first..=last` therefore spans
//! `[t[first-1], t[last]]`, which is what events report as onset and offset.
//! Fixations need a stationary head and slow gaze; saccades only need fast
//! gaze. Thresholds and duration bounds are strict inequalities.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Quat, Vec3};
use crate::pupil::{Blink, PupilSeries};
use crate::recording::Recording;

/// Open interval `(min_ms, max_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationBounds {
    pub min_ms: f64,
    pub max_ms: f64,
}

impl DurationBounds {
    pub const fn new(min_ms: f64, max_ms: f64) -> Self {
        DurationBounds { min_ms, max_ms }
    }

    pub fn contains(&self, d: f64) -> bool {
        d > self.min_ms && d < self.max_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub name: String,
    /// deg/s; the head is stationary strictly below this.
    pub head_stationary_max: f64,
    pub fixation_gaze_max: f64,
    pub fixation_dur: DurationBounds,
    pub saccade_gaze_min: f64,
    pub saccade_dur: DurationBounds,
}

impl DetectionConfig {
    pub fn classroom() -> Self {
        DetectionConfig {
            name: "classroom".into(),
            head_stationary_max: 7.0,
            fixation_gaze_max: 30.0,
            fixation_dur: DurationBounds::new(100.0, 500.0),
            saccade_gaze_min: 60.0,
            saccade_dur: DurationBounds::new(30.0, 80.0),
        }
    }

    pub fn teacher() -> Self {
        DetectionConfig {
            name: "teacher".into(),
            head_stationary_max: 12.0,
            fixation_gaze_max: 40.0,
            fixation_dur: DurationBounds::new(80.0, 600.0),
            saccade_gaze_min: 50.0,
            saccade_dur: DurationBounds::new(30.0, 80.0),
        }
    }

    pub fn locomotion() -> Self {
        DetectionConfig {
            name: "locomotion".into(),
            head_stationary_max: 12.0,
            fixation_gaze_max: 40.0,
            fixation_dur: DurationBounds::new(100.0, 500.0),
            saccade_gaze_min: 80.0,
            saccade_dur: DurationBounds::new(30.0, 80.0),
        }
    }

    pub const PRESETS: [&'static str; 3] = ["classroom", "teacher", "locomotion"];

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "classroom" => Ok(Self::classroom()),
            "teacher" => Ok(Self::teacher()),
            "locomotion" => Ok(Self::locomotion()),
            other => Err(Error::Unknown { kind: "preset", name: other.to_string() }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let thresholds = [self.head_stationary_max, self.fixation_gaze_max, self.saccade_gaze_min];
        if thresholds.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::invalid(format!("preset `{}`: thresholds must be positive", self.name)));
        }
        for (what, b) in [("fixation", self.fixation_dur), ("saccade", self.saccade_dur)] {
            if !(b.min_ms >= 0.0 && b.min_ms < b.max_ms) {
                return Err(Error::invalid(format!("preset `{}`: {what} duration bounds need min < max", self.name)));
            }
        }
        Ok(())
    }
}

fn check_time(t: &[f64]) -> Result<()> {
    for (i, w) in t.windows(2).enumerate() {
        let dt = w[1] - w[0];
        if !(dt > 0.0) {
            return Err(Error::NonIncreasingTime { index: i + 1, dt });
        }
    }
    Ok(())
}

/// Gaze angular velocity in deg/s. Missing directions give missing velocities;
/// the first sample copies the second.
pub fn angular_velocity_dirs(dirs: &[Option<Vec3>], t: &[f64]) -> Result<Vec<Option<f64>>> {
    if dirs.len() != t.len() {
        return Err(Error::invalid("direction and time series differ in length"));
    }
    if dirs.len() < 2 {
        return Err(Error::invalid("angular velocity needs at least two samples"));
    }
    check_time(t)?;
    let mut v = Vec::with_capacity(dirs.len());
    v.push(None);
    for k in 1..dirs.len() {
        v.push(match (dirs[k - 1], dirs[k]) {
            (Some(a), Some(b)) => Some(a.angle_deg(b) / ((t[k] - t[k - 1]) / 1000.0)),
            _ => None,
        });
    }
    v[0] = v[1];
    Ok(v)
}

/// Head angular velocity in deg/s from orientation quaternions.
pub fn angular_velocity_quats(q: &[Quat], t: &[f64]) -> Result<Vec<f64>> {
    if q.len() != t.len() {
        return Err(Error::invalid("quaternion and time series differ in length"));
    }
    if q.len() < 2 {
        return Err(Error::invalid("angular velocity needs at least two samples"));
    }
    check_time(t)?;
    let mut v = Vec::with_capacity(q.len());
    v.push(0.0);
    for k in 1..q.len() {
        v.push(q[k - 1].angle_to(q[k]).to_degrees() / ((t[k] - t[k - 1]) / 1000.0));
    }
    v[0] = v[1];
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadState {
    Stationary,
    Moving,
}

impl HeadState {
    pub fn classify(velocity: f64, cfg: &DetectionConfig) -> HeadState {
        if velocity < cfg.head_stationary_max {
            HeadState::Stationary
        } else {
            HeadState::Moving
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSegment {
    pub onset_ms: f64,
    pub offset_ms: f64,
    pub state: HeadState,
    pub first_sample: usize,
    pub last_sample: usize,
}

/// Per-sample head states with single-sample runs absorbed into their neighbours.
pub fn head_states(velocity: &[f64], cfg: &DetectionConfig) -> Vec<HeadState> {
    let raw: Vec<HeadState> = velocity.iter().map(|&v| HeadState::classify(v, cfg)).collect();
    let mut runs: Vec<(HeadState, usize)> = Vec::new();
    for s in raw {
        match runs.last_mut() {
            Some((st, len)) if *st == s => *len += 1,
            _ => runs.push((s, 1)),
        }
    }
    let mut merged: Vec<(HeadState, usize)> = Vec::new();
    for (s, len) in runs {
        match merged.last_mut() {
            Some((_, l)) if len < 2 => *l += len,
            Some((st, l)) if *st == s => *l += len,
            Some((st, l)) if *l < 2 => {
                *st = s;
                *l += len;
            }
            _ => merged.push((s, len)),
        }
    }
    merged.into_iter().flat_map(|(s, len)| std::iter::repeat(s).take(len)).collect()
}

fn span(t: &[f64], first: usize, last: usize) -> (f64, f64) {
    (if first > 0 { t[first - 1] } else { t[0] }, t[last])
}

/// Alternating stationary/moving segments that partition the recording.
pub fn head_segments(rec: &Recording, cfg: &DetectionConfig) -> Result<Vec<HeadSegment>> {
    let t = rec.times();
    if t.len() < 2 {
        return Ok(vec![HeadSegment {
            onset_ms: rec.start_ms(),
            offset_ms: rec.end_ms(),
            state: HeadState::Stationary,
            first_sample: 0,
            last_sample: t.len().saturating_sub(1),
        }]);
    }
    let v = angular_velocity_quats(&rec.heads(), &t)?;
    Ok(segments_from_states(&t, &head_states(&v, cfg)))
}

fn segments_from_states(t: &[f64], states: &[HeadState]) -> Vec<HeadSegment> {
    let mut out: Vec<HeadSegment> = Vec::new();
    for (k, &s) in states.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.state == s => {
                seg.last_sample = k;
                seg.offset_ms = t[k];
            }
            _ => {
                let (onset, offset) = span(t, k, k);
                out.push(HeadSegment { onset_ms: onset, offset_ms: offset, state: s, first_sample: k, last_sample: k });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub onset_ms: f64,
    pub offset_ms: f64,
    pub duration_ms: f64,
    pub centroid: Vec3,
    /// Mean (normalized) pupil over member samples, when a series was given.
    pub mean_pupil: Option<f64>,
    pub aoi: Option<String>,
    pub first_sample: usize,
    pub last_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saccade {
    pub onset_ms: f64,
    pub offset_ms: f64,
    pub duration_ms: f64,
    /// Start-to-end angle, not path length.
    pub amplitude_deg: f64,
    pub peak_velocity: f64,
    pub mean_velocity: f64,
    pub first_sample: usize,
    pub last_sample: usize,
}

fn runs_where(n: usize, pred: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    crate::recording::missing_runs(n, pred).into_iter().map(|(s, e)| (s, e - 1)).collect()
}

/// Majority label over member frames (no-hit counts as its own category);
/// ties go to the label seen first.
fn majority_aoi(rec: &Recording, first: usize, last: usize) -> Option<String> {
    let mut counts: BTreeMap<Option<&str>, (usize, usize)> = BTreeMap::new();
    for k in first..=last {
        let e = counts.entry(rec.frames[k].aoi.as_deref()).or_insert((0, k));
        e.0 += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .and_then(|(label, _)| label.map(str::to_string))
}

/// Head-gated I-VT fixations.
pub fn detect_fixations(rec: &Recording, pupil: Option<&PupilSeries>, cfg: &DetectionConfig) -> Result<Vec<Fixation>> {
    let t = rec.times();
    if t.len() < 2 {
        return Ok(Vec::new());
    }
    let gaze = rec.gaze();
    let gv = angular_velocity_dirs(&gaze, &t)?;
    let hv = angular_velocity_quats(&rec.heads(), &t)?;
    let head = head_states(&hv, cfg);
    let candidate = |k: usize| head[k] == HeadState::Stationary && matches!(gv[k], Some(v) if v < cfg.fixation_gaze_max);
    let mut out = Vec::new();
    for (first, last) in runs_where(t.len(), candidate) {
        let (onset, offset) = span(&t, first, last);
        let duration = offset - onset;
        if !cfg.fixation_dur.contains(duration) {
            continue;
        }
        let sum = (first..=last).fold(Vec3::new(0.0, 0.0, 0.0), |acc, k| acc.add(gaze[k].unwrap()));
        let centroid = sum.normalized().unwrap_or(gaze[first].unwrap());
        let mean_pupil = pupil.and_then(|p| {
            let vals: Vec<f64> = (first..=last).filter_map(|k| p.get(k)).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        });
        out.push(Fixation {
            onset_ms: onset,
            offset_ms: offset,
            duration_ms: duration,
            centroid,
            mean_pupil,
            aoi: majority_aoi(rec, first, last),
            first_sample: first,
            last_sample: last,
        });
    }
    Ok(out)
}

/// Plain I-VT saccades (no head gate).
pub fn detect_saccades(rec: &Recording, cfg: &DetectionConfig) -> Result<Vec<Saccade>> {
    let t = rec.times();
    if t.len() < 2 {
        return Ok(Vec::new());
    }
    let gaze = rec.gaze();
    let gv = angular_velocity_dirs(&gaze, &t)?;
    let mut out = Vec::new();
    for (first, last) in runs_where(t.len(), |k| matches!(gv[k], Some(v) if v > cfg.saccade_gaze_min)) {
        let (onset, offset) = span(&t, first, last);
        let duration = offset - onset;
        if !cfg.saccade_dur.contains(duration) {
            continue;
        }
        let start_dir = if first > 0 { gaze[first - 1] } else { gaze[first] };
        let amplitude = start_dir.unwrap().angle_deg(gaze[last].unwrap());
        let vels: Vec<f64> = (first..=last).map(|k| gv[k].unwrap()).collect();
        let peak = vels.iter().copied().fold(f64::MIN, f64::max);
        let mean = vels.iter().sum::<f64>() / vels.len() as f64;
        out.push(Saccade {
            onset_ms: onset,
            offset_ms: offset,
            duration_ms: duration,
            amplitude_deg: amplitude,
            peak_velocity: peak,
            mean_velocity: mean,
            first_sample: first,
            last_sample: last,
        });
    }
    Ok(out)
}

/// Everything detected in one recording under one preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub recording: String,
    pub preset: String,
    pub blinks: Vec<Blink>,
    pub fixations: Vec<Fixation>,
    pub saccades: Vec<Saccade>,
    pub head_segments: Vec<HeadSegment>,
    pub warnings: Vec<String>,
}

/// Run every detector. `rec` should already have its gaze gaps interpolated.
pub fn detect_events(
    rec: &Recording,
    pupil: Option<&PupilSeries>,
    blinks: Vec<Blink>,
    cfg: &DetectionConfig,
) -> Result<EventStream> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let nominal = rec.sample_period_ms();
    for (k, w) in rec.frames.windows(2).enumerate() {
        let dt = w[1].t_ms - w[0].t_ms;
        if dt > 3.0 * nominal {
            warnings.push(format!("sample {}: interval {dt:.3} ms exceeds 3x nominal {nominal:.3} ms", k + 1));
        }
    }
    for w in &warnings {
        log::warn!("recording `{}`: {w}", rec.id);
    }
    Ok(EventStream {
        recording: rec.id.clone(),
        preset: cfg.name.clone(),
        blinks,
        fixations: detect_fixations(rec, pupil, cfg)?,
        saccades: detect_saccades(rec, cfg)?,
        head_segments: head_segments(rec, cfg)?,
        warnings,
    })
}

pub const EVENT_CSV_HEADER: [&str; 15] = [
    "recording", "type", "onset_ms", "offset_ms", "duration_ms", "amplitude_deg", "peak_velocity",
    "mean_velocity", "centroid_x", "centroid_y", "centroid_z", "mean_pupil", "aoi", "head_state",
    "core_gap_ms",
];

/// One row per event, ordered by type then onset.
pub fn write_events_csv<W: Write>(streams: &[EventStream], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENT_CSV_HEADER)?;
    let f = |v: f64| v.to_string();
    let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for s in streams {
        let base = |kind: &str, on: f64, off: f64, d: f64| vec![s.recording.clone(), kind.to_string(), f(on), f(off), f(d)];
        for b in &s.blinks {
            let mut r = base("blink", b.onset_ms, b.offset_ms, b.duration_ms);
            r.extend(std::iter::repeat(String::new()).take(9));
            r.push(f(b.core_gap_ms));
            w.write_record(&r)?;
        }
        for x in &s.fixations {
            let mut r = base("fixation", x.onset_ms, x.offset_ms, x.duration_ms);
            r.extend([String::new(), String::new(), String::new()]);
            r.extend([f(x.centroid.x), f(x.centroid.y), f(x.centroid.z), o(x.mean_pupil)]);
            r.extend([x.aoi.clone().unwrap_or_default(), String::new(), String::new()]);
            w.write_record(&r)?;
        }
        for x in &s.saccades {
            let mut r = base("saccade", x.onset_ms, x.offset_ms, x.duration_ms);
            r.extend([f(x.amplitude_deg), f(x.peak_velocity), f(x.mean_velocity)]);
            r.extend(std::iter::repeat(String::new()).take(7));
            w.write_record(&r)?;
        }
        for h in &s.head_segments {
            let mut r = base("head", h.onset_ms, h.offset_ms, h.offset_ms - h.onset_ms);
            r.extend(std::iter::repeat(String::new()).take(8));
            r.push(match h.state {
                HeadState::Stationary => "stationary".into(),
                HeadState::Moving => "moving".into(),
            });
            r.push(String::new());
            w.write_record(&r)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::SensorFrame;

    const RATE: f64 = 120.0;

    fn rec_from(gaze: Vec<Option<Vec3>>, head: Vec<Quat>) -> Recording {
        let frames = gaze
            .into_iter()
            .zip(head)
            .enumerate()
            .map(|(k, (g, h))| SensorFrame {
                t_ms: k as f64 * 1000.0 / RATE,
                gaze: g,
                head: h,
                pupil_l: Some(3.0),
                pupil_r: Some(3.0),
                valid: g.is_some(),
                aoi: None,
            })
            .collect();
        Recording { id: "r".into(), trial: "t".into(), frames, nominal_rate: RATE, labels: Default::default() }
    }

    /// Gaze sweeping in yaw at `deg_per_s` for `n` steps, with `hold` still samples either side.
    fn sweep(hold: usize, n: usize, deg_per_s: f64) -> Recording {
        let step = deg_per_s / RATE;
        let mut yaw = Vec::new();
        yaw.extend(std::iter::repeat(0.0).take(hold));
        yaw.extend((1..=n).map(|k| k as f64 * step));
        yaw.extend(std::iter::repeat(n as f64 * step).take(hold));
        let len = yaw.len();
        rec_from(yaw.into_iter().map(|y| Some(Vec3::from_yaw_pitch(y, 0.0))).collect(), vec![Quat::IDENTITY; len])
    }

    #[test]
    fn velocity_of_identical_vectors_is_zero() {
        let v = angular_velocity_dirs(&[Some(Vec3::Z); 3], &[0.0, 1.0, 2.0]).unwrap();
        assert!(v.iter().all(|x| *x == Some(0.0)));
    }

    #[test]
    fn one_degree_per_sample_at_120hz() {
        let d: Vec<Option<Vec3>> = (0..5).map(|k| Some(Vec3::from_yaw_pitch(k as f64, 0.0))).collect();
        let t: Vec<f64> = (0..5).map(|k| k as f64 * 1000.0 / 120.0).collect();
        let v = angular_velocity_dirs(&d, &t).unwrap();
        assert!(v.iter().all(|x| (x.unwrap() - 120.0).abs() < 1e-9));
    }

    #[test]
    fn quaternion_rotation_rate() {
        // 7 degrees over one second, sampled at 120 Hz.
        let t: Vec<f64> = (0..=120).map(|k| k as f64 * 1000.0 / 120.0).collect();
        let axis = Vec3::new(0.3, 1.0, -0.2);
        let q: Vec<Quat> = (0..=120).map(|k| Quat::from_axis_angle(axis, (7.0 * k as f64 / 120.0).to_radians())).collect();
        let v = angular_velocity_quats(&q, &t).unwrap();
        assert!(v.iter().all(|x| (x - 7.0).abs() < 0.01));
    }

    #[test]
    fn nonincreasing_time_is_an_error() {
        let err = angular_velocity_quats(&[Quat::IDENTITY; 3], &[0.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NonIncreasingTime { index: 2, .. }));
    }

    #[test]
    fn missing_gaze_gives_missing_velocity() {
        let v = angular_velocity_dirs(&[Some(Vec3::Z), None, Some(Vec3::Z)], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(v, vec![None, None, None]);
    }

    #[test]
    fn constant_head_is_one_stationary_segment() {
        let rec = rec_from(vec![Some(Vec3::Z); 240], vec![Quat::IDENTITY; 240]);
        let segs = head_segments(&rec, &DetectionConfig::classroom()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].state, HeadState::Stationary);
        assert_eq!((segs[0].onset_ms, segs[0].offset_ms), (rec.start_ms(), rec.end_ms()));
    }

    #[test]
    fn velocity_at_threshold_is_moving() {
        let cfg = DetectionConfig::classroom();
        assert_eq!(HeadState::classify(7.0, &cfg), HeadState::Moving);
        assert_eq!(HeadState::classify(6.999, &cfg), HeadState::Stationary);
        assert!(head_states(&[7.0; 10], &cfg).iter().all(|s| *s == HeadState::Moving));
    }

    #[test]
    fn single_sample_runs_are_absorbed() {
        let cfg = DetectionConfig::classroom();
        let v = [0.0, 0.0, 0.0, 20.0, 0.0, 0.0, 20.0, 20.0, 20.0, 0.0];
        let s = head_states(&v, &cfg);
        use HeadState::*;
        assert_eq!(s, vec![Stationary, Stationary, Stationary, Stationary, Stationary, Stationary, Moving, Moving, Moving, Moving]);
    }

    #[test]
    fn constant_sweep_is_one_saccade() {
        // 100 deg/s for 6 samples = 50 ms.
        let rec = sweep(30, 6, 100.0);
        let s = detect_saccades(&rec, &DetectionConfig::classroom()).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].amplitude_deg - 5.0).abs() < 0.1);
        assert!((s[0].peak_velocity - 100.0).abs() < 1.0);
        assert!((s[0].duration_ms - 50.0).abs() < 1e-9);
        assert!(s[0].peak_velocity >= s[0].mean_velocity);
    }

    #[test]
    fn slow_sweep_is_not_a_saccade() {
        let rec = sweep(30, 6, 50.0);
        assert!(detect_saccades(&rec, &DetectionConfig::classroom()).unwrap().is_empty());
    }

    #[test]
    fn long_sweep_exceeds_duration() {
        let rec = sweep(30, 12, 100.0); // 100 ms
        assert!(detect_saccades(&rec, &DetectionConfig::classroom()).unwrap().is_empty());
    }

    #[test]
    fn stable_gaze_too_long_is_rejected() {
        // 600 ms of stable gaze exceeds the 500 ms classroom maximum.
        let rec = rec_from(vec![Some(Vec3::Z); 73], vec![Quat::IDENTITY; 73]);
        assert!(detect_fixations(&rec, None, &DetectionConfig::classroom()).unwrap().is_empty());
    }

    #[test]
    fn majority_label_tie_prefers_first_seen() {
        let mut rec = rec_from(vec![Some(Vec3::Z); 4], vec![Quat::IDENTITY; 4]);
        for (k, l) in ["b", "a", "a", "b"].iter().enumerate() {
            rec.frames[k].aoi = Some(l.to_string());
        }
        assert_eq!(majority_aoi(&rec, 0, 3).as_deref(), Some("b"));
        assert_eq!(majority_aoi(&rec, 1, 3).as_deref(), Some("a"));
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(DetectionConfig::preset("teacher").unwrap().fixation_dur, DurationBounds::new(80.0, 600.0));
        assert!(DetectionConfig::preset("nope").is_err());
        for p in DetectionConfig::PRESETS {
            DetectionConfig::preset(p).unwrap().validate().unwrap();
        }
    }
}
