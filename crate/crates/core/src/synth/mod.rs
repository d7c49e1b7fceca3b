//! Scripted synthetic recordings with exact ground truth.
//!
//! A script is an ordered list of segments laid end to end from t = 0. Gaze is
//! a continuous function of time (saccades sweep, everything else holds or
//! drifts), the head only moves inside head turns, and frames sample these
//! functions at `k / sample_rate`. Gaze stays world-stable through blinks and
//! head turns, so a blink inside a fixation does not split it.

mod plant;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use plant::{
    plant_dataset, plant_recordings, random_script, BehaviorModel, Knob, PlantSpec, PlantedDataset, PlantedEffect,
};

use crate::error::{Error, Result};
use crate::events::DetectionConfig;
use crate::geometry::{Quat, Vec3};
use crate::recording::{Recording, SensorFrame};
use crate::rng;

/// Drift speed of idle segments, deg/s. It lies between the fixation ceiling
/// and the saccade floor of every shipped preset, so idle gaze is neither.
pub const IDLE_DRIFT_DEG_S: f64 = 45.0;
/// Fraction of the baseline diameter lost at the bottom of a blink ramp.
pub const BLINK_RAMP_DEPTH: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Uniform angular velocity.
    #[default]
    Constant,
    /// Raised-cosine velocity; the peak is twice the mean.
    Bell,
}

impl Profile {
    /// Fraction of the amplitude covered after fraction `u` of the duration.
    fn progress(self, u: f64) -> f64 {
        match self {
            Profile::Constant => u,
            Profile::Bell => u - (2.0 * std::f64::consts::PI * u).sin() / (2.0 * std::f64::consts::PI),
        }
    }

    fn peak_factor(self) -> f64 {
        match self {
            Profile::Constant => 1.0,
            Profile::Bell => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Fixation { duration_ms: f64, direction: Vec3, aoi: Option<String> },
    Saccade { duration_ms: f64, from: Vec3, to: Vec3, profile: Profile },
    Blink { duration_ms: f64 },
    HeadTurn { duration_ms: f64, axis: Vec3, deg: f64 },
    Idle { duration_ms: f64 },
}

impl Segment {
    pub fn duration_ms(&self) -> f64 {
        match self {
            Segment::Fixation { duration_ms, .. }
            | Segment::Saccade { duration_ms, .. }
            | Segment::Blink { duration_ms }
            | Segment::HeadTurn { duration_ms, .. }
            | Segment::Idle { duration_ms } => *duration_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventScript {
    pub id: String,
    pub trial: String,
    pub labels: std::collections::BTreeMap<String, String>,
    pub segments: Vec<Segment>,
    pub sample_rate: f64,
    /// SD of the isotropic angular gaze jitter, deg.
    pub gaze_noise_deg: f64,
    pub pupil_noise_mm: f64,
    pub pupil_base_mm: f64,
    /// Length of the pupil ramps at each end of a blink, inside its duration.
    pub blink_ramp_ms: f64,
    /// Gaze before the first fixation or saccade.
    pub start_direction: Vec3,
}

impl Default for EventScript {
    fn default() -> Self {
        EventScript {
            id: "synthetic".into(),
            trial: "t0".into(),
            labels: Default::default(),
            segments: Vec::new(),
            sample_rate: 120.0,
            gaze_noise_deg: 0.0,
            pupil_noise_mm: 0.0,
            pupil_base_mm: 3.5,
            blink_ramp_ms: 0.0,
            start_direction: Vec3::Z,
        }
    }
}

impl EventScript {
    pub fn new(sample_rate: f64) -> Self {
        EventScript { sample_rate, ..Default::default() }
    }

    pub fn period_ms(&self) -> f64 {
        1000.0 / self.sample_rate
    }

    pub fn total_ms(&self) -> f64 {
        self.segments.iter().map(Segment::duration_ms).sum()
    }

    /// Gaze direction at the end of the script so far.
    pub fn end_direction(&self) -> Vec3 {
        let mut dir = self.start_direction;
        for s in &self.segments {
            match s {
                Segment::Fixation { direction, .. } => dir = *direction,
                Segment::Saccade { to, .. } => dir = *to,
                Segment::Idle { duration_ms } => dir = idle_drift(dir, *duration_ms),
                _ => {}
            }
        }
        dir
    }

    pub fn fixation(mut self, duration_ms: f64, direction: Vec3) -> Self {
        self.segments.push(Segment::Fixation { duration_ms, direction, aoi: None });
        self
    }

    pub fn fixation_on(mut self, duration_ms: f64, direction: Vec3, aoi: &str) -> Self {
        self.segments.push(Segment::Fixation { duration_ms, direction, aoi: Some(aoi.to_string()) });
        self
    }

    /// Saccade from the current direction.
    pub fn saccade_to(mut self, duration_ms: f64, to: Vec3, profile: Profile) -> Self {
        let from = self.end_direction();
        self.segments.push(Segment::Saccade { duration_ms, from, to, profile });
        self
    }

    /// Holds the current direction for `duration_ms`.
    pub fn hold(self, duration_ms: f64) -> Self {
        let d = self.end_direction();
        self.fixation(duration_ms, d)
    }

    pub fn blink(mut self, duration_ms: f64) -> Self {
        self.segments.push(Segment::Blink { duration_ms });
        self
    }

    pub fn head_turn(mut self, duration_ms: f64, axis: Vec3, deg: f64) -> Self {
        self.segments.push(Segment::HeadTurn { duration_ms, axis, deg });
        self
    }

    pub fn idle(mut self, duration_ms: f64) -> Self {
        self.segments.push(Segment::Idle { duration_ms });
        self
    }
}

/// Rotation of `v` by `deg` about `axis`.
pub fn rotate(v: Vec3, axis: Vec3, deg: f64) -> Vec3 {
    Quat::from_axis_angle(axis, deg.to_radians()).rotate(v)
}

/// A unit vector perpendicular to `v`.
pub fn perpendicular(v: Vec3) -> Vec3 {
    let helper = if v.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
    v.cross(helper).normalized().unwrap_or(Vec3::Y)
}

fn idle_drift(dir: Vec3, tau_ms: f64) -> Vec3 {
    rotate(dir, perpendicular(dir), IDLE_DRIFT_DEG_S * tau_ms / 1000.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Fixation,
    Saccade,
    Blink,
    HeadTurn,
    Idle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub kind: TruthKind,
    pub onset_ms: f64,
    pub offset_ms: f64,
    pub amplitude_deg: Option<f64>,
    pub peak_velocity: Option<f64>,
    /// Head angular speed, deg/s.
    pub head_rate: Option<f64>,
    pub aoi: Option<String>,
}

impl TruthEvent {
    pub fn duration_ms(&self) -> f64 {
        self.offset_ms - self.onset_ms
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub recording: String,
    /// Fixations are maximal runs of fixation and blink segments (gaze holds
    /// through a blink); blinks are listed separately and may overlap them.
    pub events: Vec<TruthEvent>,
    pub label: Option<u8>,
    pub effect: Option<PlantedEffect>,
    pub warnings: Vec<String>,
}

impl GroundTruth {
    pub fn of_kind(&self, kind: TruthKind) -> impl Iterator<Item = &TruthEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

const DIR_TOL: f64 = 1e-9;

fn check_unit(v: Vec3, what: &str, i: usize) -> Result<()> {
    if !v.is_finite() || (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("segment {i}: {what} must be a unit vector")));
    }
    Ok(())
}

/// Per-segment state at its start.
struct Placed {
    start_ms: f64,
    end_ms: f64,
    dir: Vec3,
    head: Quat,
    aoi: Option<String>,
}

fn validate(script: &EventScript) -> Result<Vec<Placed>> {
    if !(script.sample_rate > 0.0 && script.sample_rate.is_finite()) {
        return Err(Error::invalid("sample_rate must be positive"));
    }
    if !(script.gaze_noise_deg >= 0.0 && script.pupil_noise_mm >= 0.0 && script.blink_ramp_ms >= 0.0) {
        return Err(Error::invalid("noise levels and blink ramps must be non-negative"));
    }
    if !(script.pupil_base_mm > 0.0) {
        return Err(Error::invalid("pupil_base_mm must be positive"));
    }
    if script.segments.is_empty() {
        return Err(Error::Empty("script has no segments".into()));
    }
    check_unit(script.start_direction, "start_direction", 0)?;
    let mut placed = Vec::with_capacity(script.segments.len());
    let mut t = 0.0;
    let mut dir = script.start_direction;
    let mut set = false;
    let mut head = Quat::IDENTITY;
    let mut aoi: Option<String> = None;
    for (i, s) in script.segments.iter().enumerate() {
        let d = s.duration_ms();
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::invalid(format!("segment {i}: duration must be positive and finite")));
        }
        let start_dir = match s {
            Segment::Fixation { direction, .. } => Some(*direction),
            Segment::Saccade { from, to, .. } => {
                check_unit(*to, "saccade target", i)?;
                Some(*from)
            }
            _ => None,
        };
        if let Some(sd) = start_dir {
            check_unit(sd, "direction", i)?;
            if set && sd.angle_to(dir) > DIR_TOL {
                return Err(Error::invalid(format!("segment {i}: gaze jumps {:.3} deg at its start", sd.angle_deg(dir))));
            }
            dir = sd;
        }
        set = true;
        let seg_aoi = match s {
            Segment::Fixation { aoi: a, .. } => a.clone(),
            Segment::Blink { .. } | Segment::HeadTurn { .. } => aoi.clone(),
            _ => None,
        };
        if let Segment::Blink { duration_ms } = s {
            if *duration_ms <= 2.0 * script.blink_ramp_ms {
                return Err(Error::invalid(format!("segment {i}: blink shorter than its two ramps")));
            }
        }
        if let Segment::HeadTurn { axis, .. } = s {
            if axis.normalized().is_none() {
                return Err(Error::invalid(format!("segment {i}: head-turn axis is zero")));
            }
        }
        placed.push(Placed { start_ms: t, end_ms: t + d, dir, head, aoi: seg_aoi.clone() });
        match s {
            Segment::Saccade { to, .. } => dir = *to,
            Segment::Idle { duration_ms } => dir = idle_drift(dir, *duration_ms),
            Segment::HeadTurn { axis, deg, .. } => {
                head = Quat::from_axis_angle(*axis, deg.to_radians()).mul(head);
            }
            _ => {}
        }
        aoi = seg_aoi;
        t += d;
    }
    Ok(placed)
}

fn truth_of(script: &EventScript, placed: &[Placed]) -> GroundTruth {
    let mut events = Vec::new();
    let mut warnings = Vec::new();
    let fix_max = DetectionConfig::PRESETS
        .iter()
        .filter_map(|p| DetectionConfig::preset(p).ok())
        .map(|c| c.fixation_gaze_max)
        .fold(0.0, f64::max);
    let mut stable: Option<TruthEvent> = None;
    for (i, (s, p)) in script.segments.iter().zip(placed).enumerate() {
        let extends = matches!(s, Segment::Fixation { .. } | Segment::Blink { .. });
        if extends {
            match stable.as_mut() {
                Some(f) => {
                    f.offset_ms = p.end_ms;
                    if f.aoi.is_none() {
                        f.aoi = p.aoi.clone();
                    }
                }
                None => {
                    stable = Some(TruthEvent {
                        kind: TruthKind::Fixation,
                        onset_ms: p.start_ms,
                        offset_ms: p.end_ms,
                        amplitude_deg: None,
                        peak_velocity: None,
                        head_rate: None,
                        aoi: p.aoi.clone(),
                    })
                }
            }
        } else if let Some(f) = stable.take() {
            events.push(f);
        }
        let mut ev = TruthEvent {
            kind: TruthKind::Idle,
            onset_ms: p.start_ms,
            offset_ms: p.end_ms,
            amplitude_deg: None,
            peak_velocity: None,
            head_rate: None,
            aoi: None,
        };
        match s {
            Segment::Fixation { .. } => continue,
            Segment::Saccade { duration_ms, from, to, profile } => {
                let amp = from.angle_deg(*to);
                let peak = amp / (duration_ms / 1000.0) * profile.peak_factor();
                if peak <= fix_max {
                    warnings.push(format!(
                        "segment {i}: saccade peak velocity {peak:.1} deg/s is not above the {fix_max} deg/s fixation ceiling"
                    ));
                }
                ev.kind = TruthKind::Saccade;
                ev.amplitude_deg = Some(amp);
                ev.peak_velocity = Some(peak);
            }
            Segment::Blink { .. } => {
                ev.kind = TruthKind::Blink;
                ev.aoi = p.aoi.clone();
            }
            Segment::HeadTurn { duration_ms, deg, .. } => {
                ev.kind = TruthKind::HeadTurn;
                ev.head_rate = Some(deg.abs() / (duration_ms / 1000.0));
                ev.aoi = p.aoi.clone();
            }
            Segment::Idle { .. } => {}
        }
        events.push(ev);
    }
    events.extend(stable);
    events.sort_by(|a, b| a.onset_ms.total_cmp(&b.onset_ms).then((a.kind as u8).cmp(&(b.kind as u8))));
    GroundTruth { recording: script.id.clone(), events, label: None, effect: None, warnings }
}

/// Index of the segment covering `t` (the later one at a boundary).
fn segment_at(placed: &[Placed], t: f64) -> usize {
    placed.partition_point(|p| p.end_ms <= t).min(placed.len() - 1)
}

pub fn generate_recording(script: &EventScript, seed: u64) -> Result<(Recording, GroundTruth)> {
    let placed = validate(script)?;
    let truth = truth_of(script, &placed);
    for w in &truth.warnings {
        log::warn!("script `{}`: {w}", script.id);
    }
    let mut r = rng::rng(seed);
    let gaze_noise = Normal::new(0.0, script.gaze_noise_deg.to_radians()).map_err(|e| Error::invalid(e.to_string()))?;
    let pupil_noise = Normal::new(0.0, script.pupil_noise_mm).map_err(|e| Error::invalid(e.to_string()))?;
    let period = script.period_ms();
    let total = script.total_ms();
    let n = (total / period + 1e-9).floor() as usize + 1;
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * period;
        let i = segment_at(&placed, t);
        let p = &placed[i];
        let tau = (t - p.start_ms).clamp(0.0, p.end_ms - p.start_ms);
        let seg = &script.segments[i];
        let dur = seg.duration_ms();
        let mut gaze = match seg {
            Segment::Saccade { from, to, profile, .. } => from.slerp(*to, profile.progress(tau / dur)),
            Segment::Idle { .. } => idle_drift(p.dir, tau),
            _ => p.dir,
        };
        let head = match seg {
            Segment::HeadTurn { axis, deg, .. } => Quat::from_axis_angle(*axis, (deg * tau / dur).to_radians()).mul(p.head),
            _ => p.head,
        };
        let mut pupil = Some(script.pupil_base_mm);
        if let Segment::Blink { .. } = seg {
            let ramp = script.blink_ramp_ms;
            pupil = if tau < ramp {
                Some(script.pupil_base_mm * (1.0 - BLINK_RAMP_DEPTH * tau / ramp))
            } else if tau < dur - ramp {
                None
            } else if ramp > 0.0 {
                Some(script.pupil_base_mm * (1.0 - BLINK_RAMP_DEPTH * (dur - tau) / ramp))
            } else {
                Some(script.pupil_base_mm)
            };
        }
        if script.gaze_noise_deg > 0.0 {
            let e1 = perpendicular(gaze);
            let e2 = gaze.cross(e1);
            let (a, b): (f64, f64) = (gaze_noise.sample(&mut r), gaze_noise.sample(&mut r));
            gaze = gaze.add(e1.scale(a.tan())).add(e2.scale(b.tan())).normalized().unwrap_or(gaze);
        }
        if script.pupil_noise_mm > 0.0 {
            let e: f64 = pupil_noise.sample(&mut r);
            pupil = pupil.map(|v| (v + e).max(0.1));
        }
        frames.push(SensorFrame {
            t_ms: t,
            gaze: Some(gaze),
            head: head.normalized().unwrap_or(head),
            pupil_l: pupil,
            pupil_r: pupil,
            valid: true,
            aoi: p.aoi.clone().filter(|_| !matches!(seg, Segment::Saccade { .. } | Segment::Idle { .. })),
        });
    }
    let rec = Recording {
        id: script.id.clone(),
        trial: script.trial.clone(),
        frames,
        nominal_rate: script.sample_rate,
        labels: script.labels.clone(),
    };
    Ok((rec, truth))
}

/// Detected-vs-planted comparison for one event kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub planted: usize,
    pub detected: usize,
    pub matched: usize,
    /// Largest onset or offset error over matched pairs, in samples.
    pub max_boundary_error: f64,
}

impl Recovery {
    pub fn recall(&self) -> f64 {
        if self.planted == 0 {
            1.0
        } else {
            self.matched as f64 / self.planted as f64
        }
    }

    pub fn precision(&self) -> f64 {
        if self.detected == 0 {
            1.0
        } else {
            self.matched as f64 / self.detected as f64
        }
    }
}

/// Greedy one-to-one matching of detected to planted intervals: a pair
/// matches when both boundaries are within `tol_samples` periods.
pub fn match_intervals(planted: &[(f64, f64)], detected: &[(f64, f64)], period_ms: f64, tol_samples: f64) -> Recovery {
    let mut used = vec![false; detected.len()];
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    for &(on, off) in planted {
        let best = detected
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, &(a, b))| (j, ((a - on).abs().max((b - off).abs())) / period_ms))
            .filter(|&(_, e)| e <= tol_samples + 1e-9)
            .min_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((j, e)) = best {
            used[j] = true;
            matched += 1;
            worst = worst.max(e);
        }
    }
    Recovery { planted: planted.len(), detected: detected.len(), matched, max_boundary_error: worst }
}
