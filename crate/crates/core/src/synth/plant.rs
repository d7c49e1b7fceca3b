//! Random scripts and datasets with a planted class effect.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_recording, perpendicular, rotate, EventScript, GroundTruth, Profile};
use crate::error::{Error, Result};
use crate::events::DetectionConfig;
use crate::features::{FeatureCatalog, FeatureMatrix, FeatureOptions, LabelSpec};
use crate::geometry::Vec3;
use crate::pipeline::{feature_matrix, process_recording, ProcessConfig, Study};
use crate::recording::Recording;
use crate::rng;

/// Gaze stays within this angle of straight ahead.
const CONE_DEG: f64 = 30.0;

/// Random direction change of `amp` degrees that stays inside the cone.
fn step_direction(cur: Vec3, amp: f64, r: &mut ChaCha8Rng) -> Vec3 {
    let e1 = perpendicular(cur);
    let e2 = cur.cross(e1);
    let phi = r.random_range(0.0..std::f64::consts::TAU);
    let axis = e1.scale(phi.cos()).add(e2.scale(phi.sin()));
    let next = rotate(cur, axis, amp);
    if next.angle_deg(Vec3::Z) <= CONE_DEG {
        return next;
    }
    match cur.cross(Vec3::Z).normalized() {
        Some(toward) => rotate(cur, toward, amp),
        None => next,
    }
}

/// Alternating fixations and constant-profile saccades that a zero-noise
/// detector with `cfg` must recover exactly: durations keep two samples of
/// clearance from the preset bounds and saccade speeds clear the threshold by
/// at least 30 %.
pub fn random_script(cfg: &DetectionConfig, sample_rate: f64, n_fixations: usize, r: &mut ChaCha8Rng) -> EventScript {
    let p = 1000.0 / sample_rate;
    let margin = 2.0 * p + 1.0;
    let fix = (cfg.fixation_dur.min_ms + margin, cfg.fixation_dur.max_ms - margin);
    let sac = (cfg.saccade_dur.min_ms + margin, cfg.saccade_dur.max_ms - margin);
    let mut s = EventScript::new(sample_rate);
    s.start_direction = Vec3::from_yaw_pitch(r.random_range(-10.0..10.0), r.random_range(-10.0..10.0));
    for i in 0..n_fixations.max(1) {
        s = s.hold(r.random_range(fix.0..fix.1));
        if i + 1 < n_fixations {
            let d = r.random_range(sac.0..sac.1);
            let v = cfg.saccade_gaze_min * r.random_range(1.3..4.0);
            let to = step_direction(s.end_direction(), v * d / 1000.0, r);
            s = s.saccade_to(d, to, Profile::Constant);
        }
    }
    s
}

/// Scripted quantity a planted effect shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    SaccadeAmplitude,
    FixationDuration,
}

impl Knob {
    pub fn for_feature(id: &str) -> Option<Knob> {
        if id.starts_with("saccade_amplitude_") {
            Some(Knob::SaccadeAmplitude)
        } else if id.starts_with("fixation_duration_") {
            Some(Knob::FixationDuration)
        } else {
            None
        }
    }

    /// Substrings of feature ids that move mechanically with the knob.
    pub fn coupled_patterns(self) -> &'static [&'static str] {
        match self {
            Knob::SaccadeAmplitude => &["saccade_amplitude_", "saccade_peak_velocity_", "saccade_velocity_"],
            Knob::FixationDuration => &[
                "fixation_duration_",
                "fixation_rate",
                "fixation_count",
                "saccade_rate",
                "saccade_count",
                "saccade_duration_sum",
                "saccade_amplitude_sum",
                "sacc_fixa_ratio",
                "_dwell",
                "fixated_peer_count",
                "hmd_move_rate",
                "blink_count",
                "click",
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub feature: String,
    /// Class-1 mean shift of the knob, in units of its event-level SD.
    pub shift_sd: f64,
}

/// Event-level distributions shared by both classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorModel {
    pub fixation_mean_ms: f64,
    pub fixation_sd_ms: f64,
    pub amplitude_mean_deg: f64,
    pub amplitude_sd_deg: f64,
    /// Chance that a fixation of at least 300 ms carries a blink.
    pub blink_prob: f64,
    /// Chance of a head turn after a fixation.
    pub head_turn_prob: f64,
    pub gaze_noise_deg: f64,
    pub pupil_noise_mm: f64,
}

impl Default for BehaviorModel {
    fn default() -> Self {
        BehaviorModel {
            fixation_mean_ms: 250.0,
            fixation_sd_ms: 50.0,
            amplitude_mean_deg: 10.0,
            amplitude_sd_deg: 2.0,
            blink_prob: 0.15,
            head_turn_prob: 0.1,
            gaze_noise_deg: 0.03,
            pupil_noise_mm: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantSpec {
    pub n_groups_per_class: usize,
    pub windows_per_group: usize,
    pub effect: PlantedEffect,
    pub study: String,
    pub window_s: f64,
    pub sample_rate: f64,
    pub behavior: BehaviorModel,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            n_groups_per_class: 10,
            windows_per_group: 6,
            effect: PlantedEffect { feature: "saccade_amplitude_mean".into(), shift_sd: 2.0 },
            study: "classroom".into(),
            window_s: 10.0,
            sample_rate: 120.0,
            behavior: BehaviorModel::default(),
        }
    }
}

const AOIS: [Option<&str>; 8] =
    [Some("peer_1"), Some("peer_2"), Some("peer_3"), Some("peer_4"), Some("teacher"), Some("screen"), None, None];

fn truncated(d: &Normal<f64>, lo: f64, hi: f64, r: &mut ChaCha8Rng) -> f64 {
    for _ in 0..64 {
        let v = d.sample(r);
        if v > lo && v < hi {
            return v;
        }
    }
    (lo + hi) / 2.0
}

fn behavior_script(spec: &PlantSpec, cfg: &DetectionConfig, knob: Knob, class: u8, id: String, r: &mut ChaCha8Rng) -> Result<EventScript> {
    let b = &spec.behavior;
    let shift = if class == 1 { spec.effect.shift_sd } else { 0.0 };
    let (mut fix_mean, mut amp_mean) = (b.fixation_mean_ms, b.amplitude_mean_deg);
    match knob {
        Knob::FixationDuration => fix_mean += shift * b.fixation_sd_ms,
        Knob::SaccadeAmplitude => amp_mean += shift * b.amplitude_sd_deg,
    }
    let bad = |e: rand_distr::NormalError| Error::invalid(e.to_string());
    let fix_d = Normal::new(fix_mean, b.fixation_sd_ms).map_err(bad)?;
    let amp_d = Normal::new(amp_mean, b.amplitude_sd_deg).map_err(bad)?;
    let p = 1000.0 / spec.sample_rate;
    let margin = 2.0 * p + 1.0;
    let fix = (cfg.fixation_dur.min_ms + margin, cfg.fixation_dur.max_ms - margin);
    let sac = (cfg.saccade_dur.min_ms + margin, cfg.saccade_dur.max_ms - margin);
    // Slowest saccade still clears the detection threshold by 20 %.
    let amp_lo = 1.2 * cfg.saccade_gaze_min * sac.1 / 1000.0;
    let target = spec.windows_per_group as f64 * spec.window_s * 1000.0;

    let mut s = EventScript::new(spec.sample_rate);
    s.id = id.clone();
    s.gaze_noise_deg = b.gaze_noise_deg;
    s.pupil_noise_mm = b.pupil_noise_mm;
    s.blink_ramp_ms = 20.0;
    s.labels.insert("class".into(), class.to_string());
    s.labels.insert("group".into(), id);
    while s.total_ms() < target + p {
        let d = truncated(&fix_d, fix.0, fix.1, r);
        let dir = s.end_direction();
        let aoi = AOIS[r.random_range(0..AOIS.len())];
        let fixate = |s: EventScript, ms: f64| match aoi {
            Some(a) => s.fixation_on(ms, dir, a),
            None => s.fixation(ms, dir),
        };
        if d >= 300.0 && r.random_bool(b.blink_prob) {
            let blink = r.random_range(100.0..d.min(400.0) - 100.0);
            let before = (d - blink) / 2.0;
            s = fixate(s, before).blink(blink);
            s = fixate(s, d - before - blink);
        } else {
            s = fixate(s, d);
        }
        if r.random_bool(b.head_turn_prob) {
            let ms = r.random_range(300.0..700.0);
            let rate = r.random_range(20.0..40.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
            s = s.head_turn(ms, Vec3::Y, rate * ms / 1000.0);
        }
        let amp = truncated(&amp_d, amp_lo, 2.0 * CONE_DEG, r);
        let dur = r.random_range(sac.0..sac.1);
        let to = step_direction(s.end_direction(), amp, r);
        s = s.saccade_to(dur, to, Profile::Constant);
    }
    Ok(s)
}

/// One recording per group: groups `0..n` are class 0, `n..2n` class 1.
pub fn plant_recordings(spec: &PlantSpec, seed: u64) -> Result<Vec<(Recording, GroundTruth)>> {
    let study = Study::by_name(&spec.study)?;
    let catalog = FeatureCatalog::by_name(&study.catalog)?;
    if catalog.index_of(&spec.effect.feature).is_none() {
        return Err(Error::Unknown { kind: "feature", name: spec.effect.feature.clone() });
    }
    let knob = Knob::for_feature(&spec.effect.feature).ok_or_else(|| {
        Error::invalid(format!(
            "no scripted quantity drives `{}`; plant saccade_amplitude_* or fixation_duration_* features",
            spec.effect.feature
        ))
    })?;
    if spec.n_groups_per_class == 0 || spec.windows_per_group == 0 || !(spec.window_s > 0.0) {
        return Err(Error::invalid("planted datasets need groups, windows and a positive window length"));
    }
    let cfg = DetectionConfig::preset(&study.preset)?;
    let n = spec.n_groups_per_class;
    (0..2 * n)
        .into_par_iter()
        .map(|g| {
            let class = u8::from(g >= n);
            let gseed = rng::derive(seed, g as u64);
            let mut r = rng::rng(gseed);
            let script = behavior_script(spec, &cfg, knob, class, format!("p{g:03}"), &mut r)?;
            let (rec, mut truth) = generate_recording(&script, rng::derive(gseed, 1))?;
            truth.label = Some(class);
            truth.effect = Some(spec.effect.clone());
            Ok((rec, truth))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDataset {
    pub matrix: FeatureMatrix,
    pub truth: Vec<GroundTruth>,
    /// Features that move with the planted knob (the planted one included).
    pub coupled: Vec<String>,
}

pub fn plant_dataset(spec: &PlantSpec, seed: u64) -> Result<PlantedDataset> {
    let recs = plant_recordings(spec, seed)?;
    let study = Study::by_name(&spec.study)?;
    let catalog = FeatureCatalog::by_name(&study.catalog)?;
    let cfg = ProcessConfig::for_study(&study)?;
    let processed = recs.par_iter().map(|(r, _)| process_recording(r, &cfg)).collect::<Result<Vec<_>>>()?;
    let labels = LabelSpec { label_key: "class".into(), group_key: Some("group".into()) };
    let matrix = feature_matrix(&processed, &[], &catalog, spec.window_s, spec.window_s, &labels, &FeatureOptions::default())?;
    let knob = Knob::for_feature(&spec.effect.feature).expect("checked by plant_recordings");
    let coupled = catalog
        .ids()
        .into_iter()
        .filter(|id| knob.coupled_patterns().iter().any(|p| id.contains(p)))
        .collect();
    Ok(PlantedDataset { matrix, truth: recs.into_iter().map(|(_, t)| t).collect(), coupled })
}
