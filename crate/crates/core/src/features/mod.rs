//! Sliding-window feature extraction.
//!
//! Every event is assigned to the window containing its onset; it is never
//! split across windows. Statistics of an empty event family are 0 and the
//! family is named in the row's `empty` flags.

pub mod catalog;
pub mod matrix;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use catalog::{Descriptor, FeatureCatalog, Ooi, Source, Stat};
pub use matrix::{median_split, FeatureMatrix, FeatureRow, NormMethod, Normalization};

use crate::aoi::{self, Epoch};
use crate::error::{Error, Result};
use crate::events::{angular_velocity_dirs, EventStream, Fixation, HeadState, Saccade};
use crate::pupil::PupilSeries;
use crate::recording::{ClickEvent, Recording};
use crate::summary::Summary;

/// Window lengths (s) swept for the classroom study.
pub const CLASSROOM_WINDOW_GRID: [f64; 10] = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];
/// Window lengths (s) swept for the locomotion study.
pub const LOCOMOTION_WINDOW_GRID: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];

/// Consecutive windows of `window_s` every `step_s`, starting at the first
/// frame and lying fully inside the recording. A recording shorter than one
/// window yields none.
pub fn sliding_windows(rec: &Recording, window_s: f64, step_s: f64) -> Result<Vec<Epoch>> {
    if !(window_s > 0.0 && step_s > 0.0) {
        return Err(Error::invalid(format!("window ({window_s} s) and step ({step_s} s) must be positive")));
    }
    let whole = Epoch::whole(rec);
    let (w, s) = (window_s * 1000.0, step_s * 1000.0);
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t0 = whole.t0_ms + k as f64 * s;
        if t0 + w > whole.t1_ms + 1e-6 {
            break;
        }
        out.push(Epoch::new(t0, t0 + w));
        k += 1;
    }
    if out.is_empty() {
        log::warn!("recording `{}` ({} ms) is shorter than one {window_s} s window", rec.id, whole.len_ms());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// Saccade velocity statistics over pooled sample velocities instead of per-saccade means.
    pub pooled_saccade_velocity: bool,
}

/// Everything extraction reads for one recording.
#[derive(Debug, Clone, Copy)]
pub struct FeatureInput<'a> {
    pub recording: &'a Recording,
    pub events: &'a EventStream,
    /// Cleaned, baseline-normalized pupil series.
    pub pupil: Option<&'a PupilSeries>,
    pub clicks: &'a [ClickEvent],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Event families with no members in the window.
    pub empty: Vec<String>,
}

fn pick(s: &Summary, stat: Stat) -> f64 {
    match stat {
        Stat::Mean => s.mean,
        Stat::Min => s.min,
        Stat::Max => s.max,
        Stat::Sum => s.sum,
        Stat::Sd => s.sd,
    }
}

fn family(source: &Source) -> Option<String> {
    Some(match source {
        Source::FixationDuration(_) => "fixation".into(),
        Source::OoiFixationDuration(o, _) => format!("{}_fixation", o.prefix()),
        Source::AoiFixationDuration(_) => "aoi_fixation".into(),
        Source::SaccadeDuration(_)
        | Source::SaccadeAmplitude(_)
        | Source::SaccadePeakVelocity(_)
        | Source::SaccadeVelocity(_) => "saccade".into(),
        Source::BlinkDuration(_) => "blink".into(),
        Source::Pupil(_) => "pupil".into(),
        Source::PupilFixation(_) => "pupil_fixation".into(),
        Source::ClickedAoiFixationDuration(_) => "caoi_fixation".into(),
        _ => return None,
    })
}

/// One window's feature vector in catalog order.
pub fn extract_features(
    input: &FeatureInput<'_>,
    window: Epoch,
    catalog: &FeatureCatalog,
    opts: &FeatureOptions,
) -> Result<FeatureVector> {
    let ev = input.events;
    if ev.preset != catalog.preset {
        return Err(Error::PresetMismatch { expected: catalog.preset.clone(), found: ev.preset.clone() });
    }
    let rec = input.recording;
    let secs = window.len_ms() / 1000.0;
    let fix: Vec<&Fixation> = aoi::in_epoch(&ev.fixations, window).collect();
    let sacc: Vec<&Saccade> = ev.saccades.iter().filter(|s| window.contains(s.onset_ms)).collect();
    let blinks: Vec<f64> = ev.blinks.iter().filter(|b| window.contains(b.onset_ms)).map(|b| b.duration_ms).collect();

    let fix_dur: Vec<f64> = fix.iter().map(|f| f.duration_ms).collect();
    let fix_summary = Summary::of(&fix_dur);
    let ooi_fix = |o: Ooi| -> Vec<f64> {
        fix.iter()
            .filter(|f| f.aoi.as_deref().is_some_and(|a| a.starts_with(o.prefix())))
            .map(|f| f.duration_ms)
            .collect()
    };
    let ooi_summaries: Vec<Summary> = Ooi::ALL.iter().map(|&o| Summary::of(&ooi_fix(o))).collect();
    let aoi_summary =
        Summary::of(&fix.iter().filter(|f| f.aoi.is_some()).map(|f| f.duration_ms).collect::<Vec<_>>());

    let sacc_dur = Summary::of(&sacc.iter().map(|s| s.duration_ms).collect::<Vec<_>>());
    let sacc_amp = Summary::of(&sacc.iter().map(|s| s.amplitude_deg).collect::<Vec<_>>());
    let sacc_peak = Summary::of(&sacc.iter().map(|s| s.peak_velocity).collect::<Vec<_>>());
    let uses_velocity = catalog.descriptors.iter().any(|d| matches!(d.source, Source::SaccadeVelocity(_)));
    let sacc_vel = if uses_velocity && opts.pooled_saccade_velocity && !sacc.is_empty() {
        let gv = angular_velocity_dirs(&rec.gaze(), &rec.times())?;
        let pooled: Vec<f64> =
            sacc.iter().flat_map(|s| (s.first_sample..=s.last_sample).filter_map(|k| gv[k])).collect();
        Summary::of(&pooled)
    } else {
        Summary::of(&sacc.iter().map(|s| s.mean_velocity).collect::<Vec<_>>())
    };
    let blink_summary = Summary::of(&blinks);

    let (pupil_all, pupil_fix) = match input.pupil {
        Some(p) => {
            let all: Vec<f64> = (0..p.len()).filter(|&i| window.contains(p.t[i])).filter_map(|i| p.get(i)).collect();
            let during: Vec<f64> =
                fix.iter().flat_map(|f| (f.first_sample..=f.last_sample).filter_map(|k| p.get(k))).collect();
            (Summary::of(&all), Summary::of(&during))
        }
        None => (Summary::default(), Summary::default()),
    };
    let clicks = aoi::join_clicks(ev, input.clicks, window);

    let mut values = Vec::with_capacity(catalog.len());
    let mut empty = BTreeSet::new();
    for d in &catalog.descriptors {
        let v = match d.source {
            Source::HmdMoveRate => {
                ev.head_segments.iter().filter(|h| h.state == HeadState::Moving && window.contains(h.onset_ms)).count()
                    as f64
                    / secs
            }
            Source::FixationRate { per_s } => fix.len() as f64 / (secs / per_s),
            Source::FixationCount => fix.len() as f64,
            Source::FixationDuration(s) => pick(&fix_summary, s),
            Source::OoiFixationCount(o) => ooi_summaries[o as usize].n as f64,
            Source::OoiFixationDuration(o, s) => pick(&ooi_summaries[o as usize], s),
            Source::Dwell(o) => dwell_prefix(rec, o.prefix(), window),
            Source::FixatedPeerCount => aoi::distinct_aoi_count(&ev.fixations, Ooi::Peer.prefix(), window) as f64,
            Source::AoiFixationCount => aoi_summary.n as f64,
            Source::AoiFixationDuration(s) => pick(&aoi_summary, s),
            Source::SaccadeRate { per_s } => sacc.len() as f64 / (secs / per_s),
            Source::SaccadeCount => sacc.len() as f64,
            Source::SaccadeDuration(s) => pick(&sacc_dur, s),
            Source::SaccadeAmplitude(s) => pick(&sacc_amp, s),
            Source::SaccadePeakVelocity(s) => pick(&sacc_peak, s),
            Source::SaccadeVelocity(s) => pick(&sacc_vel, s),
            Source::SaccFixaRatio => {
                if fix_summary.sum > 0.0 {
                    sacc_dur.sum / fix_summary.sum
                } else {
                    0.0
                }
            }
            Source::BlinkCount => blinks.len() as f64,
            Source::BlinkDuration(s) => pick(&blink_summary, s),
            Source::Pupil(s) => pick(&pupil_all, s),
            Source::PupilFixation(s) => pick(&pupil_fix, s),
            Source::ClickCount => clicks.n_clicks as f64,
            Source::ClickedAoiFixationCount => clicks.n_fixations as f64,
            Source::ClickedAoiFixationDuration(s) => pick(&clicks.fixation_duration, s),
        };
        let is_empty = match d.source {
            Source::FixationDuration(_) => fix_summary.is_empty(),
            Source::OoiFixationDuration(o, _) => ooi_summaries[o as usize].is_empty(),
            Source::AoiFixationDuration(_) => aoi_summary.is_empty(),
            Source::SaccadeDuration(_)
            | Source::SaccadeAmplitude(_)
            | Source::SaccadePeakVelocity(_)
            | Source::SaccadeVelocity(_) => sacc.is_empty(),
            Source::BlinkDuration(_) => blinks.is_empty(),
            Source::Pupil(_) => pupil_all.is_empty(),
            Source::PupilFixation(_) => pupil_fix.is_empty(),
            Source::ClickedAoiFixationDuration(_) => clicks.fixation_duration.is_empty(),
            _ => false,
        };
        if is_empty {
            empty.insert(family(&d.source).unwrap_or_default());
        }
        values.push(v);
    }
    Ok(FeatureVector { values, empty: empty.into_iter().collect() })
}

/// Gaze time on any AOI whose label starts with `prefix`.
fn dwell_prefix(rec: &Recording, prefix: &str, epoch: Epoch) -> f64 {
    let mut total = 0.0;
    for (i, f) in rec.frames.iter().enumerate() {
        if epoch.contains(f.t_ms) && f.aoi.as_deref().is_some_and(|a| a.starts_with(prefix)) {
            total += (f.t_ms + rec.frame_interval_ms(i)).min(epoch.t1_ms) - f.t_ms;
        }
    }
    total
}

/// Where the class label and group id of a recording come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelSpec {
    /// Recording label holding the integer class.
    pub label_key: String,
    /// Recording label naming the group; the recording id when absent.
    pub group_key: Option<String>,
}

impl Default for LabelSpec {
    fn default() -> Self {
        LabelSpec { label_key: "class".into(), group_key: None }
    }
}

impl LabelSpec {
    pub fn label_of(&self, rec: &Recording) -> Result<u8> {
        let raw = rec.labels.get(&self.label_key).ok_or_else(|| {
            Error::invalid(format!("recording `{}` has no `{}` label", rec.id, self.label_key))
        })?;
        raw.trim().parse().map_err(|_| {
            Error::invalid(format!("recording `{}`: label `{}` = `{raw}` is not a class integer", rec.id, self.label_key))
        })
    }

    pub fn group_of(&self, rec: &Recording) -> Result<String> {
        match &self.group_key {
            None => Ok(rec.id.clone()),
            Some(k) => rec
                .labels
                .get(k)
                .cloned()
                .ok_or_else(|| Error::invalid(format!("recording `{}` has no `{k}` group label", rec.id))),
        }
    }
}

/// Feature matrix over all windows of all recordings, ordered by (input, window).
pub fn extract_matrix(
    inputs: &[FeatureInput<'_>],
    catalog: &FeatureCatalog,
    window_s: f64,
    step_s: f64,
    labels: &LabelSpec,
    opts: &FeatureOptions,
) -> Result<FeatureMatrix> {
    let per_rec: Vec<Result<Vec<FeatureRow>>> = inputs
        .par_iter()
        .map(|inp| {
            let rec = inp.recording;
            let label = labels.label_of(rec)?;
            let group_id = labels.group_of(rec)?;
            sliding_windows(rec, window_s, step_s)?
                .into_iter()
                .enumerate()
                .map(|(idx, w)| {
                    let fv = extract_features(inp, w, catalog, opts)?;
                    Ok(FeatureRow {
                        group_id: group_id.clone(),
                        trial_id: rec.trial.clone(),
                        window_idx: idx,
                        label,
                        values: fv.values,
                        empty: fv.empty,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_rec {
        rows.extend(r?);
    }
    Ok(FeatureMatrix { catalog: catalog.name.clone(), columns: catalog.ids(), rows, normalization: None })
}
