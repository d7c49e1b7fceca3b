//! Area-of-interest attribution: per-AOI fixation statistics, dwell, time to
//! first fixation, click-selected AOIs and event-locked change scores.
//!
//! Fixations belong to an epoch when their onset falls in `[t0, t1)`. Dwell
//! comes from raw frame hits, so saccade samples inside an AOI count too.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventStream, Fixation};
use crate::pupil::PupilSeries;
use crate::recording::{ClickEvent, Recording};
use crate::summary::Summary;

/// Half-open time span `[t0_ms, t1_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub t0_ms: f64,
    pub t1_ms: f64,
}

impl Epoch {
    pub const fn new(t0_ms: f64, t1_ms: f64) -> Self {
        Epoch { t0_ms, t1_ms }
    }

    pub fn whole(rec: &Recording) -> Self {
        Epoch::new(rec.start_ms(), rec.end_ms() + rec.frame_interval_ms(rec.frames.len().saturating_sub(1)))
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0_ms && t < self.t1_ms
    }

    pub fn len_ms(&self) -> f64 {
        self.t1_ms - self.t0_ms
    }

    /// Error unless the epoch lies inside the recording (plus one trailing frame interval).
    pub fn check_within(&self, rec: &Recording) -> Result<()> {
        let whole = Epoch::whole(rec);
        let tol = 1e-6;
        if !(self.t0_ms < self.t1_ms) || self.t0_ms < whole.t0_ms - tol || self.t1_ms > whole.t1_ms + tol {
            return Err(Error::EpochOutOfRange { t0: self.t0_ms, t1: self.t1_ms, start: whole.t0_ms, end: whole.t1_ms });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiStats {
    pub aoi: String,
    pub n_fixations: usize,
    pub fixation_duration: Summary,
    pub dwell_ms: f64,
    pub ttff_ms: Option<f64>,
    /// Duration of the first fixation, truncated at the epoch end.
    pub ffd_ms: Option<f64>,
}

/// Gaze time on `aoi`: forward intervals of hit frames, clipped to the epoch.
pub fn dwell_ms(rec: &Recording, aoi: &str, epoch: Epoch) -> f64 {
    let mut total = 0.0;
    for (i, f) in rec.frames.iter().enumerate() {
        if epoch.contains(f.t_ms) && f.aoi.as_deref() == Some(aoi) {
            let end = (f.t_ms + rec.frame_interval_ms(i)).min(epoch.t1_ms);
            total += end - f.t_ms;
        }
    }
    total
}

pub fn in_epoch<'a>(fixations: &'a [Fixation], epoch: Epoch) -> impl Iterator<Item = &'a Fixation> + 'a {
    fixations.iter().filter(move |f| epoch.contains(f.onset_ms))
}

pub fn aoi_stats(
    fixations: &[Fixation],
    rec: &Recording,
    aoi_set: &[String],
    epoch: Epoch,
) -> Result<BTreeMap<String, AoiStats>> {
    epoch.check_within(rec)?;
    let mut out = BTreeMap::new();
    for aoi in aoi_set {
        let hits: Vec<&Fixation> = in_epoch(fixations, epoch).filter(|f| f.aoi.as_deref() == Some(aoi)).collect();
        let durations: Vec<f64> = hits.iter().map(|f| f.duration_ms).collect();
        let first = hits.iter().min_by(|a, b| a.onset_ms.total_cmp(&b.onset_ms));
        out.insert(
            aoi.clone(),
            AoiStats {
                aoi: aoi.clone(),
                n_fixations: hits.len(),
                fixation_duration: Summary::of(&durations),
                dwell_ms: dwell_ms(rec, aoi, epoch),
                ttff_ms: first.map(|f| f.onset_ms - epoch.t0_ms),
                ffd_ms: first.map(|f| f.offset_ms.min(epoch.t1_ms) - f.onset_ms),
            },
        );
    }
    Ok(out)
}

/// Distinct AOIs starting with `prefix` that received a fixation in the epoch.
pub fn distinct_aoi_count(fixations: &[Fixation], prefix: &str, epoch: Epoch) -> usize {
    in_epoch(fixations, epoch)
        .filter_map(|f| f.aoi.as_deref())
        .filter(|a| a.starts_with(prefix))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Fixation statistics restricted to click-selected AOIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickedAoiStats {
    pub n_clicks: usize,
    pub targets: Vec<String>,
    pub n_fixations: usize,
    pub fixation_duration: Summary,
}

pub fn join_clicks(events: &EventStream, clicks: &[ClickEvent], epoch: Epoch) -> ClickedAoiStats {
    let inside: Vec<&ClickEvent> = clicks.iter().filter(|c| epoch.contains(c.t_ms)).collect();
    let targets: BTreeSet<&str> = inside.iter().map(|c| c.target.as_str()).collect();
    let durations: Vec<f64> = in_epoch(&events.fixations, epoch)
        .filter(|f| f.aoi.as_deref().is_some_and(|a| targets.contains(a)))
        .map(|f| f.duration_ms)
        .collect();
    ClickedAoiStats {
        n_clicks: inside.len(),
        targets: targets.into_iter().map(str::to_string).collect(),
        n_fixations: durations.len(),
        fixation_duration: Summary::of(&durations),
    }
}

/// Quantity compared before and after an event onset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ChangeMetric {
    MeanPupil,
    MeanFixationDuration,
    SaccadeCount,
    MeanSaccadeDuration,
    MeanSaccadeAmplitude,
    Dwell(String),
    DistinctAois(String),
}

impl fmt::Display for ChangeMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChangeMetric::MeanPupil => f.write_str("mean_pupil"),
            ChangeMetric::MeanFixationDuration => f.write_str("mean_fixation_duration"),
            ChangeMetric::SaccadeCount => f.write_str("saccade_count"),
            ChangeMetric::MeanSaccadeDuration => f.write_str("mean_saccade_duration"),
            ChangeMetric::MeanSaccadeAmplitude => f.write_str("mean_saccade_amplitude"),
            ChangeMetric::Dwell(a) => write!(f, "dwell:{a}"),
            ChangeMetric::DistinctAois(p) => write!(f, "distinct:{p}"),
        }
    }
}

impl FromStr for ChangeMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mean_pupil" => ChangeMetric::MeanPupil,
            "mean_fixation_duration" => ChangeMetric::MeanFixationDuration,
            "saccade_count" => ChangeMetric::SaccadeCount,
            "mean_saccade_duration" => ChangeMetric::MeanSaccadeDuration,
            "mean_saccade_amplitude" => ChangeMetric::MeanSaccadeAmplitude,
            _ => match s.split_once(':') {
                Some(("dwell", a)) if !a.is_empty() => ChangeMetric::Dwell(a.to_string()),
                Some(("distinct", p)) if !p.is_empty() => ChangeMetric::DistinctAois(p.to_string()),
                _ => return Err(Error::Unknown { kind: "change metric", name: s.to_string() }),
            },
        })
    }
}

impl TryFrom<String> for ChangeMetric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ChangeMetric> for String {
    fn from(m: ChangeMetric) -> String {
        m.to_string()
    }
}

pub const DEFAULT_CHANGE_WINDOW_MS: f64 = 2500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeScore {
    pub onset_ms: f64,
    pub metric: ChangeMetric,
    pub window_ms: f64,
    pub value_before: f64,
    pub value_after: f64,
    pub change: f64,
}

/// Per-metric averages over the onsets that had full windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub metric: ChangeMetric,
    pub n_onsets: usize,
    pub mean_before: f64,
    pub mean_after: f64,
    /// `mean_after − mean_before`.
    pub mean_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub recording: String,
    pub scores: Vec<ChangeScore>,
    pub summary: Vec<ChangeSummary>,
    /// Onsets without a full window on both sides.
    pub skipped: Vec<f64>,
}

fn mean_or_zero(v: &[f64]) -> f64 {
    Summary::of(v).mean
}

fn metric_value(
    m: &ChangeMetric,
    rec: &Recording,
    events: &EventStream,
    pupil: Option<&PupilSeries>,
    epoch: Epoch,
) -> Result<f64> {
    let fix: Vec<&Fixation> = in_epoch(&events.fixations, epoch).collect();
    let sacc: Vec<_> = events.saccades.iter().filter(|s| epoch.contains(s.onset_ms)).collect();
    Ok(match m {
        ChangeMetric::MeanPupil => {
            let p = pupil.ok_or_else(|| Error::invalid("mean_pupil change needs a pupil series"))?;
            let vals: Vec<f64> =
                (0..p.len()).filter(|&i| epoch.contains(p.t[i])).filter_map(|i| p.get(i)).collect();
            mean_or_zero(&vals)
        }
        ChangeMetric::MeanFixationDuration => mean_or_zero(&fix.iter().map(|f| f.duration_ms).collect::<Vec<_>>()),
        ChangeMetric::SaccadeCount => sacc.len() as f64,
        ChangeMetric::MeanSaccadeDuration => mean_or_zero(&sacc.iter().map(|s| s.duration_ms).collect::<Vec<_>>()),
        ChangeMetric::MeanSaccadeAmplitude => {
            mean_or_zero(&sacc.iter().map(|s| s.amplitude_deg).collect::<Vec<_>>())
        }
        ChangeMetric::Dwell(aoi) => dwell_ms(rec, aoi, epoch),
        ChangeMetric::DistinctAois(prefix) => distinct_aoi_count(&events.fixations, prefix, epoch) as f64,
    })
}

/// Before/after comparison in `window_ms` windows around each onset.
///
/// Onsets whose windows leave the recording are skipped and listed, with a warning.
pub fn event_locked_change(
    rec: &Recording,
    events: &EventStream,
    pupil: Option<&PupilSeries>,
    onsets_ms: &[f64],
    window_ms: f64,
    metrics: &[ChangeMetric],
) -> Result<ChangeReport> {
    if !(window_ms > 0.0) {
        return Err(Error::invalid(format!("change window must be positive, got {window_ms}")));
    }
    let whole = Epoch::whole(rec);
    let mut scores = Vec::new();
    let mut skipped = Vec::new();
    for &onset in onsets_ms {
        let before = Epoch::new(onset - window_ms, onset);
        let after = Epoch::new(onset, onset + window_ms);
        if before.t0_ms < whole.t0_ms || after.t1_ms > whole.t1_ms {
            log::warn!("recording `{}`: onset {onset} ms lacks a full {window_ms} ms window, skipped", rec.id);
            skipped.push(onset);
            continue;
        }
        for m in metrics {
            let value_before = metric_value(m, rec, events, pupil, before)?;
            let value_after = metric_value(m, rec, events, pupil, after)?;
            scores.push(ChangeScore {
                onset_ms: onset,
                metric: m.clone(),
                window_ms,
                value_before,
                value_after,
                change: value_after - value_before,
            });
        }
    }
    let summary = metrics
        .iter()
        .map(|m| {
            let rows: Vec<&ChangeScore> = scores.iter().filter(|s| &s.metric == m).collect();
            let mean_before = mean_or_zero(&rows.iter().map(|s| s.value_before).collect::<Vec<_>>());
            let mean_after = mean_or_zero(&rows.iter().map(|s| s.value_after).collect::<Vec<_>>());
            ChangeSummary {
                metric: m.clone(),
                n_onsets: rows.len(),
                mean_before,
                mean_after,
                mean_change: mean_after - mean_before,
            }
        })
        .collect();
    Ok(ChangeReport { recording: rec.id.clone(), scores, summary, skipped })
}

/// One row per (recording, epoch, AOI).
pub fn write_aoi_csv<W: Write>(rows: &[(String, Epoch, AoiStats)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "recording", "t0_ms", "t1_ms", "aoi", "n_fixations", "fix_mean_ms", "fix_min_ms", "fix_max_ms", "fix_sum_ms",
        "fix_sd_ms", "dwell_ms", "ttff_ms", "ffd_ms",
    ])?;
    let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (rec, e, s) in rows {
        let d = &s.fixation_duration;
        w.write_record([
            rec.clone(),
            e.t0_ms.to_string(),
            e.t1_ms.to_string(),
            s.aoi.clone(),
            s.n_fixations.to_string(),
            d.mean.to_string(),
            d.min.to_string(),
            d.max.to_string(),
            d.sum.to_string(),
            d.sd.to_string(),
            s.dwell_ms.to_string(),
            o(s.ttff_ms),
            o(s.ffd_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_change_csv<W: Write>(reports: &[ChangeReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["recording", "onset_ms", "metric", "window_ms", "before", "after", "change"])?;
    for r in reports {
        for s in &r.scores {
            w.write_record([
                r.recording.clone(),
                s.onset_ms.to_string(),
                s.metric.to_string(),
                s.window_ms.to_string(),
                s.value_before.to_string(),
                s.value_after.to_string(),
                s.change.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
