//! Per-recording processing chain and the study presets that parameterize it.
//!
//! Order: tracking quality on the raw validity flags, gaze gap repair, pupil
//! cleaning and blink detection, event detection on the repaired recording.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{detect_events, DetectionConfig, EventStream};
use crate::features::{extract_matrix, FeatureCatalog, FeatureInput, FeatureMatrix, FeatureOptions, LabelSpec};
use crate::pupil::{preprocess, PupilConfig, PupilSeries};
use crate::recording::{interpolate_gaps, quality_report, ClickEvent, GapSpan, Recording, TrackingQuality, DEFAULT_MAX_GAP_MS};

/// Preset, catalog and gates of one of the three studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub name: String,
    pub preset: String,
    pub catalog: String,
    /// Recordings tracked for less than this fraction are excluded.
    pub min_tracking_ratio: f64,
    pub baseline_window_ms: f64,
    pub outer_repeats: usize,
}

impl Study {
    pub const NAMES: [&'static str; 3] = ["classroom", "teacher", "locomotion"];

    pub fn by_name(name: &str) -> Result<Study> {
        let s = |preset: &str, catalog: &str, gate: f64, baseline: f64, repeats: usize| Study {
            name: name.to_string(),
            preset: preset.to_string(),
            catalog: catalog.to_string(),
            min_tracking_ratio: gate,
            baseline_window_ms: baseline,
            outer_repeats: repeats,
        };
        match name {
            "classroom" => Ok(s("classroom", "classroom-gender-43", 0.90, 1000.0, 10)),
            "teacher" => Ok(s("teacher", "teacher-expertise-36", 0.85, 1000.0, 20)),
            "locomotion" => Ok(s("locomotion", "locomotion-ux-33", 0.90, 1500.0, 50)),
            other => Err(Error::Unknown { kind: "study", name: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessConfig {
    pub detection: DetectionConfig,
    pub pupil: PupilConfig,
    pub max_gap_ms: f64,
}

impl ProcessConfig {
    pub fn for_study(study: &Study) -> Result<ProcessConfig> {
        Ok(ProcessConfig {
            detection: DetectionConfig::preset(&study.preset)?,
            pupil: PupilConfig { baseline_window_ms: study.baseline_window_ms, ..PupilConfig::default() },
            max_gap_ms: DEFAULT_MAX_GAP_MS,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Processed {
    pub quality: TrackingQuality,
    /// Gaze gaps repaired; what detection and extraction read.
    pub recording: Recording,
    pub filled: Vec<GapSpan>,
    pub unfilled: Vec<GapSpan>,
    pub pupil: PupilSeries,
    pub events: EventStream,
}

impl Processed {
    pub fn input<'a>(&'a self, clicks: &'a [ClickEvent]) -> FeatureInput<'a> {
        FeatureInput { recording: &self.recording, events: &self.events, pupil: Some(&self.pupil), clicks }
    }
}

pub fn process_recording(rec: &Recording, cfg: &ProcessConfig) -> Result<Processed> {
    if rec.frames.is_empty() {
        return Err(Error::Empty(format!("recording `{}` has no frames", rec.id)));
    }
    let quality = quality_report(rec);
    let gaps = interpolate_gaps(rec, cfg.max_gap_ms)?;
    let pupil = preprocess(rec, &cfg.pupil)?;
    let mut events = detect_events(&gaps.recording, Some(&pupil.clean), pupil.blinks.clone(), &cfg.detection)?;
    for g in &gaps.unfilled {
        events.warnings.push(format!(
            "gaze gap {:.1}-{:.1} ms ({} samples) left unfilled",
            g.start_ms, g.end_ms, g.samples
        ));
    }
    Ok(Processed {
        quality,
        recording: gaps.recording,
        filled: gaps.filled,
        unfilled: gaps.unfilled,
        pupil: pupil.clean,
        events,
    })
}

/// Windowed feature matrix over processed recordings; `clicks[i]` belongs to
/// `processed[i]` (pass an empty slice when there are none).
pub fn feature_matrix(
    processed: &[Processed],
    clicks: &[Vec<ClickEvent>],
    catalog: &FeatureCatalog,
    window_s: f64,
    step_s: f64,
    labels: &LabelSpec,
    opts: &FeatureOptions,
) -> Result<FeatureMatrix> {
    const NONE: &[ClickEvent] = &[];
    let inputs: Vec<FeatureInput<'_>> = processed
        .iter()
        .enumerate()
        .map(|(i, p)| p.input(clicks.get(i).map_or(NONE, Vec::as_slice)))
        .collect();
    extract_matrix(&inputs, catalog, window_s, step_s, labels, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_gates() {
        assert_eq!(Study::by_name("teacher").unwrap().min_tracking_ratio, 0.85);
        assert_eq!(Study::by_name("locomotion").unwrap().baseline_window_ms, 1500.0);
        assert!(Study::by_name("museum").is_err());
        for n in Study::NAMES {
            let s = Study::by_name(n).unwrap();
            assert_eq!(FeatureCatalog::by_name(&s.catalog).unwrap().preset, s.preset);
        }
    }
}
