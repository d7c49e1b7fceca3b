//! The JSON pipeline config, flag overrides and the resolved effective config.
//!
//! Missing fields take study defaults. The config hash covers the effective
//! config, so two documents that resolve to the same run share a hash.

use std::path::{Path, PathBuf};

use gazelab_core::features::{FeatureCatalog, FeatureOptions, LabelSpec, NormMethod};
use gazelab_core::model::{CvProtocol, ParamGrid, RfeProtocol};
use gazelab_core::pipeline::Study;
use gazelab_core::recording::DEFAULT_MAX_GAP_MS;
use gazelab_core::stats::{Design, RankOptions, TestKind};
use gazelab_core::synth::PlantSpec;
use gazelab_core::{rng, DetectionConfig, PupilConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DEFAULT_WINDOW_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    MaxAbs,
    MinMax,
    None,
}

impl NormChoice {
    fn method(self) -> Option<NormMethod> {
        match self {
            NormChoice::MaxAbs => Some(NormMethod::MaxAbs),
            NormChoice::MinMax => Some(NormMethod::MinMax),
            NormChoice::None => None,
        }
    }
}

impl std::str::FromStr for NormChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| format!("unknown normalization `{s}` (max_abs, min_max, none)"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Option<String>,
    #[serde(default)]
    pub grid: ParamGrid,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    pub inner_k: Option<usize>,
    pub outer_repeats: Option<usize>,
    pub test_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfeSection {
    pub validation_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    #[default]
    Bonferroni,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub test: TestKind,
    pub design: Design,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsPlan {
    pub comparisons: Vec<Comparison>,
    pub correction: Correction,
    pub options: RankOptions,
}

impl Default for StatsPlan {
    fn default() -> Self {
        StatsPlan {
            comparisons: vec![Comparison { test: TestKind::MannWhitney, design: Design::BetweenLabel }],
            correction: Correction::Bonferroni,
            options: RankOptions::default(),
        }
    }
}

/// The config document as written; every field is optional except the seed,
/// whose absence is reported at resolution time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub inputs: Vec<String>,
    pub study: Option<String>,
    pub preset: Option<String>,
    pub detection: Option<DetectionConfig>,
    pub catalog: Option<String>,
    pub pupil: Option<PupilConfig>,
    pub max_gap_ms: Option<f64>,
    pub min_tracking_ratio: Option<f64>,
    pub labels: Option<LabelSpec>,
    pub window_s: Option<f64>,
    pub step_s: Option<f64>,
    #[serde(default)]
    pub features: FeatureOptions,
    pub normalization: Option<NormChoice>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub rfe: RfeSection,
    pub stats: Option<StatsPlan>,
    pub synth: Option<PlantSpec>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ConfigFile {
    /// Parse a config; relative paths inside it are taken from its directory.
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: ConfigFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.output_dir = cfg.output_dir.map(|d| base.join(d));
        cfg.inputs = cfg.inputs.into_iter().map(|i| base.join(i).to_string_lossy().into_owned()).collect();
        Ok(cfg)
    }
}

/// Scalar fields settable from the command line.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Input recording, directory or `*`/`?` pattern (repeatable; replaces the config list).
    #[arg(long = "input", value_name = "PATH")]
    pub inputs: Vec<String>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Study defaults: classroom, teacher or locomotion.
    #[arg(long)]
    pub study: Option<String>,
    /// Detection thresholds preset (a study name).
    #[arg(long)]
    pub preset: Option<String>,
    /// Feature catalog name.
    #[arg(long)]
    pub catalog: Option<String>,
    /// Feature window length in seconds.
    #[arg(long)]
    pub window_s: Option<f64>,
    /// Window step in seconds; defaults to the window length.
    #[arg(long)]
    pub step_s: Option<f64>,
    /// max_abs, min_max or none.
    #[arg(long)]
    pub normalization: Option<NormChoice>,
    /// Model family: random_forest or logistic.
    #[arg(long)]
    pub family: Option<String>,
    /// Inner cross-validation folds.
    #[arg(long)]
    pub inner_k: Option<usize>,
    /// Outer train/test repeats.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Share of groups held out per outer repeat.
    #[arg(long)]
    pub test_ratio: Option<f64>,
    /// Tracking-quality gate.
    #[arg(long)]
    pub min_tracking_ratio: Option<f64>,
}

impl Overrides {
    /// Apply to `cfg`, returning `field=value` for every flag given.
    pub fn apply(&self, cfg: &mut ConfigFile) -> Vec<String> {
        let mut log = Vec::new();
        fn set<T: Clone + std::fmt::Debug>(log: &mut Vec<String>, name: &str, flag: &Option<T>, slot: &mut Option<T>) {
            if let Some(v) = flag {
                log.push(format!("{name}={v:?}"));
                *slot = Some(v.clone());
            }
        }
        if !self.inputs.is_empty() {
            log.push(format!("inputs={:?}", self.inputs));
            cfg.inputs = self.inputs.clone();
        }
        set(&mut log, "seed", &self.seed, &mut cfg.seed);
        set(&mut log, "study", &self.study, &mut cfg.study);
        set(&mut log, "preset", &self.preset, &mut cfg.preset);
        set(&mut log, "catalog", &self.catalog, &mut cfg.catalog);
        set(&mut log, "window_s", &self.window_s, &mut cfg.window_s);
        set(&mut log, "step_s", &self.step_s, &mut cfg.step_s);
        set(&mut log, "normalization", &self.normalization, &mut cfg.normalization);
        set(&mut log, "model.family", &self.family, &mut cfg.model.family);
        set(&mut log, "cv.inner_k", &self.inner_k, &mut cfg.cv.inner_k);
        set(&mut log, "cv.outer_repeats", &self.repeats, &mut cfg.cv.outer_repeats);
        set(&mut log, "cv.test_ratio", &self.test_ratio, &mut cfg.cv.test_ratio);
        set(&mut log, "min_tracking_ratio", &self.min_tracking_ratio, &mut cfg.min_tracking_ratio);
        log
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub family: String,
    pub grid: ParamGrid,
}

/// Everything a run depends on, defaults filled in. Output location and
/// worker count are not part of it: neither changes any artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effective {
    pub inputs: Vec<String>,
    pub study: Option<String>,
    pub detection: DetectionConfig,
    pub catalog: String,
    pub pupil: PupilConfig,
    pub max_gap_ms: f64,
    pub min_tracking_ratio: f64,
    pub labels: LabelSpec,
    pub window_s: f64,
    pub step_s: f64,
    pub features: FeatureOptions,
    pub normalization: Option<NormMethod>,
    pub model: ModelChoice,
    pub cv: CvProtocol,
    pub rfe: RfeProtocol,
    pub stats: StatsPlan,
    pub synth: PlantSpec,
    pub seed: u64,
}

/// Sub-seeds of the master seed, one per consumer.
pub mod stream {
    pub const CV: u64 = 1;
    pub const RFE: u64 = 2;
    pub const FINAL_FIT: u64 = 3;
    pub const SYNTH: u64 = 4;
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl Effective {
    pub fn resolve(cfg: &ConfigFile) -> Result<Effective, CliError> {
        let seed = cfg.seed.ok_or_else(|| usage("config has no `seed`; a master seed is mandatory"))?;
        let synth = cfg.synth.clone().unwrap_or_default();
        let study_name = cfg.study.clone().or_else(|| cfg.synth.as_ref().map(|s| s.study.clone()));
        let study = study_name.as_deref().map(Study::by_name).transpose().map_err(|e| usage(e.to_string()))?;

        let detection = match (&cfg.detection, &cfg.preset, &study) {
            (Some(d), _, _) => d.clone(),
            (None, Some(p), _) => DetectionConfig::preset(p).map_err(|e| usage(e.to_string()))?,
            (None, None, Some(s)) => DetectionConfig::preset(&s.preset).map_err(|e| usage(e.to_string()))?,
            (None, None, None) => return Err(usage("config needs `study`, `preset` or `detection`")),
        };
        detection.validate().map_err(|e| usage(format!("detection: {e}")))?;
        let catalog = match (&cfg.catalog, &study) {
            (Some(c), _) => c.clone(),
            (None, Some(s)) => s.catalog.clone(),
            (None, None) => return Err(usage("config needs `study` or `catalog`")),
        };
        FeatureCatalog::by_name(&catalog).map_err(|e| usage(e.to_string()))?;

        let mut pupil = cfg.pupil.clone().unwrap_or_default();
        if cfg.pupil.is_none() {
            if let Some(s) = &study {
                pupil.baseline_window_ms = s.baseline_window_ms;
            }
        }
        let min_tracking_ratio = cfg.min_tracking_ratio.or(study.as_ref().map(|s| s.min_tracking_ratio)).unwrap_or(0.90);
        if !(0.0..=1.0).contains(&min_tracking_ratio) {
            return Err(usage(format!("min_tracking_ratio must lie in [0, 1], got {min_tracking_ratio}")));
        }
        let window_s = cfg.window_s.unwrap_or(DEFAULT_WINDOW_S);
        let step_s = cfg.step_s.unwrap_or(window_s);
        if !(window_s > 0.0 && step_s > 0.0) {
            return Err(usage(format!("window_s and step_s must be positive, got {window_s} and {step_s}")));
        }
        // Min-max for the teacher study, max-abs elsewhere.
        let default_norm = match study.as_ref().map(|s| s.name.as_str()) {
            Some("teacher") => NormChoice::MinMax,
            _ => NormChoice::MaxAbs,
        };
        let normalization = cfg.normalization.unwrap_or(default_norm).method();
        let family = cfg.model.family.clone().unwrap_or_else(|| "random_forest".into());
        cfg.model.grid.expand(&family).map_err(|e| usage(e.to_string()))?;
        let d = CvProtocol::default();
        let cv = CvProtocol {
            inner_k: cfg.cv.inner_k.unwrap_or(d.inner_k),
            outer_repeats: cfg.cv.outer_repeats.or(study.as_ref().map(|s| s.outer_repeats)).unwrap_or(d.outer_repeats),
            test_ratio: cfg.cv.test_ratio.unwrap_or(d.test_ratio),
            seed: rng::derive(seed, stream::CV),
            normalization,
        };
        if cv.inner_k < 2 || cv.outer_repeats == 0 || !(cv.test_ratio > 0.0 && cv.test_ratio < 1.0) {
            return Err(usage("cv needs inner_k ≥ 2, outer_repeats ≥ 1 and test_ratio in (0, 1)"));
        }
        let rfe = RfeProtocol {
            validation_ratio: cfg.rfe.validation_ratio.unwrap_or(RfeProtocol::default().validation_ratio),
            seed: rng::derive(seed, stream::RFE),
            normalization,
        };
        Ok(Effective {
            inputs: cfg.inputs.clone(),
            study: study.map(|s| s.name),
            detection,
            catalog,
            pupil,
            max_gap_ms: cfg.max_gap_ms.unwrap_or(DEFAULT_MAX_GAP_MS),
            min_tracking_ratio,
            labels: cfg.labels.clone().unwrap_or_default(),
            window_s,
            step_s,
            features: cfg.features,
            normalization,
            model: ModelChoice { family, grid: cfg.model.grid.clone() },
            cv,
            rfe,
            stats: cfg.stats.clone().unwrap_or_default(),
            synth,
            seed,
        })
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ConfigFile {
        ConfigFile { study: Some("classroom".into()), seed: Some(7), ..Default::default() }
    }

    #[test]
    fn study_defaults() {
        let e = Effective::resolve(&base()).unwrap();
        assert_eq!(e.detection.name, "classroom");
        assert_eq!(e.catalog, "classroom-gender-43");
        assert_eq!(e.min_tracking_ratio, 0.90);
        assert_eq!(e.cv.outer_repeats, 10);
        assert_eq!(e.step_s, e.window_s);
        let t = Effective::resolve(&ConfigFile { study: Some("teacher".into()), ..base() }).unwrap();
        assert_eq!(t.normalization, Some(NormMethod::MinMax));
        assert_eq!(t.pupil.baseline_window_ms, 1000.0);
    }

    #[test]
    fn seed_is_mandatory() {
        let err = Effective::resolve(&ConfigFile { seed: None, ..base() }).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn hash_ignores_output_and_workers_but_not_values() {
        let a = Effective::resolve(&base()).unwrap().hash();
        let b = Effective::resolve(&ConfigFile { output_dir: Some("x".into()), workers: Some(3), ..base() }).unwrap().hash();
        let c = Effective::resolve(&ConfigFile { seed: Some(8), ..base() }).unwrap().hash();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn flags_win_and_are_logged() {
        let mut cfg = base();
        let o = Overrides { seed: Some(9), repeats: Some(3), ..Default::default() };
        let log = o.apply(&mut cfg);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(log, ["seed=9", "cv.outer_repeats=3"]);
        assert_eq!(Effective::resolve(&cfg).unwrap().cv.outer_repeats, 3);
    }

    #[test]
    fn unknown_names_are_usage_errors() {
        assert!(Effective::resolve(&ConfigFile { catalog: Some("nope".into()), ..base() }).is_err());
        assert!(Effective::resolve(&ConfigFile { preset: Some("nope".into()), ..base() }).is_err());
        assert!(serde_json::from_str::<ConfigFile>(r#"{"seed": 1, "bogus": 2}"#).is_err());
    }
}
