//! The subcommands. Each stage reads the stamped artifacts of earlier stages
//! from the output directory, so `pipeline` is the stages run in sequence.
//!
//! Output layout:
//!
//! ```text
//! detect    events.csv  quality.json  pupil/<id>.csv
//! features  features.csv
//! train     report.json  roc.csv  shap_values.csv  model.json
//! explain   shap_importance.csv  rfe.csv  rfe.json
//! stats     stats.json  stats_<test>_<design>.csv
//! synth     synth/<id>.jsonl  synth/<id>.meta.json  synth/<id>.truth.json  synth/manifest.json
//! ```

use std::path::{Path, PathBuf};

use gazelab_core::features::{FeatureCatalog, FeatureMatrix};
use gazelab_core::model::report::write_rfe_csv;
use gazelab_core::model::{nested_cv, report::write_roc_csv, shap_rfe, FittedModel, ModelReport, ModelSpec, ShapSummary};
use gazelab_core::pipeline::{feature_matrix, process_recording, ProcessConfig, Processed};
use gazelab_core::recording::{quality_report, write_jsonl, GapSpan};
use gazelab_core::stats::{feature_table, write_table_csv, TableRow};
use gazelab_core::synth::{plant_recordings, Knob};
use gazelab_core::{events::write_events_csv, pupil::write_pupil_csv, rng, TrackingQuality};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifact::Stamp;
use crate::config::{stream, Correction, Effective};
use crate::error::CliError;
use crate::inputs::{load_all, Input, META_SUFFIX};

pub struct Ctx {
    pub cfg: Effective,
    pub stamp: Stamp,
    pub out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("artifact serializes")
}

/// Recordings loaded, gated and processed.
pub struct Batch {
    inputs: Vec<Input>,
    qualities: Vec<TrackingQuality>,
    /// `None` for recordings below the tracking gate.
    processed: Vec<Option<Processed>>,
}

impl Batch {
    pub fn excluded(&self) -> Vec<String> {
        self.inputs
            .iter()
            .zip(&self.processed)
            .filter(|(_, p)| p.is_none())
            .map(|(i, _)| i.recording.id.clone())
            .collect()
    }

    pub fn any_passed(&self) -> bool {
        self.processed.iter().any(Option::is_some)
    }

    fn passed(&self) -> impl Iterator<Item = (&Input, &Processed)> {
        self.inputs.iter().zip(&self.processed).filter_map(|(i, p)| p.as_ref().map(|p| (i, p)))
    }
}

pub fn process(ctx: &Ctx) -> Result<Batch, CliError> {
    let cfg = &ctx.cfg;
    let inputs = load_all(&cfg.inputs)?;
    let pcfg = ProcessConfig { detection: cfg.detection.clone(), pupil: cfg.pupil.clone(), max_gap_ms: cfg.max_gap_ms };
    let results: Vec<(TrackingQuality, Option<Processed>)> = inputs
        .par_iter()
        .map(|i| {
            let q = quality_report(&i.recording);
            if !q.passes(cfg.min_tracking_ratio) {
                return Ok((q, None));
            }
            let p = process_recording(&i.recording, &pcfg).map_err(|e| CliError::at(&i.path, e))?;
            Ok((q, Some(p)))
        })
        .collect::<Result<_, CliError>>()?;
    let (qualities, processed) = results.into_iter().unzip();
    Ok(Batch { inputs, qualities, processed })
}

#[derive(Debug, Serialize)]
struct QualityRow<'a> {
    id: &'a str,
    file: String,
    passed: bool,
    quality: &'a TrackingQuality,
    filled_gaps: usize,
    unfilled_gaps: &'a [GapSpan],
    warnings: &'a [String],
}

pub fn detect(ctx: &Ctx, batch: &Batch) -> Result<(), CliError> {
    let streams: Vec<_> = batch.passed().map(|(_, p)| p.events.clone()).collect();
    ctx.stamp.write_text(&ctx.path("events.csv"), |w| write_events_csv(&streams, w))?;
    for (i, p) in batch.passed() {
        let path = ctx.path(&format!("pupil/{}.csv", i.recording.id.replace(['/', '\\'], "_")));
        ctx.stamp.write_text(&path, |w| write_pupil_csv(&p.pupil, w))?;
    }
    const NONE: &[GapSpan] = &[];
    let rows: Vec<QualityRow<'_>> = batch
        .inputs
        .iter()
        .zip(&batch.qualities)
        .zip(&batch.processed)
        .map(|((i, q), p)| QualityRow {
            id: &i.recording.id,
            file: i.path.display().to_string(),
            passed: p.is_some(),
            quality: q,
            filled_gaps: p.as_ref().map_or(0, |p| p.filled.len()),
            unfilled_gaps: p.as_ref().map_or(NONE, |p| p.unfilled.as_slice()),
            warnings: p.as_ref().map_or(&[], |p| p.events.warnings.as_slice()),
        })
        .collect();
    ctx.stamp.write_json(
        &ctx.path("quality.json"),
        vec![
            ("min_tracking_ratio", json!(ctx.cfg.min_tracking_ratio)),
            ("recordings", to_value(&rows)),
            ("exclusions", to_value(&batch.excluded())),
        ],
    )
}

pub fn features(ctx: &Ctx, batch: &Batch) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let catalog = FeatureCatalog::by_name(&cfg.catalog).map_err(|e| CliError::Usage(e.to_string()))?;
    let (processed, clicks): (Vec<Processed>, Vec<_>) = batch.passed().map(|(i, p)| (p.clone(), i.clicks.clone())).unzip();
    let matrix = feature_matrix(&processed, &clicks, &catalog, cfg.window_s, cfg.step_s, &cfg.labels, &cfg.features)
        .map_err(|e| CliError::Data(format!("feature extraction: {e}")))?;
    ctx.stamp.write_text(&ctx.path("features.csv"), |w| matrix.write_csv(w))
}

fn read_matrix(ctx: &Ctx) -> Result<(PathBuf, FeatureMatrix), CliError> {
    let path = ctx.path("features.csv");
    let text = ctx.stamp.read_text(&path)?;
    let m = FeatureMatrix::read_csv(&ctx.cfg.catalog, text.as_bytes()).map_err(|e| CliError::at(&path, e))?;
    Ok((path, m))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SavedModel {
    spec: ModelSpec,
    fitted: FittedModel,
}

pub fn train(ctx: &Ctx) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let (path, matrix) = read_matrix(ctx)?;
    let grid = cfg.model.grid.expand(&cfg.model.family).map_err(|e| CliError::Usage(e.to_string()))?;
    let cv = nested_cv(&matrix, &grid, &cfg.cv).map_err(|e| CliError::at(&path, e))?;
    let spec = grid[cv.selected].clone();
    let all: Vec<usize> = (0..matrix.len()).collect();
    let fitted = FittedModel::fit(&matrix, &all, &spec, cfg.normalization, rng::derive(cfg.seed, stream::FINAL_FIT))
        .map_err(|e| CliError::at(&path, e))?;
    let shap = ShapSummary::explain(&fitted, &matrix, &all).map_err(|e| CliError::at(&path, e))?;
    let report = ModelReport::build(&matrix, cv, Some(shap), None);

    ctx.stamp.write_json(&ctx.path("report.json"), vec![("config", to_value(cfg)), ("report", to_value(&report))])?;
    ctx.stamp.write_text(&ctx.path("roc.csv"), |w| write_roc_csv(&report.repeats, w))?;
    if let Some(s) = &report.shap {
        ctx.stamp.write_text(&ctx.path("shap_values.csv"), |w| s.write_csv(w))?;
    }
    ctx.stamp.write_json(&ctx.path("model.json"), vec![("model", to_value(&SavedModel { spec, fitted }))])
}

pub fn explain(ctx: &Ctx) -> Result<(), CliError> {
    let (path, matrix) = read_matrix(ctx)?;
    let saved: SavedModel = ctx.stamp.read_json(&ctx.path("model.json"), "model")?;
    let all: Vec<usize> = (0..matrix.len()).collect();
    let shap = ShapSummary::explain(&saved.fitted, &matrix, &all).map_err(|e| CliError::at(&path, e))?;
    ctx.stamp.write_text(&ctx.path("shap_importance.csv"), |w| shap.write_importance_csv(w))?;
    let rfe = shap_rfe(&matrix, &saved.spec, &ctx.cfg.rfe).map_err(|e| CliError::at(&path, e))?;
    ctx.stamp.write_text(&ctx.path("rfe.csv"), |w| write_rfe_csv(&rfe, w))?;
    ctx.stamp.write_json(&ctx.path("rfe.json"), vec![("rfe", to_value(&rfe))])
}

fn snake<T: Serialize>(v: &T) -> String {
    to_value(v).as_str().unwrap_or_default().to_string()
}

pub fn stats(ctx: &Ctx) -> Result<(), CliError> {
    let plan = &ctx.cfg.stats;
    let (path, matrix) = read_matrix(ctx)?;
    let mut tables = Vec::new();
    for c in &plan.comparisons {
        let mut rows: Vec<TableRow> =
            feature_table(&matrix, c.design, c.test, &plan.options).map_err(|e| CliError::at(&path, e))?;
        if plan.correction == Correction::None {
            rows.iter_mut().for_each(|r| r.p_adjusted = r.result.p_value);
        }
        let name = format!("stats_{}_{}.csv", snake(&c.test), snake(&c.design));
        ctx.stamp.write_text(&ctx.path(&name), |w| write_table_csv(&rows, w))?;
        tables.push(json!({
            "test": c.test,
            "design": c.design,
            "correction": plan.correction,
            "options": plan.options,
            "results": rows.iter().map(|r| &r.result).collect::<Vec<_>>(),
            "rows": rows,
        }));
    }
    ctx.stamp.write_json(&ctx.path("stats.json"), vec![("tables", Value::Array(tables))])
}

pub fn synth(ctx: &Ctx) -> Result<(), CliError> {
    let spec = &ctx.cfg.synth;
    let seed = rng::derive(ctx.cfg.seed, stream::SYNTH);
    let recs = plant_recordings(spec, seed).map_err(|e| CliError::Usage(format!("synth: {e}")))?;
    let dir = ctx.path("synth");
    let file = |id: &str, suffix: &str| dir.join(format!("{id}{suffix}"));
    for (rec, truth) in &recs {
        ctx.stamp.write_text(&file(&rec.id, ".jsonl"), |w| write_jsonl(rec, w))?;
        ctx.stamp.write_json(
            &file(&rec.id, META_SUFFIX),
            vec![
                ("id", json!(rec.id)),
                ("trial", json!(rec.trial)),
                ("nominal_rate", json!(rec.nominal_rate)),
                ("labels", to_value(&rec.labels)),
            ],
        )?;
        ctx.stamp.write_json(&file(&rec.id, ".truth.json"), vec![("truth", to_value(truth))])?;
    }
    let coupled: Vec<String> = match (Knob::for_feature(&spec.effect.feature), FeatureCatalog::by_name(&ctx.cfg.catalog)) {
        (Some(k), Ok(c)) => c.ids().into_iter().filter(|id| k.coupled_patterns().iter().any(|p| id.contains(p))).collect(),
        _ => Vec::new(),
    };
    ctx.stamp.write_json(
        &dir.join("manifest.json"),
        vec![
            ("spec", to_value(spec)),
            ("seed", json!(seed)),
            ("recordings", to_value(&recs.iter().map(|(r, _)| &r.id).collect::<Vec<_>>())),
            ("coupled_features", to_value(&coupled)),
        ],
    )
}

/// detect, features, train, explain and stats in order. Stops after
/// detection when every recording fails the tracking gate.
pub fn pipeline(ctx: &Ctx) -> Result<Vec<String>, CliError> {
    let batch = process(ctx)?;
    detect(ctx, &batch)?;
    if !batch.any_passed() {
        return Ok(batch.excluded());
    }
    features(ctx, &batch)?;
    train(ctx)?;
    explain(ctx)?;
    stats(ctx)?;
    Ok(batch.excluded())
}

pub fn out_dir(flag: Option<PathBuf>, config: Option<PathBuf>) -> PathBuf {
    flag.or(config).unwrap_or_else(|| Path::new("gazelab-out").to_path_buf())
}
