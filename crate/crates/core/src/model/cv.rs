//! Repeated nested cross-validation with group-level splits at both levels.
//!
//! Each repeat holds out a grouped, stratified test part; hyperparameters are
//! chosen by mean F1 over grouped inner folds of the remaining groups, refit on
//! all of them and scored once on the test part. Normalization is always fit
//! on the rows a model trains on.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::ForestParams;
use super::logistic::LogisticParams;
use super::metrics::{roc_curve, Metrics, RocPoint};
use super::split::{group_overlap, grouped_stratified_split, SplitSpec};
use super::tree::{MaxFeatures, TreeParams};
use super::{FittedModel, ModelSpec};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, NormMethod};
use crate::rng;
use crate::summary::Summary;

/// Cartesian hyperparameter grid for one family. Empty lists take the default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_leaf: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub l2_lambda: Vec<f64>,
}

fn or_default<T: Clone>(v: &[T], d: T) -> Vec<T> {
    if v.is_empty() {
        vec![d]
    } else {
        v.to_vec()
    }
}

impl ParamGrid {
    /// Grid points in lexicographic order of the listed values.
    pub fn expand(&self, family: &str) -> Result<Vec<ModelSpec>> {
        match family {
            "random_forest" => {
                let d = ForestParams::default();
                let mut out = Vec::new();
                for &n_trees in &or_default(&self.n_trees, d.n_trees) {
                    for &max_depth in &or_default(&self.max_depth, d.tree.max_depth) {
                        for &min_samples_leaf in &or_default(&self.min_samples_leaf, d.tree.min_samples_leaf) {
                            for &max_features in &or_default(&self.max_features, d.tree.max_features) {
                                out.push(ModelSpec::RandomForest(ForestParams {
                                    n_trees,
                                    tree: TreeParams { max_depth, min_samples_leaf, max_features, ..d.tree },
                                    ..d
                                }));
                            }
                        }
                    }
                }
                Ok(out)
            }
            "logistic" => Ok(or_default(&self.l2_lambda, LogisticParams::default().l2_lambda)
                .into_iter()
                .map(|l2_lambda| ModelSpec::Logistic(LogisticParams { l2_lambda, ..Default::default() }))
                .collect()),
            other => Err(Error::Unknown { kind: "model family", name: other.to_string() }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvProtocol {
    pub inner_k: usize,
    pub outer_repeats: usize,
    pub test_ratio: f64,
    pub seed: u64,
    pub normalization: Option<NormMethod>,
}

impl Default for CvProtocol {
    fn default() -> Self {
        CvProtocol { inner_k: 5, outer_repeats: 10, test_ratio: 0.2, seed: 0, normalization: Some(NormMethod::MaxAbs) }
    }
}

impl CvProtocol {
    /// Repeat counts used by the three studies.
    pub fn default_repeats(study: &str) -> Option<usize> {
        match study {
            "classroom" => Some(10),
            "teacher" => Some(20),
            "locomotion" => Some(50),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub train_groups: Vec<String>,
    pub test_groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub point: usize,
    /// Mean inner-fold F1; absent if the point failed or selection was trivial.
    pub mean_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub outer: FoldRecord,
    pub inner: Vec<FoldRecord>,
    pub grid_scores: Vec<GridScore>,
    pub selected: usize,
    pub metrics: Metrics,
    pub roc: Option<Vec<RocPoint>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    fn of(v: &[f64]) -> MeanSd {
        let s = Summary::of(v);
        MeanSd { mean: s.mean, sd: s.sd, n: s.n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub grid: Vec<ModelSpec>,
    pub protocol: CvProtocol,
    pub repeats: Vec<RepeatResult>,
    /// Metric name to mean ± SD over repeats (AUC over repeats where it is defined).
    pub summary: BTreeMap<String, MeanSd>,
    /// Most frequently selected grid point; ties go to the lower index.
    pub selected: usize,
}

impl CvResult {
    /// Group overlaps between training and test sides, over every split at every level.
    pub fn leakage_violations(&self) -> usize {
        self.repeats
            .iter()
            .map(|r| {
                let inner: usize = r.inner.iter().map(|f| group_overlap(&f.train_groups, &f.test_groups)).sum();
                let escaped: usize = r
                    .inner
                    .iter()
                    .map(|f| group_overlap(&r.outer.test_groups, &[f.train_groups.clone(), f.test_groups.clone()].concat()))
                    .sum();
                group_overlap(&r.outer.train_groups, &r.outer.test_groups) + inner + escaped
            })
            .sum()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.get(metric).map(|m| m.mean)
    }
}

fn run_repeat(matrix: &FeatureMatrix, grid: &[ModelSpec], p: &CvProtocol, repeat: usize) -> Result<RepeatResult> {
    let seed = rng::derive(p.seed, repeat as u64);
    let model_seed = rng::derive(seed, 2);
    let groups = matrix.groups();
    let labels = matrix.labels();
    let outer = grouped_stratified_split(&groups, &labels, SplitSpec::Holdout(p.test_ratio), seed)?;
    let of = &outer.folds[0];
    let mut inner_records = Vec::new();
    let mut grid_scores: Vec<GridScore> = Vec::new();
    let selected = if grid.len() == 1 {
        grid_scores.push(GridScore { point: 0, mean_f1: None, error: None });
        0
    } else {
        let sub_groups: Vec<&str> = of.train_rows.iter().map(|&i| groups[i]).collect();
        let sub_labels: Vec<u8> = of.train_rows.iter().map(|&i| labels[i]).collect();
        let inner = grouped_stratified_split(&sub_groups, &sub_labels, SplitSpec::KFold(p.inner_k), rng::derive(seed, 1))?;
        for f in &inner.folds {
            inner_records.push(FoldRecord { train_groups: f.train_groups.clone(), test_groups: f.test_groups.clone() });
        }
        for (point, spec) in grid.iter().enumerate() {
            let mut f1s = Vec::new();
            let mut error = None;
            for f in &inner.folds {
                let train: Vec<usize> = f.train_rows.iter().map(|&i| of.train_rows[i]).collect();
                let val: Vec<usize> = f.test_rows.iter().map(|&i| of.train_rows[i]).collect();
                match FittedModel::fit(matrix, &train, spec, p.normalization, model_seed) {
                    Ok(m) => f1s.push(m.evaluate_rows(matrix, &val).1.f1),
                    Err(e) => {
                        error = Some(e.to_string());
                        break;
                    }
                }
            }
            let mean_f1 = error.is_none().then(|| f1s.iter().sum::<f64>() / f1s.len() as f64);
            grid_scores.push(GridScore { point, mean_f1, error });
        }
        let mut best: Option<(usize, f64)> = None;
        for g in &grid_scores {
            if let Some(s) = g.mean_f1 {
                if best.map_or(true, |(_, b)| s > b) {
                    best = Some((g.point, s));
                }
            }
        }
        best.ok_or_else(|| Error::Degenerate(format!("repeat {repeat}: every grid point failed to train")))?.0
    };
    let fitted = FittedModel::fit(matrix, &of.train_rows, &grid[selected], p.normalization, model_seed)?;
    let (scores, metrics) = fitted.evaluate_rows(matrix, &of.test_rows);
    let y: Vec<u8> = of.test_rows.iter().map(|&i| labels[i]).collect();
    let mut warnings: Vec<String> = grid_scores
        .iter()
        .filter_map(|g| g.error.as_ref().map(|e| format!("grid point {} skipped: {e}", g.point)))
        .collect();
    warnings.extend(fitted.model.warning().map(str::to_string));
    Ok(RepeatResult {
        repeat,
        seed,
        outer: FoldRecord { train_groups: of.train_groups.clone(), test_groups: of.test_groups.clone() },
        inner: inner_records,
        grid_scores,
        selected,
        metrics,
        roc: roc_curve(&y, &scores),
        warnings,
    })
}

pub fn nested_cv(matrix: &FeatureMatrix, grid: &[ModelSpec], protocol: &CvProtocol) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::invalid("hyperparameter grid is empty"));
    }
    if protocol.outer_repeats == 0 {
        return Err(Error::invalid("outer_repeats must be positive"));
    }
    matrix.validate()?;
    let repeats = (0..protocol.outer_repeats)
        .into_par_iter()
        .map(|r| run_repeat(matrix, grid, protocol, r))
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&Metrics) -> f64| MeanSd::of(&repeats.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let mut summary = BTreeMap::new();
    summary.insert("accuracy".to_string(), pick(|m| m.accuracy));
    summary.insert("precision".to_string(), pick(|m| m.precision));
    summary.insert("recall".to_string(), pick(|m| m.recall));
    summary.insert("f1".to_string(), pick(|m| m.f1));
    summary.insert(
        "roc_auc".to_string(),
        MeanSd::of(&repeats.iter().filter_map(|r| r.metrics.roc_auc).collect::<Vec<_>>()),
    );
    let mut votes = vec![0usize; grid.len()];
    for r in &repeats {
        votes[r.selected] += 1;
    }
    let selected = (0..grid.len()).rev().max_by_key(|&i| votes[i]).unwrap_or(0);
    Ok(CvResult { grid: grid.to_vec(), protocol: *protocol, repeats, summary, selected })
}
