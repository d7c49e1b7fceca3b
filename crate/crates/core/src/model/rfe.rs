//! Recursive feature elimination driven by mean |SHAP| on held-out groups.
//!
//! The matrix is split once into grouped training and validation parts. Each
//! step trains on the surviving features, scores F1 on the validation rows and
//! drops the feature with the smallest mean absolute attribution there. The
//! test partition of an outer evaluation never enters this loop.

use serde::{Deserialize, Serialize};

use super::split::{grouped_stratified_split, SplitSpec};
use super::{FittedModel, ModelSpec};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, NormMethod};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfeProtocol {
    pub validation_ratio: f64,
    pub seed: u64,
    pub normalization: Option<NormMethod>,
}

impl Default for RfeProtocol {
    fn default() -> Self {
        RfeProtocol { validation_ratio: 0.2, seed: 0, normalization: Some(NormMethod::MaxAbs) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeStep {
    pub n_features: usize,
    pub features: Vec<String>,
    /// Validation F1 with these features.
    pub score: f64,
    /// Mean |SHAP| per surviving feature (empty on the last step).
    pub importance: Vec<f64>,
    pub dropped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    pub steps: Vec<RfeStep>,
    /// Index into `steps` of the best score; ties go to the smaller set.
    pub best: usize,
    pub best_features: Vec<String>,
    pub train_groups: Vec<String>,
    pub validation_groups: Vec<String>,
}

impl RfeResult {
    /// `(n_features, score)` pairs in elimination order.
    pub fn curve(&self) -> Vec<(usize, f64)> {
        self.steps.iter().map(|s| (s.n_features, s.score)).collect()
    }
}

/// Mean |φ| per feature over `rows`.
pub fn mean_abs_shap(fitted: &FittedModel, matrix: &FeatureMatrix, rows: &[usize]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; matrix.width()];
    for &i in rows {
        let (_, phi) = fitted.model.shap(&fitted.transform(&matrix.rows[i].values))?;
        for (a, p) in acc.iter_mut().zip(phi) {
            *a += p.abs();
        }
    }
    let n = rows.len().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

pub fn shap_rfe(matrix: &FeatureMatrix, spec: &ModelSpec, protocol: &RfeProtocol) -> Result<RfeResult> {
    if matrix.width() < 2 {
        return Err(Error::invalid("feature elimination needs at least two features"));
    }
    let groups = matrix.groups();
    let plan = grouped_stratified_split(
        &groups,
        &matrix.labels(),
        SplitSpec::Holdout(protocol.validation_ratio),
        protocol.seed,
    )?;
    let fold = &plan.folds[0];
    let mut active: Vec<usize> = (0..matrix.width()).collect();
    let mut steps = Vec::with_capacity(active.len());
    while !active.is_empty() {
        let sub = matrix.select_columns(&active);
        let seed = rng::derive(protocol.seed, steps.len() as u64);
        let fitted = FittedModel::fit(&sub, &fold.train_rows, spec, protocol.normalization, seed)?;
        let (_, m) = fitted.evaluate_rows(&sub, &fold.test_rows);
        let features: Vec<String> = sub.columns.clone();
        if active.len() == 1 {
            steps.push(RfeStep { n_features: 1, features, score: m.f1, importance: Vec::new(), dropped: None });
            break;
        }
        let importance = mean_abs_shap(&fitted, &sub, &fold.test_rows)?;
        let k = (0..importance.len()).fold(0, |best, j| if importance[j] < importance[best] { j } else { best });
        let dropped = sub.columns[k].clone();
        steps.push(RfeStep { n_features: active.len(), features, score: m.f1, importance, dropped: Some(dropped) });
        active.remove(k);
    }
    let best = (0..steps.len()).fold(0, |b, i| if steps[i].score >= steps[b].score { i } else { b });
    Ok(RfeResult {
        best_features: steps[best].features.clone(),
        best,
        steps,
        train_groups: fold.train_groups.clone(),
        validation_groups: fold.test_groups.clone(),
    })
}
