//! Classifiers, grouped evaluation and attribution.
//!
//! Two families are available: random forests (explained with exact TreeSHAP
//! on the probability scale) and L2 logistic regression (explained with linear
//! SHAP on the log-odds scale, relative to the training means).

pub mod cv;
pub mod forest;
pub mod logistic;
pub mod metrics;
pub mod report;
pub mod rfe;
pub mod shap;
pub mod split;
pub mod tree;

use serde::{Deserialize, Serialize};

pub use cv::{nested_cv, CvProtocol, CvResult, ParamGrid};
pub use forest::{ForestParams, RandomForest};
pub use logistic::{LogisticModel, LogisticParams};
pub use metrics::{evaluate, Metrics, RocPoint};
pub use report::{ModelReport, ShapSummary};
pub use rfe::{shap_rfe, RfeProtocol, RfeResult};
pub use split::{grouped_stratified_split, SplitPlan, SplitSpec};
pub use tree::{MaxFeatures, Tree, TreeParams};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, NormMethod, Normalization};

/// One hyperparameter point of one model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    RandomForest(ForestParams),
    Logistic(LogisticParams),
}

impl ModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            ModelSpec::RandomForest(_) => "random_forest",
            ModelSpec::Logistic(_) => "logistic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Model {
    RandomForest(RandomForest),
    Logistic { model: LogisticModel, feature_means: Vec<f64> },
}

impl Model {
    pub fn train(spec: &ModelSpec, x: &[Vec<f64>], y: &[u8], seed: u64) -> Result<Model> {
        if y.iter().any(|&l| l > 1) {
            return Err(Error::invalid("only binary class labels 0/1 are supported"));
        }
        Ok(match spec {
            ModelSpec::RandomForest(p) => Model::RandomForest(RandomForest::train(x, y, p, seed)?),
            ModelSpec::Logistic(p) => {
                let model = LogisticModel::train(x, y, p)?;
                let d = model.weights.len();
                let mut feature_means = vec![0.0; d];
                for r in x {
                    for j in 0..d {
                        feature_means[j] += r[j];
                    }
                }
                feature_means.iter_mut().for_each(|m| *m /= x.len() as f64);
                Model::Logistic { model, feature_means }
            }
        })
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::RandomForest(f) => f.n_features(),
            Model::Logistic { model, .. } => model.weights.len(),
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        match self {
            Model::RandomForest(f) => f.predict_proba(x),
            Model::Logistic { model, .. } => model.predict_proba(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) > 0.5)
    }

    /// The quantity attributions add up to: forest probability or logistic log-odds.
    pub fn explained_output(&self, x: &[f64]) -> f64 {
        match self {
            Model::RandomForest(f) => f.predict_proba(x),
            Model::Logistic { model, .. } => model.decision(x),
        }
    }

    /// `(base, φ)` with `base + Σφ = explained_output(x)`.
    pub fn shap(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.n_features() {
            return Err(Error::WidthMismatch { expected: self.n_features(), found: x.len() });
        }
        match self {
            Model::RandomForest(f) => shap::ensemble_shap(&f.trees, x),
            Model::Logistic { model, feature_means } => {
                let base = model.decision(feature_means);
                let phi = model.weights.iter().zip(x).zip(feature_means).map(|((w, v), m)| w * (v - m)).collect();
                Ok((base, phi))
            }
        }
    }

    pub fn warning(&self) -> Option<&str> {
        match self {
            Model::Logistic { model, .. } => model.warning.as_deref(),
            Model::RandomForest(_) => None,
        }
    }
}

/// A model fit on some rows of a matrix, with the normalization fit on the same rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub model: Model,
    pub normalization: Option<Normalization>,
}

impl FittedModel {
    pub fn fit(
        matrix: &FeatureMatrix,
        train_rows: &[usize],
        spec: &ModelSpec,
        norm: Option<NormMethod>,
        seed: u64,
    ) -> Result<FittedModel> {
        let normalization = match norm {
            Some(m) => Some(Normalization::fit(
                m,
                train_rows.iter().map(|&i| matrix.rows[i].values.as_slice()),
                matrix.width(),
            )?),
            None => None,
        };
        let apply = |v: &[f64]| {
            let mut v = v.to_vec();
            if let Some(n) = &normalization {
                n.apply(&mut v);
            }
            v
        };
        let x: Vec<Vec<f64>> = train_rows.iter().map(|&i| apply(&matrix.rows[i].values)).collect();
        let y: Vec<u8> = train_rows.iter().map(|&i| matrix.rows[i].label).collect();
        Ok(FittedModel { model: Model::train(spec, &x, &y, seed)?, normalization })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut v = x.to_vec();
        if let Some(n) = &self.normalization {
            n.apply(&mut v);
        }
        v
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.model.predict_proba(&self.transform(x))
    }

    /// Scores and metrics on `rows`.
    pub fn evaluate_rows(&self, matrix: &FeatureMatrix, rows: &[usize]) -> (Vec<f64>, Metrics) {
        let scores: Vec<f64> = rows.iter().map(|&i| self.predict_proba(&matrix.rows[i].values)).collect();
        let pred: Vec<u8> = scores.iter().map(|&s| u8::from(s > 0.5)).collect();
        let y: Vec<u8> = rows.iter().map(|&i| matrix.rows[i].label).collect();
        let m = evaluate(&y, &pred, &scores);
        (scores, m)
    }
}
