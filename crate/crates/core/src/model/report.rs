//! The serialized outcome of a training run plus its CSV side files.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::cv::{CvProtocol, CvResult, MeanSd, RepeatResult};
use super::metrics::RocPoint;
use super::rfe::RfeResult;
use super::{FittedModel, ModelSpec};
use crate::error::Result;
use crate::features::FeatureMatrix;

pub const REPORT_VERSION: u32 = 1;

/// Families the original analysis compared that this toolkit does not train.
pub const OMITTED_FAMILIES: [&str; 3] = ["svm", "lightgbm", "xgboost"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub features: Vec<String>,
    pub base_value: f64,
    /// Mean |φ| per feature over `rows`.
    pub mean_abs: Vec<f64>,
    /// One attribution vector per explained row.
    pub rows: Vec<Vec<f64>>,
    pub row_groups: Vec<String>,
    /// Worst |base + Σφ − f(x)| over the explained rows.
    pub local_accuracy_max_error: f64,
}

impl ShapSummary {
    /// Attributions of `fitted` for the given matrix rows.
    pub fn explain(fitted: &FittedModel, matrix: &FeatureMatrix, rows: &[usize]) -> Result<ShapSummary> {
        let mut out = ShapSummary {
            features: matrix.columns.clone(),
            base_value: 0.0,
            mean_abs: vec![0.0; matrix.width()],
            rows: Vec::with_capacity(rows.len()),
            row_groups: Vec::with_capacity(rows.len()),
            local_accuracy_max_error: 0.0,
        };
        for &i in rows {
            let x = fitted.transform(&matrix.rows[i].values);
            let (base, phi) = fitted.model.shap(&x)?;
            out.base_value = base;
            let err = (base + phi.iter().sum::<f64>() - fitted.model.explained_output(&x)).abs();
            out.local_accuracy_max_error = out.local_accuracy_max_error.max(err);
            for (m, p) in out.mean_abs.iter_mut().zip(&phi) {
                *m += p.abs();
            }
            out.rows.push(phi);
            out.row_groups.push(matrix.rows[i].group_id.clone());
        }
        let n = rows.len().max(1) as f64;
        out.mean_abs.iter_mut().for_each(|m| *m /= n);
        Ok(out)
    }

    /// Feature names ordered by decreasing mean |φ|; ties keep column order.
    pub fn ranking(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.features.len()).collect();
        idx.sort_by(|&a, &b| self.mean_abs[b].total_cmp(&self.mean_abs[a]));
        idx.into_iter().map(|i| self.features[i].as_str()).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["group_id".to_string()];
        header.extend(self.features.iter().cloned());
        w.write_record(&header)?;
        for (g, phi) in self.row_groups.iter().zip(&self.rows) {
            let mut rec = vec![g.clone()];
            rec.extend(phi.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_importance_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "mean_abs_shap"])?;
        for name in self.ranking() {
            let j = self.features.iter().position(|f| f == name).unwrap_or(0);
            w.write_record([name.to_string(), self.mean_abs[j].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub version: u32,
    pub catalog: String,
    pub features: Vec<String>,
    pub n_rows: usize,
    pub n_groups: usize,
    pub n_positive: usize,
    pub family: String,
    pub grid: Vec<ModelSpec>,
    pub selected: ModelSpec,
    pub protocol: CvProtocol,
    pub metrics: std::collections::BTreeMap<String, MeanSd>,
    pub repeats: Vec<RepeatResult>,
    /// ROC of the first repeat that has both classes in its test part.
    pub roc: Option<Vec<RocPoint>>,
    pub shap: Option<ShapSummary>,
    pub rfe: Option<RfeResult>,
    pub leakage_violations: usize,
    pub notes: Vec<String>,
}

impl ModelReport {
    pub fn build(matrix: &FeatureMatrix, cv: CvResult, shap: Option<ShapSummary>, rfe: Option<RfeResult>) -> ModelReport {
        let mut groups: Vec<&str> = matrix.groups();
        groups.sort_unstable();
        groups.dedup();
        let selected = cv.grid[cv.selected].clone();
        let mut notes = vec![format!(
            "model families {} are not implemented; random_forest and logistic cover the comparison",
            OMITTED_FAMILIES.join(", ")
        )];
        for r in &cv.repeats {
            notes.extend(r.warnings.iter().map(|w| format!("repeat {}: {w}", r.repeat)));
            if r.metrics.roc_auc.is_none() {
                notes.push(format!("repeat {}: single-class test part, roc_auc absent", r.repeat));
            }
        }
        ModelReport {
            version: REPORT_VERSION,
            catalog: matrix.catalog.clone(),
            features: matrix.columns.clone(),
            n_rows: matrix.len(),
            n_groups: groups.len(),
            n_positive: matrix.rows.iter().filter(|r| r.label == 1).count(),
            family: selected.family().to_string(),
            leakage_violations: cv.leakage_violations(),
            roc: cv.repeats.iter().find_map(|r| r.roc.clone()),
            grid: cv.grid,
            selected,
            protocol: cv.protocol,
            metrics: cv.summary,
            repeats: cv.repeats,
            shap,
            rfe,
            notes,
        }
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|m| m.mean)
    }
}

/// ROC points of every repeat, long format.
pub fn write_roc_csv<W: Write>(repeats: &[RepeatResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repeat", "fpr", "tpr", "threshold"])?;
    for r in repeats {
        for p in r.roc.iter().flatten() {
            w.write_record([r.repeat.to_string(), p.fpr.to_string(), p.tpr.to_string(), p.threshold.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_rfe_csv<W: Write>(rfe: &RfeResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "n_features", "f1", "dropped", "best"])?;
    for (i, s) in rfe.steps.iter().enumerate() {
        w.write_record([
            i.to_string(),
            s.n_features.to_string(),
            s.score.to_string(),
            s.dropped.clone().unwrap_or_default(),
            u8::from(i == rfe.best).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
