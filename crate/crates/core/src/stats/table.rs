//! Per-feature comparison tables built from a feature matrix.
//!
//! Windows are first averaged per unit (group, or group × trial), so every
//! observation in a test is one participant or one participant-condition.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{bonferroni, kruskal_wallis, mann_whitney_u, paired_t, stars, wilcoxon_signed_rank, RankOptions, TestResult};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::summary::Summary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    MannWhitney,
    Wilcoxon,
    PairedT,
    KruskalWallis,
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mann_whitney" | "mann-whitney" => TestKind::MannWhitney,
            "wilcoxon" => TestKind::Wilcoxon,
            "paired_t" | "paired-t" => TestKind::PairedT,
            "kruskal_wallis" | "kruskal-wallis" => TestKind::KruskalWallis,
            other => return Err(Error::Unknown { kind: "test", name: other.to_string() }),
        })
    }
}

/// How observations are grouped into conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Conditions are class labels; one observation per group.
    BetweenLabel,
    /// Conditions are trial ids; one observation per group and trial,
    /// paired on group for the paired tests.
    WithinTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub feature: String,
    pub conditions: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub result: TestResult,
    pub p_adjusted: f64,
    pub stars: String,
}

/// condition → unit → mean of column `j`.
fn unit_means(matrix: &FeatureMatrix, design: Design, j: usize) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut acc: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for r in &matrix.rows {
        let cond = match design {
            Design::BetweenLabel => r.label.to_string(),
            Design::WithinTrial => r.trial_id.clone(),
        };
        let e = acc.entry(cond).or_default().entry(r.group_id.clone()).or_insert((0.0, 0));
        e.0 += r.values[j];
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(c, units)| (c, units.into_iter().map(|(u, (s, n))| (u, s / n as f64)).collect()))
        .collect()
}

fn run(kind: TestKind, conds: &BTreeMap<String, BTreeMap<String, f64>>, opts: &RankOptions) -> Result<TestResult> {
    let samples: Vec<Vec<f64>> = conds.values().map(|u| u.values().copied().collect()).collect();
    let two = || {
        if samples.len() != 2 {
            return Err(Error::invalid(format!("{kind:?} compares exactly two conditions, found {}", samples.len())));
        }
        Ok(())
    };
    match kind {
        TestKind::MannWhitney => {
            two()?;
            mann_whitney_u(&samples[0], &samples[1], opts)
        }
        TestKind::KruskalWallis => {
            let refs: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
            kruskal_wallis(&refs, opts.exact)
        }
        TestKind::Wilcoxon | TestKind::PairedT => {
            two()?;
            let a: Vec<&BTreeMap<String, f64>> = conds.values().collect();
            let (xa, xb): (Vec<f64>, Vec<f64>) =
                a[0].iter().filter_map(|(u, &v)| a[1].get(u).map(|&w| (v, w))).unzip();
            if kind == TestKind::Wilcoxon {
                wilcoxon_signed_rank(&xa, &xb, opts)
            } else {
                paired_t(&xa, &xb)
            }
        }
    }
}

/// One test per feature, Bonferroni-adjusted over the features tested.
pub fn feature_table(matrix: &FeatureMatrix, design: Design, kind: TestKind, opts: &RankOptions) -> Result<Vec<TableRow>> {
    let mut rows = Vec::with_capacity(matrix.width());
    for (j, feature) in matrix.columns.iter().enumerate() {
        let conds = unit_means(matrix, design, j);
        let result = run(kind, &conds, opts).map_err(|e| Error::invalid(format!("feature `{feature}`: {e}")))?;
        let summaries: Vec<Summary> = conds.values().map(|u| Summary::of(&u.values().copied().collect::<Vec<_>>())).collect();
        rows.push(TableRow {
            feature: feature.clone(),
            conditions: conds.keys().cloned().collect(),
            means: summaries.iter().map(|s| s.mean).collect(),
            sds: summaries.iter().map(|s| s.sd).collect(),
            result,
            p_adjusted: 0.0,
            stars: String::new(),
        });
    }
    let p: Vec<f64> = rows.iter().map(|r| r.result.p_value).collect();
    for (r, adj) in rows.iter_mut().zip(bonferroni(&p, p.len())?) {
        r.p_adjusted = adj;
        r.stars = stars(r.result.p_value).to_string();
    }
    Ok(rows)
}

/// Feature, per-condition mean and SD, statistic, p, adjusted p and stars.
pub fn write_table_csv<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let conds = rows.first().map(|r| r.conditions.clone()).unwrap_or_default();
    let mut header = vec!["feature".to_string()];
    for c in &conds {
        header.push(format!("mean_{c}"));
        header.push(format!("sd_{c}"));
    }
    header.extend(["test", "method", "statistic", "p_value", "p_bonferroni", "stars"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.feature.clone()];
        for (m, s) in r.means.iter().zip(&r.sds) {
            rec.push(m.to_string());
            rec.push(s.to_string());
        }
        rec.push(r.result.test.clone());
        rec.push(serde_json::to_value(r.result.method)?.as_str().unwrap_or_default().to_string());
        rec.push(r.result.statistic.to_string());
        rec.push(r.result.p_value.to_string());
        rec.push(r.p_adjusted.to_string());
        rec.push(r.stars.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
