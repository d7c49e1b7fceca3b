//! Rank tests with exact small-sample distributions, the paired t-test and
//! Bonferroni adjustment.
//!
//! Exact distributions are counted over doubled midranks, which are integers
//! even with ties, so exact p-values are plain fractions `count / total`.

mod rank;
mod table;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub use rank::{kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank};
pub use table::{feature_table, write_table_csv, Design, TableRow, TestKind};

/// Samples with at most this many observations (Mann-Whitney: n1 + n2;
/// Wilcoxon: nonzero pairs; Kruskal-Wallis: 12) use exact distributions.
pub const EXACT_CUTOFF: usize = 20;
pub const KRUSKAL_EXACT_CUTOFF: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tails {
    #[default]
    Two,
    /// First sample tends to be larger.
    Greater,
    /// First sample tends to be smaller.
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
    StudentT,
    ChiSquare,
}

/// Forces or forbids the exact distribution; `Auto` uses the size cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactMode {
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankOptions {
    pub tails: Tails,
    pub exact: ExactMode,
    /// ±0.5 continuity correction in the normal approximation.
    pub continuity: bool,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions { tails: Tails::Two, exact: ExactMode::Auto, continuity: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactFraction {
    pub count: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    /// U of the first sample, W⁺, t or H.
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    pub tails: Tails,
    /// Sample sizes after any dropping (Wilcoxon: nonzero pairs).
    pub sizes: Vec<usize>,
    pub df: Option<f64>,
    pub exact: Option<ExactFraction>,
    pub continuity: bool,
}

impl TestResult {
    pub fn n1(&self) -> usize {
        self.sizes.first().copied().unwrap_or(0)
    }

    pub fn n2(&self) -> usize {
        self.sizes.get(1).copied().unwrap_or(0)
    }
}

/// Midranks (1-based) of `values`; tied values share the mean of their ranks.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Σ (t³ − t) over tie blocks.
pub(crate) fn tie_term(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().take_while(|&&x| x == v[i]).count();
        total += (j as f64).powi(3) - j as f64;
        i += j;
    }
    total
}

/// Standard normal upper tail, accurate far out.
pub(crate) fn normal_sf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

pub(crate) fn clamp_p(p: f64) -> f64 {
    p.clamp(0.0, 1.0)
}

pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("paired t-test needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = crate::summary::Summary::of(&d);
    if s.sd == 0.0 {
        return Err(Error::Degenerate("paired differences have zero variance".into()));
    }
    let n = d.len() as f64;
    let t = s.mean / (s.sd / n.sqrt());
    let df = n - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(TestResult {
        test: "paired_t".into(),
        statistic: t,
        p_value: clamp_p(2.0 * dist.sf(t.abs())),
        method: Method::StudentT,
        tails: Tails::Two,
        sizes: vec![d.len(), d.len()],
        df: Some(df),
        exact: None,
        continuity: false,
    })
}

/// Each p times `m`, capped at 1.
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<f64>> {
    if m < p_values.len() {
        return Err(Error::invalid(format!("bonferroni m = {m} is smaller than the {} p-values given", p_values.len())));
    }
    Ok(p_values.iter().map(|p| (p * m as f64).min(1.0)).collect())
}

/// `****` below .0001 down to `*` below .05; empty otherwise.
pub fn stars(p: f64) -> &'static str {
    match p {
        p if p < 0.0001 => "****",
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        _ => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn t_reference_values() {
        let r = paired_t(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        let r = paired_t(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert!((r.statistic - 3.0f64.sqrt() * 2.0).abs() < 1e-12);
        // df = 2 has a closed form: p = 1 - t/√(t² + 2)
        let exact = 1.0 - r.statistic / (r.statistic.powi(2) + 2.0).sqrt();
        assert!((r.p_value - exact).abs() < 1e-10);
        assert!((r.p_value - 0.0742).abs() < 1e-4);
    }

    #[test]
    fn t_scale_invariant_and_rejects_constant() {
        let a = [1.3, 2.2, 0.4, 5.0];
        let b = [0.3, 1.0, 1.1, 2.0];
        let r1 = paired_t(&a, &b).unwrap();
        let r2 = paired_t(&a.map(|v| v * 7.5), &b.map(|v| v * 7.5)).unwrap();
        assert!((r1.statistic - r2.statistic).abs() < 1e-12 && (r1.p_value - r2.p_value).abs() < 1e-12);
        assert!(paired_t(&[2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn bonferroni_examples() {
        let p = bonferroni(&[0.01, 0.3], 2).unwrap();
        assert!((p[0] - 0.02).abs() < 1e-15 && (p[1] - 0.6).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.7], 3).unwrap(), vec![1.0]);
        assert!(bonferroni(&[0.1, 0.2], 1).is_err());
    }

    #[test]
    fn star_levels() {
        assert_eq!([stars(0.04), stars(0.005), stars(0.0005), stars(0.00001), stars(0.2)], ["*", "**", "***", "****", ""]);
    }
}
