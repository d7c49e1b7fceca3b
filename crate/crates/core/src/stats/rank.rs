use std::collections::{BTreeMap, HashMap};

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{
    clamp_p, midranks, normal_sf, tie_term, ExactFraction, ExactMode, Method, RankOptions, Tails, TestResult,
    EXACT_CUTOFF, KRUSKAL_EXACT_CUTOFF,
};
use crate::error::{Error, Result};

/// Exact counting needs the enumeration total to fit in u64.
const MAX_EXACT_N: usize = 62;

fn use_exact(mode: ExactMode, n: usize, cutoff: usize) -> Result<bool> {
    match mode {
        ExactMode::Auto => Ok(n <= cutoff),
        ExactMode::Never => Ok(false),
        ExactMode::Always if n > MAX_EXACT_N => {
            Err(Error::invalid(format!("exact distribution limited to {MAX_EXACT_N} observations, got {n}")))
        }
        ExactMode::Always => Ok(true),
    }
}

/// Tail count over the exact distribution of an integer statistic whose mean
/// is `centre2 / 2`.
fn tail_count(dist: &BTreeMap<i64, u64>, observed: i64, centre2: i64, tails: Tails) -> u64 {
    let dev = (2 * observed - centre2).abs();
    dist.iter()
        .filter(|(&s, _)| match tails {
            Tails::Two => (2 * s - centre2).abs() >= dev,
            Tails::Greater => s >= observed,
            Tails::Less => s <= observed,
        })
        .map(|(_, &c)| c)
        .sum()
}

fn normal_p(dev: f64, sigma: f64, tails: Tails, continuity: bool) -> f64 {
    if sigma == 0.0 {
        return 1.0;
    }
    let cc = if continuity { 0.5 } else { 0.0 };
    clamp_p(match tails {
        Tails::Two => 2.0 * normal_sf((dev.abs() - cc).max(0.0) / sigma),
        Tails::Greater => normal_sf((dev - cc) / sigma),
        Tails::Less => 1.0 - normal_sf((dev + cc) / sigma),
    })
}

/// U of sample `a`: the number of (a, b) pairs with a > b, ties counting ½.
pub fn mann_whitney_u(a: &[f64], b: &[f64], opts: &RankOptions) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("Mann-Whitney needs two non-empty samples".into()));
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks2: Vec<i64> = midranks(&pooled).iter().map(|r| (2.0 * r).round() as i64).collect();
    let s2: i64 = ranks2[..n1].iter().sum();
    let u = s2 as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mut res = TestResult {
        test: "mann_whitney_u".into(),
        statistic: u,
        p_value: 1.0,
        method: Method::NormalApprox,
        tails: opts.tails,
        sizes: vec![n1, n2],
        df: None,
        exact: None,
        continuity: false,
    };
    if use_exact(opts.exact, n, EXACT_CUTOFF)? {
        // dist[k][s]: subsets of size k with doubled rank sum s.
        let max_s: i64 = ranks2.iter().sum();
        let mut dist = vec![vec![0u64; max_s as usize + 1]; n1 + 1];
        dist[0][0] = 1;
        for &r in &ranks2 {
            for k in (1..=n1).rev() {
                for s in (r as usize..=max_s as usize).rev() {
                    let add = dist[k - 1][s - r as usize];
                    dist[k][s] += add;
                }
            }
        }
        let full: BTreeMap<i64, u64> =
            dist[n1].iter().enumerate().filter(|(_, &c)| c > 0).map(|(s, &c)| (s as i64, c)).collect();
        let total: u64 = full.values().sum();
        let count = tail_count(&full, s2, 2 * (n1 as i64) * (n as i64 + 1), opts.tails);
        res.method = Method::Exact;
        res.p_value = clamp_p(count as f64 / total as f64);
        res.exact = Some(ExactFraction { count, total });
    } else {
        let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
        let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term(&pooled) / (nf * (nf - 1.0)));
        res.continuity = opts.continuity;
        res.p_value = normal_p(u - f1 * f2 / 2.0, var.max(0.0).sqrt(), opts.tails, opts.continuity);
    }
    Ok(res)
}

/// W⁺: the rank sum of positive differences `a − b`, zero differences dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], opts: &RankOptions) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("paired samples differ in length ({} vs {})", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Empty("Wilcoxon needs at least one pair".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::Degenerate("no nonzero pairs".into()));
    }
    let n = d.len();
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let ranks2: Vec<i64> = ranks.iter().map(|r| (2.0 * r).round() as i64).collect();
    let w2: i64 = ranks2.iter().zip(&d).filter(|(_, &v)| v > 0.0).map(|(r, _)| r).sum();
    let total2: i64 = ranks2.iter().sum();
    let mut res = TestResult {
        test: "wilcoxon_signed_rank".into(),
        statistic: w2 as f64 / 2.0,
        p_value: 1.0,
        method: Method::NormalApprox,
        tails: opts.tails,
        sizes: vec![n, n],
        df: None,
        exact: None,
        continuity: false,
    };
    if use_exact(opts.exact, n, EXACT_CUTOFF)? {
        let mut dist = vec![0u64; total2 as usize + 1];
        dist[0] = 1;
        for &r in &ranks2 {
            for s in (r as usize..=total2 as usize).rev() {
                dist[s] += dist[s - r as usize];
            }
        }
        let full: BTreeMap<i64, u64> =
            dist.iter().enumerate().filter(|(_, &c)| c > 0).map(|(s, &c)| (s as i64, c)).collect();
        let count = tail_count(&full, w2, total2, opts.tails);
        let total = 1u64 << n;
        res.method = Method::Exact;
        res.p_value = clamp_p(count as f64 / total as f64);
        res.exact = Some(ExactFraction { count, total });
    } else {
        let var: f64 = ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
        res.continuity = opts.continuity;
        res.p_value = normal_p((2 * w2 - total2) as f64 / 4.0, var.sqrt(), opts.tails, opts.continuity);
    }
    Ok(res)
}

/// H with tie correction. The exact distribution is enumerated over all
/// assignments of observations to groups of the given sizes.
pub fn kruskal_wallis(groups: &[&[f64]], exact: ExactMode) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::invalid("Kruskal-Wallis needs at least two groups"));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::Empty(format!("group {i} has no observations")));
    }
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len();
    let nf = n as f64;
    let ranks = midranks(&pooled);
    let correction = 1.0 - tie_term(&pooled) / (nf * nf * nf - nf);
    let mut res = TestResult {
        test: "kruskal_wallis".into(),
        statistic: 0.0,
        p_value: 1.0,
        method: Method::ChiSquare,
        tails: Tails::Two,
        sizes: sizes.clone(),
        df: Some((groups.len() - 1) as f64),
        exact: None,
        continuity: false,
    };
    let mut offset = 0;
    let mut ss = 0.0;
    for &m in &sizes {
        let r: f64 = ranks[offset..offset + m].iter().sum();
        ss += r * r / m as f64;
        offset += m;
    }
    let h_raw = 12.0 / (nf * (nf + 1.0)) * ss - 3.0 * (nf + 1.0);
    res.statistic = if correction > 0.0 { (h_raw / correction).max(0.0) } else { 0.0 };
    if correction <= 0.0 {
        return Ok(res);
    }
    if use_exact(exact, n, KRUSKAL_EXACT_CUTOFF)? {
        if n > 20 {
            return Err(Error::invalid(format!("exact Kruskal-Wallis limited to 20 observations, got {n}")));
        }
        let ranks2: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let (count, total) = kruskal_exact(&ranks2, &sizes);
        res.method = Method::Exact;
        res.df = None;
        res.p_value = clamp_p(count as f64 / total as f64);
        res.exact = Some(ExactFraction { count, total });
    } else {
        let chi = ChiSquared::new(groups.len() as f64 - 1.0).map_err(|e| Error::invalid(e.to_string()))?;
        res.p_value = clamp_p(chi.sf(res.statistic));
    }
    Ok(res)
}

/// `(count, total)` of group assignments whose Σ R²/n reaches the observed
/// value. Σ R²/n is compared as the integer Σ R2² · (L / n) with L the lcm of
/// the sizes, so equal statistics compare equal exactly.
fn kruskal_exact(ranks2: &[u64], sizes: &[usize]) -> (u64, u64) {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let l = sizes.iter().fold(1u64, |l, &m| l / gcd(l, m as u64) * m as u64);
    let n = ranks2.len();
    let mut observed = 0u128;
    let mut offset = 0;
    for &m in sizes {
        let r: u64 = ranks2[offset..offset + m].iter().sum();
        observed += (r as u128).pow(2) * (l / m as u64) as u128;
        offset += m;
    }
    // Layer g maps the mask of used observations to the distribution of the
    // partial statistic over groups 0..g.
    let mut layer: HashMap<u32, BTreeMap<u128, u64>> = HashMap::new();
    layer.insert(0, BTreeMap::from([(0u128, 1u64)]));
    for &m in sizes {
        let mut next: HashMap<u32, BTreeMap<u128, u64>> = HashMap::new();
        for (mask, dist) in &layer {
            let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
            for_each_combination(free.len(), m, &mut |pick| {
                let mut sub = 0u32;
                let mut r = 0u64;
                for &p in pick {
                    sub |= 1 << free[p];
                    r += ranks2[free[p]];
                }
                let add = (r as u128).pow(2) * (l / m as u64) as u128;
                let slot = next.entry(mask | sub).or_default();
                for (&s, &c) in dist {
                    *slot.entry(s + add).or_insert(0) += c;
                }
            });
        }
        layer = next;
    }
    let dist = layer.into_values().next().unwrap_or_default();
    let total = dist.values().sum();
    let count = dist.range(observed..).map(|(_, &c)| c).sum();
    (count, total)
}

fn for_each_combination(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
