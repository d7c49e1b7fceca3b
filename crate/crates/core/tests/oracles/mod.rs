//! Independent recomputations used by the integration and acceptance tests.
//!
//! Nothing here calls the routine it checks; each oracle re-derives the
//! quantity the slow, obvious way.

#![allow(dead_code)]

use std::collections::BTreeSet;

use gazelab_core::aoi::Epoch;
use gazelab_core::events::{EventStream, HeadState};
use gazelab_core::model::Tree;
use gazelab_core::pupil::PupilSeries;
use gazelab_core::recording::{ClickEvent, Recording};
use gazelab_core::stats::Tails;
use rand::Rng;

// ---------------------------------------------------------------- Shapley

/// Path-dependent conditional expectation: features outside `mask` follow
/// both children weighted by training cover.
pub fn tree_expectation(tree: &Tree, x: &[f64], mask: u32) -> f64 {
    fn go(tree: &Tree, node: usize, x: &[f64], mask: u32) -> f64 {
        let n = &tree.nodes[node];
        match n.feature {
            None => n.value,
            Some(f) if mask & (1 << f) != 0 => {
                go(tree, if x[f] <= n.threshold { n.left } else { n.right }, x, mask)
            }
            Some(_) => {
                let (l, r) = (&tree.nodes[n.left], &tree.nodes[n.right]);
                (l.cover * go(tree, n.left, x, mask) + r.cover * go(tree, n.right, x, mask)) / (l.cover + r.cover)
            }
        }
    }
    go(tree, 0, x, mask)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Shapley values by enumerating every coalition.
pub fn shapley_brute(tree: &Tree, x: &[f64]) -> Vec<f64> {
    let m = tree.n_features;
    let v: Vec<f64> = (0..1u32 << m).map(|s| tree_expectation(tree, x, s)).collect();
    (0..m)
        .map(|i| {
            let mut phi = 0.0;
            for s in 0..1u32 << m {
                if s & (1 << i) != 0 {
                    continue;
                }
                let k = s.count_ones() as usize;
                let w = factorial(k) * factorial(m - k - 1) / factorial(m);
                phi += w * (v[(s | (1 << i)) as usize] - v[s as usize]);
            }
            phi
        })
        .collect()
}

// ---------------------------------------------------------------- Savitzky-Golay

/// Least-squares polynomial value at `x = 0` by solving the normal equations
/// with Gauss-Jordan elimination.
pub fn normal_equations_at_zero(xs: &[f64], ys: &[f64], order: usize) -> f64 {
    let n = order + 1;
    let mut a = vec![vec![0.0; n + 1]; n];
    for (&x, &y) in xs.iter().zip(ys) {
        let pw: Vec<f64> = (0..2 * n).map(|k| x.powi(k as i32)).collect();
        for r in 0..n {
            for c in 0..n {
                a[r][c] += pw[r + c];
            }
            a[r][n] += pw[r] * y;
        }
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for c in col..=n {
            a[col][c] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    a[0][n]
}

/// Smoothed series with clipped windows, for a series without gaps.
pub fn sg_oracle(t: &[f64], y: &[f64], window: usize, order: usize) -> Vec<f64> {
    let half = window / 2;
    (0..t.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(t.len() - 1);
            let span = (lo..=hi).map(|j| (t[j] - t[i]).abs()).fold(0.0, f64::max);
            let xs: Vec<f64> = (lo..=hi).map(|j| (t[j] - t[i]) / span).collect();
            normal_equations_at_zero(&xs, &y[lo..=hi], order)
        })
        .collect()
}

// ---------------------------------------------------------------- rank statistics

/// Doubled midrank of each value: 2·(values below) + (ties incl. itself) + 1.
pub fn doubled_midranks(v: &[f64]) -> Vec<i64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as i64;
            let equal = v.iter().filter(|&&y| y == x).count() as i64;
            2 * below + equal + 1
        })
        .collect()
}

fn in_tail(stat: i64, observed: i64, mean2: i64, tails: Tails) -> bool {
    match tails {
        Tails::Two => (2 * stat - mean2).abs() >= (2 * observed - mean2).abs(),
        Tails::Greater => stat >= observed,
        Tails::Less => stat <= observed,
    }
}

/// Exact Mann-Whitney p as `(count, total)` over all ways to pick the first sample.
pub fn mann_whitney_brute(a: &[f64], b: &[f64], tails: Tails) -> (u64, u64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = doubled_midranks(&pooled);
    let (n1, n) = (a.len(), pooled.len());
    let observed: i64 = r[..n1].iter().sum();
    let mean2 = n1 as i64 * (n as i64 + 1) * 2;
    let (mut count, mut total) = (0, 0);
    for mask in 0u32..1 << n {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let s: i64 = (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| r[i]).sum();
        total += 1;
        count += u64::from(in_tail(s, observed, mean2, tails));
    }
    (count, total)
}

/// Exact Wilcoxon p over all sign flips of the nonzero differences.
pub fn wilcoxon_brute(a: &[f64], b: &[f64], tails: Tails) -> (u64, u64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&v| v != 0.0).collect();
    let r = doubled_midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let observed: i64 = r.iter().zip(&d).filter(|(_, &v)| v > 0.0).map(|(r, _)| r).sum();
    let all: i64 = r.iter().sum();
    let (mut count, mut total) = (0, 0);
    for mask in 0u32..1 << d.len() {
        let s: i64 = (0..d.len()).filter(|&i| mask & (1 << i) != 0).map(|i| r[i]).sum();
        total += 1;
        count += u64::from(in_tail(s, observed, all, tails));
    }
    (count, total)
}

/// Exact Kruskal-Wallis p over every assignment of observations to groups of
/// the observed sizes; the statistic is compared as the integer
/// Σ R2ᵍ² · Π nₕ / nᵍ, which orders assignments exactly as H does.
pub fn kruskal_brute(groups: &[&[f64]]) -> (u64, u64) {
    let sizes: Vec<usize> = groups.iter().map(|g| g.len()).collect();
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let r = doubled_midranks(&pooled);
    let prod: i128 = sizes.iter().map(|&s| s as i128).product();
    let stat = |sums: &[i64]| -> i128 {
        sums.iter().zip(&sizes).map(|(&s, &n)| (s as i128).pow(2) * (prod / n as i128)).sum()
    };
    let mut sums = vec![0i64; sizes.len()];
    let mut offset = 0;
    for (g, &n) in sizes.iter().enumerate() {
        sums[g] = r[offset..offset + n].iter().sum();
        offset += n;
    }
    let observed = stat(&sums);
    fn go(i: usize, r: &[i64], left: &mut [usize], sums: &mut [i64], visit: &mut dyn FnMut(&[i64])) {
        if i == r.len() {
            visit(sums);
            return;
        }
        for g in 0..left.len() {
            if left[g] > 0 {
                left[g] -= 1;
                sums[g] += r[i];
                go(i + 1, r, left, sums, visit);
                sums[g] -= r[i];
                left[g] += 1;
            }
        }
    }
    let (mut count, mut total) = (0u64, 0u64);
    let mut left = sizes.clone();
    let mut zero = vec![0i64; sizes.len()];
    go(0, &r, &mut left, &mut zero, &mut |s| {
        total += 1;
        count += u64::from(stat(s) >= observed);
    });
    (count, total)
}

pub fn same_fraction(a: (u64, u64), b: (u64, u64)) -> bool {
    a.0 as u128 * b.1 as u128 == b.0 as u128 * a.1 as u128
}

// ---------------------------------------------------------------- features

fn stat_of(values: &[f64], stat: &str) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    match stat {
        "mean" => sum / n,
        "sum" => sum,
        "min" => values.iter().copied().fold(f64::INFINITY, f64::min),
        "max" => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "sd" if values.len() < 2 => 0.0,
        "sd" => {
            let m = sum / n;
            (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
        }
        other => panic!("unknown statistic {other}"),
    }
}

/// Feature values by id, recomputed from the event stream, recording and
/// cleaned pupil series. Rates are per minute when `per_minute`.
pub fn straight_line_features(
    ids: &[String],
    rec: &Recording,
    ev: &EventStream,
    pupil: &PupilSeries,
    clicks: &[ClickEvent],
    w: Epoch,
    per_minute: bool,
) -> Vec<f64> {
    let inside = |t: f64| t >= w.t0_ms && t < w.t1_ms;
    let secs = (w.t1_ms - w.t0_ms) / 1000.0;
    let rate_unit = if per_minute { secs / 60.0 } else { secs };
    let fixes: Vec<_> = ev.fixations.iter().filter(|f| inside(f.onset_ms)).collect();
    let saccs: Vec<_> = ev.saccades.iter().filter(|s| inside(s.onset_ms)).collect();
    let blinks: Vec<_> = ev.blinks.iter().filter(|b| inside(b.onset_ms)).collect();
    let targets: BTreeSet<&str> = clicks.iter().filter(|c| inside(c.t_ms)).map(|c| c.target.as_str()).collect();
    let fix_where = |keep: &dyn Fn(Option<&str>) -> bool| -> Vec<f64> {
        fixes.iter().filter(|f| keep(f.aoi.as_deref())).map(|f| f.duration_ms).collect()
    };
    let list = |base: &str| -> Vec<f64> {
        match base {
            "fixation_duration" => fix_where(&|_| true),
            "peer_fixation_duration" => fix_where(&|a| a.is_some_and(|a| a.starts_with("peer"))),
            "teacher_fixation_duration" => fix_where(&|a| a.is_some_and(|a| a.starts_with("teacher"))),
            "screen_fixation_duration" => fix_where(&|a| a.is_some_and(|a| a.starts_with("screen"))),
            "aoi_fixation_duration" => fix_where(&|a| a.is_some()),
            "caoi_fixation_duration" => fix_where(&|a| a.is_some_and(|a| targets.contains(a))),
            "saccade_duration" => saccs.iter().map(|s| s.duration_ms).collect(),
            "saccade_amplitude" => saccs.iter().map(|s| s.amplitude_deg).collect(),
            "saccade_peak_velocity" => saccs.iter().map(|s| s.peak_velocity).collect(),
            "saccade_velocity" => saccs.iter().map(|s| s.mean_velocity).collect(),
            "blink_duration" => blinks.iter().map(|b| b.duration_ms).collect(),
            "pupil" => (0..pupil.t.len())
                .filter(|&i| inside(pupil.t[i]) && !pupil.missing[i])
                .map(|i| pupil.value[i])
                .collect(),
            "pupil_fixation" => fixes
                .iter()
                .flat_map(|f| f.first_sample..=f.last_sample)
                .filter(|&i| !pupil.missing[i])
                .map(|i| pupil.value[i])
                .collect(),
            other => panic!("no list for {other}"),
        }
    };
    let dwell = |prefix: &str| -> f64 {
        let mut total = 0.0;
        for (i, f) in rec.frames.iter().enumerate() {
            if inside(f.t_ms) && f.aoi.as_deref().is_some_and(|a| a.starts_with(prefix)) {
                let next = rec.frames.get(i + 1).map_or(f.t_ms + 1000.0 / rec.nominal_rate, |n| n.t_ms);
                total += next.min(w.t1_ms) - f.t_ms;
            }
        }
        total
    };
    ids.iter()
        .map(|id| {
            if let Some((base, stat)) = id.rsplit_once('_') {
                if ["mean", "min", "max", "sum", "sd"].contains(&stat) {
                    return stat_of(&list(base), stat);
                }
            }
            match id.as_str() {
                "hmd_move_rate" => {
                    ev.head_segments.iter().filter(|h| h.state == HeadState::Moving && inside(h.onset_ms)).count()
                        as f64
                        / secs
                }
                "fixation_rate" => fixes.len() as f64 / rate_unit,
                "saccade_rate" => saccs.len() as f64 / rate_unit,
                "fixation_count" => fixes.len() as f64,
                "saccade_count" => saccs.len() as f64,
                "blink_count" => blinks.len() as f64,
                "click_count" => clicks.iter().filter(|c| inside(c.t_ms)).count() as f64,
                "aoi_fixation_count" => list("aoi_fixation_duration").len() as f64,
                "caoi_fixation_count" => list("caoi_fixation_duration").len() as f64,
                "peer_fixation_count" | "teacher_fixation_count" | "screen_fixation_count" => {
                    let base = id.trim_end_matches("_count");
                    list(&format!("{base}_duration")).len() as f64
                }
                "peer_dwell" | "teacher_dwell" | "screen_dwell" => dwell(id.trim_end_matches("_dwell")),
                "fixated_peer_count" => fixes
                    .iter()
                    .filter_map(|f| f.aoi.as_deref())
                    .filter(|a| a.starts_with("peer"))
                    .collect::<BTreeSet<_>>()
                    .len() as f64,
                "sacc_fixa_ratio" => {
                    let f: f64 = list("fixation_duration").iter().sum();
                    if f > 0.0 {
                        list("saccade_duration").iter().sum::<f64>() / f
                    } else {
                        0.0
                    }
                }
                other => panic!("no oracle for feature {other}"),
            }
        })
        .collect()
}

// ---------------------------------------------------------------- event matching

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub planted: usize,
    pub detected: usize,
    pub matched: usize,
    /// Worst onset or offset error over matched pairs, in samples.
    pub worst_samples: f64,
}

impl Match {
    pub fn recall(&self) -> f64 {
        if self.planted == 0 { 1.0 } else { self.matched as f64 / self.planted as f64 }
    }

    pub fn precision(&self) -> f64 {
        if self.detected == 0 { 1.0 } else { self.matched as f64 / self.detected as f64 }
    }
}

/// Pair each planted interval with the detected interval of greatest overlap;
/// a pair counts when both boundaries sit within `tol` samples.
pub fn match_spans(planted: &[(f64, f64)], detected: &[(f64, f64)], period_ms: f64, tol: f64) -> Match {
    let mut used = vec![false; detected.len()];
    let mut matched = 0;
    let mut worst: f64 = 0.0;
    for &(a0, a1) in planted {
        let best = (0..detected.len())
            .filter(|&j| !used[j])
            .map(|j| (j, detected[j].1.min(a1) - detected[j].0.max(a0)))
            .filter(|&(_, o)| o > 0.0)
            .max_by(|x, y| x.1.total_cmp(&y.1));
        if let Some((j, _)) = best {
            let err = ((detected[j].0 - a0).abs()).max((detected[j].1 - a1).abs()) / period_ms;
            if err <= tol + 1e-9 {
                used[j] = true;
                matched += 1;
                worst = worst.max(err);
            }
        }
    }
    Match { planted: planted.len(), detected: detected.len(), matched, worst_samples: worst }
}

// ---------------------------------------------------------------- blinks

/// A pupil trace with planted blinks and the blinks a detector with default
/// settings should report, as `(onset, exclusive offset)` times.
pub struct PlantedBlinks {
    pub series: PupilSeries,
    pub expected: Vec<(f64, f64)>,
}

/// One random configuration: one to three blinks with a 50-400 ms missing
/// core, linear ramps of 0-6 samples on each side, and gaps that either
/// merge (under 50 ms) or clearly separate neighbours.
pub fn plant_blinks(r: &mut impl Rng) -> PlantedBlinks {
    let rate: f64 = [60.0, 90.0, 120.0][r.random_range(0..3)];
    let p = 1000.0 / rate;
    let base = r.random_range(2.5..5.0);
    let depth = 0.6 * base;
    let mut vals: Vec<Option<f64>> = vec![Some(base); (400.0 / p) as usize];
    // Spans in sample indices: (onset, exclusive offset).
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let n_blinks = r.random_range(1..=3);
    for b in 0..n_blinks {
        if b > 0 {
            let gap = if r.random_bool(0.4) {
                r.random_range(1..=(45.0 / p) as usize)
            } else {
                r.random_range((80.0 / p).ceil() as usize..=(300.0 / p) as usize)
            };
            vals.extend(std::iter::repeat_n(Some(base), gap));
        }
        let core = r.random_range((50.0 / p).ceil() as usize..=(if n_blinks > 1 { 200.0 } else { 400.0 } / p) as usize);
        let down = r.random_range(0..=6usize);
        let up = r.random_range(0..=6usize);
        let onset = vals.len();
        for k in 1..=down {
            vals.push(Some(base - depth * k as f64 / (down + 1) as f64));
        }
        vals.extend(std::iter::repeat_n(None, core));
        for k in (1..=up).rev() {
            vals.push(Some(base - depth * k as f64 / (up + 1) as f64));
        }
        spans.push((onset, vals.len()));
    }
    vals.extend(std::iter::repeat_n(Some(base), (400.0 / p) as usize));
    let t: Vec<f64> = (0..vals.len()).map(|k| k as f64 * p).collect();
    let mut expected: Vec<(f64, f64)> = Vec::new();
    for (a, b) in spans {
        let (a, b) = (t[a], t[b]);
        match expected.last_mut() {
            Some(prev) if a - prev.1 < 50.0 => prev.1 = b,
            _ => expected.push((a, b)),
        }
    }
    expected.retain(|(a, b)| b - a >= 50.0 && b - a <= 600.0);
    PlantedBlinks { series: PupilSeries::from_values("planted", t, vals), expected }
}

// ---------------------------------------------------------------- fixtures

use gazelab_core::events::{detect_fixations, detect_saccades, DetectionConfig};
use gazelab_core::synth::{generate_recording, random_script, EventScript, GroundTruth, Profile, TruthKind};
use gazelab_core::Vec3;

/// Fixation and saccade recovery of a zero-noise random script.
pub fn detector_case(cfg: &DetectionConfig, seed: u64) -> (Match, Match) {
    let mut r = gazelab_core::rng::rng(seed);
    let rate = [90.0, 120.0, 250.0][(seed % 3) as usize];
    let n = r.random_range(2..=12);
    let script = random_script(cfg, rate, n, &mut r);
    let (rec, truth) = generate_recording(&script, seed).expect("valid script");
    score_detection(&rec, &truth, cfg)
}

pub fn score_detection(rec: &Recording, truth: &GroundTruth, cfg: &DetectionConfig) -> (Match, Match) {
    let p = rec.sample_period_ms();
    let spans = |k: TruthKind| truth.of_kind(k).map(|e| (e.onset_ms, e.offset_ms)).collect::<Vec<_>>();
    let fix: Vec<(f64, f64)> =
        detect_fixations(rec, None, cfg).unwrap().iter().map(|f| (f.onset_ms, f.offset_ms)).collect();
    let sac: Vec<(f64, f64)> =
        detect_saccades(rec, cfg).unwrap().iter().map(|s| (s.onset_ms, s.offset_ms)).collect();
    (match_spans(&spans(TruthKind::Fixation), &fix, p, 1.0), match_spans(&spans(TruthKind::Saccade), &sac, p, 1.0))
}

/// Three 300 ms head turns at `rate` deg/s with world-stable gaze, separated
/// by fast 50 ms saccades.
pub fn head_gate_script(rate: f64) -> EventScript {
    let mut s = EventScript::new(120.0);
    for i in 0..3 {
        if i > 0 {
            let to = Vec3::from_yaw_pitch(8.0 * i as f64, 3.0);
            s = s.saccade_to(50.0, to, Profile::Constant);
        }
        s = s.head_turn(300.0, Vec3::Y, rate * 0.3);
    }
    s
}

/// Exact Kruskal-Wallis p for three groups of untied data too large to
/// enumerate, by counting rank-sum pairs `(R1, R2)` over all assignments.
pub fn kruskal3_exact_untied(groups: [&[f64]; 3]) -> f64 {
    let sizes = groups.map(<[f64]>::len);
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len();
    let rank = |x: f64| pooled.iter().filter(|&&y| y < x).count() + 1;
    assert!(pooled.iter().all(|&x| pooled.iter().filter(|&&y| y == x).count() == 1), "ties present");
    let top = |m: usize| (n - m + 1..=n).sum::<usize>();
    let (m1, m2) = (top(sizes[0]), top(sizes[1]));
    let idx = |k1: usize, k2: usize, r1: usize, r2: usize| ((k1 * (sizes[1] + 1) + k2) * (m1 + 1) + r1) * (m2 + 1) + r2;
    let mut count = vec![0u64; (sizes[0] + 1) * (sizes[1] + 1) * (m1 + 1) * (m2 + 1)];
    count[0] = 1;
    for r in 1..=n {
        for k1 in (0..=sizes[0]).rev() {
            for k2 in (0..=sizes[1]).rev() {
                for r1 in (0..=m1).rev() {
                    for r2 in (0..=m2).rev() {
                        let mut add = 0;
                        if k1 > 0 && r1 >= r {
                            add += count[idx(k1 - 1, k2, r1 - r, r2)];
                        }
                        if k2 > 0 && r2 >= r {
                            add += count[idx(k1, k2 - 1, r1, r2 - r)];
                        }
                        count[idx(k1, k2, r1, r2)] += add;
                    }
                }
            }
        }
    }
    let all = n * (n + 1) / 2;
    let l = (sizes[0] * sizes[1] * sizes[2]) as u128;
    let stat = |r1: usize, r2: usize| -> u128 {
        let r3 = all - r1 - r2;
        [(r1, 0), (r2, 1), (r3, 2)].iter().map(|&(s, g)| (s as u128).pow(2) * (l / sizes[g] as u128)).sum()
    };
    let obs_r: Vec<usize> = groups.iter().map(|g| g.iter().map(|&x| rank(x)).sum()).collect();
    let observed = stat(obs_r[0], obs_r[1]);
    let (mut hit, mut total) = (0u128, 0u128);
    for r1 in 0..=m1 {
        for r2 in 0..=m2 {
            let c = count[idx(sizes[0], sizes[1], r1, r2)] as u128;
            if c > 0 {
                total += c;
                if stat(r1, r2) >= observed {
                    hit += c;
                }
            }
        }
    }
    hit as f64 / total as f64
}

// ---------------------------------------------------------------- leakage

use gazelab_core::features::FeatureMatrix;
use gazelab_core::model::CvResult;

/// Counts every way a participant group crosses a split boundary, and every
/// split whose sides do not partition the groups they were drawn from.
fn set(v: &[String]) -> BTreeSet<&str> {
    v.iter().map(String::as_str).collect()
}

pub fn audit_cv(matrix: &FeatureMatrix, cv: &CvResult) -> usize {
    let all: BTreeSet<&str> = matrix.rows.iter().map(|r| r.group_id.as_str()).collect();
    let mut bad = 0;
    for r in &cv.repeats {
        let (tr, te) = (set(&r.outer.train_groups), set(&r.outer.test_groups));
        bad += tr.intersection(&te).count();
        bad += usize::from(tr.union(&te).copied().collect::<BTreeSet<_>>() != all);
        let mut seen_as_test = BTreeSet::new();
        for f in &r.inner {
            let (itr, ite) = (set(&f.train_groups), set(&f.test_groups));
            bad += itr.intersection(&ite).count();
            bad += itr.intersection(&te).count() + ite.intersection(&te).count();
            bad += usize::from(itr.union(&ite).copied().collect::<BTreeSet<_>>() != tr);
            for g in ite {
                bad += usize::from(!seen_as_test.insert(g));
            }
        }
        if !r.inner.is_empty() {
            bad += usize::from(seen_as_test != tr);
        }
    }
    bad
}
