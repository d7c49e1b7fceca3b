//! Pupil diameter cleaning: Savitzky-Golay smoothing, divisive baseline
//! correction and blink detection from pupillometry noise.
//!
//! Blinks are found on the raw fused series (missing runs extended over the
//! steep diameter transients that flank them). The cleaned series masks blink
//! spans, smooths, then divides by the leading-window baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recording::{missing_runs, Recording};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PupilSeries {
    /// Recording the series came from; named in errors.
    pub source: String,
    pub t: Vec<f64>,
    /// Diameter in mm, or dimensionless once normalized. `NaN` where missing.
    pub value: Vec<f64>,
    pub missing: Vec<bool>,
    /// Divisor applied by baseline correction; present iff normalized.
    pub baseline: Option<f64>,
}

impl PupilSeries {
    /// Per-frame fusion: mean of the valid eyes, or the single valid eye.
    pub fn from_recording(rec: &Recording) -> PupilSeries {
        let mut t = Vec::with_capacity(rec.frames.len());
        let mut value = Vec::with_capacity(rec.frames.len());
        let mut missing = Vec::with_capacity(rec.frames.len());
        for f in &rec.frames {
            t.push(f.t_ms);
            match f.fused_pupil() {
                Some(v) => {
                    value.push(v);
                    missing.push(false);
                }
                None => {
                    value.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
        PupilSeries { source: rec.id.clone(), t, value, missing, baseline: None }
    }

    pub fn from_values(source: &str, t: Vec<f64>, value: Vec<Option<f64>>) -> PupilSeries {
        let missing: Vec<bool> = value.iter().map(|v| !matches!(v, Some(x) if *x > 0.0 && x.is_finite())).collect();
        let value = value
            .into_iter()
            .zip(&missing)
            .map(|(v, &m)| if m { f64::NAN } else { v.unwrap() })
            .collect();
        PupilSeries { source: source.to_string(), t, value, missing, baseline: None }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.baseline.is_some()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        (!self.missing[i]).then(|| self.value[i])
    }

    /// Median sampling interval in ms.
    pub fn period_ms(&self) -> f64 {
        let mut dts: Vec<f64> = self.t.windows(2).map(|w| w[1] - w[0]).collect();
        if dts.is_empty() {
            return 1.0;
        }
        dts.sort_by(f64::total_cmp);
        dts[dts.len() / 2]
    }

    /// Undo baseline correction.
    pub fn denormalized(&self) -> PupilSeries {
        let mut out = self.clone();
        if let Some(b) = self.baseline {
            for (v, &m) in out.value.iter_mut().zip(&self.missing) {
                if !m {
                    *v *= b;
                }
            }
            out.baseline = None;
        }
        out
    }

    /// Mark samples inside `[onset, offset)` spans as missing.
    pub fn masked(&self, spans: &[(f64, f64)]) -> PupilSeries {
        let mut out = self.clone();
        for &(a, b) in spans {
            for i in 0..out.len() {
                if out.t[i] >= a && out.t[i] < b {
                    out.missing[i] = true;
                    out.value[i] = f64::NAN;
                }
            }
        }
        out
    }
}

/// Least-squares polynomial of `degree` through `(xs, ys)`, evaluated at 0.
///
/// Householder QR on the Vandermonde matrix; `xs` should be scaled to about
/// unit magnitude by the caller.
pub(crate) fn polyfit_at_zero(xs: &[f64], ys: &[f64], degree: usize) -> f64 {
    let m = xs.len();
    let n = degree + 1;
    debug_assert!(m >= n);
    // Column-major Vandermonde.
    let mut a = vec![0.0; m * n];
    for (r, &x) in xs.iter().enumerate() {
        let mut p = 1.0;
        for c in 0..n {
            a[c * m + r] = p;
            p *= x;
        }
    }
    let mut b = ys.to_vec();
    for k in 0..n {
        let col = &mut a[k * m..(k + 1) * m];
        let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = col[k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for c in k..n {
            let colc = &mut a[c * m..(c + 1) * m];
            let dot: f64 = v.iter().zip(&colc[k..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                colc[k + i] -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(x, y)| x * y).sum();
        let f = 2.0 * dot / vnorm2;
        for (i, vi) in v.iter().enumerate() {
            b[k + i] -= f * vi;
        }
    }
    // Back substitution on the upper-triangular R.
    let mut coef = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for c in k + 1..n {
            s -= a[c * m + k] * coef[c];
        }
        let d = a[k * m + k];
        coef[k] = if d == 0.0 { 0.0 } else { s / d };
    }
    coef[0]
}

/// Savitzky-Golay smoothing over a centered window of `window_len` samples.
///
/// Each valid sample becomes the value at its own position of the
/// least-squares polynomial of degree `poly_order` fit to the valid samples of
/// its window, using actual timestamps as abscissae. Windows are clipped at the
/// series ends. A sample whose window holds fewer than `poly_order + 2` valid
/// points passes through unchanged.
pub fn savitzky_golay(series: &PupilSeries, window_len: usize, poly_order: usize) -> Result<PupilSeries> {
    if window_len % 2 == 0 {
        return Err(Error::invalid(format!("Savitzky-Golay window must be odd, got {window_len}")));
    }
    if poly_order + 2 > window_len {
        return Err(Error::invalid(format!(
            "Savitzky-Golay order {poly_order} needs a window of at least {} samples, got {window_len}",
            poly_order + 2
        )));
    }
    let half = window_len / 2;
    let n = series.len();
    let mut out = series.clone();
    let mut xs = Vec::with_capacity(window_len);
    let mut ys = Vec::with_capacity(window_len);
    for i in 0..n {
        if series.missing[i] {
            continue;
        }
        xs.clear();
        ys.clear();
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let mut scale = 0.0f64;
        for j in lo..=hi {
            if !series.missing[j] {
                let dx = series.t[j] - series.t[i];
                scale = scale.max(dx.abs());
                xs.push(dx);
                ys.push(series.value[j]);
            }
        }
        if xs.len() < poly_order + 2 {
            continue;
        }
        if scale > 0.0 {
            xs.iter_mut().for_each(|x| *x /= scale);
        }
        out.value[i] = polyfit_at_zero(&xs, &ys, poly_order);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BaselineEstimator {
    #[default]
    Median,
    Mean,
}

pub const DEFAULT_BASELINE_WINDOW_MS: f64 = 1000.0;

/// Divide the series by the baseline of its leading `baseline_window_ms`.
pub fn baseline_correct_divisive(
    series: &PupilSeries,
    baseline_window_ms: f64,
    estimator: BaselineEstimator,
) -> Result<PupilSeries> {
    let anchor = series.t.first().copied().unwrap_or(0.0);
    baseline_correct_from(series, anchor, baseline_window_ms, estimator)
}

/// Baseline correction with the baseline window starting at `anchor_ms`,
/// for per-phase normalization inside a longer recording.
pub fn baseline_correct_from(
    series: &PupilSeries,
    anchor_ms: f64,
    baseline_window_ms: f64,
    estimator: BaselineEstimator,
) -> Result<PupilSeries> {
    if series.is_normalized() {
        return Err(Error::invalid(format!("pupil series of `{}` is already normalized", series.source)));
    }
    if !(baseline_window_ms > 0.0) {
        return Err(Error::invalid(format!("baseline window must be positive, got {baseline_window_ms}")));
    }
    let mut vals: Vec<f64> = (0..series.len())
        .filter(|&i| {
            let dt = series.t[i] - anchor_ms;
            !series.missing[i] && dt >= 0.0 && dt < baseline_window_ms
        })
        .map(|i| series.value[i])
        .collect();
    if vals.is_empty() {
        return Err(Error::EmptyBaseline { recording: series.source.clone(), window_ms: baseline_window_ms });
    }
    let baseline = match estimator {
        // Offsets from the first value keep a constant window exact.
        BaselineEstimator::Mean => vals[0] + vals.iter().map(|v| v - vals[0]).sum::<f64>() / vals.len() as f64,
        BaselineEstimator::Median => {
            vals.sort_by(f64::total_cmp);
            let k = vals.len();
            if k % 2 == 1 { vals[k / 2] } else { 0.5 * (vals[k / 2 - 1] + vals[k / 2]) }
        }
    };
    let mut out = series.clone();
    for (v, &m) in out.value.iter_mut().zip(&series.missing) {
        if !m {
            *v /= baseline;
        }
    }
    out.baseline = Some(baseline);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blink {
    pub onset_ms: f64,
    pub offset_ms: f64,
    pub duration_ms: f64,
    /// Time covered by fully missing samples.
    pub core_gap_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlinkConfig {
    pub min_core_ms: f64,
    /// Diameter slope (mm/s) above which flanking samples belong to the blink.
    pub slope_threshold: f64,
    pub merge_gap_ms: f64,
    pub min_dur_ms: f64,
    pub max_dur_ms: f64,
}

impl Default for BlinkConfig {
    fn default() -> Self {
        BlinkConfig { min_core_ms: 30.0, slope_threshold: 4.0, merge_gap_ms: 50.0, min_dur_ms: 50.0, max_dur_ms: 600.0 }
    }
}

/// Blinks from a raw (un-smoothed) series.
///
/// Each interior missing run of at least `min_core_ms` is a candidate. Its
/// onset moves back over every sample reached by a steeper-than-threshold
/// diameter slope, and its offset forward likewise. Candidates closer than
/// `merge_gap_ms` merge; the result is filtered to the duration bounds.
/// Offsets are exclusive: the timestamp of the first sample after the blink.
pub fn detect_blinks(raw: &PupilSeries, cfg: &BlinkConfig) -> Vec<Blink> {
    let n = raw.len();
    if n < 3 {
        return Vec::new();
    }
    let period = raw.period_ms();
    let slope = |a: usize, b: usize| {
        let dt = (raw.t[b] - raw.t[a]) / 1000.0;
        if dt <= 0.0 {
            f64::INFINITY
        } else {
            ((raw.value[b] - raw.value[a]) / dt).abs()
        }
    };
    let mut candidates: Vec<Blink> = Vec::new();
    for (s, e) in missing_runs(n, |i| raw.missing[i]) {
        if s == 0 || e == n {
            continue;
        }
        let core = raw.t[e] - raw.t[s];
        if core + 1e-9 < cfg.min_core_ms {
            continue;
        }
        let mut first = s;
        while first >= 2 && !raw.missing[first - 1] && !raw.missing[first - 2] && slope(first - 2, first - 1) > cfg.slope_threshold {
            first -= 1;
        }
        let mut last = e - 1;
        while last + 2 < n && !raw.missing[last + 1] && !raw.missing[last + 2] && slope(last + 1, last + 2) > cfg.slope_threshold {
            last += 1;
        }
        let offset = if last + 1 < n { raw.t[last + 1] } else { raw.t[last] + period };
        let onset = raw.t[first];
        candidates.push(Blink { onset_ms: onset, offset_ms: offset, duration_ms: offset - onset, core_gap_ms: core });
    }
    let mut merged: Vec<Blink> = Vec::new();
    for b in candidates {
        match merged.last_mut() {
            Some(prev) if b.onset_ms - prev.offset_ms < cfg.merge_gap_ms => {
                prev.offset_ms = prev.offset_ms.max(b.offset_ms);
                prev.onset_ms = prev.onset_ms.min(b.onset_ms);
                prev.duration_ms = prev.offset_ms - prev.onset_ms;
                prev.core_gap_ms += b.core_gap_ms;
            }
            _ => merged.push(b),
        }
    }
    merged
        .into_iter()
        .filter(|b| b.duration_ms >= cfg.min_dur_ms - 1e-9 && b.duration_ms <= cfg.max_dur_ms + 1e-9)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PupilConfig {
    pub sg_window: usize,
    pub sg_order: usize,
    pub baseline_window_ms: f64,
    pub estimator: BaselineEstimator,
    pub blink: BlinkConfig,
    /// Baseline window start; `None` means the first sample.
    pub baseline_anchor_ms: Option<f64>,
}

impl Default for PupilConfig {
    fn default() -> Self {
        PupilConfig {
            sg_window: 11,
            sg_order: 3,
            baseline_window_ms: DEFAULT_BASELINE_WINDOW_MS,
            estimator: BaselineEstimator::Median,
            blink: BlinkConfig::default(),
            baseline_anchor_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PupilProducts {
    pub raw: PupilSeries,
    pub blinks: Vec<Blink>,
    /// Blink-masked, smoothed, baseline-normalized.
    pub clean: PupilSeries,
}

pub fn preprocess(rec: &Recording, cfg: &PupilConfig) -> Result<PupilProducts> {
    let raw = PupilSeries::from_recording(rec);
    let blinks = detect_blinks(&raw, &cfg.blink);
    let spans: Vec<(f64, f64)> = blinks.iter().map(|b| (b.onset_ms, b.offset_ms)).collect();
    let smoothed = savitzky_golay(&raw.masked(&spans), cfg.sg_window, cfg.sg_order)?;
    let anchor = cfg.baseline_anchor_ms.unwrap_or_else(|| raw.t.first().copied().unwrap_or(0.0));
    let clean = baseline_correct_from(&smoothed, anchor, cfg.baseline_window_ms, cfg.estimator)?;
    Ok(PupilProducts { raw, blinks, clean })
}

/// `t_ms, value, missing`; the value cell is empty where missing.
pub fn write_pupil_csv<W: std::io::Write>(series: &PupilSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_ms", "value", "missing"])?;
    for i in 0..series.len() {
        let v = if series.missing[i] { String::new() } else { series.value[i].to_string() };
        w.write_record([series.t[i].to_string(), v, series.missing[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> PupilSeries {
        let t = (0..values.len()).map(|i| i as f64).collect();
        PupilSeries::from_values("s", t, values.iter().map(|&v| Some(v)).collect())
    }

    fn at_rate(values: Vec<Option<f64>>, rate: f64) -> PupilSeries {
        let t = (0..values.len()).map(|i| i as f64 * 1000.0 / rate).collect();
        PupilSeries::from_values("s", t, values)
    }

    #[test]
    fn sg_keeps_constants() {
        let s = series(&[2.0; 20]);
        let out = savitzky_golay(&s, 5, 2).unwrap();
        assert!(out.value.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn sg_reproduces_quadratic() {
        let vals: Vec<f64> = (0..30).map(|i| (i * i) as f64).collect();
        let out = savitzky_golay(&series(&vals), 7, 2).unwrap();
        for i in 3..27 {
            assert!((out.value[i] - vals[i]).abs() <= 1e-9 * vals[i].max(1.0), "i={i}");
        }
    }

    #[test]
    fn sg_parameter_errors() {
        let s = series(&[1.0; 10]);
        assert!(savitzky_golay(&s, 6, 2).is_err());
        assert!(savitzky_golay(&s, 5, 5).is_err());
        assert!(savitzky_golay(&s, 5, 4).is_err());
    }

    #[test]
    fn sg_skips_missing_samples() {
        let mut vals: Vec<Option<f64>> = (0..21).map(|i| Some(1.0 + 0.1 * i as f64)).collect();
        vals[10] = None;
        let s = PupilSeries::from_values("s", (0..21).map(|i| i as f64).collect(), vals);
        let out = savitzky_golay(&s, 7, 2).unwrap();
        assert!(out.missing[10] && out.value[10].is_nan());
        assert!((out.value[9] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn baseline_constant_maps_to_one() {
        let out = baseline_correct_divisive(&series(&[3.0; 50]), 10.0, BaselineEstimator::Median).unwrap();
        assert!(out.value.iter().all(|&v| v == 1.0));
        assert_eq!(out.baseline, Some(3.0));
    }

    #[test]
    fn baseline_median_arithmetic() {
        let out = baseline_correct_divisive(&series(&[3.0, 3.0, 3.0, 6.0]), 3.0, BaselineEstimator::Median).unwrap();
        assert_eq!(out.value, vec![1.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn empty_baseline_names_recording() {
        let s = PupilSeries::from_values("p07", vec![0.0, 1.0, 2.0], vec![None, None, Some(3.0)]);
        let err = baseline_correct_divisive(&s, 2.0, BaselineEstimator::Mean).unwrap_err();
        assert!(err.to_string().contains("p07"));
    }

    #[test]
    fn denormalize_round_trip() {
        let vals: Vec<f64> = (0..40).map(|i| 2.5 + (i as f64 * 0.37).sin()).collect();
        let s = series(&vals);
        let back = baseline_correct_divisive(&s, 7.0, BaselineEstimator::Mean).unwrap().denormalized();
        for (a, b) in back.value.iter().zip(&vals) {
            assert!(((a - b) / b).abs() <= 1e-12);
        }
    }

    #[test]
    fn slowly_varying_series_has_no_blinks() {
        let vals: Vec<Option<f64>> = (0..600).map(|i| Some(3.0 + 0.2 * (i as f64 / 200.0).sin())).collect();
        assert!(detect_blinks(&at_rate(vals, 120.0), &BlinkConfig::default()).is_empty());
    }

    #[test]
    fn empty_series_has_no_blinks() {
        assert!(detect_blinks(&at_rate(vec![], 120.0), &BlinkConfig::default()).is_empty());
    }

    /// Core of `core` samples flanked by `ramp` samples that drop `depth` mm linearly.
    fn planted(pre: usize, ramp: usize, core: usize, post: usize, depth: f64) -> Vec<Option<f64>> {
        let base = 3.0;
        let mut v = vec![Some(base); pre];
        v.extend((1..=ramp).map(|j| Some(base - depth * j as f64 / ramp as f64)));
        v.extend(std::iter::repeat(None).take(core));
        v.extend((1..=ramp).map(|j| Some(base - depth * (ramp - j + 1) as f64 / ramp as f64)));
        v.extend(std::iter::repeat(Some(base)).take(post));
        v
    }

    #[test]
    fn ramped_blink_covers_core_and_ramps() {
        // 150 ms core, 25 ms ramps at 120 Hz.
        let s = at_rate(planted(120, 3, 18, 120, 1.5), 120.0);
        let blinks = detect_blinks(&s, &BlinkConfig::default());
        assert_eq!(blinks.len(), 1);
        let b = blinks[0];
        let period = 1000.0 / 120.0;
        assert!((b.onset_ms - 120.0 * period).abs() < 1e-9);
        assert!((b.duration_ms - 200.0).abs() <= period);
        assert!((b.core_gap_ms - 150.0).abs() < 1e-9);
    }

    #[test]
    fn close_cores_merge() {
        let mut v = vec![Some(3.0); 100];
        v.extend(std::iter::repeat(None).take(10)); // ~80 ms
        v.extend(std::iter::repeat(Some(3.0)).take(4)); // ~30 ms
        v.extend(std::iter::repeat(None).take(10));
        v.extend(std::iter::repeat(Some(3.0)).take(100));
        let blinks = detect_blinks(&at_rate(v, 120.0), &BlinkConfig::default());
        assert_eq!(blinks.len(), 1);
    }

    #[test]
    fn scaling_invariance() {
        let s = at_rate(planted(60, 3, 20, 60, 1.2), 120.0);
        let cfg = BlinkConfig::default();
        let a = detect_blinks(&s, &cfg);
        let mut scaled = s.clone();
        scaled.value.iter_mut().for_each(|v| *v *= 2.5);
        let b = detect_blinks(&scaled, &BlinkConfig { slope_threshold: cfg.slope_threshold * 2.5, ..cfg });
        assert_eq!(a, b);
    }
}
