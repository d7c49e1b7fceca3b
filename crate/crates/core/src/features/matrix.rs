//! Feature matrices, their CSV form and column normalization.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub group_id: String,
    pub trial_id: String,
    pub window_idx: usize,
    pub label: u8,
    pub values: Vec<f64>,
    /// Empty event families; exported, never fed to models.
    pub empty: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    MaxAbs,
    MinMax,
}

/// Per-column affine map `x' = (x − offset) / scale`, fit on training rows.
/// A zero scale marks a constant column, which maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub method: NormMethod,
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn fit<'a>(method: NormMethod, rows: impl IntoIterator<Item = &'a [f64]>, width: usize) -> Result<Self> {
        let mut lo = vec![f64::INFINITY; width];
        let mut hi = vec![f64::NEG_INFINITY; width];
        let mut n = 0usize;
        for r in rows {
            if r.len() != width {
                return Err(Error::WidthMismatch { expected: width, found: r.len() });
            }
            for j in 0..width {
                lo[j] = lo[j].min(r[j]);
                hi[j] = hi[j].max(r[j]);
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("normalization needs at least one fit row".into()));
        }
        let (offset, scale): (Vec<f64>, Vec<f64>) = match method {
            NormMethod::MaxAbs => (0..width).map(|j| (0.0, lo[j].abs().max(hi[j].abs()))).unzip(),
            NormMethod::MinMax => (0..width).map(|j| (lo[j], hi[j] - lo[j])).unzip(),
        };
        for (j, s) in scale.iter().enumerate() {
            if *s == 0.0 {
                log::warn!("feature column {j} is constant on the fit rows; it normalizes to 0");
            }
        }
        Ok(Normalization { method, offset, scale })
    }

    pub fn apply(&self, x: &mut [f64]) {
        for ((v, o), s) in x.iter_mut().zip(&self.offset).zip(&self.scale) {
            *v = if *s == 0.0 { 0.0 } else { (*v - o) / s };
        }
    }

    pub fn invert(&self, x: &mut [f64]) {
        for ((v, o), s) in x.iter_mut().zip(&self.offset).zip(&self.scale) {
            *v = *v * s + o;
        }
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        self.scale.iter().enumerate().filter(|(_, s)| **s == 0.0).map(|(j, _)| j).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub catalog: String,
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
    pub normalization: Option<Normalization>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn groups(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.group_id.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if r.values.len() != self.width() {
                return Err(Error::WidthMismatch { expected: self.width(), found: r.values.len() });
            }
            if r.group_id.is_empty() {
                return Err(Error::invalid(format!("row {} of trial `{}` has no group id", r.window_idx, r.trial_id)));
            }
        }
        Ok(())
    }

    pub fn subset_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            catalog: self.catalog.clone(),
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            normalization: self.normalization.clone(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            catalog: self.catalog.clone(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow { values: cols.iter().map(|&j| r.values[j]).collect(), ..r.clone() })
                .collect(),
            normalization: None,
        }
    }

    /// Fit `method` on `fit_rows` and apply it to every row.
    pub fn normalize(&self, method: NormMethod, fit_rows: &[usize]) -> Result<FeatureMatrix> {
        let norm = Normalization::fit(method, fit_rows.iter().map(|&i| self.rows[i].values.as_slice()), self.width())?;
        let mut out = self.clone();
        for r in &mut out.rows {
            norm.apply(&mut r.values);
        }
        out.normalization = Some(norm);
        Ok(out)
    }

    /// Header: `group_id,trial_id,window_idx,label,<feature ids>,empty_flags`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["group_id".to_string(), "trial_id".into(), "window_idx".into(), "label".into()];
        header.extend(self.columns.iter().cloned());
        header.push("empty_flags".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.group_id.clone(), r.trial_id.clone(), r.window_idx.to_string(), r.label.to_string()];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            rec.push(r.empty.join(";"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`FeatureMatrix::write_csv`]; lines starting with `#` are skipped.
    pub fn read_csv<R: Read>(catalog: &str, input: R) -> Result<FeatureMatrix> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let fixed = ["group_id", "trial_id", "window_idx", "label"];
        if header.len() < fixed.len() + 1 || header[..4] != fixed {
            return Err(Error::MissingColumn(fixed.join(",")));
        }
        let has_flags = header.last().map(String::as_str) == Some("empty_flags");
        let end = if has_flags { header.len() - 1 } else { header.len() };
        let columns = header[4..end].to_vec();
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |what: &str| Error::Parse { line, message: what.to_string() };
            let values = (4..end)
                .map(|j| {
                    rec.get(j)
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| bad(&format!("column `{}` is not a number", header[j])))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(FeatureRow {
                group_id: rec[0].to_string(),
                trial_id: rec[1].to_string(),
                window_idx: rec[2].parse().map_err(|_| bad("window_idx is not an integer"))?,
                label: rec[3].parse().map_err(|_| bad("label is not a class integer"))?,
                values,
                empty: match rec.get(end) {
                    Some(s) if has_flags && !s.is_empty() => s.split(';').map(str::to_string).collect(),
                    _ => Vec::new(),
                },
            });
        }
        let m = FeatureMatrix { catalog: catalog.to_string(), columns, rows, normalization: None };
        m.validate()?;
        Ok(m)
    }
}

/// Binary labels from a continuous score: below the median is class 0, the rest class 1.
pub fn median_split(scores: &[f64]) -> Vec<u8> {
    if scores.is_empty() {
        return Vec::new();
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    let median = if k % 2 == 1 { s[k / 2] } else { 0.5 * (s[k / 2 - 1] + s[k / 2]) };
    scores.iter().map(|&v| u8::from(v >= median)).collect()
}
