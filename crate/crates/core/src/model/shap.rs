//! Exact path-dependent TreeSHAP (polynomial-time Shapley values for trees).
//!
//! The path bookkeeping (`extend`, `unwind`, `unwound_sum`) tracks, for every
//! feature seen on the root-to-node path, the fraction of training cover that
//! flows along the path with the feature absent (`zero`) and whether `x`
//! follows it with the feature present (`one`), plus the permutation weights
//! of each subset size.

use super::tree::Tree;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct PathElem {
    feature: usize,
    zero: f64,
    one: f64,
    weight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend(path: &mut Vec<PathElem>, zero: f64, one: f64, feature: usize) {
    let d = path.len();
    path.push(PathElem { feature, zero, one, weight: if d == 0 { 1.0 } else { 0.0 } });
    for i in (0..d).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (d + 1) as f64;
        path[i].weight = zero * path[i].weight * (d - i) as f64 / (d + 1) as f64;
    }
}

/// Remove element `k` from the path, undoing its `extend`.
fn unwind(path: &mut Vec<PathElem>, k: usize) {
    let d = path.len() - 1;
    let (one, zero) = (path[k].one, path[k].zero);
    let mut next = path[d].weight;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next * (d + 1) as f64 / ((i + 1) as f64 * one);
            next = tmp - path[i].weight * zero * (d - i) as f64 / (d + 1) as f64;
        } else {
            path[i].weight = path[i].weight * (d + 1) as f64 / (zero * (d - i) as f64);
        }
    }
    for i in k..d {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    path.pop();
}

/// Total permutation weight of the path with element `k` unwound, without modifying it.
fn unwound_sum(path: &[PathElem], k: usize) -> f64 {
    let d = path.len() - 1;
    let (one, zero) = (path[k].one, path[k].zero);
    let mut next = path[d].weight;
    let mut total = 0.0;
    for i in (0..d).rev() {
        if one != 0.0 {
            let tmp = next * (d + 1) as f64 / ((i + 1) as f64 * one);
            total += tmp;
            next = path[i].weight - tmp * zero * (d - i) as f64 / (d + 1) as f64;
        } else {
            total += path[i].weight / zero / ((d - i) as f64 / (d + 1) as f64);
        }
    }
    total
}

fn recurse(tree: &Tree, x: &[f64], phi: &mut [f64], node: usize, parent: &[PathElem], zero: f64, one: f64, feature: usize) {
    let mut path = parent.to_vec();
    extend(&mut path, zero, one, feature);
    let n = &tree.nodes[node];
    match n.feature {
        None => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature] += w * (e.one - e.zero) * n.value;
            }
        }
        Some(f) => {
            let (hot, cold) = if x[f] <= n.threshold { (n.left, n.right) } else { (n.right, n.left) };
            let hot_zero = tree.nodes[hot].cover / n.cover;
            let cold_zero = tree.nodes[cold].cover / n.cover;
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = path.iter().skip(1).position(|e| e.feature == f).map(|k| k + 1) {
                in_zero = path[k].zero;
                in_one = path[k].one;
                unwind(&mut path, k);
            }
            recurse(tree, x, phi, hot, &path, hot_zero * in_zero, in_one, f);
            recurse(tree, x, phi, cold, &path, cold_zero * in_zero, 0.0, f);
        }
    }
}

/// Attributions of one tree at `x`; `tree.expected_value() + Σφ = tree.predict(x)`.
pub fn tree_shap(tree: &Tree, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != tree.n_features {
        return Err(Error::WidthMismatch { expected: tree.n_features, found: x.len() });
    }
    let mut phi = vec![0.0; tree.n_features];
    recurse(tree, x, &mut phi, 0, &[], 1.0, 1.0, NO_FEATURE);
    Ok(phi)
}

/// Ensemble attributions: the mean of per-tree attributions. Base value is the
/// mean of tree expectations.
pub fn ensemble_shap(trees: &[Tree], x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if trees.is_empty() {
        return Err(Error::Empty("ensemble without trees".into()));
    }
    let mut phi = vec![0.0; trees[0].n_features];
    let mut base = 0.0;
    for t in trees {
        for (a, b) in phi.iter_mut().zip(tree_shap(t, x)?) {
            *a += b;
        }
        base += t.expected_value();
    }
    let k = trees.len() as f64;
    phi.iter_mut().for_each(|v| *v /= k);
    Ok((base / k, phi))
}
