//! Bagged random forests. Tree `i` draws its bootstrap and feature subsets from
//! `rng::derive(seed, i)`, so the ensemble does not depend on thread scheduling.
//! Rows are put in a canonical order before bootstrapping, which makes the
//! forest independent of the order training rows arrive in as well.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{train_tree_weighted, MaxFeatures, Tree, TreeParams};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            tree: TreeParams { max_features: MaxFeatures::Sqrt, ..TreeParams::default() },
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub seed: u64,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<Tree>,
    /// Mean of the trees' cover-weighted expectations; the attribution base.
    pub base_value: f64,
}

impl RandomForest {
    pub fn train(x: &[Vec<f64>], y: &[u8], params: &ForestParams, seed: u64) -> Result<RandomForest> {
        if params.n_trees == 0 {
            return Err(Error::invalid("n_trees must be positive"));
        }
        if x.is_empty() {
            return Err(Error::Empty("no training rows".into()));
        }
        let tree_seeds: Vec<u64> = (0..params.n_trees as u64).map(|i| rng::derive(seed, i)).collect();
        let n = x.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            x[a].iter().zip(&x[b]).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(y[a].cmp(&y[b]))
        });
        let x: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let y: Vec<u8> = order.iter().map(|&i| y[i]).collect();
        let (x, y) = (&x[..], &y[..]);
        let trees = tree_seeds
            .par_iter()
            .map(|&s| {
                let mut r = rng::rng(s);
                let mut w = vec![0.0; n];
                if params.bootstrap {
                    for _ in 0..n {
                        w[r.random_range(0..n)] += 1.0;
                    }
                } else {
                    w.fill(1.0);
                }
                train_tree_weighted(x, y, &w, &params.tree, &mut r)
            })
            .collect::<Result<Vec<Tree>>>()?;
        let base_value = trees.iter().map(Tree::expected_value).sum::<f64>() / trees.len() as f64;
        Ok(RandomForest { params: *params, seed, tree_seeds, trees, base_value })
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features
    }

    /// Mean class-1 probability over trees.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Class 1 only when its probability strictly exceeds class 0's.
    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) > 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_data() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
        let y: Vec<u8> = (0..60).map(|i| u8::from(i >= 30)).collect();
        let f = RandomForest::train(&x, &y, &ForestParams { n_trees: 25, ..Default::default() }, 9).unwrap();
        let test: Vec<(f64, u8)> = vec![(2.5, 0), (10.2, 0), (40.7, 1), (58.1, 1)];
        assert!(test.iter().all(|&(v, l)| f.predict(&[v]) == l));
    }

    #[test]
    fn same_seed_same_forest_any_pool() {
        let x: Vec<Vec<f64>> = (0..80).map(|i| vec![(i * 37 % 11) as f64, (i * 13 % 7) as f64, i as f64]).collect();
        let y: Vec<u8> = (0..80).map(|i| u8::from(i % 3 == 1)).collect();
        let p = ForestParams { n_trees: 16, ..Default::default() };
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| RandomForest::train(&x, &y, &p, 4));
        let b = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| RandomForest::train(&x, &y, &p, 4));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn row_order_does_not_matter() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64]).collect();
        let y: Vec<u8> = (0..50).map(|i| u8::from((i * 7 % 13) > 6)).collect();
        let p = ForestParams { n_trees: 10, ..Default::default() };
        let a = RandomForest::train(&x, &y, &p, 3).unwrap();
        let (xr, yr): (Vec<_>, Vec<_>) = x.iter().cloned().zip(y.iter().copied()).rev().unzip();
        let b = RandomForest::train(&xr, &yr, &p, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_trees_rejected() {
        assert!(RandomForest::train(&[vec![1.0]], &[0], &ForestParams { n_trees: 0, ..Default::default() }, 0).is_err());
    }
}
