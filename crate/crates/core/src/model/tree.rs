//! CART classification trees (Gini impurity, midpoint thresholds).
//!
//! Nodes keep their weighted training count (`cover`) and the weighted share of
//! class 1 (`value`); leaves predict that share. Bootstrap multiplicities enter
//! as integer sample weights, so a parent's cover is the sum of its children's.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().round() as usize,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_samples_split: 2, min_samples_leaf: 1, max_features: MaxFeatures::All }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split feature; `None` for a leaf.
    pub feature: Option<usize>,
    /// Rows with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Weighted fraction of class 1 among the node's training rows.
    pub value: f64,
    pub cover: f64,
}

impl Node {
    pub fn leaf(value: f64, cover: f64) -> Node {
        Node { feature: None, threshold: 0.0, left: 0, right: 0, value, cover }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub n_features: usize,
    /// Root first.
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Check structure: children in range, covers add up, finite leaf values.
    pub fn from_nodes(n_features: usize, nodes: Vec<Node>) -> Result<Tree> {
        if nodes.is_empty() {
            return Err(Error::Empty("tree without nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if !n.value.is_finite() || !(n.cover > 0.0) {
                return Err(Error::invalid(format!("node {i}: value must be finite and cover positive")));
            }
            if let Some(f) = n.feature {
                if f >= n_features || n.left >= nodes.len() || n.right >= nodes.len() || n.left <= i || n.right <= i {
                    return Err(Error::invalid(format!("node {i}: bad feature or child index")));
                }
                let sum = nodes[n.left].cover + nodes[n.right].cover;
                if (sum - n.cover).abs() > 1e-9 * n.cover.max(1.0) {
                    return Err(Error::invalid(format!("node {i}: cover {} != children {sum}", n.cover)));
                }
            }
        }
        Ok(Tree { n_features, nodes })
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some(f) = self.nodes[i].feature {
            let n = &self.nodes[i];
            i = if x[f] <= n.threshold { n.left } else { n.right };
        }
        i
    }

    /// Probability of class 1.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    /// Cover-weighted mean of leaf values, i.e. the root's value.
    pub fn expected_value(&self) -> f64 {
        self.nodes[0].value
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left).max(go(t, n.right))
            }
        }
        go(self, 0)
    }
}

fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    w: &'a [f64],
    params: TreeParams,
    n_try: usize,
    nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn stats(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(c, p), &i| (c + self.w[i], p + self.w[i] * f64::from(self.y[i])))
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let (cover, pos) = self.stats(&rows);
        let id = self.nodes.len();
        self.nodes.push(Node::leaf(pos / cover, cover));
        let pure = pos == 0.0 || pos == cover;
        let depth_ok = self.params.max_depth.map_or(true, |d| depth < d);
        if pure || !depth_ok || cover < self.params.min_samples_split as f64 {
            return id;
        }
        let Some(best) = self.best_split(&rows, cover, pos, rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.x[i][best.feature] <= best.threshold);
        let l = self.grow(left, depth + 1, rng);
        let r = self.grow(right, depth + 1, rng);
        let n = &mut self.nodes[id];
        n.feature = Some(best.feature);
        n.threshold = best.threshold;
        n.left = l;
        n.right = r;
        id
    }

    /// Highest impurity decrease over a random feature subset. Ties keep the
    /// lowest feature index, then the lowest threshold.
    fn best_split(&self, rows: &[usize], cover: f64, pos: f64, rng: &mut ChaCha8Rng) -> Option<Best> {
        let n_features = self.x[rows[0]].len();
        let mut feats = index::sample(rng, n_features, self.n_try).into_vec();
        feats.sort_unstable();
        let parent = gini(pos, cover) * cover;
        let min_leaf = self.params.min_samples_leaf as f64;
        let mut best: Option<Best> = None;
        let mut order: Vec<usize> = rows.to_vec();
        for f in feats {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let (mut lc, mut lp) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                lc += self.w[i];
                lp += self.w[i] * f64::from(self.y[i]);
                let (a, b) = (self.x[i][f], self.x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let (rc, rp) = (cover - lc, pos - lp);
                if lc < min_leaf || rc < min_leaf {
                    continue;
                }
                let gain = parent - gini(lp, lc) * lc - gini(rp, rc) * rc;
                if best.as_ref().map_or(true, |b| gain > b.gain + 1e-12) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Best { feature: f, threshold, gain });
                }
            }
        }
        best.filter(|b| b.gain >= -1e-12)
    }
}

/// Train one tree on rows with positive weight. `rng` drives feature subsampling.
pub fn train_tree_weighted(
    x: &[Vec<f64>],
    y: &[u8],
    weights: &[f64],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<Tree> {
    let rows: Vec<usize> = (0..x.len()).filter(|&i| weights[i] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::Empty("no training rows".into()));
    }
    let n_features = x[rows[0]].len();
    if n_features == 0 {
        return Err(Error::Empty("no features".into()));
    }
    if let Some(bad) = rows.iter().find(|&&i| x[i].len() != n_features) {
        return Err(Error::WidthMismatch { expected: n_features, found: x[*bad].len() });
    }
    if params.min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be at least 1"));
    }
    let mut b = Builder { x, y, w: weights, params: *params, n_try: params.max_features.resolve(n_features), nodes: Vec::new() };
    b.grow(rows, 0, rng);
    Ok(Tree { n_features, nodes: b.nodes })
}

pub fn train_tree(x: &[Vec<f64>], y: &[u8], params: &TreeParams, seed: u64) -> Result<Tree> {
    let w = vec![1.0; x.len()];
    train_tree_weighted(x, y, &w, params, &mut crate::rng::rng(seed))
}

/// Random tree over `n_features` with positive covers, for attribution checks.
pub fn random_tree(n_features: usize, max_depth: usize, rng: &mut impl Rng) -> Tree {
    fn go(nodes: &mut Vec<Node>, nf: usize, depth: usize, cover: f64, rng: &mut impl Rng) -> usize {
        let id = nodes.len();
        nodes.push(Node::leaf(rng.random_range(-1.0..1.0), cover));
        if depth == 0 || rng.random_bool(0.2) {
            return id;
        }
        let share = rng.random_range(0.1..0.9);
        let f = rng.random_range(0..nf);
        let t = rng.random_range(-1.0..1.0);
        let l = go(nodes, nf, depth - 1, cover * share, rng);
        let r = go(nodes, nf, depth - 1, cover * (1.0 - share), rng);
        let value = (nodes[l].value * nodes[l].cover + nodes[r].value * nodes[r].cover) / cover;
        let n = &mut nodes[id];
        n.feature = Some(f);
        n.threshold = t;
        n.left = l;
        n.right = r;
        n.value = value;
        id
    }
    let mut nodes = Vec::new();
    go(&mut nodes, n_features, max_depth, 100.0, rng);
    Tree { n_features, nodes }
}
