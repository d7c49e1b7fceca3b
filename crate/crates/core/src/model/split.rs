//! Group-aware stratified splitting. Every row of a group lands on the same
//! side of every split.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// k folds, each used once as the test part.
    KFold(usize),
    /// One split holding out this fraction of each class's groups.
    Holdout(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train_groups: Vec<String>,
    pub test_groups: Vec<String>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub spec: SplitSpec,
    /// Group id to fold index (for holdout: 0 = test, 1 = train).
    pub assignment: BTreeMap<String, usize>,
    pub folds: Vec<Fold>,
}

impl SplitPlan {
    /// Number of groups that appear on both sides of some fold.
    pub fn leakage(&self) -> usize {
        self.folds.iter().map(|f| group_overlap(&f.train_groups, &f.test_groups)).sum()
    }
}

pub fn group_overlap(a: &[String], b: &[String]) -> usize {
    let a: BTreeSet<&String> = a.iter().collect();
    b.iter().filter(|g| a.contains(g)).collect::<BTreeSet<_>>().len()
}

/// Class label of every group; errors if a group mixes labels.
pub fn group_labels(groups: &[&str], labels: &[u8]) -> Result<BTreeMap<String, u8>> {
    let mut out: BTreeMap<String, u8> = BTreeMap::new();
    for (g, &y) in groups.iter().zip(labels) {
        match out.get(*g) {
            Some(&prev) if prev != y => return Err(Error::HeterogeneousGroup(g.to_string())),
            Some(_) => {}
            None => {
                out.insert(g.to_string(), y);
            }
        }
    }
    Ok(out)
}

/// Shuffle groups per class with `seed` and assign them to folds.
///
/// k-fold: the shuffled class lists are concatenated and dealt round-robin, so
/// each fold gets a near-equal share of each class. Holdout: each class
/// contributes `round(n_c · ratio)` groups to the test part (at least one group
/// overall on each side).
pub fn grouped_stratified_split(groups: &[&str], labels: &[u8], spec: SplitSpec, seed: u64) -> Result<SplitPlan> {
    if groups.len() != labels.len() {
        return Err(Error::invalid("group and label vectors differ in length"));
    }
    let by_group = group_labels(groups, labels)?;
    let mut classes: BTreeMap<u8, Vec<String>> = BTreeMap::new();
    for (g, y) in &by_group {
        classes.entry(*y).or_default().push(g.clone());
    }
    let mut r = rng::rng(seed);
    for list in classes.values_mut() {
        list.shuffle(&mut r);
    }
    let n_groups = by_group.len();
    let mut assignment = BTreeMap::new();
    let n_folds = match spec {
        SplitSpec::KFold(k) => {
            if k < 2 {
                return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
            }
            if n_groups < k {
                return Err(Error::InsufficientGroups { groups: n_groups, folds: k });
            }
            for (pos, g) in classes.values().flatten().enumerate() {
                assignment.insert(g.clone(), pos % k);
            }
            k
        }
        SplitSpec::Holdout(ratio) => {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::invalid(format!("holdout ratio must lie in (0, 1), got {ratio}")));
            }
            if n_groups < 2 {
                return Err(Error::InsufficientGroups { groups: n_groups, folds: 2 });
            }
            let sizes: Vec<usize> = classes.values().map(Vec::len).collect();
            // Last maximum of a reversed scan: ties go to the lowest class.
            let argmax = |v: &[usize]| (0..v.len()).rev().max_by_key(|&c| v[c]).unwrap();
            let mut n_test: Vec<usize> =
                sizes.iter().map(|&n| ((n as f64 * ratio).round() as usize).min(n)).collect();
            let total: usize = n_test.iter().sum();
            if total == 0 {
                n_test[argmax(&sizes)] = 1;
            } else if total == n_groups {
                let c = argmax(&n_test);
                n_test[c] -= 1;
            }
            for (list, &nt) in classes.values().zip(&n_test) {
                for (pos, g) in list.iter().enumerate() {
                    assignment.insert(g.clone(), usize::from(pos >= nt));
                }
            }
            1
        }
    };
    let folds = (0..n_folds)
        .map(|f| {
            let test_fold = f;
            let (mut train_rows, mut test_rows) = (Vec::new(), Vec::new());
            for (i, g) in groups.iter().enumerate() {
                if assignment[*g] == test_fold {
                    test_rows.push(i);
                } else {
                    train_rows.push(i);
                }
            }
            let (test_groups, train_groups): (Vec<String>, Vec<String>) =
                assignment.keys().cloned().partition(|g| assignment[g] == test_fold);
            Fold { train_groups, test_groups, train_rows, test_rows }
        })
        .collect();
    Ok(SplitPlan { seed, spec, assignment, folds })
}
