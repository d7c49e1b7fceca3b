//! Throughput of the hot paths: recording processing, TreeSHAP, forest
//! training and exact rank-test distributions.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gazelab_core::model::shap::tree_shap;
use gazelab_core::model::tree::random_tree;
use gazelab_core::model::{FittedModel, ForestParams, ModelSpec};
use gazelab_core::pipeline::{process_recording, ProcessConfig, Study};
use gazelab_core::stats::{kruskal_wallis, mann_whitney_u, wilcoxon_signed_rank, ExactMode, RankOptions};
use gazelab_core::synth::{plant_dataset, plant_recordings, PlantSpec};
use rand::Rng;

fn processing(c: &mut Criterion) {
    let spec = PlantSpec { n_groups_per_class: 1, windows_per_group: 6, ..Default::default() };
    let (rec, _) = plant_recordings(&spec, 1).unwrap().remove(0);
    let cfg = ProcessConfig::for_study(&Study::by_name("classroom").unwrap()).unwrap();
    c.bench_function("process_recording 60 s at 120 Hz", |b| b.iter(|| process_recording(black_box(&rec), &cfg).unwrap()));
}

fn shap(c: &mut Criterion) {
    let mut r = gazelab_core::rng::rng(2);
    let tree = random_tree(40, 8, &mut r);
    let x: Vec<f64> = (0..40).map(|_| r.random_range(-1.5..1.5)).collect();
    c.bench_function("tree_shap depth 8, 40 features", |b| b.iter(|| tree_shap(black_box(&tree), &x).unwrap()));
}

fn forest(c: &mut Criterion) {
    let d = plant_dataset(&PlantSpec::default(), 3).unwrap();
    let rows: Vec<usize> = (0..d.matrix.len()).collect();
    let spec = ModelSpec::RandomForest(ForestParams::default());
    c.bench_function("random forest fit 100 trees, 120 x 43", |b| {
        b.iter(|| FittedModel::fit(black_box(&d.matrix), &rows, &spec, None, 4).unwrap())
    });
}

fn rank_tests(c: &mut Criterion) {
    let mut r = gazelab_core::rng::rng(5);
    let a: Vec<f64> = (0..30).map(|_| r.random_range(0.0..1.0)).collect();
    let b: Vec<f64> = (0..30).map(|_| r.random_range(0.0..1.0)).collect();
    let exact = RankOptions { exact: ExactMode::Always, ..Default::default() };
    c.bench_function("mann_whitney exact 30 vs 30", |bch| bch.iter(|| mann_whitney_u(black_box(&a), &b, &exact).unwrap()));
    c.bench_function("wilcoxon exact n 30", |bch| bch.iter(|| wilcoxon_signed_rank(black_box(&a), &b, &exact).unwrap()));
    let g: [&[f64]; 3] = [&a[..4], &a[4..8], &b[..4]];
    c.bench_function("kruskal_wallis exact 3 x 4", |bch| bch.iter(|| kruskal_wallis(black_box(&g), ExactMode::Always).unwrap()));
}

criterion_group!(benches, processing, shap, forest, rank_tests);
criterion_main!(benches);
