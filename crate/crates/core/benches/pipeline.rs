//! Parallel vs sequential: the same work in the global pool and in a
//! one-thread pool. Build with `--no-default-features` for the plain
//! iterator fallback.

use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use segquality::dataset::{build_dataset, MetaDataset};
use segquality::meta::{cross_validate, gbt, Hyperparams, ModelKind, Task};
use segquality::pipeline::{analyze_frame, columns_for};
use segquality::segments::Adjacency;
use segquality::synth::{synth_frame, CorruptionConfig, SceneConfig};
use segquality::SensorSpec;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn frames(c: &mut Criterion) {
    let scene = SceneConfig { sensor: SensorSpec::semantic_kitti(), vehicles: 20, poles: 30, ..Default::default() };
    let f = synth_frame(1, 0, &scene, &CorruptionConfig::default()).unwrap();
    let mut g = c.benchmark_group("analyze_frame_4500x64");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| analyze_frame(&f.cloud, &f.probs, Some(&f.gt), &scene.sensor, Adjacency::default(), &[]).unwrap()))
        });
    }
    g.finish();
}

fn dataset() -> MetaDataset {
    let scene = SceneConfig::default();
    let rows: Vec<_> = (0..60)
        .map(|i| {
            let f = synth_frame(2, i, &scene, &CorruptionConfig::default()).unwrap();
            analyze_frame(&f.cloud, &f.probs, Some(&f.gt), &scene.sensor, Adjacency::default(), &[]).unwrap().into_rows(i)
        })
        .collect();
    let groups: BTreeMap<u32, u32> = (0..60).map(|i| (i, i / 6)).collect();
    build_dataset(columns_for(scene.n_classes, &[]), &rows, 10, &groups).unwrap().0
}

fn meta(c: &mut Criterion) {
    let ds = dataset();
    let y = ds.iou_adj().unwrap();
    let hp = Hyperparams::default();
    let mut g = c.benchmark_group("meta");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("gbt_fit", name), |b| {
            b.iter(|| pool.install(|| gbt::fit(&ds.features, ds.n_cols(), &y, Task::Regress, &hp.gbt)))
        });
        g.bench_function(BenchmarkId::new("cross_validate", name), |b| {
            b.iter(|| pool.install(|| cross_validate(&ds, Task::Classify, ModelKind::Gbt, &hp, 10).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, frames, meta);
criterion_main!(benches);
