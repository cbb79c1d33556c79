use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segfeat_core::autodiff::Tape;
use segfeat_core::features::{assemble_features, ColumnRole};
use segfeat_core::inference::TableScores;
use segfeat_core::training::{objective, LossWeights};
use segfeat_core::{
    dp_segment, FeatureConfig, FrameMatrix, LabeledUtterance, LossSet, ModelConfig, SegmentalModel, Segmentation,
    Waveform,
};

fn decoding(c: &mut Criterion) {
    let mut group = c.benchmark_group("dp_segment");
    for t in [100, 300] {
        let table = TableScores::random(t, &mut ChaCha8Rng::seed_from_u64(1));
        group.bench_with_input(BenchmarkId::new("unbounded", t), &table, |b, table| {
            b.iter(|| dp_segment(table, None).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("cap50", t), &table, |b, table| {
            b.iter(|| dp_segment(table, Some(50)).unwrap())
        });
    }
    group.finish();
}

fn features(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let samples = (0..48000).map(|_| rng.random_range(-0.5..0.5)).collect();
    let wave = Waveform::new(samples, 16000).unwrap();
    let cfg = FeatureConfig::default();
    c.bench_function("features/3s", |b| b.iter(|| assemble_features(&wave, &cfg, None).unwrap()));
}

fn model(c: &mut Criterion) {
    let t = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = (0..t * 43).map(|_| rng.random_range(-1.0..1.0)).collect();
    let feats = FrameMatrix::new(t, data, 0.01, vec![ColumnRole::Mfcc; 43]).unwrap();
    let inventory: Vec<String> = (0..4).map(|i| format!("p{i}")).collect();
    let m = SegmentalModel::new(ModelConfig::default(), FeatureConfig::default(), inventory.clone()).unwrap();
    c.bench_function("encoder+context/200", |b| b.iter(|| m.build_context(&feats).unwrap()));

    let bounds: Vec<usize> = (1..t / 10).map(|i| i * 10).collect();
    let phones = (0..bounds.len() + 1).map(|i| inventory[i % 4].clone()).collect();
    let utt = LabeledUtterance::new("b", feats, Segmentation::new(bounds, t).unwrap(), Some(phones)).unwrap();
    let losses = LossSet { hinge: true, phn: true, bin: false };
    c.bench_function("objective+backward/200", |b| {
        b.iter(|| {
            let mut params = m.params().clone();
            let mut tape = Tape::new();
            let bound = tape.bind(&params);
            let (loss, _) = objective(&m, &mut tape, &bound, &utt, losses, LossWeights::default(), Some(50)).unwrap();
            tape.backward(loss, &mut params).unwrap();
        })
    });
}

criterion_group!(benches, decoding, features, model);
criterion_main!(benches);
