use criterion::{criterion_group, criterion_main, Criterion};
use ofi_core::data::generate_synthetic;
use ofi_core::hybrid::{self, ModelKind, PipelineConfig};
use ofi_core::nn::{train, Activation, FnnTopology, Network, TrainConfig};
use ofi_core::var::{fit_var, observations, Obs};
use ofi_core::SyntheticSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn synthetic(length: usize) -> Vec<Obs> {
    let spec = SyntheticSpec { length, ..SyntheticSpec::default() };
    observations(&generate_synthetic(&spec).unwrap())
}

fn bench_var(c: &mut Criterion) {
    let obs = synthetic(5000);
    let mut group = c.benchmark_group("fit_var");
    for p in [1, 5, 10] {
        group.bench_function(format!("p{p}"), |b| b.iter(|| fit_var(black_box(&obs), p).unwrap()));
    }
    group.finish();
}

fn bench_network(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let topo = FnnTopology::new(4, vec![32, 16], 2, Activation::Relu).unwrap();
    let net = Network::init(topo.clone(), &mut rng).unwrap();
    let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();

    c.bench_function("forward_32_16", |b| b.iter(|| net.forward(black_box(&xs[0])).unwrap()));
    c.bench_function("backward_batch8", |b| b.iter(|| net.backward(black_box(&xs), black_box(&ys)).unwrap()));

    let xs: Vec<Vec<f64>> = (0..2000).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] * x[1], x[2].tanh()]).collect();
    let config = TrainConfig { epochs: 1, early_stopping: false, ..TrainConfig::default() };
    c.bench_function("train_epoch_2000", |b| b.iter(|| train(&xs, &ys, &topo, &config).unwrap()));
}

fn bench_hybrid(c: &mut Criterion) {
    let obs = synthetic(2000);
    let mut config = PipelineConfig::default();
    config.train.epochs = 5;
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("fit_hybrid_5_epochs", |b| {
        b.iter(|| hybrid::fit(ModelKind::Hybrid, black_box(&obs), &config).unwrap())
    });
    let (bundle, _) = hybrid::fit(ModelKind::Hybrid, &obs, &config).unwrap();
    group.bench_function("predict_hybrid", |b| {
        b.iter(|| hybrid::predict(&bundle, black_box(&obs)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_var, bench_network, bench_hybrid);
criterion_main!(benches);
