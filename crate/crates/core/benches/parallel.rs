use bnf_core::bitplane::{BinaryTensor, BinaryWeightTensor, PackedBits, Shape};
use bnf_core::data::{generate_synthetic, SynthKind, SynthSpec};
use bnf_core::layers::{conv2d_binary_with, conv2d_forward, AxisPolicy, ConvSpec};
use bnf_core::model::{preset, Network, NetworkOptions, Preset};
use bnf_core::{Execution, Tensor};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn binary_conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (h, w, cin) = (7, 100, 64);
    let spec = ConvSpec::new(64, 3, AxisPolicy::TimeOnly);
    let bits: Vec<bool> = (0..h * w * cin).map(|_| rng.gen()).collect();
    let input = BinaryTensor::new(Shape::hwc(h, w, cin).unwrap(), PackedBits::from_bools(&bits)).unwrap();
    let shape = spec.weight_shape(cin);
    let signs: Vec<bool> = (0..shape.iter().product::<usize>()).map(|_| rng.gen()).collect();
    let weights = BinaryWeightTensor::from_signs(&shape, &signs, 0.5).unwrap();
    let mut g = c.benchmark_group("conv2d_binary");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| conv2d_binary_with(exec, black_box(&input), &weights, &spec).unwrap())
        });
    }
    g.finish();
}

fn float_conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, h, w, cin) = (16, 7, 100, 24);
    let spec = ConvSpec::new(32, 3, AxisPolicy::TimeOnly);
    let input = Tensor::from_vec(&[n, h, w, cin], (0..n * h * w * cin).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let shape = spec.weight_shape(cin);
    let weights = Tensor::from_vec(&shape, (0..shape.iter().product::<usize>()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let mut g = c.benchmark_group("conv2d_forward");
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| conv2d_forward(exec, black_box(&input), &weights, &spec).unwrap())
        });
    }
    g.finish();
}

fn training_step(c: &mut Criterion) {
    let cfg = preset(Preset::Pamap2).with_mode(bnf_core::model::FirstLayerMode::Bil, Some(8)).unwrap();
    let net = Network::new(&cfg, NetworkOptions::default(), 3).unwrap();
    let ds = generate_synthetic(&SynthSpec::new(SynthKind::Linear, cfg.input_shape.clone(), 8, 16, 4)).unwrap();
    let idx: Vec<usize> = (0..ds.len()).collect();
    let input = net.encode(&ds, &idx).unwrap();
    let mut g = c.benchmark_group("training_step");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            b.iter(|| net.step(exec, input.clone(), ds.labels(), &mut rng).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, binary_conv, float_conv, training_step);
criterion_main!(benches);
