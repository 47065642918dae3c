use criterion::{black_box, criterion_group, criterion_main, Criterion};

use scene_core::model::kernels::{conv2d, depthwise_conv2d, Tensor3};
use scene_core::model::{mobilenet, ArchConfig, Init, Network, INIT_STD};
use scene_core::{Classifier, Frontend, FrontendConfig, Waveform};

fn signal(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| {
            let t = i as f32 / 16_000.0;
            0.3 * (2.0 * std::f32::consts::PI * 440.0 * t).sin() + 0.05 * ((i * 7919 % 1013) as f32 / 1013.0 - 0.5)
        })
        .collect()
}

fn tensor(h: usize, w: usize, c: usize) -> Tensor3 {
    Tensor3::new(h, w, c, (0..h * w * c).map(|i| ((i % 97) as f32 - 48.0) / 48.0).collect()).unwrap()
}

fn features(c: &mut Criterion) {
    let frontend = Frontend::new(FrontendConfig::default()).unwrap();
    let window = signal(15_360);
    c.bench_function("log_mel_window", |b| b.iter(|| frontend.log_mel(black_box(&window), 0.0).unwrap()));
}

fn kernels(c: &mut Criterion) {
    let x = tensor(12, 8, 256);
    let k: Vec<f32> = (0..256 * 256).map(|i| ((i % 31) as f32 - 15.0) / 150.0).collect();
    c.bench_function("pointwise_12x8x256_to_256", |b| {
        b.iter(|| conv2d(black_box(&x), &k, 1, 1, 256, 1, None).unwrap())
    });
    let x = tensor(24, 16, 128);
    let dk: Vec<f32> = (0..9 * 128).map(|i| ((i % 13) as f32 - 6.0) / 20.0).collect();
    c.bench_function("depthwise_3x3_24x16x128", |b| {
        b.iter(|| depthwise_conv2d(black_box(&x), &dk, 3, 3, 1, None).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let m = mobilenet(&ArchConfig::new(14), Init::Random { seed: 1, std: INIT_STD }).unwrap();
    let net = Network::new(&m).unwrap();
    let frontend = Frontend::new(FrontendConfig::default()).unwrap();
    let patch = frontend.log_mel(&signal(15_360), 0.0).unwrap();
    c.bench_function("forward_patch", |b| b.iter(|| net.forward(black_box(&patch), 0).unwrap()));

    let classifier = Classifier::new(&m, FrontendConfig::default()).unwrap();
    let clip = Waveform::new(signal(160_000), 16_000).unwrap();
    let mut g = c.benchmark_group("clip");
    g.sample_size(10);
    g.bench_function("infer_10s_serial", |b| b.iter(|| classifier.infer_clip_serial(black_box(&clip)).unwrap()));
    g.finish();
}

criterion_group!(benches, features, kernels, network);
criterion_main!(benches);
