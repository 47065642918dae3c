use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scene_core::audio::Waveform;
use scene_core::features::{FrontendConfig, LogMelPatch};
use scene_core::model::kernels::{conv2d, depthwise_conv2d, Tensor3};
use scene_core::model::{
    calibrate_batch_norm, infer_clip, mobilenet, ArchConfig, Classifier, DType, Init, ModelWeights, INIT_STD,
};

fn random_model(classes: usize, seed: u64) -> ModelWeights {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let calib: Vec<LogMelPatch> = (0..2)
        .map(|_| LogMelPatch::new((0..96 * 64).map(|_| r.random_range(-7.0f32..1.0)).collect(), 96, 64, 0.0))
        .collect();
    let mut m = mobilenet(&ArchConfig::new(classes), Init::Random { seed, std: INIT_STD }).unwrap();
    calibrate_batch_norm(&mut m, &calib).unwrap();
    m
}

fn noise_clip(seed: u64, len: usize) -> Waveform {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new((0..len).map(|_| r.random_range(-0.3f32..0.3)).collect(), 16_000).unwrap()
}

/// Expected file size: header, layer table, label table, payload length,
/// payload, CRC.
fn file_size(m: &ModelWeights, bytes_per_value: usize) -> usize {
    let header = 4 + 2 + 1 + 4 + 4 + 4;
    let table: usize = m.layers.iter().map(|l| 13 + 17 * l.tensors.len()).sum();
    let labels: usize = 4 + m.labels.iter().map(|s| 2 + s.len()).sum::<usize>();
    header + table + labels + 8 + bytes_per_value * m.parameter_count() + 4
}

#[test]
fn weight_files_round_trip_and_match_the_size_formula() {
    let m = random_model(14, 3);
    let dir = tempfile::tempdir().unwrap();
    for (dtype, width) in [(DType::F32, 4), (DType::F16, 2)] {
        let p = dir.path().join(format!("m.{dtype}"));
        m.save(&p, dtype).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), file_size(&m, width));
        let back = ModelWeights::load(&p).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.parameter_count(), m.parameter_count());
    }
    // 3,231,694 half-precision values plus a few KiB of tables
    let f16_len = std::fs::metadata(dir.path().join("m.f16")).unwrap().len() as usize;
    assert!(f16_len - 2 * m.parameter_count() < 4096);
}

#[test]
fn corrupt_files_are_rejected() {
    let bytes = random_model(2, 1).to_bytes().unwrap();
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x10;
    assert!(matches!(ModelWeights::from_bytes(&flipped), Err(e) if e.to_string().contains("checksum")));
    assert!(ModelWeights::from_bytes(&bytes[..bytes.len() - 9]).is_err());
    let mut magic = bytes;
    magic[0] = b'X';
    let err = ModelWeights::from_bytes(&magic).unwrap_err();
    assert!(err.to_string().to_lowercase().contains("magic"), "{err}");
}

#[test]
fn ten_second_clip_gives_twenty_bounded_score_vectors() {
    let m = random_model(14, 5);
    let out = infer_clip(&noise_clip(1, 160_000), &m).unwrap();
    assert_eq!(out.len(), 20);
    for (i, s) in out.iter().enumerate() {
        assert_eq!(s.window_index, i);
        assert_eq!(s.scores.len(), 14);
        // large random-head logits can round to exactly 1.0 in f32
        assert!(s.scores.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn silent_clip_interior_windows_agree() {
    let m = random_model(3, 6);
    let out = infer_clip(&Waveform::silence(160_000, 16_000), &m).unwrap();
    for s in &out[1..19] {
        assert_eq!(s.scores, out[1].scores);
    }
}

#[test]
fn windows_inside_each_copy_of_a_doubled_clip_repeat() {
    let m = random_model(4, 7);
    let cls = Classifier::new(&m, FrontendConfig::default()).unwrap();
    let clip = noise_clip(2, 160_000);
    let single = cls.infer_clip(&clip).unwrap();
    let doubled = cls.infer_clip(&clip.concat(&clip).unwrap()).unwrap();
    // 160000 is not a multiple of the hop, so copy two starts mid-window; only
    // windows fully inside the first copy line up sample for sample
    for i in 0..19 {
        for (a, b) in single[i].scores.iter().zip(&doubled[i].scores) {
            assert!((a - b).abs() <= 1e-5);
        }
    }
    let aligned = noise_clip(3, 7_680 * 10);
    let single = cls.infer_clip(&aligned).unwrap();
    let doubled = cls.infer_clip(&aligned.concat(&aligned).unwrap()).unwrap();
    for i in 0..single.len() - 1 {
        for (a, b) in single[i].scores.iter().zip(&doubled[i + 10].scores) {
            assert!((a - b).abs() <= 1e-5, "window {i}");
        }
    }
}

fn naive_conv(x: &Tensor3, k: &[f32], kh: usize, kw: usize, cout: usize, s: usize, depthwise: bool) -> Vec<f64> {
    let out_dim = |n: usize| (n + s - 1) / s;
    let pad = |n: usize, kk: usize| ((out_dim(n) - 1) * s + kk).saturating_sub(n) / 2;
    let (oh, ow) = (out_dim(x.h), out_dim(x.w));
    let (pt, pl) = (pad(x.h, kh), pad(x.w, kw));
    let cout = if depthwise { x.c } else { cout };
    let mut out = vec![0.0; oh * ow * cout];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..cout {
                let mut acc = 0.0f64;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let (iy, ix) = ((oy * s + ky) as i64 - pt as i64, (ox * s + kx) as i64 - pl as i64);
                        if iy < 0 || ix < 0 || iy >= x.h as i64 || ix >= x.w as i64 {
                            continue;
                        }
                        let (iy, ix) = (iy as usize, ix as usize);
                        if depthwise {
                            acc += x.at(iy, ix, co) as f64 * k[(ky * kw + kx) * x.c + co] as f64;
                        } else {
                            for ci in 0..x.c {
                                acc += x.at(iy, ix, ci) as f64 * k[((ky * kw + kx) * x.c + ci) * cout + co] as f64;
                            }
                        }
                    }
                }
                out[(oy * ow + ox) * cout + co] = acc;
            }
        }
    }
    out
}

fn close(a: &[f32], b: &[f64]) -> bool {
    let scale = b.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (*x as f64 - y).abs() <= 1e-5 * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolutions_match_direct_loops(
        h in 1usize..10, w in 1usize..10, cin in 1usize..6, cout in 1usize..6,
        k in prop::sample::select(vec![1usize, 3]), s in 1usize..=2, seed in any::<u64>(),
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor3::new(h, w, cin, (0..h * w * cin).map(|_| r.random_range(-2.0f32..2.0)).collect()).unwrap();
        let kernel: Vec<f32> = (0..k * k * cin * cout).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let got = conv2d(&x, &kernel, k, k, cout, s, None).unwrap();
        prop_assert!(close(&got.data, &naive_conv(&x, &kernel, k, k, cout, s, false)));
        let dk: Vec<f32> = (0..9 * cin).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let got = depthwise_conv2d(&x, &dk, 3, 3, s, None).unwrap();
        prop_assert!(close(&got.data, &naive_conv(&x, &dk, 3, 3, 0, s, true)));
    }
}
