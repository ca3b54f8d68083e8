mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sss_denoise::nn::{Shape, Tensor};
use sss_denoise::noise::add_gaussian;
use sss_denoise::self2self::{
    checkpoint, denoise, predict_ensemble, train, BernoulliMask, PredictConfig, TrainConfig,
    TrainedModel, UNet, UNetSpec,
};
use sss_denoise::synthetic::sonar_scene;
use sss_denoise::{Dims, GrayImage};

fn small_config(iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        channels_enc: 6,
        channels_dec: 8,
        iterations,
        seed,
        lr: 1e-3,
        ..TrainConfig::default()
    }
}

fn noisy_scene(side: usize) -> GrayImage {
    let clean = sonar_scene(128, 128, 3)
        .unwrap()
        .crop(32, 32, side, side)
        .unwrap();
    add_gaussian(&clean, 0.1, 9).unwrap()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn pairs_are_exact_and_balanced() {
    let r = common::sampler_exactness(100, 0.7);
    assert_eq!(r.exact_identity, r.trials);
    assert!(r.within_bound >= 99, "{} of {}", r.within_bound, r.trials);
}

#[test]
fn first_pconv_renormalizes_half_masked_windows() {
    let spec = UNetSpec {
        in_channels: 1,
        enc_channels: 3,
        dec_channels: 4,
        depth: 5,
        lrelu_alpha: 0.1,
        dropout_rate: 0.3,
    };
    let net = UNet::<f64>::new(spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let side = 32;
    // left half holes
    let bits: Vec<u8> = (0..side * side)
        .map(|i| u8::from(i % side >= side / 2))
        .collect();
    let mask = BernoulliMask::new(side, side, bits.clone()).unwrap();
    let y = GrayImage::from_fn(side, side, |x, r| ((x * 7 + r * 13) % 29) as f64 / 28.0).unwrap();
    let masked: Vec<f64> = y
        .data()
        .iter()
        .zip(&bits)
        .map(|(&v, &b)| v * f64::from(b))
        .collect();
    let input = Tensor::new(Shape::new(1, side, side), masked.clone()).unwrap();
    let trace = net
        .forward(
            &input,
            &mask.to_tensor(),
            false,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
    let act = trace.encoder_activation(0).unwrap();
    let params = net.params();
    let (w, b) = (&params[0].value, &params[1].value);

    // (row, col): deep in the holes, on the boundary, inside valid data, at the corner
    for (r, c) in [
        (10, 3),
        (10, 15),
        (10, 16),
        (20, 17),
        (0, 31),
        (31, 16),
        (5, 25),
    ] {
        for o in 0..3 {
            let mut raw = 0.0;
            let mut valid = 0usize;
            for ky in 0..3 {
                for kx in 0..3 {
                    let (yy, xx) = (r as isize + ky - 1, c as isize + kx - 1);
                    if yy < 0 || xx < 0 || yy >= side as isize || xx >= side as isize {
                        continue;
                    }
                    let i = yy as usize * side + xx as usize;
                    valid += usize::from(bits[i]);
                    raw += w[o * 9 + ky as usize * 3 + kx as usize] * masked[i];
                }
            }
            let pre = if valid == 0 {
                b[o]
            } else {
                raw * 9.0 / valid as f64 + b[o]
            };
            let want = if pre > 0.0 { pre } else { 0.1 * pre };
            let got = act.at(o, r, c);
            assert!(
                (got - want).abs() < 1e-12,
                "({r},{c}) ch {o}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn training_loss_decreases_on_noisy_crop() {
    let y = noisy_scene(64);
    let mut losses = Vec::new();
    train(&y, &small_config(1000, 1), |_, l| losses.push(l)).unwrap();
    let early = median(&mut losses[..100].to_vec());
    let late = median(&mut losses[900..].to_vec());
    assert!(late < early, "late {late} early {early}");
}

fn trained_model() -> (TrainedModel, GrayImage) {
    let y = noisy_scene(32);
    (train(&y, &small_config(150, 2), |_, _| {}).unwrap(), y)
}

#[test]
fn ensemble_is_mean_of_members() {
    let (model, y) = trained_model();
    let cfg = PredictConfig {
        ensemble: 6,
        seed: 21,
    };
    let x = predict_ensemble(&model, &y, &cfg).unwrap();
    let members: Vec<_> = (0..6)
        .map(|n| model.predict_member(&y, 21, n).unwrap())
        .collect();
    for i in 0..y.len() {
        let mean = members.iter().map(|m| f64::from(m.data()[i])).sum::<f64>() / 6.0;
        assert!((x.data()[i] - mean).abs() <= 1e-6);
    }

    let single = predict_ensemble(
        &model,
        &y,
        &PredictConfig {
            ensemble: 1,
            seed: 21,
        },
    )
    .unwrap();
    let want: Vec<f64> = members[0].data().iter().map(|&v| f64::from(v)).collect();
    assert_eq!(single.data(), &want[..]);
}

#[test]
fn larger_ensembles_vary_less_across_seeds() {
    let (model, y) = trained_model();
    let variance = |ensemble: usize| {
        let runs: Vec<GrayImage> = (0..8)
            .map(|seed| predict_ensemble(&model, &y, &PredictConfig { ensemble, seed }).unwrap())
            .collect();
        let mut total = 0.0;
        for i in 0..y.len() {
            let vals: Vec<f64> = runs.iter().map(|r| r.data()[i]).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            total += vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64;
        }
        total / y.len() as f64
    };
    let (v1, v20) = (variance(1), variance(20));
    assert!(v20 <= v1, "N=20 {v20} vs N=1 {v1}");
}

#[test]
fn denoise_is_deterministic_and_keeps_dims() {
    let y = noisy_scene(48).crop(0, 0, 40, 35).unwrap();
    let tcfg = small_config(5, 3);
    let pcfg = PredictConfig {
        ensemble: 3,
        seed: 8,
    };
    let (a, model) = denoise(&y, &tcfg, &pcfg, |_, _| {}).unwrap();
    let (b, _) = denoise(&y, &tcfg, &pcfg, |_, _| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dims(), y.dims());
    assert_eq!(
        model.dims,
        Dims {
            width: 64,
            height: 64
        }
    );
    let other = denoise(&y, &tcfg, &PredictConfig { seed: 9, ..pcfg }, |_, _| {})
        .unwrap()
        .0;
    assert_ne!(a, other);
}

#[test]
fn checkpoint_restores_identical_predictions() {
    let (model, y) = trained_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    checkpoint::save(&model, &path).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back, model);
    let cfg = PredictConfig {
        ensemble: 2,
        seed: 1,
    };
    assert_eq!(
        predict_ensemble(&back, &y, &cfg).unwrap(),
        predict_ensemble(&model, &y, &cfg).unwrap()
    );
}
