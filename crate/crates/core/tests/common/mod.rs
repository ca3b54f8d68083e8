//! Shared oracles for the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sss_denoise::metrics::SsimConfig;
use sss_denoise::nn::{
    dropout, dropout_backward, lrelu, lrelu_backward, maxpool2d, maxpool2d_backward, sigmoid,
    sigmoid_backward, upsample_concat, upsample_concat_backward, Conv2d, PConv2d, Shape, Tensor,
};
use sss_denoise::self2self::{masked_loss, BernoulliMask, LossMode, SamplePair, UNet, UNetSpec};
use sss_denoise::GrayImage;

pub const FD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-5;

/// Below this magnitude both gradients are treated as exact zeros.
const ZERO_FLOOR: f64 = 1e-9;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x` for the coordinates in `indices`.
pub fn central_diff(x: &[f64], indices: &[usize], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    indices
        .iter()
        .map(|&i| {
            probe[i] = x[i] + FD_EPS;
            let up = f(&probe);
            probe[i] = x[i] - FD_EPS;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

pub fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::new(shape, random_vec(shape.len(), -1.0, 1.0, rng)).unwrap()
}

/// Values whose magnitudes stay at least `gap` away from zero.
pub fn away_from_zero(shape: Shape, gap: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let data = (0..shape.len())
        .map(|_| {
            let m = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-layer gradient checks. Each one contracts the layer output with a
/// fixed random cotangent `r`, so `loss = <r, layer(x)>` and the analytic
/// input gradient is `backward(r)`. Returns `(name, max relative error)`.
pub fn layer_gradient_checks(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();

    // conv2d: input, weight and bias gradients
    {
        let mut conv = Conv2d::<f64>::new("c", 2, 3, 3, 1);
        conv.init_kaiming(0.1, &mut rng);
        conv.bias.value = random_vec(3, -0.5, 0.5, &mut rng);
        let x = random_tensor(Shape::new(2, 6, 5), &mut rng);
        let (y, cache) = conv.forward(&x).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let mut layer = conv.clone();
        let dx = layer.backward(&cache, &r).unwrap();
        let loss_x = |v: &[f64]| {
            let t = Tensor::new(x.shape(), v.to_vec()).unwrap();
            dot(conv.forward(&t).unwrap().0.data(), r.data())
        };
        let mut worst = max_rel_err(dx.data(), &central_diff(x.data(), &all(x.len()), loss_x));
        let loss_w = |w: &[f64]| {
            let mut c = conv.clone();
            c.weight.value = w.to_vec();
            dot(c.forward(&x).unwrap().0.data(), r.data())
        };
        let w = &conv.weight.value;
        worst = worst.max(max_rel_err(
            &layer.weight.grad,
            &central_diff(w, &all(w.len()), loss_w),
        ));
        let loss_b = |b: &[f64]| {
            let mut c = conv.clone();
            c.bias.value = b.to_vec();
            dot(c.forward(&x).unwrap().0.data(), r.data())
        };
        let b = &conv.bias.value;
        worst = worst.max(max_rel_err(
            &layer.bias.grad,
            &central_diff(b, &all(b.len()), loss_b),
        ));
        results.push(("conv2d", worst));
    }

    // partial convolution with a ragged mask, including an all-hole corner
    {
        let mut pconv = PConv2d::<f64>::new("p", 2, 3, 3);
        pconv.conv.init_kaiming(0.1, &mut rng);
        pconv.conv.bias.value = random_vec(3, -0.5, 0.5, &mut rng);
        let x = random_tensor(Shape::new(2, 6, 6), &mut rng);
        let mut bits: Vec<f64> = (0..36)
            .map(|_| f64::from(u8::from(rng.random_bool(0.6))))
            .collect();
        for i in [0, 1, 2, 6, 7, 8, 12, 13, 14] {
            bits[i] = 0.0;
        }
        let mask = Tensor::new(Shape::new(1, 6, 6), bits).unwrap();
        let (y, _, cache) = pconv.forward(&x, &mask).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let mut layer = pconv.clone();
        let dx = layer.backward(&cache, &r).unwrap();
        let loss_x = |v: &[f64]| {
            let t = Tensor::new(x.shape(), v.to_vec()).unwrap();
            dot(pconv.forward(&t, &mask).unwrap().0.data(), r.data())
        };
        let mut worst = max_rel_err(dx.data(), &central_diff(x.data(), &all(x.len()), loss_x));
        let loss_w = |w: &[f64]| {
            let mut p = pconv.clone();
            p.conv.weight.value = w.to_vec();
            dot(p.forward(&x, &mask).unwrap().0.data(), r.data())
        };
        let w = &pconv.conv.weight.value;
        worst = worst.max(max_rel_err(
            &layer.conv.weight.grad,
            &central_diff(w, &all(w.len()), loss_w),
        ));
        let loss_b = |b: &[f64]| {
            let mut p = pconv.clone();
            p.conv.bias.value = b.to_vec();
            dot(p.forward(&x, &mask).unwrap().0.data(), r.data())
        };
        let b = &pconv.conv.bias.value;
        worst = worst.max(max_rel_err(
            &layer.conv.bias.grad,
            &central_diff(b, &all(b.len()), loss_b),
        ));
        results.push(("pconv2d", worst));
    }

    // leaky ReLU away from the kink
    {
        let x = away_from_zero(Shape::new(2, 4, 4), 0.05, &mut rng);
        let y = lrelu(&x, 0.1);
        let r = random_tensor(y.shape(), &mut rng);
        let dx = lrelu_backward(&y, &r, 0.1).unwrap();
        let num = central_diff(x.data(), &all(x.len()), |v| {
            dot(
                lrelu(&Tensor::new(x.shape(), v.to_vec()).unwrap(), 0.1).data(),
                r.data(),
            )
        });
        results.push(("lrelu", max_rel_err(dx.data(), &num)));
    }

    // max pooling over distinct values spaced well beyond the step
    {
        let shape = Shape::new(2, 4, 6);
        let mut order: Vec<usize> = (0..shape.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let x = Tensor::new(shape, order.iter().map(|&k| k as f64 * 0.01).collect()).unwrap();
        let (y, cache) = maxpool2d(&x).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let dx = maxpool2d_backward(&cache, &r).unwrap();
        let num = central_diff(x.data(), &all(x.len()), |v| {
            dot(
                maxpool2d(&Tensor::new(shape, v.to_vec()).unwrap())
                    .unwrap()
                    .0
                    .data(),
                r.data(),
            )
        });
        results.push(("maxpool2d", max_rel_err(dx.data(), &num)));
    }

    // upsample + concat, both inputs
    {
        let low = random_tensor(Shape::new(2, 3, 4), &mut rng);
        let skip = random_tensor(Shape::new(3, 6, 8), &mut rng);
        let y = upsample_concat(&low, &skip).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let (dlow, dskip) = upsample_concat_backward(&r, low.shape()).unwrap();
        let num_low = central_diff(low.data(), &all(low.len()), |v| {
            let l = Tensor::new(low.shape(), v.to_vec()).unwrap();
            dot(upsample_concat(&l, &skip).unwrap().data(), r.data())
        });
        let num_skip = central_diff(skip.data(), &all(skip.len()), |v| {
            let s = Tensor::new(skip.shape(), v.to_vec()).unwrap();
            dot(upsample_concat(&low, &s).unwrap().data(), r.data())
        });
        let worst = max_rel_err(dlow.data(), &num_low).max(max_rel_err(dskip.data(), &num_skip));
        results.push(("upsample_concat", worst));
    }

    // dropout with a frozen stream
    {
        let x = random_tensor(Shape::new(2, 4, 4), &mut rng);
        let (y, mask) = dropout(&x, 0.3, &mut ChaCha8Rng::seed_from_u64(5), true).unwrap();
        let r = random_tensor(y.shape(), &mut rng);
        let dx = dropout_backward(&r, mask.as_deref()).unwrap();
        let num = central_diff(x.data(), &all(x.len()), |v| {
            let t = Tensor::new(x.shape(), v.to_vec()).unwrap();
            let (out, _) = dropout(&t, 0.3, &mut ChaCha8Rng::seed_from_u64(5), true).unwrap();
            dot(out.data(), r.data())
        });
        results.push(("dropout", max_rel_err(dx.data(), &num)));
    }

    // sigmoid
    {
        let x = Tensor::new(Shape::new(1, 4, 4), random_vec(16, -6.0, 6.0, &mut rng)).unwrap();
        let y = sigmoid(&x);
        let r = random_tensor(y.shape(), &mut rng);
        let dx = sigmoid_backward(&y, &r).unwrap();
        let num = central_diff(x.data(), &all(x.len()), |v| {
            dot(
                sigmoid(&Tensor::new(x.shape(), v.to_vec()).unwrap()).data(),
                r.data(),
            )
        });
        results.push(("sigmoid", max_rel_err(dx.data(), &num)));
    }

    // masked loss with respect to the prediction
    {
        let target = GrayImage::from_fn(5, 4, |_, _| rng.random::<f64>()).unwrap();
        let bits = (0..20).map(|_| u8::from(rng.random_bool(0.7))).collect();
        let mask = BernoulliMask::new(5, 4, bits).unwrap();
        let pred = Tensor::new(Shape::new(1, 4, 5), random_vec(20, 0.0, 1.0, &mut rng)).unwrap();
        let (_, grad) = masked_loss(&pred, &target, &mask, LossMode::Complement).unwrap();
        let num = central_diff(pred.data(), &all(20), |v| {
            let p = Tensor::new(pred.shape(), v.to_vec()).unwrap();
            masked_loss(&p, &target, &mask, LossMode::Complement)
                .unwrap()
                .0
        });
        results.push(("masked_loss", max_rel_err(grad.data(), &num)));
    }

    results
}

/// Result of checking the whole network plus masked loss.
pub struct CompositeCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates skipped because the step crossed a ReLU or pooling kink.
    pub skipped: usize,
}

/// Finite-difference check of `masked_loss(net(S*y, S), (1-S)*y)` with
/// respect to a sample of every parameter tensor and every input pixel.
/// Dropout is active with a fixed stream so every evaluation sees the same
/// dropout pattern.
pub fn composite_gradient_check(
    side: usize,
    depth: usize,
    per_tensor: usize,
    seed: u64,
) -> CompositeCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = UNetSpec {
        in_channels: 1,
        enc_channels: 3,
        dec_channels: 4,
        depth,
        lrelu_alpha: 0.1,
        dropout_rate: 0.3,
    };
    let net = UNet::<f64>::new(spec, &mut rng).unwrap();
    let y = GrayImage::from_fn(side, side, |_, _| rng.random::<f64>()).unwrap();
    let bits = (0..side * side)
        .map(|_| u8::from(rng.random_bool(0.7)))
        .collect();
    let pair = SamplePair::from_mask(&y, BernoulliMask::new(side, side, bits).unwrap()).unwrap();
    let mask = pair.mask.to_tensor::<f64>();
    let input = Tensor::new(Shape::new(1, side, side), pair.input.data().to_vec()).unwrap();

    let eval = |net: &UNet<f64>, input: &Tensor<f64>| {
        let trace = net
            .forward(input, &mask, true, &mut ChaCha8Rng::seed_from_u64(77))
            .unwrap();
        let (loss, grad) = masked_loss(
            trace.output(),
            &pair.target,
            &pair.mask,
            LossMode::Complement,
        )
        .unwrap();
        (loss, grad, trace)
    };

    let (_, grad, trace) = eval(&net, &input);
    let base_sig = trace.kink_signature();
    let mut analytic = net.clone();
    analytic.zero_grad();
    let dinput = analytic.backward(&trace, &grad).unwrap();

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    let mut check = |a: f64, perturbed: &mut dyn FnMut(f64) -> (f64, Vec<u32>), x0: f64| {
        let (up, sig_up) = perturbed(x0 + FD_EPS);
        let (down, sig_down) = perturbed(x0 - FD_EPS);
        if sig_up != base_sig || sig_down != base_sig {
            skipped += 1;
            return;
        }
        let n = (up - down) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(a, n));
        checked += 1;
    };

    let tensors = net.params().len();
    for t in 0..tensors {
        let len = net.params()[t].len();
        let picks: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..len)).collect()
        };
        for i in picks {
            let a = analytic.params()[t].grad[i];
            let x0 = net.params()[t].value[i];
            let mut perturbed = |v: f64| {
                let mut probe = net.clone();
                probe.params_mut()[t].value[i] = v;
                let (loss, _, tr) = eval(&probe, &input);
                (loss, tr.kink_signature())
            };
            check(a, &mut perturbed, x0);
        }
    }
    for i in 0..input.len() {
        let a = dinput.data()[i];
        let x0 = input.data()[i];
        let mut perturbed = |v: f64| {
            let mut probe = input.clone();
            probe.data_mut()[i] = v;
            let (loss, _, tr) = eval(&net, &probe);
            (loss, tr.kink_signature())
        };
        check(a, &mut perturbed, x0);
    }
    CompositeCheck {
        max_rel_err: worst,
        checked,
        skipped,
    }
}

/// Per-window SSIM evaluated directly from its definition.
pub fn ssim_brute_force(a: &GrayImage, b: &GrayImage, cfg: &SsimConfig) -> f64 {
    let n = cfg.window;
    let half = (n / 2) as f64;
    let mut w2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (di, dj) = (i as f64 - half, j as f64 - half);
            w2[i * n + j] =
                (-(di * di + dj * dj) / (2.0 * cfg.window_sigma * cfg.window_sigma)).exp();
        }
    }
    let total: f64 = w2.iter().sum();
    w2.iter_mut().for_each(|w| *w /= total);
    let c1 = (cfg.k1 * cfg.peak).powi(2);
    let c2 = (cfg.k2 * cfg.peak).powi(2);
    let c3 = c2 / 2.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for oy in 0..=a.height() - n {
        for ox in 0..=a.width() - n {
            let at = |img: &GrayImage, i: usize, j: usize| img.get(ox + j, oy + i);
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    mx += w2[i * n + j] * at(a, i, j);
                    my += w2[i * n + j] * at(b, i, j);
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let (dx, dy) = (at(a, i, j) - mx, at(b, i, j) - my);
                    vx += w2[i * n + j] * dx * dx;
                    vy += w2[i * n + j] * dy * dy;
                    cov += w2[i * n + j] * dx * dy;
                }
            }
            let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            let c = (2.0 * vx.sqrt() * vy.sqrt() + c2) / (vx + vy + c2);
            let s = (cov + c3) / (vx.sqrt() * vy.sqrt() + c3);
            sum += l.powf(cfg.alpha) * c.powf(cfg.beta) * s.powf(cfg.gamma);
            count += 1;
        }
    }
    sum / count as f64
}

/// Outcome of drawing pairs from `seeds` seeds on a 100x100 image.
pub struct SamplerCheck {
    pub exact_identity: usize,
    pub within_bound: usize,
    pub trials: usize,
}

pub fn sampler_exactness(trials: u64, keep_prob: f64) -> SamplerCheck {
    let y = GrayImage::from_fn(100, 100, |x, r| ((x * 37 + r * 101) % 256) as f64 / 255.0).unwrap();
    let n = y.len() as f64;
    let bound = 3.0 * (keep_prob * (1.0 - keep_prob) / n).sqrt();
    let mut out = SamplerCheck {
        exact_identity: 0,
        within_bound: 0,
        trials: trials as usize,
    };
    for seed in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = sss_denoise::self2self::sample_pair(&y, keep_prob, &mut rng).unwrap();
        let exact = pair
            .input
            .data()
            .iter()
            .zip(pair.target.data())
            .zip(y.data())
            .all(|((r, rb), v)| (r + rb).to_bits() == v.to_bits());
        out.exact_identity += usize::from(exact);
        let mean = pair.mask.ones() as f64 / n;
        out.within_bound += usize::from((mean - keep_prob).abs() <= bound);
    }
    out
}
