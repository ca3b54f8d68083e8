//! Image quality indexes: MSE, PSNR, SSIM, the flowing index (mean over
//! standard deviation) and the edge preservation index.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// A metric outcome. Degenerate inputs produce a named outcome instead of
/// an infinite or NaN number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Score {
    Value(f64),
    /// Zero error between the two images (PSNR is unbounded).
    Identical,
    /// Zero denominator (constant image).
    Undefined,
    /// The metric needs a clean reference that does not exist.
    NotAvailable,
}

impl Score {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Score::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Value(v) => write!(f, "{v:.4}"),
            Score::Identical => f.write_str("identical"),
            Score::Undefined => f.write_str("undefined"),
            Score::NotAvailable => f.write_str("n/a"),
        }
    }
}

impl FromStr for Score {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "identical" => Ok(Score::Identical),
            "undefined" => Ok(Score::Undefined),
            "n/a" => Ok(Score::NotAvailable),
            t => t
                .parse()
                .map(Score::Value)
                .map_err(|_| Error::parse("metric value", s, "not a number or annotation")),
        }
    }
}

/// One table row worth of indexes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr: Score,
    pub ssim: Score,
    pub fi: Score,
    pub epi: Score,
}

impl MetricReport {
    /// Evaluates `denoised`. PSNR and SSIM need `clean`; EPI is measured
    /// against the noisy `raw` input.
    pub fn evaluate(
        denoised: &GrayImage,
        raw: &GrayImage,
        clean: Option<&GrayImage>,
        ssim_cfg: &SsimConfig,
    ) -> Result<Self> {
        let (psnr, ssim) = match clean {
            Some(clean) => (
                psnr(denoised, clean, ssim_cfg.peak)?,
                Score::Value(self::ssim(denoised, clean, ssim_cfg)?),
            ),
            None => (Score::NotAvailable, Score::NotAvailable),
        };
        Ok(MetricReport {
            psnr,
            ssim,
            fi: fi(denoised),
            epi: epi(denoised, raw)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::param(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.window_sigma > 0.0 && self.peak > 0.0 && self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::param(
                "SSIM window sigma, peak, k1 and k2 must be positive",
            ));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-(d * d) / (2.0 * self.window_sigma * self.window_sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

fn same_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.dims() == b.dims() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// `10 log10(peak^2 / MSE)`; [`Score::Identical`] when the MSE is zero.
pub fn psnr(a: &GrayImage, b: &GrayImage, peak: f64) -> Result<Score> {
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::param(format!(
            "PSNR peak must be positive, got {peak}"
        )));
    }
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(Score::Identical);
    }
    Ok(Score::Value(10.0 * (peak * peak / err).log10()))
}

/// PSNR of two images expressed on a different peak scale, e.g. 8-bit
/// values with `peak = 255`.
pub fn psnr_from_mse(mse: f64, peak: f64) -> Score {
    if mse == 0.0 {
        Score::Identical
    } else {
        Score::Value(10.0 * (peak * peak / mse).log10())
    }
}

/// Valid-mode separable filtering with `taps` along both axes.
fn blur_valid(src: &[f64], width: usize, height: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let ow = width - n + 1;
    let oh = height - n + 1;
    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + n]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * horiz[(y + i) * ow + x])
                .sum();
        }
    }
    (out, ow, oh)
}

/// Mean SSIM over every window position that lies fully inside the image.
pub fn ssim(a: &GrayImage, b: &GrayImage, cfg: &SsimConfig) -> Result<f64> {
    cfg.validate()?;
    same_dims(a, b)?;
    if a.width() < cfg.window || a.height() < cfg.window {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} image is smaller than the {} pixel SSIM window",
            a.width(),
            a.height(),
            cfg.window
        )));
    }
    let (w, h) = (a.width(), a.height());
    let taps = cfg.taps();
    let x = a.data();
    let y = b.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let (mu_x, ..) = blur_valid(x, w, h, &taps);
    let (mu_y, ..) = blur_valid(y, w, h, &taps);
    let (e_xx, ..) = blur_valid(&xx, w, h, &taps);
    let (e_yy, ..) = blur_valid(&yy, w, h, &taps);
    let (e_xy, ..) = blur_valid(&xy, w, h, &taps);

    let c1 = (cfg.k1 * cfg.peak).powi(2);
    let c2 = (cfg.k2 * cfg.peak).powi(2);
    let c3 = c2 / 2.0;
    let total: f64 = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = (e_xx[i] - mx * mx).max(0.0);
            let var_y = (e_yy[i] - my * my).max(0.0);
            let cov = e_xy[i] - mx * my;
            ssim_terms(mx, my, var_x, var_y, cov, c1, c2, c3, cfg)
        })
        .sum();
    Ok(total / mu_x.len() as f64)
}

/// Luminance, contrast, and structure terms combined with the configured
/// exponents.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ssim_terms(
    mx: f64,
    my: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    cfg: &SsimConfig,
) -> f64 {
    let (sx, sy) = (var_x.sqrt(), var_y.sqrt());
    let l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    let c = (2.0 * sx * sy + c2) / (var_x + var_y + c2);
    let s = (cov + c3) / (sx * sy + c3);
    l.powf(cfg.alpha) * c.powf(cfg.beta) * s.powf(cfg.gamma)
}

/// Mean over population standard deviation; [`Score::Undefined`] for a
/// constant image.
pub fn fi(img: &GrayImage) -> Score {
    let first = img.data()[0];
    if img.data().iter().all(|&v| v == first) {
        return Score::Undefined;
    }
    let n = img.len() as f64;
    let mean = img.data().iter().sum::<f64>() / n;
    let var = img
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n;
    Score::Value(mean / var.sqrt())
}

/// Sum of absolute differences over adjacent pairs in four directions
/// (right, down, down-right, down-left), each unordered pair once.
pub fn gradient_mass(img: &GrayImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = img.get(x, y);
            if x + 1 < w {
                total += (v - img.get(x + 1, y)).abs();
            }
            if y + 1 < h {
                total += (v - img.get(x, y + 1)).abs();
                if x + 1 < w {
                    total += (v - img.get(x + 1, y + 1)).abs();
                }
                if x > 0 {
                    total += (v - img.get(x - 1, y + 1)).abs();
                }
            }
        }
    }
    total
}

/// Edge preservation index of `denoised` relative to `raw`.
pub fn epi(denoised: &GrayImage, raw: &GrayImage) -> Result<Score> {
    same_dims(denoised, raw)?;
    let den = gradient_mass(raw);
    if den == 0.0 {
        return Ok(Score::Undefined);
    }
    Ok(Score::Value(gradient_mass(denoised) / den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(w: usize, h: usize, data: &[f64]) -> GrayImage {
        GrayImage::new(w, h, data.to_vec()).unwrap()
    }

    fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> GrayImage {
        GrayImage::from_fn(w, h, |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn mse_cases() {
        let a = img(2, 2, &[0.0, 0.5, 1.0, 0.25]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = img(2, 2, &[0.5, 0.5, 1.0, 0.25]);
        assert!((mse(&a, &b).unwrap() - 0.0625).abs() < 1e-15);
        let c = img(1, 4, &[0.0; 4]);
        assert!(matches!(mse(&a, &c), Err(Error::DimensionMismatch(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, q) = (random_image(9, 7, &mut rng), random_image(9, 7, &mut rng));
        let mut naive = 0.0;
        for y in 0..7 {
            for x in 0..9 {
                naive += (p.get(x, y) - q.get(x, y)).powi(2);
            }
        }
        assert!((mse(&p, &q).unwrap() - naive / 63.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_cases() {
        let a = img(2, 2, &[0.0, 0.5, 1.0, 0.25]);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), Score::Identical);
        let b = img(2, 2, &[0.5, 0.5, 1.0, 0.25]);
        let v = psnr(&a, &b, 1.0).unwrap().value().unwrap();
        assert!((v - 12.0412).abs() < 1e-4, "{v}");
        assert!(psnr(&a, &b, 0.0).is_err());

        // 8-bit scale: one pixel off by 16 in a 2x2 image, MSE = 64
        let v = psnr_from_mse(256.0 / 4.0, 255.0).value().unwrap();
        assert!((v - 30.069).abs() < 1e-3, "{v}");
        // same case through the image path with peak 1
        let p = img(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let q = img(2, 2, &[16.0 / 255.0, 0.0, 0.0, 0.0]);
        let v = psnr(&p, &q, 1.0).unwrap().value().unwrap();
        assert!((v - 30.069).abs() < 1e-3, "{v}");
    }

    #[test]
    fn ssim_identity_and_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_image(20, 16, &mut rng);
        let cfg = SsimConfig::default();
        assert!((ssim(&x, &x, &cfg).unwrap() - 1.0).abs() < 1e-9);

        let a = GrayImage::filled(16, 16, 0.5).unwrap();
        let b = GrayImage::filled(16, 16, 0.25).unwrap();
        let v = ssim(&a, &b, &cfg).unwrap();
        assert!((v - 0.2501 / 0.3126).abs() < 1e-9);
        assert!((v - 0.8001).abs() < 1e-4);
    }

    #[test]
    fn ssim_rejects_small_images_and_bad_config() {
        let a = GrayImage::filled(10, 20, 0.5).unwrap();
        assert!(ssim(&a, &a, &SsimConfig::default()).is_err());
        let cfg = SsimConfig {
            window: 4,
            ..SsimConfig::default()
        };
        let b = GrayImage::filled(20, 20, 0.5).unwrap();
        assert!(ssim(&b, &b, &cfg).is_err());
    }

    #[test]
    fn fi_cases() {
        let half = img(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((fi(&half).value().unwrap() - 1.0).abs() < 1e-15);
        let q = img(4, 1, &[0.25, 0.75, 0.75, 0.25]);
        assert!((fi(&q).value().unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(fi(&GrayImage::filled(3, 3, 0.4).unwrap()), Score::Undefined);
    }

    /// Enumerates every unordered pair of 8-connected pixels.
    fn pair_mass_oracle(im: &GrayImage) -> f64 {
        let (w, h) = (im.width() as isize, im.height() as isize);
        let mut total = 0.0;
        for p in 0..w * h {
            for q in (p + 1)..w * h {
                let (px, py, qx, qy) = (p % w, p / w, q % w, q / w);
                if (px - qx).abs() <= 1 && (py - qy).abs() <= 1 {
                    total += (im.data()[p as usize] - im.data()[q as usize]).abs();
                }
            }
        }
        total
    }

    #[test]
    fn epi_cases() {
        let raw = img(3, 3, &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(epi(&raw, &raw).unwrap(), Score::Value(1.0));
        let flat = GrayImage::filled(3, 3, 0.2).unwrap();
        assert_eq!(epi(&flat, &raw).unwrap(), Score::Value(0.0));
        assert_eq!(epi(&raw, &flat).unwrap(), Score::Undefined);

        // step 0|1 blurred to 0|0.5: raw pairs sum to 7 (3 horizontal,
        // 2 down-right, 2 down-left), denoised to 3.5
        let blurred = img(3, 3, &[0.0, 0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.5, 0.5]);
        assert_eq!(pair_mass_oracle(&raw), 7.0);
        assert_eq!(gradient_mass(&raw), 7.0);
        let expect = pair_mass_oracle(&blurred) / pair_mass_oracle(&raw);
        assert_eq!(epi(&blurred, &raw).unwrap(), Score::Value(expect));
        assert_eq!(expect, 0.5);
    }

    #[test]
    fn gradient_mass_matches_pair_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (w, h) in [(1, 5), (5, 1), (4, 4), (7, 3)] {
            let im = random_image(w, h, &mut rng);
            assert!((gradient_mass(&im) - pair_mass_oracle(&im)).abs() < 1e-12);
        }
    }

    #[test]
    fn score_text_roundtrip() {
        for s in [
            Score::Value(28.9961),
            Score::Identical,
            Score::Undefined,
            Score::NotAvailable,
        ] {
            assert_eq!(s.to_string().parse::<Score>().unwrap(), s);
        }
        assert_eq!(Score::Value(0.84951).to_string(), "0.8495");
        assert!("nan-ish".parse::<Score>().is_err());
    }

    fn pair() -> impl Strategy<Value = (GrayImage, GrayImage)> {
        (11usize..18, 11usize..18).prop_flat_map(|(w, h)| {
            (
                proptest::collection::vec(0.0f64..=1.0, w * h),
                proptest::collection::vec(0.0f64..=1.0, w * h),
            )
                .prop_map(move |(a, b)| {
                    (
                        GrayImage::new(w, h, a).unwrap(),
                        GrayImage::new(w, h, b).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn symmetric_metrics((a, b) in pair()) {
            prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
            prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
            let cfg = SsimConfig::default();
            let (ab, ba) = (ssim(&a, &b, &cfg).unwrap(), ssim(&b, &a, &cfg).unwrap());
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((ssim(&a, &a, &cfg).unwrap() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn epi_is_scale_invariant((a, b) in pair(), scale in 0.05f64..1.0) {
            prop_assume!(gradient_mass(&b) > 0.0);
            let e = epi(&a, &b).unwrap().value().unwrap();
            let scaled = epi(&a.map(|v| v * scale), &b.map(|v| v * scale)).unwrap().value().unwrap();
            prop_assert!((e - scaled).abs() < 1e-9 * e.max(1.0));
        }

        #[test]
        fn fi_ignores_pixel_order((a, _) in pair(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut data = a.data().to_vec();
            data.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled = GrayImage::new(a.width(), a.height(), data).unwrap();
            match (fi(&a), fi(&shuffled)) {
                (Score::Value(x), Score::Value(y)) => prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0)),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
