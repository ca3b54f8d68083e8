//! Classical spatial denoisers used as comparison baselines.
//!
//! Every filter reads its neighborhood with replicate (clamp-to-edge)
//! padding and sums each window in a fixed row-major order.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{clamp_unit, GrayImage};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FilterSpec {
    Mean {
        k: usize,
    },
    Median {
        k: usize,
    },
    Bilateral {
        radius: usize,
        sigma_space: f64,
        sigma_range: f64,
    },
    Wiener {
        k: usize,
    },
}

impl FilterSpec {
    pub const DEFAULT_BILATERAL: FilterSpec = FilterSpec::Bilateral {
        radius: 2,
        sigma_space: 2.0,
        sigma_range: 0.1,
    };

    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterSpec::Mean { k } | FilterSpec::Median { k } | FilterSpec::Wiener { k } => {
                check_window(k)
            }
            FilterSpec::Bilateral {
                radius,
                sigma_space,
                sigma_range,
            } => check_bilateral(radius, sigma_space, sigma_range),
        }
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        match *self {
            FilterSpec::Mean { k } => mean_filter(img, k),
            FilterSpec::Median { k } => median_filter(img, k),
            FilterSpec::Bilateral {
                radius,
                sigma_space,
                sigma_range,
            } => bilateral_filter(img, radius, sigma_space, sigma_range),
            FilterSpec::Wiener { k } => wiener_filter(img, k),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FilterSpec::Mean { .. } => "mean",
            FilterSpec::Median { .. } => "median",
            FilterSpec::Bilateral { .. } => "bilateral",
            FilterSpec::Wiener { .. } => "wiener",
        }
    }

    /// Parameters as they appear after the colon in the spec string.
    pub fn params(&self) -> Vec<String> {
        match *self {
            FilterSpec::Mean { k } | FilterSpec::Median { k } | FilterSpec::Wiener { k } => {
                vec![k.to_string()]
            }
            FilterSpec::Bilateral {
                radius,
                sigma_space,
                sigma_range,
            } => vec![
                radius.to_string(),
                format!("{sigma_space:?}"),
                format!("{sigma_range:?}"),
            ],
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name(), self.params().join(","))
    }
}

impl FromStr for FilterSpec {
    type Err = Error;

    /// `mean:3`, `median:3`, `wiener:3`, `bilateral:2,2.0,0.1`. A bare name
    /// takes the default parameters.
    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let args: Vec<&str> = args
            .map(|a| a.split(',').map(str::trim).collect())
            .unwrap_or_default();
        let window = |args: &[&str]| -> Result<usize> {
            match args {
                [] => Ok(3),
                [k] => k
                    .parse()
                    .map_err(|_| Error::parse("filter", s, "window must be an integer")),
                _ => Err(Error::parse("filter", s, "expected one window size")),
            }
        };
        let spec = match name.to_ascii_lowercase().as_str() {
            "mean" => FilterSpec::Mean { k: window(&args)? },
            "median" => FilterSpec::Median { k: window(&args)? },
            "wiener" => FilterSpec::Wiener { k: window(&args)? },
            "bilateral" => match args.as_slice() {
                [] => FilterSpec::DEFAULT_BILATERAL,
                [r, ss, sr] => {
                    let bad = |what: &str| Error::parse("filter", s, format!("bad {what}"));
                    FilterSpec::Bilateral {
                        radius: r.parse().map_err(|_| bad("radius"))?,
                        sigma_space: ss.parse().map_err(|_| bad("sigma_space"))?,
                        sigma_range: sr.parse().map_err(|_| bad("sigma_range"))?,
                    }
                }
                _ => {
                    return Err(Error::parse(
                        "filter",
                        s,
                        "bilateral takes radius,sigma_space,sigma_range",
                    ))
                }
            },
            other => {
                return Err(Error::parse(
                    "filter",
                    s,
                    format!("unknown filter {other:?}"),
                ))
            }
        };
        spec.validate()
            .map_err(|e| Error::parse("filter", s, e.to_string()))?;
        Ok(spec)
    }
}

fn check_window(k: usize) -> Result<()> {
    if k % 2 == 1 {
        Ok(())
    } else {
        Err(Error::param(format!("window size must be odd, got {k}")))
    }
}

fn check_bilateral(radius: usize, sigma_space: f64, sigma_range: f64) -> Result<()> {
    if radius < 1 {
        return Err(Error::param("bilateral radius must be at least 1"));
    }
    if !(sigma_space > 0.0 && sigma_range > 0.0) {
        return Err(Error::param(format!(
            "bilateral sigmas must be positive, got {sigma_space} and {sigma_range}"
        )));
    }
    Ok(())
}

/// Collects the replicate-padded `k x k` window around `(x, y)` into `buf`.
fn gather(img: &GrayImage, x: usize, y: usize, half: isize, buf: &mut Vec<f64>) {
    buf.clear();
    for dy in -half..=half {
        for dx in -half..=half {
            buf.push(img.get_clamped(x as isize + dx, y as isize + dy));
        }
    }
}

fn map_windows(img: &GrayImage, k: usize, mut f: impl FnMut(&mut Vec<f64>) -> f64) -> GrayImage {
    let half = (k / 2) as isize;
    let mut buf = Vec::with_capacity(k * k);
    let mut data = Vec::with_capacity(img.len());
    for y in 0..img.height() {
        for x in 0..img.width() {
            gather(img, x, y, half, &mut buf);
            data.push(clamp_unit(f(&mut buf)));
        }
    }
    GrayImage::new(img.width(), img.height(), data).expect("dimensions preserved")
}

pub fn mean_filter(img: &GrayImage, k: usize) -> Result<GrayImage> {
    check_window(k)?;
    let n = (k * k) as f64;
    Ok(map_windows(img, k, |w| w.iter().sum::<f64>() / n))
}

pub fn median_filter(img: &GrayImage, k: usize) -> Result<GrayImage> {
    check_window(k)?;
    let mid = k * k / 2;
    Ok(map_windows(img, k, |w| {
        let (_, m, _) = w.select_nth_unstable_by(mid, f64::total_cmp);
        *m
    }))
}

pub fn bilateral_filter(
    img: &GrayImage,
    radius: usize,
    sigma_space: f64,
    sigma_range: f64,
) -> Result<GrayImage> {
    check_bilateral(radius, sigma_space, sigma_range)?;
    let r = radius as isize;
    let side = 2 * radius + 1;
    let space_denom = 2.0 * sigma_space * sigma_space;
    let range_denom = 2.0 * sigma_range * sigma_range;
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx * dx + dy * dy) as f64))
        .map(|d2| (-d2 / space_denom).exp())
        .collect();
    let mut buf = Vec::with_capacity(side * side);
    let mut data = Vec::with_capacity(img.len());
    for y in 0..img.height() {
        for x in 0..img.width() {
            gather(img, x, y, r, &mut buf);
            let center = img.get(x, y);
            let (mut num, mut den) = (0.0, 0.0);
            for (&v, &ws) in buf.iter().zip(&spatial) {
                let d = center - v;
                let w = ws * (-(d * d) / range_denom).exp();
                num += w * v;
                den += w;
            }
            data.push(clamp_unit(num / den));
        }
    }
    GrayImage::new(img.width(), img.height(), data)
}

/// Local adaptive Wiener estimator. The noise power is the average of the
/// local variances over the whole image.
pub fn wiener_filter(img: &GrayImage, k: usize) -> Result<GrayImage> {
    check_window(k)?;
    let half = (k / 2) as isize;
    let n = (k * k) as f64;
    let mut buf = Vec::with_capacity(k * k);
    let mut means = Vec::with_capacity(img.len());
    let mut vars = Vec::with_capacity(img.len());
    for y in 0..img.height() {
        for x in 0..img.width() {
            gather(img, x, y, half, &mut buf);
            let mu = buf.iter().sum::<f64>() / n;
            let var = buf.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            means.push(mu);
            vars.push(var);
        }
    }
    let noise = vars.iter().sum::<f64>() / vars.len() as f64;
    let data = img
        .data()
        .iter()
        .zip(means.iter().zip(&vars))
        .map(|(&v, (&mu, &var))| {
            let den = var.max(noise);
            let gain = if den > 0.0 {
                (var - noise).max(0.0) / den
            } else {
                0.0
            };
            clamp_unit(mu + gain * (v - mu))
        })
        .collect();
    GrayImage::new(img.width(), img.height(), data)
}
