//! Seeded synthetic corruption: additive Gaussian, salt-and-pepper, and
//! multiplicative (speckle) Gaussian noise.
//!
//! All generators draw from ChaCha8 seeded through `SeedableRng::seed_from_u64`,
//! one draw sequence per call, in row-major pixel order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    SaltPepper { density: f64 },
    Speckle { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(NoiseSpec { kind, seed })
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        match self.kind {
            NoiseKind::Gaussian { sigma } => add_gaussian(img, sigma, self.seed),
            NoiseKind::SaltPepper { density } => add_salt_pepper(img, density, self.seed),
            NoiseKind::Speckle { sigma } => add_speckle(img, sigma, self.seed),
        }
    }
}

impl NoiseKind {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Gaussian { sigma } | NoiseKind::Speckle { sigma } => check_sigma(sigma),
            NoiseKind::SaltPepper { density } => check_density(density),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            NoiseKind::SaltPepper { density } => write!(f, "saltpepper:{density}"),
            NoiseKind::Speckle { sigma } => write!(f, "speckle:{sigma}"),
        }
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    /// `gaussian:<sigma>`, `saltpepper:<density>` (alias `salt-pepper`, `sp`),
    /// or `speckle:<sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::parse("noise", s, "expected <kind>:<value>"))?;
        let value: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::parse("noise", s, "value is not a number"))?;
        let kind = match name.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => NoiseKind::Gaussian { sigma: value },
            "saltpepper" | "salt-pepper" | "sp" => NoiseKind::SaltPepper { density: value },
            "speckle" => NoiseKind::Speckle { sigma: value },
            other => return Err(Error::parse("noise", s, format!("unknown kind {other:?}"))),
        };
        kind.validate()
            .map_err(|e| Error::parse("noise", s, e.to_string()))?;
        Ok(kind)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "noise sigma must be >= 0, got {sigma}"
        )))
    }
}

fn check_density(density: f64) -> Result<()> {
    if (0.0..=1.0).contains(&density) {
        Ok(())
    } else {
        Err(Error::param(format!(
            "salt-and-pepper density must lie in [0, 1], got {density}"
        )))
    }
}

/// `out = clamp(img + n)`, `n ~ N(0, sigma^2)` i.i.d.
pub fn add_gaussian(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    Ok(img.map(|v| v + normal.sample(&mut rng)))
}

/// Each pixel is replaced with probability `density` by 0 or 1 (equally likely).
pub fn add_salt_pepper(img: &GrayImage, density: f64, seed: u64) -> Result<GrayImage> {
    check_density(density)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(img.map(|v| {
        if rng.random_bool(density) {
            if rng.random_bool(0.5) {
                1.0
            } else {
                0.0
            }
        } else {
            v
        }
    }))
}

/// `out = clamp(img * (1 + n))`, `n ~ N(0, sigma^2)` i.i.d.
pub fn add_speckle(img: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    Ok(img.map(|v| v * (1.0 + normal.sample(&mut rng))))
}
