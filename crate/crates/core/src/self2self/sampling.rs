//! Bernoulli splitting of one noisy image into an (input, target) pair and
//! the masked L2 loss that supervises the hidden half.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{Dims, GrayImage};
use crate::nn::{Real, Shape, Tensor};

/// A binary mask, row-major; `1` marks pixels the network gets to see.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BernoulliMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BernoulliMask {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::param("mask bits must be 0 or 1"));
        }
        Ok(BernoulliMask {
            width,
            height,
            bits,
        })
    }

    /// Each bit is 1 with probability `keep_prob`, independently.
    pub fn draw(dims: Dims, keep_prob: f64, rng: &mut impl Rng) -> Result<Self> {
        if !(keep_prob > 0.0 && keep_prob < 1.0) {
            return Err(Error::param(format!(
                "keep probability must lie strictly between 0 and 1, got {keep_prob}"
            )));
        }
        let bits = (0..dims.len())
            .map(|_| u8::from(rng.random_bool(keep_prob)))
            .collect();
        Ok(BernoulliMask {
            width: dims.width,
            height: dims.height,
            bits,
        })
    }

    pub fn filled(dims: Dims, bit: bool) -> Self {
        BernoulliMask {
            width: dims.width,
            height: dims.height,
            bits: vec![u8::from(bit); dims.len()],
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn zeros(&self) -> usize {
        self.bits.len() - self.ones()
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self
            .bits
            .iter()
            .map(|&b| if b == 1 { T::one() } else { T::zero() })
            .collect();
        Tensor::new(Shape::new(1, self.height, self.width), data).expect("mask dims")
    }
}

/// `input = S * y`, `target = (1 - S) * y`.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub input: GrayImage,
    pub target: GrayImage,
    pub mask: BernoulliMask,
}

impl SamplePair {
    pub fn from_mask(y: &GrayImage, mask: BernoulliMask) -> Result<Self> {
        if mask.dims() != y.dims() {
            return Err(Error::DimensionMismatch(format!(
                "mask {:?} vs image {:?}",
                mask.dims(),
                y.dims()
            )));
        }
        let mut input = Vec::with_capacity(y.len());
        let mut target = Vec::with_capacity(y.len());
        for (&v, &b) in y.data().iter().zip(mask.bits()) {
            if b == 1 {
                input.push(v);
                target.push(0.0);
            } else {
                input.push(0.0);
                target.push(v);
            }
        }
        Ok(SamplePair {
            input: GrayImage::new(y.width(), y.height(), input)?,
            target: GrayImage::new(y.width(), y.height(), target)?,
            mask,
        })
    }
}

pub fn sample_pair(y: &GrayImage, keep_prob: f64, rng: &mut impl Rng) -> Result<SamplePair> {
    let mask = BernoulliMask::draw(y.dims(), keep_prob, rng)?;
    SamplePair::from_mask(y, mask)
}

/// Which pixels the loss supervises.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossMode {
    /// Pixels hidden from the input (`S = 0`), where the target carries
    /// the held-out values.
    #[default]
    Complement,
    /// Pixels visible in the input (`S = 1`). The target is zero there, so
    /// this only exists for comparison runs.
    Literal,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "complement" => Ok(LossMode::Complement),
            "literal" => Ok(LossMode::Literal),
            other => Err(Error::parse(
                "loss mode",
                other,
                "expected complement or literal",
            )),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::Complement => "complement",
            LossMode::Literal => "literal",
        })
    }
}

/// Mean squared error over the supervised pixels, with its gradient
/// (`2 (pred - target) / count` on supervised pixels, 0 elsewhere).
pub fn masked_loss<T: Real>(
    pred: &Tensor<T>,
    target: &GrayImage,
    mask: &BernoulliMask,
    mode: LossMode,
) -> Result<(T, Tensor<T>)> {
    let shape = pred.shape();
    if shape != Shape::new(1, target.height(), target.width()) || mask.dims() != target.dims() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {shape}, target {}x{}, mask {:?}",
            target.width(),
            target.height(),
            mask.dims()
        )));
    }
    let supervised = match mode {
        LossMode::Complement => 0u8,
        LossMode::Literal => 1u8,
    };
    let count = mask.bits().iter().filter(|&&b| b == supervised).count();
    if count == 0 {
        return Err(Error::EmptyLossMask);
    }
    let inv = T::lit(1.0 / count as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); shape.len()];
    for (i, (&p, &b)) in pred.data().iter().zip(mask.bits()).enumerate() {
        if b == supervised {
            let d = p - T::lit(target.data()[i]);
            loss = loss + d * d;
            grad[i] = two * d * inv;
        }
    }
    Ok((loss * inv, Tensor::new(shape, grad)?))
}
