//! The masked encoder-decoder network.
//!
//! Encoder: `depth + 1` blocks of partial convolution and leaky ReLU; the
//! first `depth` are followed by 2x2 max pooling, which also pools the
//! validity mask. Decoder: `depth` blocks of upsample-and-concatenate with
//! the matching encoder activation, then two (conv, leaky ReLU, dropout)
//! stages. A 3x3 convolution to one channel and a sigmoid close the graph.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    dropout, dropout_backward, lrelu, lrelu_backward, maxpool2d, maxpool2d_backward, pool_mask,
    sigmoid, sigmoid_backward, upsample_concat, upsample_concat_backward, Conv2d, ConvCache,
    PConv2d, PConvCache, Parameter, PoolCache, Real, Shape, Tensor,
};

/// Number of pooling stages in the standard network.
pub const DEPTH: usize = 5;
pub const KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub enc_channels: usize,
    pub dec_channels: usize,
    pub depth: usize,
    pub lrelu_alpha: f64,
    pub dropout_rate: f64,
}

impl UNetSpec {
    /// Side lengths must be multiples of this.
    pub fn alignment(&self) -> usize {
        1 << self.depth
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        let a = self.alignment();
        if height == 0 || width == 0 || !height.is_multiple_of(a) || !width.is_multiple_of(a) {
            return Err(Error::DimensionMismatch(format!(
                "network input {width}x{height} must be a nonzero multiple of {a} on both sides"
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let conv = |cin: usize, cout: usize| cin * cout * KERNEL * KERNEL + cout;
        let (e, d) = (self.enc_channels, self.dec_channels);
        let encoder = conv(self.in_channels, e) + self.depth * conv(e, e);
        let first_dec = conv(2 * e, d) + conv(d, d);
        let later_dec = (self.depth - 1) * (conv(d + e, d) + conv(d, d));
        encoder + first_dec + later_dec + conv(d, 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UNet<T> {
    spec: UNetSpec,
    encoders: Vec<PConv2d<T>>,
    decoders: Vec<(Conv2d<T>, Conv2d<T>)>,
    head: Conv2d<T>,
}

struct EncoderTrace<T> {
    pconv: PConvCache<T>,
    act: Tensor<T>,
    pool: Option<PoolCache>,
}

struct DecoderTrace<T> {
    low: Shape,
    conv1: ConvCache<T>,
    act1: Tensor<T>,
    drop1: Option<Vec<T>>,
    conv2: ConvCache<T>,
    act2: Tensor<T>,
    drop2: Option<Vec<T>>,
}

/// Everything the reverse pass needs from one forward evaluation.
pub struct Trace<T> {
    encoders: Vec<EncoderTrace<T>>,
    decoders: Vec<DecoderTrace<T>>,
    head: ConvCache<T>,
    output: Tensor<T>,
}

impl<T> Trace<T> {
    /// Every leaky ReLU sign and pooling choice of this evaluation. Two
    /// evaluations with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> Vec<u32>
    where
        T: Real,
    {
        let sign = |v: &T| u32::from(*v > T::zero());
        let mut out = Vec::new();
        for e in &self.encoders {
            out.extend(e.act.data().iter().map(sign));
            if let Some(p) = &e.pool {
                out.extend_from_slice(p.argmax());
            }
        }
        for d in &self.decoders {
            out.extend(d.act1.data().iter().map(sign));
            out.extend(d.act2.data().iter().map(sign));
        }
        out
    }

    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }

    /// Post-activation output of encoder block `level` (0-based), before pooling.
    pub fn encoder_activation(&self, level: usize) -> Option<&Tensor<T>> {
        self.encoders.get(level).map(|e| &e.act)
    }
}

impl<T: Real> UNet<T> {
    /// Builds the network with seeded Kaiming-uniform weights.
    pub fn new(spec: UNetSpec, rng: &mut impl Rng) -> Result<Self> {
        if spec.depth == 0
            || spec.in_channels == 0
            || spec.enc_channels == 0
            || spec.dec_channels == 0
        {
            return Err(Error::param(
                "network depth and channel counts must be positive",
            ));
        }
        if !(spec.lrelu_alpha > 0.0 && spec.lrelu_alpha <= 1.0) {
            return Err(Error::param(format!(
                "leaky ReLU slope must lie in (0, 1], got {}",
                spec.lrelu_alpha
            )));
        }
        if !(0.0..1.0).contains(&spec.dropout_rate) {
            return Err(Error::param(format!(
                "dropout rate must lie in [0, 1), got {}",
                spec.dropout_rate
            )));
        }
        let (e, d) = (spec.enc_channels, spec.dec_channels);
        let mut encoders = Vec::with_capacity(spec.depth + 1);
        for i in 0..=spec.depth {
            let cin = if i == 0 { spec.in_channels } else { e };
            encoders.push(PConv2d::new(&format!("enc{}", i + 1), cin, e, KERNEL));
        }
        let mut decoders = Vec::with_capacity(spec.depth);
        for j in 0..spec.depth {
            let cin = if j == 0 { 2 * e } else { d + e };
            decoders.push((
                Conv2d::new(&format!("dec{}.conv1", j + 1), cin, d, KERNEL, KERNEL / 2),
                Conv2d::new(&format!("dec{}.conv2", j + 1), d, d, KERNEL, KERNEL / 2),
            ));
        }
        let head = Conv2d::new("head", d, 1, KERNEL, KERNEL / 2);
        let mut net = UNet {
            spec,
            encoders,
            decoders,
            head,
        };
        let alpha = spec.lrelu_alpha;
        for p in &mut net.encoders {
            p.conv.init_kaiming(alpha, rng);
        }
        for (a, b) in &mut net.decoders {
            a.init_kaiming(alpha, rng);
            b.init_kaiming(alpha, rng);
        }
        net.head.init_kaiming(alpha, rng);
        Ok(net)
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.spec
    }

    /// Parameters in a fixed order: encoders, decoders, head; weight then
    /// bias within each layer.
    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        for p in &self.encoders {
            out.push(&p.conv.weight);
            out.push(&p.conv.bias);
        }
        for (a, b) in &self.decoders {
            out.extend([&a.weight, &a.bias, &b.weight, &b.bias]);
        }
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = Vec::new();
        for p in &mut self.encoders {
            out.push(&mut p.conv.weight);
            out.push(&mut p.conv.bias);
        }
        for (a, b) in &mut self.decoders {
            out.extend([&mut a.weight, &mut a.bias, &mut b.weight, &mut b.bias]);
        }
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Runs the network on a `(in_channels, H, W)` input with its validity
    /// mask. Dropout draws from `rng` only when `dropout_active`.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        mask: &Tensor<T>,
        dropout_active: bool,
        rng: &mut impl Rng,
    ) -> Result<Trace<T>> {
        let s = input.shape();
        if s.channels != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {s}",
                self.spec.in_channels
            )));
        }
        self.spec.check_dims(s.height, s.width)?;
        let alpha = T::lit(self.spec.lrelu_alpha);
        let rate = self.spec.dropout_rate;

        let mut encoders = Vec::with_capacity(self.encoders.len());
        let mut x = input.clone();
        let mut m = mask.clone();
        for (i, enc) in self.encoders.iter().enumerate() {
            let (y, updated, pconv) = enc.forward(&x, &m)?;
            let act = lrelu(&y, alpha);
            let pool = if i < self.spec.depth {
                let (pooled, cache) = maxpool2d(&act)?;
                x = pooled;
                m = pool_mask(&updated)?;
                Some(cache)
            } else {
                x = act.clone();
                None
            };
            encoders.push(EncoderTrace { pconv, act, pool });
        }

        let mut decoders = Vec::with_capacity(self.decoders.len());
        let mut h = x;
        for (j, (c1, c2)) in self.decoders.iter().enumerate() {
            let skip = &encoders[self.spec.depth - 1 - j].act;
            let low = h.shape();
            let cat = upsample_concat(&h, skip)?;
            let (y1, conv1) = c1.forward(&cat)?;
            let act1 = lrelu(&y1, alpha);
            let (d1, drop1) = dropout(&act1, rate, rng, dropout_active)?;
            let (y2, conv2) = c2.forward(&d1)?;
            let act2 = lrelu(&y2, alpha);
            let (d2, drop2) = dropout(&act2, rate, rng, dropout_active)?;
            h = d2;
            decoders.push(DecoderTrace {
                low,
                conv1,
                act1,
                drop1,
                conv2,
                act2,
                drop2,
            });
        }
        let (logits, head) = self.head.forward(&h)?;
        Ok(Trace {
            encoders,
            decoders,
            head,
            output: sigmoid(&logits),
        })
    }

    /// Accumulates parameter gradients for `d loss / d output`; returns the
    /// gradient with respect to the network input.
    pub fn backward(&mut self, trace: &Trace<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let alpha = T::lit(self.spec.lrelu_alpha);
        let depth = self.spec.depth;
        let g = sigmoid_backward(&trace.output, grad_out)?;
        let mut g = self.head.backward(&trace.head, &g)?;

        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; depth];
        for j in (0..depth).rev() {
            let t = &trace.decoders[j];
            let (c1, c2) = &mut self.decoders[j];
            let g2 = dropout_backward(&g, t.drop2.as_deref())?;
            let g2 = lrelu_backward(&t.act2, &g2, alpha)?;
            let g1 = c2.backward(&t.conv2, &g2)?;
            let g1 = dropout_backward(&g1, t.drop1.as_deref())?;
            let g1 = lrelu_backward(&t.act1, &g1, alpha)?;
            let gcat = c1.backward(&t.conv1, &g1)?;
            let (glow, gskip) = upsample_concat_backward(&gcat, t.low)?;
            skip_grads[depth - 1 - j] = Some(gskip);
            g = glow;
        }

        for i in (0..=depth).rev() {
            let t = &trace.encoders[i];
            let mut gact = match &t.pool {
                Some(pool) => maxpool2d_backward(pool, &g)?,
                None => g,
            };
            if let Some(skip) = skip_grads.get_mut(i).and_then(Option::take) {
                gact.add_assign(&skip)?;
            }
            let gy = lrelu_backward(&t.act, &gact, alpha)?;
            g = self.encoders[i].backward(&t.pconv, &gy)?;
        }
        Ok(g)
    }
}
