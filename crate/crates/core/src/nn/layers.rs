//! Forward and reverse passes for each layer. Every forward returns what its
//! backward needs; shapes are checked on entry.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Parameter, Real, Shape, Tensor};

/// Plain 2-D cross-correlation with zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    pad: usize,
}

#[derive(Clone, Debug)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    input: Shape,
    output: Shape,
}

impl<T: Real> Conv2d<T> {
    /// Zero-initialized layer; weights are `[out, in, kernel, kernel]`.
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        pad: usize,
    ) -> Self {
        Conv2d {
            weight: Parameter::zeros(
                format!("{name}.weight"),
                vec![out_channels, in_channels, kernel, kernel],
            ),
            bias: Parameter::zeros(format!("{name}.bias"), vec![out_channels]),
            in_channels,
            out_channels,
            kernel,
            pad,
        }
    }

    /// Kaiming-uniform fan-in initialization for a leaky ReLU of slope
    /// `alpha`; bias zero.
    pub fn init_kaiming(&mut self, alpha: f64, rng: &mut impl Rng) {
        let fan_in = (self.in_channels * self.kernel * self.kernel) as f64;
        let bound = (6.0 / ((1.0 + alpha * alpha) * fan_in)).sqrt();
        for w in &mut self.weight.value {
            *w = T::lit(rng.random_range(-bound..bound));
        }
        self.bias.value.fill(T::zero());
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.channels != self.in_channels {
            return Err(Error::Shape(format!(
                "{} expects {} input channels, got {input}",
                self.weight.name, self.in_channels
            )));
        }
        let h = input.height + 2 * self.pad;
        let w = input.width + 2 * self.pad;
        if h < self.kernel || w < self.kernel {
            return Err(Error::Shape(format!(
                "{input} input is smaller than the {} kernel",
                self.kernel
            )));
        }
        Ok(Shape::new(
            self.out_channels,
            h - self.kernel + 1,
            w - self.kernel + 1,
        ))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (mut out, cache) = self.linear(x)?;
        let plane = cache.output.plane();
        for (o, &b) in self.bias.value.iter().enumerate() {
            for v in &mut out[o * plane..(o + 1) * plane] {
                *v = *v + b;
            }
        }
        Ok((Tensor::new(cache.output, out)?, cache))
    }

    /// Weighted sums without the bias term.
    fn linear(&self, x: &Tensor<T>) -> Result<(Vec<T>, ConvCache<T>)> {
        let output = self.output_shape(x.shape())?;
        let rows = self.in_channels * self.kernel * self.kernel;
        let n = output.plane();
        let mut cols = vec![T::zero(); rows * n];
        im2col(
            x.data(),
            x.shape(),
            self.kernel,
            self.pad,
            output,
            &mut cols,
        );
        let mut out = vec![T::zero(); output.len()];
        T::gemm(
            self.out_channels,
            rows,
            n,
            &self.weight.value,
            false,
            &cols,
            false,
            T::zero(),
            &mut out,
        );
        Ok((
            out,
            ConvCache {
                cols,
                input: x.shape(),
                output,
            },
        ))
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &ConvCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        check_grad_shape(grad_out, cache.output)?;
        let plane = cache.output.plane();
        for (o, gb) in self.bias.grad.iter_mut().enumerate() {
            let s: T = grad_out.data()[o * plane..(o + 1) * plane]
                .iter()
                .copied()
                .sum();
            *gb = *gb + s;
        }
        self.linear_backward(cache, grad_out.data())
    }

    fn linear_backward(&mut self, cache: &ConvCache<T>, grad: &[T]) -> Result<Tensor<T>> {
        let rows = self.in_channels * self.kernel * self.kernel;
        let n = cache.output.plane();
        T::gemm(
            self.out_channels,
            n,
            rows,
            grad,
            false,
            &cache.cols,
            true,
            T::one(),
            &mut self.weight.grad,
        );
        let mut dcols = vec![T::zero(); rows * n];
        T::gemm(
            rows,
            self.out_channels,
            n,
            &self.weight.value,
            true,
            grad,
            false,
            T::zero(),
            &mut dcols,
        );
        let mut dx = vec![T::zero(); cache.input.len()];
        col2im(
            &dcols,
            cache.input,
            self.kernel,
            self.pad,
            cache.output,
            &mut dx,
        );
        Tensor::new(cache.input, dx)
    }
}

fn check_grad_shape<T: Real>(grad: &Tensor<T>, expected: Shape) -> Result<()> {
    if grad.shape() == expected {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "gradient of shape {} does not match output {expected}",
            grad.shape()
        )))
    }
}

/// Range of output columns whose tap `kx` lands inside `0..width`.
#[inline]
fn valid_cols(kx: usize, pad: usize, width: usize, out_width: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).min(out_width);
    let hi = (width + pad).saturating_sub(kx).min(out_width);
    (lo, hi.max(lo))
}

fn im2col<T: Real>(x: &[T], s: Shape, k: usize, pad: usize, out: Shape, cols: &mut [T]) {
    let n = out.plane();
    for c in 0..s.channels {
        let src = &x[c * s.plane()..(c + 1) * s.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * n..][..n];
                let (lo, hi) = valid_cols(kx, pad, s.width, out.width);
                for oy in 0..out.height {
                    let dst = &mut row[oy * out.width..(oy + 1) * out.width];
                    let iy = (oy + ky) as isize - pad as isize;
                    if iy < 0 || iy >= s.height as isize || lo == hi {
                        dst.fill(T::zero());
                        continue;
                    }
                    dst[..lo].fill(T::zero());
                    dst[hi..].fill(T::zero());
                    let start = iy as usize * s.width + lo + kx - pad;
                    dst[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                }
            }
        }
    }
}

fn col2im<T: Real>(cols: &[T], s: Shape, k: usize, pad: usize, out: Shape, dx: &mut [T]) {
    let n = out.plane();
    for c in 0..s.channels {
        let dst = &mut dx[c * s.plane()..(c + 1) * s.plane()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * n..][..n];
                let (lo, hi) = valid_cols(kx, pad, s.width, out.width);
                if lo == hi {
                    continue;
                }
                for oy in 0..out.height {
                    let iy = (oy + ky) as isize - pad as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    let start = iy as usize * s.width + lo + kx - pad;
                    let src = &row[oy * out.width + lo..oy * out.width + hi];
                    for (d, &v) in dst[start..start + (hi - lo)].iter_mut().zip(src) {
                        *d = *d + v;
                    }
                }
            }
        }
    }
}

/// Partial convolution: the window sum over valid pixels is rescaled by
/// `window_size / valid_count`, and the validity mask is propagated.
#[derive(Clone, Debug, PartialEq)]
pub struct PConv2d<T> {
    pub conv: Conv2d<T>,
}

#[derive(Clone, Debug)]
pub struct PConvCache<T> {
    conv: ConvCache<T>,
    mask: Vec<T>,
    ratio: Vec<T>,
}

impl<T: Real> PConv2d<T> {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        PConv2d {
            conv: Conv2d::new(name, in_channels, out_channels, kernel, kernel / 2),
        }
    }

    /// `mask` is a single binary plane broadcast over the input channels.
    /// Returns the output and the updated mask.
    pub fn forward(
        &self,
        x: &Tensor<T>,
        mask: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, PConvCache<T>)> {
        let s = x.shape();
        if mask.shape() != Shape::new(1, s.height, s.width) {
            return Err(Error::Shape(format!(
                "mask {} does not match input {s}",
                mask.shape()
            )));
        }
        if mask.data().iter().any(|&m| m != T::zero() && m != T::one()) {
            return Err(Error::Shape(
                "partial convolution mask must be binary".into(),
            ));
        }
        let plane = s.plane();
        let mut masked = x.clone();
        for c in 0..s.channels {
            for (v, &m) in masked.data_mut()[c * plane..(c + 1) * plane]
                .iter_mut()
                .zip(mask.data())
            {
                *v = *v * m;
            }
        }
        let (mut out, cache) = self.conv.linear(&masked)?;
        let oshape = cache.output;

        let k = self.conv.kernel;
        let pad = self.conv.pad;
        let window = T::lit((k * k) as f64);
        let mut ratio = vec![T::zero(); oshape.plane()];
        let mut updated = vec![T::zero(); oshape.plane()];
        for oy in 0..oshape.height {
            for ox in 0..oshape.width {
                let mut count = 0usize;
                for ky in 0..k {
                    let iy = (oy + ky) as isize - pad as isize;
                    if iy < 0 || iy >= s.height as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox + kx) as isize - pad as isize;
                        if ix >= 0
                            && ix < s.width as isize
                            && mask.data()[iy as usize * s.width + ix as usize] == T::one()
                        {
                            count += 1;
                        }
                    }
                }
                if count > 0 {
                    let i = oy * oshape.width + ox;
                    ratio[i] = window / T::lit(count as f64);
                    updated[i] = T::one();
                }
            }
        }
        let op = oshape.plane();
        for (o, &b) in self.conv.bias.value.iter().enumerate() {
            for (v, &r) in out[o * op..(o + 1) * op].iter_mut().zip(&ratio) {
                *v = *v * r + b;
            }
        }
        Ok((
            Tensor::new(oshape, out)?,
            Tensor::new(Shape::new(1, oshape.height, oshape.width), updated)?,
            PConvCache {
                conv: cache,
                mask: mask.data().to_vec(),
                ratio,
            },
        ))
    }

    pub fn backward(&mut self, cache: &PConvCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        check_grad_shape(grad_out, cache.conv.output)?;
        let op = cache.conv.output.plane();
        let mut scaled = grad_out.data().to_vec();
        for (o, gb) in self.conv.bias.grad.iter_mut().enumerate() {
            let row = &mut scaled[o * op..(o + 1) * op];
            let s: T = row.iter().copied().sum();
            *gb = *gb + s;
            for (g, &r) in row.iter_mut().zip(&cache.ratio) {
                *g = *g * r;
            }
        }
        let mut dx = self.conv.linear_backward(&cache.conv, &scaled)?;
        let plane = cache.conv.input.plane();
        for c in 0..cache.conv.input.channels {
            for (g, &m) in dx.data_mut()[c * plane..(c + 1) * plane]
                .iter_mut()
                .zip(&cache.mask)
            {
                *g = *g * m;
            }
        }
        Ok(dx)
    }
}

/// Elementwise `max(x, alpha * x)`.
pub fn lrelu<T: Real>(x: &Tensor<T>, alpha: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { v * alpha })
}

/// Uses the forward output: for `alpha > 0` its sign matches the input's.
pub fn lrelu_backward<T: Real>(out: &Tensor<T>, grad: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    check_grad_shape(grad, out.shape())?;
    let data = out
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&y, &g)| if y > T::zero() { g } else { g * alpha })
        .collect();
    Tensor::new(out.shape(), data)
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    argmax: Vec<u32>,
    input: Shape,
}

impl PoolCache {
    /// Flat input index chosen for each output cell.
    pub fn argmax(&self) -> &[u32] {
        &self.argmax
    }
}

/// 2x2 stride-2 max pooling; ties go to the first cell in row-major order.
pub fn maxpool2d<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    let s = x.shape();
    if !s.height.is_multiple_of(2) || !s.width.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "max pooling needs even dims, got {s}"
        )));
    }
    let o = Shape::new(s.channels, s.height / 2, s.width / 2);
    let mut out = Vec::with_capacity(o.len());
    let mut argmax = Vec::with_capacity(o.len());
    for c in 0..s.channels {
        for oy in 0..o.height {
            for ox in 0..o.width {
                let mut best_idx = (c * s.height + 2 * oy) * s.width + 2 * ox;
                let mut best = x.data()[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (c * s.height + 2 * oy + dy) * s.width + 2 * ox + dx;
                    if x.data()[idx] > best {
                        best = x.data()[idx];
                        best_idx = idx;
                    }
                }
                out.push(best);
                argmax.push(best_idx as u32);
            }
        }
    }
    Ok((Tensor::new(o, out)?, PoolCache { argmax, input: s }))
}

pub fn maxpool2d_backward<T: Real>(cache: &PoolCache, grad: &Tensor<T>) -> Result<Tensor<T>> {
    let s = cache.input;
    check_grad_shape(grad, Shape::new(s.channels, s.height / 2, s.width / 2))?;
    let mut dx = Tensor::zeros(s);
    for (&i, &g) in cache.argmax.iter().zip(grad.data()) {
        let d = &mut dx.data_mut()[i as usize];
        *d = *d + g;
    }
    Ok(dx)
}

/// Mask counterpart of [`maxpool2d`]: a pooled bit is set iff any of the
/// four covered bits is set.
pub fn pool_mask<T: Real>(mask: &Tensor<T>) -> Result<Tensor<T>> {
    maxpool2d(mask).map(|(m, _)| m)
}

/// Nearest-neighbour 2x upsampling of `low`, then `[up(low); skip]` along
/// channels.
pub fn upsample_concat<T: Real>(low: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>> {
    let (l, s) = (low.shape(), skip.shape());
    if 2 * l.height != s.height || 2 * l.width != s.width {
        return Err(Error::Shape(format!(
            "upsampled {l} does not match skip {s}"
        )));
    }
    let out = Shape::new(l.channels + s.channels, s.height, s.width);
    let mut data = Vec::with_capacity(out.len());
    for c in 0..l.channels {
        let src = low.channel(c);
        for y in 0..s.height {
            let row = &src[(y / 2) * l.width..(y / 2 + 1) * l.width];
            for x in 0..s.width {
                data.push(row[x / 2]);
            }
        }
    }
    data.extend_from_slice(skip.data());
    Tensor::new(out, data)
}

/// Splits the concatenated gradient; the low-resolution part sums each
/// 2x2 block of children.
pub fn upsample_concat_backward<T: Real>(
    grad: &Tensor<T>,
    low: Shape,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let g = grad.shape();
    if g.channels <= low.channels || g.height != 2 * low.height || g.width != 2 * low.width {
        return Err(Error::Shape(format!(
            "gradient {g} does not fit a concat over {low}"
        )));
    }
    let mut dlow = Tensor::zeros(low);
    for c in 0..low.channels {
        let src = grad.channel(c);
        for y in 0..g.height {
            for x in 0..g.width {
                let d = &mut dlow.data_mut()[(c * low.height + y / 2) * low.width + x / 2];
                *d = *d + src[y * g.width + x];
            }
        }
    }
    let skip_shape = Shape::new(g.channels - low.channels, g.height, g.width);
    let dskip = Tensor::new(skip_shape, grad.data()[low.channels * g.plane()..].to_vec())?;
    Ok((dlow, dskip))
}

/// Inverted dropout. Returns the output and, when active, the scaled keep
/// mask needed by the backward pass.
pub fn dropout<T: Real>(
    x: &Tensor<T>,
    rate: f64,
    rng: &mut impl Rng,
    active: bool,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::param(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if !active || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 - rate;
    let scale = T::lit(1.0 / keep);
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rng.random_bool(keep) {
                scale
            } else {
                T::zero()
            }
        })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::new(x.shape(), data)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(grad: &Tensor<T>, mask: Option<&[T]>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(grad.clone()),
        Some(m) if m.len() == grad.len() => Tensor::new(
            grad.shape(),
            grad.data().iter().zip(m).map(|(&g, &k)| g * k).collect(),
        ),
        Some(m) => Err(Error::Shape(format!(
            "dropout mask of {} values for a {} gradient",
            m.len(),
            grad.shape()
        ))),
    }
}

#[inline]
fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn sigmoid_backward<T: Real>(out: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    check_grad_shape(grad, out.shape())?;
    let data = out
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&y, &g)| g * y * (T::one() - y))
        .collect();
    Tensor::new(out.shape(), data)
}
