use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{Dims, GrayImage};
use crate::nn::{adam_step, AdamConfig, AdamState, Shape, Tensor};
use crate::self2self::sampling::{masked_loss, sample_pair, BernoulliMask, LossMode};
use crate::self2self::unet::{UNet, UNetSpec, DEPTH};

/// Iteration count for full-length runs; the default is desk-scale.
pub const FULL_SCALE_ITERATIONS: usize = 150_000;

// ChaCha stream ids. Training draws from streams of the training seed,
// prediction member `n` from stream `PREDICT_STREAM_BASE + n` of the
// prediction seed.
const INIT_STREAM: u64 = 0;
const MASK_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;
const PREDICT_STREAM_BASE: u64 = 1 << 32;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Probability that a pixel is visible to the network.
    pub keep_prob: f64,
    pub dropout_rate: f64,
    pub lr: f64,
    pub iterations: usize,
    pub seed: u64,
    pub lrelu_alpha: f64,
    pub channels_enc: usize,
    pub channels_dec: usize,
    pub loss_mode: LossMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            keep_prob: 0.7,
            dropout_rate: 0.3,
            lr: 1e-4,
            iterations: 5000,
            seed: 0,
            lrelu_alpha: 0.1,
            channels_enc: 48,
            channels_dec: 96,
            loss_mode: LossMode::Complement,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep_prob > 0.0 && self.keep_prob < 1.0) {
            return Err(Error::param(format!(
                "keep_prob must lie strictly between 0 and 1, got {}",
                self.keep_prob
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::param(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations must be at least 1"));
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::param(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    pub fn unet_spec(&self) -> UNetSpec {
        UNetSpec {
            in_channels: 1,
            enc_channels: self.channels_enc,
            dec_channels: self.channels_dec,
            depth: DEPTH,
            lrelu_alpha: self.lrelu_alpha,
            dropout_rate: self.dropout_rate,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// Sets one field from its textual key. Returns `Ok(false)` for keys
    /// this config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::parse("config value", value, format!("bad {key}")))
        }
        match key {
            "keep_prob" | "keep-prob" => self.keep_prob = num(key, value)?,
            "dropout" | "dropout_rate" => self.dropout_rate = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "iters" | "iterations" => self.iterations = num(key, value)?,
            "seed" | "train_seed" => self.seed = num(key, value)?,
            "lrelu_alpha" => self.lrelu_alpha = num(key, value)?,
            "channels_enc" => self.channels_enc = num(key, value)?,
            "channels_dec" => self.channels_dec = num(key, value)?,
            "loss_mode" => self.loss_mode = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("keep_prob", format!("{:?}", self.keep_prob)),
            ("dropout_rate", format!("{:?}", self.dropout_rate)),
            ("lr", format!("{:?}", self.lr)),
            ("iterations", self.iterations.to_string()),
            ("train_seed", self.seed.to_string()),
            ("lrelu_alpha", format!("{:?}", self.lrelu_alpha)),
            ("channels_enc", self.channels_enc.to_string()),
            ("channels_dec", self.channels_dec.to_string()),
            ("loss_mode", self.loss_mode.to_string()),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictConfig {
    pub ensemble: usize,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            ensemble: 50,
            seed: 0,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble == 0 {
            return Err(Error::param("ensemble size must be at least 1"));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let parse = |what| {
            value
                .trim()
                .parse()
                .map_err(|_| Error::parse("config value", value, format!("bad {what}")))
        };
        match key {
            "ensemble" | "ensemble_n" => self.ensemble = parse("ensemble")? as usize,
            "predict_seed" => self.seed = parse("predict_seed")?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Trained weights plus everything needed to rebuild the network.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub net: UNet<f32>,
    pub config: TrainConfig,
    pub dims: Dims,
}

impl TrainedModel {
    /// Untrained network with seeded initial weights.
    pub fn build(cfg: &TrainConfig, dims: Dims) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.unet_spec();
        spec.check_dims(dims.height, dims.width)?;
        let net = UNet::new(spec, &mut stream(cfg.seed, INIT_STREAM))?;
        Ok(TrainedModel {
            net,
            config: *cfg,
            dims,
        })
    }

    fn check_image(&self, y: &GrayImage) -> Result<()> {
        if y.dims() != self.dims {
            return Err(Error::DimensionMismatch(format!(
                "model built for {}x{}, image is {}x{}",
                self.dims.width,
                self.dims.height,
                y.width(),
                y.height()
            )));
        }
        Ok(())
    }

    /// One network evaluation on `mask * y`.
    pub fn forward(
        &self,
        masked_input: &GrayImage,
        mask: &BernoulliMask,
        dropout_active: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Tensor<f32>> {
        self.check_image(masked_input)?;
        if mask.dims() != self.dims {
            return Err(Error::DimensionMismatch(
                "mask does not match the model".into(),
            ));
        }
        let input = image_tensor(masked_input);
        let trace = self
            .net
            .forward(&input, &mask.to_tensor(), dropout_active, rng)?;
        Ok(trace.output().clone())
    }

    /// Ensemble member `index`: a fresh mask and dropout pattern drawn from
    /// its own stream of `seed`.
    pub fn predict_member(&self, y: &GrayImage, seed: u64, index: usize) -> Result<Tensor<f32>> {
        self.check_image(y)?;
        let mut rng = stream(seed, PREDICT_STREAM_BASE + index as u64);
        let mask = BernoulliMask::draw(y.dims(), self.config.keep_prob, &mut rng)?;
        let input = image_tensor(&y_masked(y, &mask));
        let trace = self
            .net
            .forward(&input, &mask.to_tensor(), true, &mut rng)?;
        Ok(trace.output().clone())
    }
}

fn y_masked(y: &GrayImage, mask: &BernoulliMask) -> GrayImage {
    let data = y
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &b)| if b == 1 { v } else { 0.0 })
        .collect();
    GrayImage::new(y.width(), y.height(), data).expect("same dims")
}

fn image_tensor(img: &GrayImage) -> Tensor<f32> {
    Tensor::new(
        Shape::new(1, img.height(), img.width()),
        img.data().iter().map(|&v| v as f32).collect(),
    )
    .expect("image dims")
}

/// Trains on `y` (side lengths already multiples of 32). `observer` sees
/// `(iteration, loss)` after every optimizer step.
pub fn train(
    y: &GrayImage,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, f64),
) -> Result<TrainedModel> {
    let mut model = TrainedModel::build(cfg, y.dims())?;
    let adam = cfg.adam();
    let mut states: Vec<AdamState<f32>> = model
        .net
        .params()
        .into_iter()
        .map(AdamState::for_param)
        .collect();
    let mut mask_rng = stream(cfg.seed, MASK_STREAM);
    let mut dropout_rng = stream(cfg.seed, DROPOUT_STREAM);
    for iteration in 1..=cfg.iterations {
        let pair = sample_pair(y, cfg.keep_prob, &mut mask_rng)?;
        let input = image_tensor(&pair.input);
        let trace = model
            .net
            .forward(&input, &pair.mask.to_tensor(), true, &mut dropout_rng)?;
        let (loss, grad) = masked_loss(trace.output(), &pair.target, &pair.mask, cfg.loss_mode)?;
        model.net.backward(&trace, &grad)?;
        for (param, state) in model.net.params_mut().into_iter().zip(&mut states) {
            adam_step(param, state, &adam);
        }
        observer(iteration, f64::from(loss));
    }
    Ok(model)
}

/// Average of `ensemble` dropout-perturbed predictions on freshly masked
/// copies of `y`, accumulated in member order.
pub fn predict_ensemble(
    model: &TrainedModel,
    y: &GrayImage,
    cfg: &PredictConfig,
) -> Result<GrayImage> {
    cfg.validate()?;
    let mut acc = vec![0.0f64; y.len()];
    for n in 0..cfg.ensemble {
        let out = model.predict_member(y, cfg.seed, n)?;
        for (a, &v) in acc.iter_mut().zip(out.data()) {
            *a += f64::from(v);
        }
    }
    let scale = 1.0 / cfg.ensemble as f64;
    GrayImage::from_clamped(
        y.width(),
        y.height(),
        acc.into_iter().map(|v| v * scale).collect(),
    )
}

/// Pads `y` to the network alignment, trains, predicts, and crops back.
pub fn denoise(
    y: &GrayImage,
    train_cfg: &TrainConfig,
    predict_cfg: &PredictConfig,
    observer: impl FnMut(usize, f64),
) -> Result<(GrayImage, TrainedModel)> {
    predict_cfg.validate()?;
    let (padded, original) = y.pad_reflect(train_cfg.unet_spec().alignment())?;
    let model = train(&padded, train_cfg, observer)?;
    let out = predict_ensemble(&model, &padded, predict_cfg)?;
    Ok((out.unpad(original)?, model))
}
