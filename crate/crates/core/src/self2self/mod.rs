//! Self-supervised denoising from a single noisy image.
//!
//! Training repeatedly splits the image with a Bernoulli mask, feeds the
//! visible half through a partial-convolution U-Net, and penalizes the
//! prediction on the hidden half. Prediction averages dropout-perturbed
//! passes over fresh masks.

pub mod checkpoint;
pub mod sampling;
pub mod train;
pub mod unet;

pub use sampling::{masked_loss, sample_pair, BernoulliMask, LossMode, SamplePair};
pub use train::{
    denoise, predict_ensemble, train, PredictConfig, TrainConfig, TrainedModel,
    FULL_SCALE_ITERATIONS,
};
pub use unet::{Trace, UNet, UNetSpec, DEPTH};
