//! Single-image self-supervised denoising for side-scan sonar imagery.
//!
//! A masked U-Net is trained on Bernoulli-split pairs drawn from the noisy
//! image itself and evaluated as a dropout ensemble. Classical filters and
//! the usual quality indexes are included for side-by-side benchmarks.

pub mod bench;
pub mod error;
pub mod filters;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod noise;

pub use error::{Error, Result};
pub use image::{load_image, load_pgm, save_image, save_pgm, Dims, GrayImage};
pub mod self2self;
pub mod synthetic;
