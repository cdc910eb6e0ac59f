//! Conditional spatio-temporal generative model for 4-D cardiac anatomy.
//!
//! A conditional β-VAE encodes the end-diastolic frame together with an
//! embedding of clinical conditions; a shared-weight LSTM cell rolls the
//! joint latent forward through the cardiac cycle and a 3-D transposed
//! convolutional decoder turns every latent into a label map.

mod archive;
pub mod baselines;
pub mod datakit;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
