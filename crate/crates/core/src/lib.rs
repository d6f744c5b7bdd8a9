//! White-box image harmonization.
//!
//! A composited foreground is harmonized by predicting the arguments of an
//! ordered pipeline of simple, interpretable filters (brightness, contrast,
//! saturation, color temperature, highlight, shadow) and applying them to the
//! foreground only.
//!
//! - [`filters`] and [`pipeline`]: the filters, their derivatives, pipeline
//!   execution, backpropagation and compositing.
//! - [`synth`]: supervised composite generation from natural images.
//! - [`regressor`]: features, cascade/multi-head regressors, stage and dynamic
//!   losses, training, inference and EMA smoothing for video.
//! - [`fitter`]: per-image argument fitting against a known target.
//! - [`metrics`]: MSE, foreground MSE and PSNR.

pub mod error;
pub mod filters;
pub mod fitter;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod regressor;
pub mod synth;

pub use error::{Error, Result};
pub use filters::{apply_filter, filter_arg_grad, filter_input_jvp, luminance, FilterKind};
pub use fitter::{fit_coordinate, fit_gradient, FitResult};
pub use image::{Gradient, Image, Mask};
pub use pipeline::{
    apply_pipeline, composite_output, pipeline_arg_gradients, render, ArgVector, FilterPipeline,
    Prior, StageTrace,
};
pub use synth::{clipping_guard, generate_composite, sample_args, CompositeSample};
