//! Differentiable compositing of transformed bitmap primitives.
//!
//! A [`Scene`] places RGBA templates on a canvas with a position, scale,
//! rotation, opacity logit and color logits each. The renderer composites
//! them front to back, [`grad`] computes exact parameter gradients of a
//! pixel loss, and [`fit`] optimizes a scene toward a target image.

pub mod bench;
pub mod cli;
pub mod config;
pub mod exportio;
pub mod fit;
pub mod grad;
pub mod image;
pub mod prep;
pub mod raster;
pub mod scene;
pub mod synth;
pub mod video;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ConfigError, FitConfig, RunConfig, VideoConfig};
pub use fit::FitError;
pub use grad::GradError;
pub use image::{Image, Plane};
pub use prep::PrepError;
pub use scene::{PrimitiveParams, PrimitiveTemplate, Scene, SceneError};
pub use video::VideoError;

/// Top-level error for file-facing operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: cannot decode image: {reason}", path.display())]
    Decode { path: PathBuf, reason: String },
    #[error("{}: unsupported format: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("corrupt scene file: {0}")]
    CorruptScene(String),
    #[error("scene file version {found} is not supported (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt layer manifest: {0}")]
    CorruptManifest(String),
    #[error("export scale {0} is not one of 1, 2, 4")]
    InvalidScale(usize),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Video(#[from] VideoError),
}
