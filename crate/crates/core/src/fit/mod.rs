//! Losses, the Adam optimizer, learning-rate schedule, low-opacity
//! re-initialization and the single-image optimization loop.

mod adam;
mod loss;
mod reinit;
mod session;

pub use adam::{adam_step, lr_schedule, LrGains, OptimState, StepOptions, ADAM_EPS, BETA1, BETA2};
pub use loss::{
    format_psnr, loss_grayscale_l1, loss_mse, loss_spatial, masked_psnr, psnr, psnr_from_mse, LossEval, LossKind,
    LossSpec, LossWeights, GRAY_WEIGHTS,
};
pub use reinit::reinit_low_opacity;
pub use session::{
    initial_scene, optimize, prepare_templates, write_history_csv, FitResult, FitSession, IterRecord,
};

use thiserror::Error;

use crate::config::ConfigError;
use crate::grad::GradError;
use crate::prep::PrepError;
use crate::scene::SceneError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("image is {}x{}, expected {}x{}", got.0, got.1, expected.0, expected.1)]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("spatial loss needs a target alpha mask")]
    MissingAlphaTarget,
    #[error("loss weights must be non-negative")]
    NegativeWeight,
    #[error("parameter vector has {got} entries, expected {expected}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("no templates supplied")]
    NoTemplates,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Prep(#[from] PrepError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}
