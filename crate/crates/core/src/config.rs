//! Run configuration and its flat `key = value` text format.
//!
//! One assignment per line; `#` starts a comment. Unknown keys, repeated
//! keys and unparsable values are errors. Relative paths resolve against
//! the directory of the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::fit::{LossKind, LossWeights, LrGains};
use crate::prep::InitParams;
use crate::raster::{DEFAULT_EPS_SKIP, DEFAULT_TILE_SIZE};
use crate::scene::BackgroundPolicy;
use crate::video::StuckPolicy;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value `{value}` for `{key}`: {reason}")]
    BadValue { line: usize, key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    StructureAware,
    Random,
}

/// When and how low-opacity primitives are re-sampled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReinitPolicy {
    pub enabled: bool,
    /// Primitives with `sigmoid(nu)` below this are re-sampled.
    pub threshold: f32,
    pub period: usize,
    /// No re-sampling before this iteration.
    pub warmup: usize,
    /// No re-sampling in the last `tail_skip` iterations.
    pub tail_skip: usize,
}

impl Default for ReinitPolicy {
    fn default() -> Self {
        Self { enabled: false, threshold: 0.3, period: 50, warmup: 199, tail_skip: 50 }
    }
}

impl ReinitPolicy {
    /// Whether re-sampling runs after the update of iteration `iter` (0-based).
    pub fn fires_at(&self, iter: usize, total: usize) -> bool {
        self.enabled
            && self.period > 0
            && iter >= self.warmup
            && (iter + 1) % self.period == 0
            && iter + self.tail_skip < total
    }
}

/// Everything that determines a single-image optimization.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub num_iterations: usize,
    pub base_lr: f32,
    pub gains: LrGains,
    pub decay: bool,
    pub decay_final_fraction: f32,
    pub loss: LossKind,
    pub loss_weights: LossWeights,
    /// Template blur in texels; zero disables soft rasterization.
    pub blur_sigma: f32,
    pub radial_transparency: bool,
    pub init_mode: InitMode,
    pub init: InitParams,
    /// Restrict initial placement to the target alpha support, when there is one.
    pub init_within_mask: bool,
    pub reinit: ReinitPolicy,
    pub alpha_max: f32,
    pub mu_blend: f32,
    pub background: BackgroundPolicy,
    pub preserve_aspect: bool,
    pub tile_size: usize,
    pub eps_skip: f32,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            num_iterations: 300,
            base_lr: 0.1,
            gains: LrGains::default(),
            decay: true,
            decay_final_fraction: 0.1,
            loss: LossKind::Mse,
            loss_weights: LossWeights::default(),
            blur_sigma: 1.0,
            radial_transparency: false,
            init_mode: InitMode::StructureAware,
            init: InitParams::default(),
            init_within_mask: true,
            reinit: ReinitPolicy::default(),
            alpha_max: 1.0,
            mu_blend: 0.0,
            background: BackgroundPolicy::Solid([1.0; 3]),
            preserve_aspect: false,
            tile_size: DEFAULT_TILE_SIZE,
            eps_skip: DEFAULT_EPS_SKIP,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.num_iterations == 0 {
            return bad("num_iterations must be at least 1");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !self.gains.all_positive() {
            return bad("every lr gain must be positive");
        }
        if !(self.decay_final_fraction > 0.0 && self.decay_final_fraction <= 1.0) {
            return bad("decay_final_fraction must lie in (0, 1]");
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return bad("blur_sigma must be non-negative");
        }
        if !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
            return bad("alpha_upper_bound must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mu_blend) {
            return bad("c_blend must lie in [0, 1]");
        }
        if !(self.init.s_min > 0.0 && self.init.s_min <= self.init.s_max) {
            return bad("scale range must satisfy 0 < scale_min <= scale_max");
        }
        if self.init.count == 0 {
            return bad("num_prims must be at least 1");
        }
        if self.tile_size == 0 {
            return bad("tile_size must be at least 1");
        }
        if !(self.eps_skip >= 0.0) {
            return bad("eps_skip must be non-negative");
        }
        if self.reinit.enabled && !(self.reinit.threshold > 0.0 && self.reinit.threshold < 1.0) {
            return bad("prune_threshold must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Video-specific settings.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoConfig {
    pub initial_iterations: usize,
    pub sequential_iterations: usize,
    pub freeze: bool,
    /// Per-channel change needed for a pixel to count as different.
    pub diff_threshold: f32,
    pub remove_stuck: bool,
    pub stuck: StuckPolicy,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            initial_iterations: 300,
            sequential_iterations: 100,
            freeze: true,
            diff_threshold: 2.0 / 255.0,
            remove_stuck: true,
            stuck: StuckPolicy::default(),
        }
    }
}

/// Input and output locations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IoConfig {
    pub target: Option<PathBuf>,
    /// Separate alpha mask; otherwise the target's own alpha channel is used.
    pub target_alpha: Option<PathBuf>,
    /// Template files or directories of PNGs.
    pub templates: Vec<PathBuf>,
    pub frames: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Save an intermediate render every this many iterations (0 = never).
    pub dump_every: usize,
    /// Layer export scale applied after fitting (0 = no export).
    pub export_scale: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub fit: FitConfig,
    pub video: VideoConfig,
    pub io: IoConfig,
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|s| parse_num::<T>(s.trim())).collect()
}

fn parse_background(v: &str) -> Result<BackgroundPolicy, String> {
    match v {
        "white" => Ok(BackgroundPolicy::Solid([1.0; 3])),
        "black" => Ok(BackgroundPolicy::Solid([0.0; 3])),
        "random" | "noise" => Ok(BackgroundPolicy::Noise),
        _ => {
            let rgb = parse_list::<f32>(v)?;
            match rgb[..] {
                [r, g, b] if rgb.iter().all(|c| (0.0..=1.0).contains(c)) => Ok(BackgroundPolicy::Solid([r, g, b])),
                _ => Err("expected white, black, random or r,g,b in [0, 1]".into()),
            }
        }
    }
}

fn parse_loss(v: &str) -> Result<LossKind, String> {
    match v {
        "mse" => Ok(LossKind::Mse),
        "spatial" | "spatial_constrained" => Ok(LossKind::Spatial),
        "combined" => Ok(LossKind::Combined),
        _ => Err("expected mse, spatial or combined".into()),
    }
}

fn parse_init(v: &str) -> Result<InitMode, String> {
    match v {
        "structure_aware" => Ok(InitMode::StructureAware),
        "random" => Ok(InitMode::Random),
        _ => Err("expected structure_aware or random".into()),
    }
}

fn parse_grid(v: &str) -> Result<(usize, usize), String> {
    let (a, b) = v.split_once('x').ok_or("expected ROWSxCOLS")?;
    Ok((parse_num(a.trim())?, parse_num(b.trim())?))
}

impl RunConfig {
    /// Reads and parses a config file; relative paths resolve next to it.
    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::Io { path: path.to_path_buf(), source: e })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::parse(&text, base)?)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut disable_blur = false;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey { line, key: key.into() });
            }
            seen.push(key.into());
            let bad = |reason: String| ConfigError::BadValue { line, key: key.into(), value: value.into(), reason };
            let path = |v: &str| base_dir.join(v);
            let f = &mut cfg.fit;
            let known: Result<bool, String> = (|| {
                match key {
                    "num_iterations" => f.num_iterations = parse_num(value)?,
                    "learning_rate" => f.base_lr = parse_num(value)?,
                    "lr_gain_x" => f.gains.x = parse_num(value)?,
                    "lr_gain_y" => f.gains.y = parse_num(value)?,
                    "lr_gain_r" => f.gains.s = parse_num(value)?,
                    "lr_gain_v" => f.gains.nu = parse_num(value)?,
                    "lr_gain_theta" => f.gains.theta = parse_num(value)?,
                    "lr_gain_c" => f.gains.c = parse_num(value)?,
                    "do_decay" => f.decay = parse_bool(value)?,
                    "decay_final_fraction" => f.decay_final_fraction = parse_num(value)?,
                    "loss_type" => f.loss = parse_loss(value)?,
                    "mse_weight" => f.loss_weights.mse = parse_num(value)?,
                    "gray_l1_weight" => f.loss_weights.gray_l1 = parse_num(value)?,
                    "alpha_loss_weight" => f.loss_weights.alpha = parse_num(value)?,
                    "do_gaussian_blur" => disable_blur = !parse_bool(value)?,
                    "blur_sigma" => f.blur_sigma = parse_num(value)?,
                    "radial_transparency" => f.radial_transparency = parse_bool(value)?,
                    "initializer" => f.init_mode = parse_init(value)?,
                    "num_prims" => f.init.count = parse_num(value)?,
                    "scale_min" => f.init.s_min = parse_num(value)?,
                    "scale_max" => f.init.s_max = parse_num(value)?,
                    "v_init_bias" => f.init.v_init_bias = parse_num(value)?,
                    "std_c_init" => f.init.sigma_c = parse_num(value)?,
                    "variance_window_size" => f.init.variance_window = parse_num(value)?,
                    "variance_base_prob" => f.init.base_prob = parse_num(value)?,
                    "max_prims_per_pixel" => f.init.density_cap = parse_num(value)?,
                    "init_within_mask" => f.init_within_mask = parse_bool(value)?,
                    "reinit" => f.reinit.enabled = parse_bool(value)?,
                    "prune_threshold" => f.reinit.threshold = parse_num(value)?,
                    "prune_iterations" => f.reinit.period = parse_num(value)?,
                    "reinit_warmup" => f.reinit.warmup = parse_num(value)?,
                    "reinit_tail_skip" => f.reinit.tail_skip = parse_num(value)?,
                    "alpha_upper_bound" => f.alpha_max = parse_num(value)?,
                    "c_blend" => f.mu_blend = parse_num(value)?,
                    "bg_color" => f.background = parse_background(value)?,
                    "preserve_aspect" => f.preserve_aspect = parse_bool(value)?,
                    "tile_size" => f.tile_size = parse_num(value)?,
                    "eps_skip" => f.eps_skip = parse_num(value)?,
                    "seed" => f.seed = parse_num(value)?,
                    "initial_iterations" => cfg.video.initial_iterations = parse_num(value)?,
                    "sequential_iterations" => cfg.video.sequential_iterations = parse_num(value)?,
                    "freeze_unchanged" => cfg.video.freeze = parse_bool(value)?,
                    "diff_threshold" => cfg.video.diff_threshold = parse_num(value)?,
                    "remove_stuck" => cfg.video.remove_stuck = parse_bool(value)?,
                    "stuck_grid" => cfg.video.stuck.grid = parse_grid(value)?,
                    "stuck_per_region" => cfg.video.stuck.per_region = parse_num(value)?,
                    "stuck_tau_scale" => cfg.video.stuck.tau_scale = parse_num(value)?,
                    "stuck_tau_alpha" => cfg.video.stuck.tau_alpha = parse_num(value)?,
                    "stuck_percentile" => cfg.video.stuck.percentile = parse_num(value)?,
                    "stuck_decay" => cfg.video.stuck.decay = parse_num(value)?,
                    "stuck_triggers" => cfg.video.stuck.triggers = parse_list(value)?,
                    "target" => cfg.io.target = Some(path(value)),
                    "target_alpha" => cfg.io.target_alpha = Some(path(value)),
                    "templates" => {
                        cfg.io.templates = value.split(',').map(|p| path(p.trim())).collect();
                    }
                    "frames" => cfg.io.frames = Some(path(value)),
                    "output" => cfg.io.output = Some(path(value)),
                    "dump_every" => cfg.io.dump_every = parse_num(value)?,
                    "psd_scale_factor" | "export_scale" => cfg.io.export_scale = parse_num(value)?,
                    _ => return Ok(false),
                }
                Ok(true)
            })();
            match known {
                Ok(true) => {}
                Ok(false) => return Err(ConfigError::UnknownKey { line, key: key.into() }),
                Err(e) => return Err(bad(e)),
            }
        }
        if disable_blur {
            cfg.fit.blur_sigma = 0.0;
        }
        cfg.fit.validate()?;
        cfg.video.stuck.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
