use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, lr_schedule, OptimState, StepOptions};
use super::loss::{format_psnr, psnr, LossSpec};
use super::reinit::reinit_low_opacity;
use super::FitError;
use crate::config::{FitConfig, InitMode};
use crate::grad::backward;
use crate::image::{Image, Plane};
use crate::prep::{gaussian_blur_template, radial_falloff, random_init, structure_aware_init, StructureSampler};
use crate::raster::{bin_tiles, render, render_forward, Background, RenderOptions, RenderOutput};
use crate::scene::{pack_params, write_params, PrimitiveTemplate, Scene};

/// One row of the optimization log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// Loss of the render before this iteration's update.
    pub loss: f64,
    pub psnr: f64,
    pub lr: f32,
    pub reinit_count: usize,
}

/// Applies the configured template preprocessing: optional radial falloff,
/// then the soft-rasterization blur.
pub fn prepare_templates(templates: &[PrimitiveTemplate], cfg: &FitConfig) -> Result<Vec<PrimitiveTemplate>, FitError> {
    if templates.is_empty() {
        return Err(FitError::NoTemplates);
    }
    templates
        .iter()
        .map(|t| {
            let t = if cfg.radial_transparency { radial_falloff(t) } else { t.clone() };
            Ok(gaussian_blur_template(&t, cfg.blur_sigma)?)
        })
        .collect()
}

fn support_mask(alpha: &Plane) -> Plane {
    Plane::from_fn(alpha.width(), alpha.height(), |x, y| if alpha.get(x, y) > 0.0 { 1.0 } else { 0.0 })
}

/// Builds the starting scene from already-prepared templates. With a target
/// alpha and `init_within_mask`, structure-aware sampling is restricted to
/// its support.
pub fn initial_scene(
    target: &Image,
    target_alpha: Option<&Plane>,
    templates: Vec<PrimitiveTemplate>,
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Scene, FitError> {
    let mask = target_alpha.filter(|_| cfg.init_within_mask).map(support_mask);
    let mut scene = match cfg.init_mode {
        InitMode::StructureAware => structure_aware_init(target, templates, &cfg.init, mask.as_ref(), rng)?,
        InitMode::Random => random_init(target.width(), target.height(), templates, &cfg.init, rng)?,
    };
    scene.alpha_max = cfg.alpha_max;
    scene.mu_blend = cfg.mu_blend;
    scene.background = cfg.background;
    scene.preserve_aspect = cfg.preserve_aspect;
    Ok(scene)
}

/// Mutable optimization state for one target.
///
/// Each step draws the background, bins, renders with saved state,
/// evaluates the loss, back-propagates, applies Adam and optionally
/// re-samples faded primitives.
pub struct FitSession {
    pub scene: Scene,
    pub state: OptimState,
    pub history: Vec<IterRecord>,
    loss: LossSpec,
    cfg: FitConfig,
    render_opts: RenderOptions,
    sampler: Option<StructureSampler>,
    frozen: Option<Vec<bool>>,
    rng: ChaCha8Rng,
}

impl FitSession {
    pub fn new(scene: Scene, loss: LossSpec, cfg: &FitConfig, rng: ChaCha8Rng) -> Result<Self, FitError> {
        cfg.validate()?;
        if (scene.canvas_w, scene.canvas_h) != (loss.target.width(), loss.target.height()) {
            return Err(FitError::ShapeMismatch {
                expected: (loss.target.width(), loss.target.height()),
                got: (scene.canvas_w, scene.canvas_h),
            });
        }
        // Re-sampling always respects the alpha support, so faded primitives
        // move to where they can contribute.
        let sampler = if cfg.reinit.enabled {
            let mask = loss.target_alpha.as_ref().map(support_mask);
            Some(StructureSampler::new(&loss.target, &cfg.init, mask.as_ref())?)
        } else {
            None
        };
        let (params, layout) = pack_params(&scene);
        debug_assert_eq!(params.len(), layout.len());
        let render_opts = RenderOptions {
            tile_size: cfg.tile_size,
            eps_skip: cfg.eps_skip,
            ..RenderOptions::for_blur(cfg.blur_sigma)
        };
        Ok(Self {
            state: OptimState::new(layout),
            scene,
            history: Vec::new(),
            loss,
            cfg: cfg.clone(),
            render_opts,
            sampler,
            frozen: None,
            rng,
        })
    }

    pub fn config(&self) -> &FitConfig {
        &self.cfg
    }

    pub fn loss_spec(&self) -> &LossSpec {
        &self.loss
    }

    pub fn render_options(&self) -> &RenderOptions {
        &self.render_opts
    }

    /// Excludes flagged primitives from updates and re-sampling.
    pub fn set_frozen(&mut self, frozen: Option<Vec<bool>>) -> Result<(), FitError> {
        if let Some(f) = &frozen {
            if f.len() != self.scene.len() {
                return Err(FitError::LayoutMismatch { expected: self.scene.len(), got: f.len() });
            }
        }
        self.frozen = frozen;
        Ok(())
    }

    pub fn frozen(&self) -> Option<&[bool]> {
        self.frozen.as_deref()
    }

    /// Runs iteration `iter` of a `total`-iteration schedule.
    pub fn step(&mut self, iter: usize, total: usize) -> Result<IterRecord, FitError> {
        let (w, h) = (self.scene.canvas_w, self.scene.canvas_h);
        let background = Background::for_iteration(self.scene.background, w, h, &mut self.rng);
        let bins = bin_tiles(&self.scene, self.render_opts.tile_size, self.render_opts.padding);
        let (out, saved) = render_forward(&self.scene, &bins, &background, self.render_opts.eps_skip, true);
        let saved = saved.expect("forward was asked to save");
        let eval = self.loss.evaluate(&out)?;
        let grads = backward(&self.scene, &saved, &eval.d_color, eval.d_alpha.as_ref(), &background)?;

        let lr = lr_schedule(iter, total, self.cfg.base_lr, self.cfg.decay, self.cfg.decay_final_fraction);
        let step_opts = StepOptions { gains: self.cfg.gains, s_min: self.cfg.init.s_min, s_max: self.cfg.init.s_max };
        let (mut params, layout) = pack_params(&self.scene);
        adam_step(&mut params, &grads.to_flat(), &mut self.state, lr, &step_opts, self.frozen.as_deref())?;
        write_params(&mut self.scene, &params, layout)?;

        let mut reinit_count = 0;
        if self.cfg.reinit.fires_at(iter, total) {
            if let Some(sampler) = &self.sampler {
                reinit_count = reinit_low_opacity(
                    &mut self.scene,
                    sampler,
                    self.cfg.reinit.threshold,
                    Some(&mut self.state),
                    self.frozen.as_deref(),
                    &mut self.rng,
                );
            }
        }
        let record = IterRecord { iter, loss: eval.value, psnr: psnr(&out.color, &self.loss.target)?, lr, reinit_count };
        self.history.push(record);
        Ok(record)
    }

    /// Runs `total` iterations, calling `observe` after each.
    pub fn run(&mut self, total: usize, mut observe: impl FnMut(&Self, &IterRecord)) -> Result<(), FitError> {
        for iter in 0..total {
            let rec = self.step(iter, total)?;
            observe(self, &rec);
        }
        Ok(())
    }

    /// Render over the display background (noise policies show white).
    pub fn render_display(&self) -> RenderOutput {
        render(&self.scene, &Background::for_display(self.scene.background), &self.render_opts)
    }

    pub fn finish(self) -> FitResult {
        let render = self.render_display();
        FitResult { scene: self.scene, history: self.history, render }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub scene: Scene,
    pub history: Vec<IterRecord>,
    /// Final render over the display background.
    pub render: RenderOutput,
}

/// Full single-image pipeline: template preparation, initialization and
/// `cfg.num_iterations` optimization steps. Deterministic for a fixed seed.
pub fn optimize(
    target: &Image,
    target_alpha: Option<&Plane>,
    templates: &[PrimitiveTemplate],
    cfg: &FitConfig,
) -> Result<FitResult, FitError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prepared = prepare_templates(templates, cfg)?;
    let scene = initial_scene(target, target_alpha, prepared, cfg, &mut rng)?;
    let loss = LossSpec::new(cfg.loss, cfg.loss_weights, target.clone(), target_alpha.cloned())?;
    let mut session = FitSession::new(scene, loss, cfg, rng)?;
    session.run(cfg.num_iterations, |_, _| {})?;
    Ok(session.finish())
}

/// Writes `iter,loss,psnr,lr,reinit_count` rows with a header.
pub fn write_history_csv<W: Write>(history: &[IterRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "iter,loss,psnr,lr,reinit_count")?;
    for r in history {
        writeln!(out, "{},{:.9e},{},{:.6e},{}", r.iter, r.loss, format_psnr(r.psnr), r.lr, r.reinit_count)?;
    }
    Ok(())
}
