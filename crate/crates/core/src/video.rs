//! Frame-sequence fitting: warm starts from the previous frame, freezing of
//! primitives away from inter-frame change, and opacity decay for large
//! opaque front primitives that block a changed region.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{FitConfig, VideoConfig};
use crate::fit::{
    initial_scene, loss_mse, prepare_templates, FitError, FitSession, IterRecord, LossSpec,
};
use crate::image::{Image, Plane};
use crate::raster::{conservative_bbox, render, sigmoid, Background, RenderOptions};
use crate::scene::{PrimitiveTemplate, Scene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VideoError {
    #[error("frame {index} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    ShapeMismatch { index: usize, want_w: usize, want_h: usize, got_w: usize, got_h: usize },
    #[error("no frames supplied")]
    NoFrames,
    #[error("invalid stuck policy: {0}")]
    InvalidPolicy(&'static str),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Per-pixel flags marking where two frames differ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffMask {
    width: usize,
    height: usize,
    changed: Vec<bool>,
}

impl DiffMask {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let changed = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self { width, height, changed }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.changed[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.changed.iter().filter(|&&c| c).count()
    }

    /// Summed-area table with a zero first row and column.
    fn integral(&self) -> Vec<u32> {
        let w1 = self.width + 1;
        let mut sat = vec![0u32; w1 * (self.height + 1)];
        for y in 0..self.height {
            let mut row = 0u32;
            for x in 0..self.width {
                row += self.get(x, y) as u32;
                sat[(y + 1) * w1 + x + 1] = sat[y * w1 + x + 1] + row;
            }
        }
        sat
    }
}

/// Marks pixels whose largest per-channel change exceeds `threshold`.
pub fn diff_mask(prev: &Image, cur: &Image, threshold: f32) -> Result<DiffMask, VideoError> {
    if !prev.same_shape(cur) {
        return Err(VideoError::ShapeMismatch {
            index: 1,
            want_w: prev.width(),
            want_h: prev.height(),
            got_w: cur.width(),
            got_h: cur.height(),
        });
    }
    Ok(DiffMask::from_fn(prev.width(), prev.height(), |x, y| {
        let (a, b) = (prev.get(x, y), cur.get(x, y));
        (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0f32, f32::max) > threshold
    }))
}

/// A primitive is frozen when its padded conservative box contains no
/// changed pixel (including when the box misses the canvas).
pub fn freeze_flags(scene: &Scene, mask: &DiffMask, padding: f32) -> Vec<bool> {
    debug_assert_eq!((mask.width, mask.height), (scene.canvas_w, scene.canvas_h));
    let sat = mask.integral();
    let w1 = mask.width + 1;
    (0..scene.len())
        .map(|i| match conservative_bbox(scene, i, padding) {
            None => true,
            Some(r) => {
                let at = |x: usize, y: usize| sat[y * w1 + x];
                let sum = at(r.x1 + 1, r.y1 + 1) + at(r.x0, r.y0) - at(r.x0, r.y1 + 1) - at(r.x1 + 1, r.y0);
                sum == 0
            }
        })
        .collect()
}

/// Thresholds for detecting and decaying stuck primitives.
#[derive(Clone, Debug, PartialEq)]
pub struct StuckPolicy {
    /// Region grid as (rows, columns).
    pub grid: (usize, usize),
    /// Maximum decays per region per trigger.
    pub per_region: usize,
    /// Minimum scale as a fraction of canvas width.
    pub tau_scale: f32,
    /// Minimum effective opacity.
    pub tau_alpha: f32,
    /// Minimum front-ness, as a fraction of the region population.
    pub percentile: f32,
    /// Multiplier applied to the opacity logit.
    pub decay: f32,
    /// Iterations (within a frame) before which the heuristic runs.
    pub triggers: Vec<usize>,
}

impl Default for StuckPolicy {
    fn default() -> Self {
        Self {
            grid: (4, 4),
            per_region: 4,
            tau_scale: 0.1,
            tau_alpha: 0.7,
            percentile: 0.7,
            decay: 0.3,
            triggers: vec![20, 45, 70],
        }
    }
}

impl StuckPolicy {
    pub fn validate(&self) -> Result<(), VideoError> {
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(VideoError::InvalidPolicy("grid must have at least one row and column"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(VideoError::InvalidPolicy("decay must lie in (0, 1)"));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(VideoError::InvalidPolicy("percentile must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Decays the opacity logit of at most `per_region` stuck primitives in
/// each grid region and returns their indices in ascending order.
///
/// A primitive is stuck when it is not frozen, its scale is at least
/// `tau_scale * canvas_w`, its effective opacity is at least `tau_alpha`
/// and its front-ness rank within the region is at least
/// `percentile * |region|`. Ranks run from 1 (back-most) to `|region|`
/// (front-most). Regions hold the primitives whose centers fall inside them;
/// centers off the canvas belong to no region. Candidates are ordered by
/// `s * alpha`, descending, ties broken by index.
pub fn remove_stuck(scene: &mut Scene, frozen: Option<&[bool]>, policy: &StuckPolicy) -> Vec<usize> {
    let (rows, cols) = policy.grid;
    let (w, h) = (scene.canvas_w as f32, scene.canvas_h as f32);
    let mut regions: Vec<Vec<usize>> = vec![Vec::new(); rows * cols];
    for (i, p) in scene.primitives.iter().enumerate() {
        if !(p.x >= 0.0 && p.x < w && p.y >= 0.0 && p.y < h) {
            continue;
        }
        let r = ((p.y / h * rows as f32) as usize).min(rows - 1);
        let c = ((p.x / w * cols as f32) as usize).min(cols - 1);
        regions[r * cols + c].push(i);
    }
    let mut decayed = Vec::new();
    for mut members in regions {
        let n = members.len();
        // Back-most first, so position + 1 is the front-ness rank.
        members.sort_by_key(|&i| std::cmp::Reverse(scene.primitives[i].z));
        let mut scored: Vec<(f32, usize)> = members
            .iter()
            .enumerate()
            .filter_map(|(pos, &i)| {
                let p = &scene.primitives[i];
                let alpha = scene.alpha_max * sigmoid(p.nu);
                let stuck = !frozen.is_some_and(|f| f[i])
                    && p.s >= policy.tau_scale * w
                    && alpha >= policy.tau_alpha
                    && (pos + 1) as f32 >= policy.percentile * n as f32;
                stuck.then_some((p.s * alpha, i))
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in scored.iter().take(policy.per_region) {
            scene.primitives[i].nu *= policy.decay;
            decayed.push(i);
        }
    }
    decayed.sort_unstable();
    decayed
}

/// Outcome of fitting one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub scene: Scene,
    pub history: Vec<IterRecord>,
    /// Color MSE of the final display render against the frame.
    pub mse: f64,
    pub frozen_count: usize,
    /// Indices decayed at each trigger, in trigger order.
    pub decayed: Vec<Vec<usize>>,
}

fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame as u64);
    rng
}

fn display_mse(scene: &Scene, target: &Image, opts: &RenderOptions) -> Result<f64, FitError> {
    let out = render(scene, &Background::for_display(scene.background), opts);
    Ok(loss_mse(&out.color, target)?.0)
}

/// Fits `target` starting from `scene` for `iterations` steps with fresh
/// moments. Primitives flagged in `frozen` are untouched; the stuck
/// heuristic runs before each trigger iteration when `stuck` is given.
pub fn warm_start_fit(
    scene: Scene,
    target: &Image,
    target_alpha: Option<&Plane>,
    cfg: &FitConfig,
    iterations: usize,
    frozen: Option<Vec<bool>>,
    stuck: Option<&StuckPolicy>,
    rng: ChaCha8Rng,
) -> Result<FrameResult, FitError> {
    let loss = LossSpec::new(cfg.loss, cfg.loss_weights, target.clone(), target_alpha.cloned())?;
    let frozen_count = frozen.as_ref().map_or(0, |f| f.iter().filter(|&&b| b).count());
    let mut session = FitSession::new(scene, loss, cfg, rng)?;
    session.set_frozen(frozen)?;
    let mut decayed = Vec::new();
    for iter in 0..iterations {
        if let Some(policy) = stuck {
            if policy.triggers.contains(&iter) {
                let frozen = session.frozen().map(<[bool]>::to_vec);
                decayed.push(remove_stuck(&mut session.scene, frozen.as_deref(), policy));
            }
        }
        session.step(iter, iterations)?;
    }
    let mse = display_mse(&session.scene, target, session.render_options())?;
    Ok(FrameResult { scene: session.scene, history: session.history, mse, frozen_count, decayed })
}

fn check_frames(frames: &[Image], want: (usize, usize)) -> Result<(), VideoError> {
    for (index, f) in frames.iter().enumerate() {
        if (f.width(), f.height()) != want {
            return Err(VideoError::ShapeMismatch {
                index,
                want_w: want.0,
                want_h: want.1,
                got_w: f.width(),
                got_h: f.height(),
            });
        }
    }
    Ok(())
}

/// Fits every frame in order. Frame 0 starts from a fresh initialization
/// with the initial budget; later frames warm-start from the previous
/// result with the sequential budget.
pub fn optimize_video(
    frames: &[Image],
    target_alpha: Option<&Plane>,
    templates: &[PrimitiveTemplate],
    cfg: &FitConfig,
    video: &VideoConfig,
) -> Result<Vec<FrameResult>, VideoError> {
    let first = frames.first().ok_or(VideoError::NoFrames)?;
    check_frames(frames, (first.width(), first.height()))?;
    cfg.validate().map_err(FitError::from)?;
    let mut rng = frame_rng(cfg.seed, 0);
    let prepared = prepare_templates(templates, cfg)?;
    let scene = initial_scene(first, target_alpha, prepared, cfg, &mut rng)?;
    let head = warm_start_fit(scene, first, target_alpha, cfg, video.initial_iterations, None, None, rng)?;
    let start = head.scene.clone();
    let mut results = vec![head];
    results.extend(continue_video(start, first, &frames[1..], 1, target_alpha, cfg, video)?);
    Ok(results)
}

/// Warm-start fitting of `frames`, the first of which follows `prev_frame`
/// whose fitted scene is `scene`. `first_index` numbers the first frame for
/// seeding, so a split run reproduces a whole one.
pub fn continue_video(
    mut scene: Scene,
    prev_frame: &Image,
    frames: &[Image],
    first_index: usize,
    target_alpha: Option<&Plane>,
    cfg: &FitConfig,
    video: &VideoConfig,
) -> Result<Vec<FrameResult>, VideoError> {
    check_frames(frames, (prev_frame.width(), prev_frame.height()))?;
    if video.remove_stuck {
        video.stuck.validate()?;
    }
    cfg.validate().map_err(FitError::from)?;
    let padding = RenderOptions::for_blur(cfg.blur_sigma).padding;
    let mut prev = prev_frame;
    let mut results = Vec::with_capacity(frames.len());
    for (k, frame) in frames.iter().enumerate() {
        let frozen = if video.freeze {
            let mask = diff_mask(prev, frame, video.diff_threshold)?;
            Some(freeze_flags(&scene, &mask, padding))
        } else {
            None
        };
        let stuck = video.remove_stuck.then_some(&video.stuck);
        let rng = frame_rng(cfg.seed, first_index + k);
        let r = warm_start_fit(scene, frame, target_alpha, cfg, video.sequential_iterations, frozen, stuck, rng)?;
        scene = r.scene.clone();
        results.push(r);
        prev = frame;
    }
    Ok(results)
}

#[cfg(test)]
mod tests;
