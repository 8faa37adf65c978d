//! Randomized analytic-versus-numeric gradient comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, finite_diff_grad, FdSteps, Gradients};
use crate::image::{Image, Plane};
use crate::prep::gaussian_blur_template;
use crate::raster::{bin_tiles, noisy_background, render_forward, Background, NaiveRender};
use crate::scene::{PrimitiveTemplate, Scene, PARAMS_PER_PRIMITIVE};
use crate::synth::{blob_template, random_scene, smooth_image, SceneRanges};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub seeds: usize,
    pub base_seed: u64,
    pub max_prims: usize,
    pub min_canvas: usize,
    pub max_canvas: usize,
    pub blur_sigma: f32,
    /// Inclusive range of template side lengths, margins included.
    pub template_size: (usize, usize),
    pub scale: (f32, f32),
    /// Weight of the alpha term in the probe loss.
    pub alpha_weight: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub steps: FdSteps,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            base_seed: 0,
            max_prims: 8,
            min_canvas: 24,
            max_canvas: 48,
            blur_sigma: 1.0,
            template_size: (16, 24),
            scale: (3.0, 12.0),
            alpha_weight: 0.5,
            rel_tol: 1e-2,
            abs_tol: 1e-5,
            steps: FdSteps::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub seed: u64,
    pub primitive: usize,
    pub param: String,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub primitives: usize,
    pub checked: usize,
    /// Largest relative error among scalars whose absolute error exceeds the
    /// absolute tolerance.
    pub worst_rel: f64,
    pub worst_abs: f64,
    pub failures: Vec<Mismatch>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub seeds: Vec<SeedReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.seeds.iter().all(|s| s.failures.is_empty())
    }

    pub fn worst_rel(&self) -> f64 {
        self.seeds.iter().map(|s| s.worst_rel).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.seeds.iter().map(|s| s.checked).sum()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Mismatch> {
        self.seeds.iter().flat_map(|s| s.failures.iter())
    }
}

/// A randomized scene plus everything its probe loss needs.
pub struct Probe {
    pub scene: Scene,
    pub background: Background,
    pub target: Image,
    pub target_alpha: Plane,
}

/// Builds the randomized probe used for `seed`.
pub fn probe(cfg: &GradCheckConfig, seed: u64) -> Probe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(cfg.min_canvas..=cfg.max_canvas);
    let h = rng.random_range(cfg.min_canvas..=cfg.max_canvas);
    let n = rng.random_range(1..=cfg.max_prims);
    // Zero margins wider than the blur radius keep the mask continuous at
    // the template border, where zero padding takes over.
    let margin = 4.max((3.0 * cfg.blur_sigma).ceil() as usize + 1);
    let templates: Vec<PrimitiveTemplate> = (0..2)
        .map(|_| {
            let lo = cfg.template_size.0.max(2 * margin + 4);
            let size = rng.random_range(lo..=cfg.template_size.1.max(lo));
            let t = blob_template(size, margin, &mut rng);
            gaussian_blur_template(&t, cfg.blur_sigma).expect("valid sigma")
        })
        .collect();
    let ranges = SceneRanges { s: cfg.scale, nu: (-2.0, 2.0), c_var: (-2.0, 2.0) };
    let mut scene = random_scene(&mut rng, n, w, h, templates, ranges);
    scene.mu_blend = if rng.random_bool(0.5) { 0.0 } else { 0.5 };
    scene.alpha_max = rng.random_range(0.6..=1.0);
    let background = if rng.random_bool(0.5) {
        Background::Solid([rng.random(), rng.random(), rng.random()])
    } else {
        Background::Image(noisy_background(w, h, &mut rng))
    };
    let target = smooth_image(w, h, &mut rng);
    let target_alpha = Plane::from_fn(w, h, |x, y| 0.5 + 0.4 * (x as f32 * 0.2).sin() * (y as f32 * 0.15).cos());
    Probe { scene, background, target, target_alpha }
}

fn analytic(p: &Probe, alpha_weight: f64) -> Gradients {
    let s = &p.scene;
    let bins = bin_tiles(s, 16, 2.0);
    let (out, saved) = render_forward(s, &bins, &p.background, 0.0, true);
    let saved = saved.expect("saved state requested");
    let (w, h) = (s.canvas_w, s.canvas_h);
    let color_scale = 2.0 / (3 * w * h) as f32;
    let alpha_scale = (2.0 * alpha_weight / (w * h) as f64) as f32;
    let d_color = Image::from_vec(
        w,
        h,
        out.color.as_slice().iter().zip(p.target.as_slice()).map(|(a, b)| color_scale * (a - b)).collect(),
    );
    let d_alpha = Plane::from_vec(
        w,
        h,
        out.alpha.as_slice().iter().zip(p.target_alpha.as_slice()).map(|(a, b)| alpha_scale * (a - b)).collect(),
    );
    backward(s, &saved, &d_color, Some(&d_alpha), &p.background).expect("fresh saved state")
}

fn probe_loss(p: &Probe, alpha_weight: f64) -> impl Fn(&NaiveRender<f64>) -> f64 + Sync + '_ {
    move |r: &NaiveRender<f64>| {
        let n = (r.width * r.height) as f64;
        let color: f64 = r.color.iter().zip(p.target.as_slice()).map(|(a, b)| (a - *b as f64).powi(2)).sum();
        let alpha: f64 = r.alpha.iter().zip(p.target_alpha.as_slice()).map(|(a, b)| (a - *b as f64).powi(2)).sum();
        color / (3.0 * n) + alpha_weight * alpha / n
    }
}

const PARAM_NAMES: [&str; PARAMS_PER_PRIMITIVE] = ["x", "y", "s", "theta", "nu", "c_var[0]", "c_var[1]", "c_var[2]"];

/// Compares both gradients of one probe scene.
pub fn check_seed(cfg: &GradCheckConfig, seed: u64) -> SeedReport {
    let p = probe(cfg, seed);
    let a = analytic(&p, cfg.alpha_weight);
    let n = finite_diff_grad(&p.scene, &p.background, probe_loss(&p, cfg.alpha_weight), cfg.steps);
    let mut report = SeedReport {
        seed,
        primitives: p.scene.len(),
        checked: 0,
        worst_rel: 0.0,
        worst_abs: 0.0,
        failures: Vec::new(),
    };
    for (i, (ga, gn)) in a.prims.iter().zip(&n.prims).enumerate() {
        for (k, (va, vn)) in ga.to_array().iter().zip(gn.to_array()).enumerate() {
            let abs = (va - vn).abs();
            let rel = abs / va.abs().max(vn.abs()).max(f64::MIN_POSITIVE);
            report.checked += 1;
            report.worst_abs = report.worst_abs.max(abs);
            if abs > cfg.abs_tol {
                report.worst_rel = report.worst_rel.max(rel);
                if rel > cfg.rel_tol {
                    report.failures.push(Mismatch {
                        seed,
                        primitive: i,
                        param: PARAM_NAMES[k].to_string(),
                        analytic: *va,
                        numeric: vn,
                    });
                }
            }
        }
    }
    report
}

pub fn run_gradcheck(cfg: &GradCheckConfig) -> GradCheckReport {
    GradCheckReport { seeds: (0..cfg.seeds as u64).map(|i| check_seed(cfg, cfg.base_seed + i)).collect() }
}
