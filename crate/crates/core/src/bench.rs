//! Wall-clock comparison of the tiled renderer and gradient pass against
//! the sequential reference on a seeded random scene.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::fit::loss_mse;
use crate::grad::{backward, backward_naive};
use crate::prep::gaussian_blur_template;
use crate::raster::{bin_tiles, render_forward, render_naive, Background, RenderOptions};
use crate::scene::Scene;
use crate::synth::{blob_template, random_scene, smooth_image, SceneRanges};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub size: usize,
    pub prims: usize,
    pub scale: (f32, f32),
    /// Timed iterations of the tiled path, after one untimed warm-up.
    pub iterations: usize,
    /// Timed iterations of the reference path.
    pub naive_iterations: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { size: 512, prims: 1000, scale: (2.0, 20.0), iterations: 20, naive_iterations: 2, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub threads: usize,
    pub forward: Duration,
    pub backward: Duration,
    pub naive_forward: Duration,
    pub naive_backward: Duration,
}

impl BenchReport {
    pub fn fast_total(&self) -> Duration {
        self.forward + self.backward
    }

    pub fn naive_total(&self) -> Duration {
        self.naive_forward + self.naive_backward
    }

    /// Reference time over tiled time, per forward+backward iteration.
    pub fn speedup(&self) -> f64 {
        self.naive_total().as_secs_f64() / self.fast_total().as_secs_f64().max(1e-12)
    }
}

/// Seeded scene of blurred blob templates used by the benchmark.
pub fn bench_scene(cfg: &BenchConfig) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let templates = (0..4)
        .map(|_| gaussian_blur_template(&blob_template(32, 4, &mut rng), 1.0).expect("sigma is valid"))
        .collect();
    let ranges = SceneRanges { s: cfg.scale, ..SceneRanges::default() };
    random_scene(&mut rng, cfg.prims, cfg.size, cfg.size, templates, ranges)
}

fn mean(total: Duration, n: usize) -> Duration {
    total / n.max(1) as u32
}

/// Times forward and backward on both paths with an MSE loss against a
/// smooth target. Per-iteration means are reported.
pub fn run_bench(cfg: &BenchConfig) -> BenchReport {
    let scene = bench_scene(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let target = smooth_image(cfg.size, cfg.size, &mut rng);
    let bg = Background::Solid([1.0; 3]);
    let opts = RenderOptions::default();

    let fast_iter = |timed: bool, fwd: &mut Duration, bwd: &mut Duration| {
        let t0 = Instant::now();
        let bins = bin_tiles(&scene, opts.tile_size, opts.padding);
        let (out, saved) = render_forward(&scene, &bins, &bg, opts.eps_skip, true);
        let t1 = Instant::now();
        let (_, d_color) = loss_mse(&out.color, &target).expect("shapes match");
        let t2 = Instant::now();
        let grads = backward(&scene, &saved.expect("saved"), &d_color, None, &bg).expect("fresh state");
        let t3 = Instant::now();
        std::hint::black_box(grads);
        if timed {
            *fwd += t1 - t0;
            *bwd += t3 - t2;
        }
    };
    let (mut fwd, mut bwd) = (Duration::ZERO, Duration::ZERO);
    fast_iter(false, &mut fwd, &mut bwd);
    for _ in 0..cfg.iterations {
        fast_iter(true, &mut fwd, &mut bwd);
    }

    let (mut nfwd, mut nbwd) = (Duration::ZERO, Duration::ZERO);
    for _ in 0..cfg.naive_iterations {
        let t0 = Instant::now();
        let out = render_naive(&scene, &bg);
        let t1 = Instant::now();
        let (_, d_color) = loss_mse(&out.color, &target).expect("shapes match");
        let t2 = Instant::now();
        std::hint::black_box(backward_naive(&scene, &d_color, None, &bg).expect("shapes match"));
        let t3 = Instant::now();
        nfwd += t1 - t0;
        nbwd += t3 - t2;
    }

    BenchReport {
        threads: rayon::current_num_threads(),
        forward: mean(fwd, cfg.iterations),
        backward: mean(bwd, cfg.iterations),
        naive_forward: mean(nfwd, cfg.naive_iterations),
        naive_backward: mean(nbwd, cfg.naive_iterations),
    }
}
