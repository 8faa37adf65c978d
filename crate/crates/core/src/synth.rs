//! Seeded synthetic templates, scenes and targets for the gradient checker,
//! the benchmark and tests.

use std::f32::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::image::Image;
use crate::scene::{PrimitiveParams, PrimitiveTemplate, Scene};

fn smoothstep(e0: f32, e1: f32, x: f32) -> f32 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Soft elliptical blob with a linear color ramp.
///
/// Alpha is exactly zero within `margin` texels of the border, so a later
/// blur with radius up to `margin` keeps the edge texels empty.
pub fn blob_template<R: Rng + ?Sized>(size: usize, margin: usize, rng: &mut R) -> PrimitiveTemplate {
    assert!(size > 2 * margin + 2, "template too small for margin");
    let inner = (size - 1 - 2 * margin) as f32 * 0.5;
    let c = (size - 1) as f32 * 0.5;
    let rx = inner * rng.random_range(0.6..1.0f32);
    let ry = inner * rng.random_range(0.6..1.0f32);
    let base: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let tip: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let peak = rng.random_range(0.7..1.0f32);
    PrimitiveTemplate::from_fn(size, size, |x, y| {
        let dx = (x as f32 - c) / rx;
        let dy = (y as f32 - c) / ry;
        let r = (dx * dx + dy * dy).sqrt();
        let a = peak * (1.0 - smoothstep(0.0, 1.0, r));
        let t = x as f32 / (size - 1) as f32;
        let mut px = [0.0; 4];
        for ch in 0..3 {
            px[ch] = base[ch] + (tip[ch] - base[ch]) * t;
        }
        px[3] = a.clamp(0.0, 1.0);
        px
    })
    .expect("blob texels are in range")
}

/// Opaque-ish square stamp with a uniform color and a soft one-texel rim.
pub fn square_template(size: usize, rgb: [f32; 3]) -> PrimitiveTemplate {
    PrimitiveTemplate::from_fn(size, size, |x, y| {
        let edge = x == 0 || y == 0 || x == size - 1 || y == size - 1;
        [rgb[0], rgb[1], rgb[2], if edge { 0.0 } else { 1.0 }]
    })
    .expect("square texels are in range")
}

/// Ranges for [`random_scene`].
#[derive(Clone, Copy, Debug)]
pub struct SceneRanges {
    pub s: (f32, f32),
    pub nu: (f32, f32),
    pub c_var: (f32, f32),
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self { s: (2.0, 12.0), nu: (-2.0, 2.0), c_var: (-2.0, 2.0) }
    }
}

/// `n` primitives with uniform positions over the canvas, random templates
/// and a random depth permutation.
pub fn random_scene<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    width: usize,
    height: usize,
    templates: Vec<PrimitiveTemplate>,
    ranges: SceneRanges,
) -> Scene {
    let template_count = templates.len() as u32;
    let mut scene = Scene::new(width, height, templates);
    for _ in 0..n {
        let mut p = PrimitiveParams::new(
            rng.random_range(0.0..width as f32),
            rng.random_range(0.0..height as f32),
            rng.random_range(ranges.s.0..=ranges.s.1),
            rng.random_range(0.0..TAU),
            rng.random_range(ranges.nu.0..=ranges.nu.1),
            [
                rng.random_range(ranges.c_var.0..=ranges.c_var.1),
                rng.random_range(ranges.c_var.0..=ranges.c_var.1),
                rng.random_range(ranges.c_var.0..=ranges.c_var.1),
            ],
        );
        p.template_id = rng.random_range(0..template_count);
        scene.push(p);
    }
    let mut z: Vec<u32> = (0..n as u32).collect();
    z.shuffle(rng);
    for (p, z) in scene.primitives.iter_mut().zip(z) {
        p.z = z;
    }
    scene
}

/// Smooth random color field built from a few low-frequency sinusoids.
pub fn smooth_image<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Image {
    let waves: Vec<([f32; 3], f32, f32, f32)> = (0..4)
        .map(|_| {
            (
                [rng.random_range(-0.25..0.25f32), rng.random_range(-0.25..0.25f32), rng.random_range(-0.25..0.25f32)],
                rng.random_range(0.02..0.15f32),
                rng.random_range(0.02..0.15f32),
                rng.random_range(0.0..TAU),
            )
        })
        .collect();
    Image::from_fn(width, height, |x, y| {
        let mut rgb = [0.5f32; 3];
        for (amp, fx, fy, phase) in &waves {
            let s = (fx * x as f32 + fy * y as f32 + phase).sin();
            for ch in 0..3 {
                rgb[ch] += amp[ch] * s;
            }
        }
        rgb.map(|v| v.clamp(0.0, 1.0))
    })
}
