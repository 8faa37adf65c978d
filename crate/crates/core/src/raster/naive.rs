//! Sequential reference renderer: every primitive at every pixel, no tiles,
//! no skip threshold. Used for differential tests, the finite-difference
//! oracle and benchmarking.

use super::background::Background;
use super::forward::composite_pixel;
use super::kernel::{real, Placement, Real};
use super::RenderOutput;
use crate::image::{Image, Plane};
use crate::scene::Scene;

/// Reference render in an arbitrary float type.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveRender<F> {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB.
    pub color: Vec<F>,
    pub alpha: Vec<F>,
}

impl NaiveRender<f32> {
    pub fn into_output(self) -> RenderOutput {
        RenderOutput {
            color: Image::from_vec(self.width, self.height, self.color),
            alpha: Plane::from_vec(self.width, self.height, self.alpha),
        }
    }
}

pub fn render_naive_in<F: Real>(scene: &Scene, background: &Background) -> NaiveRender<F> {
    let placements: Vec<Placement<'_, F>> =
        (0..scene.primitives.len()).map(|i| Placement::new(scene, i)).collect();
    let order = scene.depth_order();
    let (w, h) = (scene.canvas_w, scene.canvas_h);
    let mut color = Vec::with_capacity(w * h * 3);
    let mut alpha = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let b = background.at(x, y);
            let bg = [real(b[0]), real(b[1]), real(b[2])];
            let (rgb, t) = composite_pixel(
                &placements,
                &order,
                real(x as f32),
                real(y as f32),
                F::neg_infinity(),
                bg,
                |_, _| {},
            );
            color.extend_from_slice(&rgb);
            alpha.push(F::one() - t);
        }
    }
    NaiveRender { width: w, height: h, color, alpha }
}

/// Single-precision reference render.
pub fn render_naive(scene: &Scene, background: &Background) -> RenderOutput {
    render_naive_in::<f32>(scene, background).into_output()
}
