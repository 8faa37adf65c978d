//! Forward rendering: coordinate mapping, bilinear template sampling, tile
//! binning and front-to-back compositing.

mod background;
mod bins;
mod forward;
pub(crate) mod kernel;
mod naive;

pub use background::{noisy_background, Background};
pub use bins::{bin_tiles, conservative_bbox, PixelRect, TileBins};
pub use forward::{render_forward, Contribution, SavedForward, TileRecord};
pub use kernel::{blend_color, canvas_to_prim, prim_to_texel, primitive_alpha, sample_bilinear, sigmoid, Real};
pub use naive::{render_naive, render_naive_in, NaiveRender};

pub(crate) use forward::{composite_pixel, placements_f32};

use crate::image::{Image, Plane};
use crate::scene::Scene;

/// Default mask threshold below which the fast path skips a contribution.
pub const DEFAULT_EPS_SKIP: f32 = 1.0 / 1024.0;
pub const DEFAULT_TILE_SIZE: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub color: Image,
    pub alpha: Plane,
}

/// Tiling and skip settings for the fast path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub tile_size: usize,
    pub padding: f32,
    pub eps_skip: f32,
}

impl RenderOptions {
    /// Defaults for templates blurred with `blur_sigma`: 2 px plus the blur halo.
    pub fn for_blur(blur_sigma: f32) -> Self {
        Self { tile_size: DEFAULT_TILE_SIZE, padding: 2.0 + 3.0 * blur_sigma, eps_skip: DEFAULT_EPS_SKIP }
    }

    pub fn exact(self) -> Self {
        Self { eps_skip: 0.0, ..self }
    }
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self::for_blur(1.0)
    }
}

/// Bins and renders without keeping saved state.
pub fn render(scene: &Scene, background: &Background, opts: &RenderOptions) -> RenderOutput {
    let bins = bin_tiles(scene, opts.tile_size, opts.padding);
    render_forward(scene, &bins, background, opts.eps_skip, false).0
}

#[cfg(test)]
mod tests;
