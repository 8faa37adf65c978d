//! Tile-parallel forward compositing with optional saved state for the backward pass.

use rayon::prelude::*;

use super::background::Background;
use super::bins::{PixelRect, TileBins};
use super::kernel::{real, Placement, Real, Sample};
use super::RenderOutput;
use crate::image::{Image, Plane};
use crate::scene::Scene;

/// One recorded (non-skipped) primitive hit at a pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contribution {
    /// Position in the owning tile's primitive list.
    pub slot: u32,
    pub alpha: f32,
    pub color: [f32; 3],
    pub mask: f32,
    /// Texel coordinates (U, V).
    pub tex: [f32; 2],
}

/// Saved contributions for one tile, pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TileRecord {
    pub rect: PixelRect,
    pub prims: Vec<u32>,
    offsets: Vec<u32>,
    entries: Vec<Contribution>,
    final_t: Vec<f32>,
}

impl TileRecord {
    #[inline]
    fn local(&self, x: usize, y: usize) -> usize {
        (y - self.rect.y0) * self.rect.width() + (x - self.rect.x0)
    }

    /// Contributions of a pixel, front-to-back.
    #[inline]
    pub fn entries_at(&self, x: usize, y: usize) -> &[Contribution] {
        let i = self.local(x, y);
        &self.entries[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }

    #[inline]
    pub fn final_transmittance(&self, x: usize, y: usize) -> f32 {
        self.final_t[self.local(x, y)]
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }
}

/// Per-pixel contribution lists cached by the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct SavedForward {
    pub(crate) fingerprint: u64,
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles: Vec<TileRecord>,
}

impl SavedForward {
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn tile_of(&self, x: usize, y: usize) -> &TileRecord {
        &self.tiles[(y / self.tile_size) * self.tiles_x + x / self.tile_size]
    }

    /// `(primitive index, contribution)` pairs at a pixel, front-to-back.
    pub fn pixel(&self, x: usize, y: usize) -> impl Iterator<Item = (u32, &Contribution)> + '_ {
        let tile = self.tile_of(x, y);
        tile.entries_at(x, y).iter().map(move |c| (tile.prims[c.slot as usize], c))
    }

    pub fn final_transmittance(&self, x: usize, y: usize) -> f32 {
        self.tile_of(x, y).final_transmittance(x, y)
    }

    pub fn total_entries(&self) -> usize {
        self.tiles.iter().map(TileRecord::entry_count).sum()
    }
}

/// Front-to-back "over" compositing at one pixel.
///
/// `order` lists primitive indices by depth; `record` sees every hit that is
/// not skipped, along with its position in `order`. Returns the
/// foreground-plus-background color and the final transmittance.
#[inline]
pub(crate) fn composite_pixel<F: Real>(
    placements: &[Placement<'_, F>],
    order: &[u32],
    x: F,
    y: F,
    eps_skip: F,
    background: [F; 3],
    mut record: impl FnMut(usize, &Sample<F>),
) -> ([F; 3], F) {
    let mut t = F::one();
    let mut acc = [F::zero(); 3];
    for (slot, &index) in order.iter().enumerate() {
        let Some(smp) = placements[index as usize].sample(x, y) else {
            continue;
        };
        if smp.mask < eps_skip {
            continue;
        }
        record(slot, &smp);
        let w = t * smp.alpha;
        for ch in 0..3 {
            acc[ch] = acc[ch] + w * smp.color[ch];
        }
        t = t * (F::one() - smp.alpha);
    }
    for ch in 0..3 {
        acc[ch] = acc[ch] + t * background[ch];
    }
    (acc, t)
}

pub(crate) fn placements_f32(scene: &Scene) -> Vec<Placement<'_, f32>> {
    (0..scene.primitives.len()).map(|i| Placement::new(scene, i)).collect()
}

struct TileOutput {
    color: Vec<f32>,
    t: Vec<f32>,
    record: Option<TileRecord>,
}

fn render_tile(
    placements: &[Placement<'_, f32>],
    bins: &TileBins,
    tile: usize,
    background: &Background,
    eps_skip: f32,
    save: bool,
) -> TileOutput {
    let rect = bins.tile_rect(tile);
    let list = bins.list(tile);
    let n = rect.width() * rect.height();
    let mut color = Vec::with_capacity(n * 3);
    let mut t_out = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(if save { n + 1 } else { 0 });
    let mut entries = Vec::new();
    if save {
        offsets.push(0u32);
    }
    for y in rect.y0..=rect.y1 {
        for x in rect.x0..=rect.x1 {
            let bg = background.at(x, y);
            let (rgb, t) = composite_pixel(placements, list, x as f32, y as f32, eps_skip, bg, |slot, smp| {
                if save {
                    entries.push(Contribution {
                        slot: slot as u32,
                        alpha: smp.alpha,
                        color: smp.color,
                        mask: smp.mask,
                        tex: smp.tex,
                    });
                }
            });
            color.extend_from_slice(&rgb);
            t_out.push(t);
            if save {
                offsets.push(entries.len() as u32);
            }
        }
    }
    let record = save.then(|| TileRecord {
        rect,
        prims: list.to_vec(),
        offsets,
        entries,
        final_t: t_out.clone(),
    });
    TileOutput { color, t: t_out, record }
}

/// Renders the scene tile by tile in parallel.
///
/// Output is bit-identical for any thread count: each pixel's arithmetic
/// depends only on its own depth-ordered list.
pub fn render_forward(
    scene: &Scene,
    bins: &TileBins,
    background: &Background,
    eps_skip: f32,
    save: bool,
) -> (RenderOutput, Option<SavedForward>) {
    debug_assert_eq!((bins.canvas_w, bins.canvas_h), (scene.canvas_w, scene.canvas_h));
    let placements = placements_f32(scene);
    let tiles: Vec<TileOutput> = (0..bins.tile_count())
        .into_par_iter()
        .map(|tile| render_tile(&placements, bins, tile, background, real(eps_skip), save))
        .collect();

    let (w, h) = (scene.canvas_w, scene.canvas_h);
    let mut color = Image::new(w, h);
    let mut alpha = Plane::new(w, h);
    for (tile, out) in tiles.iter().enumerate() {
        let rect = bins.tile_rect(tile);
        let tw = rect.width();
        for (row, y) in (rect.y0..=rect.y1).enumerate() {
            let src = &out.color[row * tw * 3..(row + 1) * tw * 3];
            let dst_start = (y * w + rect.x0) * 3;
            color.as_mut_slice()[dst_start..dst_start + tw * 3].copy_from_slice(src);
            for (col, x) in (rect.x0..=rect.x1).enumerate() {
                alpha.set(x, y, 1.0 - out.t[row * tw + col]);
            }
        }
    }
    let saved = save.then(|| SavedForward {
        fingerprint: scene.fingerprint(),
        tile_size: bins.tile_size,
        tiles_x: bins.tiles_x,
        tiles: tiles.into_iter().map(|t| t.record.expect("tile record")).collect(),
    });
    (RenderOutput { color, alpha }, saved)
}
