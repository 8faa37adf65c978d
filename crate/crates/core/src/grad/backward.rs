use rayon::prelude::*;

use super::{GradError, Gradients};
use crate::image::{Image, Plane};
use crate::raster::kernel::{bilerp_grad, locate, Placement};
use crate::raster::{composite_pixel, placements_f32, Background, Contribution, SavedForward, TileRecord};
use crate::scene::{PrimitiveTemplate, Scene, PARAMS_PER_PRIMITIVE};

type Acc = [f64; PARAMS_PER_PRIMITIVE];

/// Partial derivatives (dm/dU, dm/dV) of one bilinearly sampled channel.
///
/// Zero outside the template; the floor-based cell matches the sampler.
pub fn bilinear_grad(t: &PrimitiveTemplate, tu: f32, tv: f32, channel: usize) -> (f32, f32) {
    match locate(tu, tv, t.width(), t.height()) {
        Some(cell) => {
            let g = bilerp_grad::<f32>(t, &cell)[channel];
            (g[0], g[1])
        }
        None => (0.0, 0.0),
    }
}

/// Pixel-level loss gradients for one pixel.
struct PixelGrad {
    color: [f32; 3],
    alpha: f32,
    background: [f32; 3],
}

/// Back-propagates one pixel's front-to-back hit list.
///
/// `prefix` is scratch space for the transmittance in front of each hit.
/// The alpha partial uses the color composited behind each hit, built by a
/// reverse sweep, so no division by `1 - alpha` is needed.
fn backprop_pixel(
    hits: &[Contribution],
    placement_of: impl Fn(u32) -> usize,
    placements: &[Placement<'_, f32>],
    x: usize,
    y: usize,
    g: &PixelGrad,
    prefix: &mut Vec<f32>,
    mut emit: impl FnMut(u32, &Acc),
) {
    prefix.clear();
    let mut t = 1.0f32;
    for h in hits {
        prefix.push(t);
        t *= 1.0 - h.alpha;
    }
    let mut behind = g.background;
    let mut back_product = 1.0f32;
    for (h, &t_k) in hits.iter().zip(prefix.iter()).rev() {
        let pl = &placements[placement_of(h.slot)];
        let mut d_alpha = g.alpha * back_product;
        for ch in 0..3 {
            d_alpha += g.color[ch] * (h.color[ch] - behind[ch]);
        }
        d_alpha *= t_k;

        let weight = t_k * h.alpha;
        let one_minus_mu = 1.0 - pl.mu;
        let mut acc = [0.0f64; PARAMS_PER_PRIMITIVE];
        for ch in 0..3 {
            let sc = pl.sig_c[ch];
            acc[5 + ch] = (g.color[ch] * weight * one_minus_mu * sc * (1.0 - sc)) as f64;
        }
        acc[4] = (d_alpha * h.alpha * (1.0 - pl.sig_nu)) as f64;

        // Geometry flows through the mask and, when blending in template
        // color, through the sampled RGB as well.
        let d_mask = d_alpha * pl.opacity;
        let tpl = pl.template;
        if let Some(cell) = locate(h.tex[0], h.tex[1], tpl.width(), tpl.height()) {
            let jac = bilerp_grad::<f32>(tpl, &cell);
            let mut d_tu = d_mask * jac[3][0];
            let mut d_tv = d_mask * jac[3][1];
            if pl.mu > 0.0 {
                for ch in 0..3 {
                    let d_c = g.color[ch] * weight * pl.mu;
                    d_tu += d_c * jac[ch][0];
                    d_tv += d_c * jac[ch][1];
                }
            }
            let (su, sv) = pl.texel_scale();
            let d_u = d_tu * su;
            let d_v = d_tv * sv;
            let (u, v) = pl.to_prim(x as f32, y as f32);
            let inv_s = 1.0 / pl.s;
            let a = pl.aspect;
            acc[0] = ((-d_u * pl.cos + d_v * pl.sin / a) * inv_s) as f64;
            acc[1] = ((-d_u * pl.sin - d_v * pl.cos / a) * inv_s) as f64;
            acc[2] = (-(d_u * u + d_v * v) * inv_s) as f64;
            acc[3] = (d_u * v * a - d_v * u / a) as f64;
        }
        emit(h.slot, &acc);

        for ch in 0..3 {
            behind[ch] = h.alpha * h.color[ch] + (1.0 - h.alpha) * behind[ch];
        }
        back_product *= 1.0 - h.alpha;
    }
}

fn pixel_grad(d_color: &Image, d_alpha: Option<&Plane>, background: &Background, x: usize, y: usize) -> PixelGrad {
    PixelGrad {
        color: d_color.get(x, y),
        alpha: d_alpha.map_or(0.0, |p| p.get(x, y)),
        background: background.at(x, y),
    }
}

fn backward_tile(
    tile: &TileRecord,
    placements: &[Placement<'_, f32>],
    d_color: &Image,
    d_alpha: Option<&Plane>,
    background: &Background,
) -> Vec<Acc> {
    let mut local = vec![[0.0f64; PARAMS_PER_PRIMITIVE]; tile.prims.len()];
    let mut prefix = Vec::new();
    let r = tile.rect;
    for y in r.y0..=r.y1 {
        for x in r.x0..=r.x1 {
            let hits = tile.entries_at(x, y);
            if hits.is_empty() {
                continue;
            }
            let g = pixel_grad(d_color, d_alpha, background, x, y);
            if g.color == [0.0; 3] && g.alpha == 0.0 {
                continue;
            }
            backprop_pixel(
                hits,
                |slot| tile.prims[slot as usize] as usize,
                placements,
                x,
                y,
                &g,
                &mut prefix,
                |slot, acc| {
                    for (l, a) in local[slot as usize].iter_mut().zip(acc) {
                        *l += a;
                    }
                },
            );
        }
    }
    local
}

fn check_shapes(scene: &Scene, d_color: &Image, d_alpha: Option<&Plane>) -> Result<(), GradError> {
    let mismatch = |w: usize, h: usize| GradError::ShapeMismatch {
        want_w: scene.canvas_w,
        want_h: scene.canvas_h,
        got_w: w,
        got_h: h,
    };
    if d_color.width() != scene.canvas_w || d_color.height() != scene.canvas_h {
        return Err(mismatch(d_color.width(), d_color.height()));
    }
    if let Some(p) = d_alpha {
        if p.width() != scene.canvas_w || p.height() != scene.canvas_h {
            return Err(mismatch(p.width(), p.height()));
        }
    }
    Ok(())
}

/// Parameter gradients from pixel gradients using the saved forward state.
///
/// Tiles run in parallel into tile-local accumulators which are then summed
/// in tile order, so the result is bit-identical for any thread count.
pub fn backward(
    scene: &Scene,
    saved: &SavedForward,
    d_color: &Image,
    d_alpha: Option<&Plane>,
    background: &Background,
) -> Result<Gradients, GradError> {
    let fp = scene.fingerprint();
    if saved.fingerprint() != fp {
        return Err(GradError::StaleSavedState { saved: saved.fingerprint(), scene: fp });
    }
    check_shapes(scene, d_color, d_alpha)?;
    let placements = placements_f32(scene);
    let partials: Vec<Vec<Acc>> = saved
        .tiles
        .par_iter()
        .map(|tile| backward_tile(tile, &placements, d_color, d_alpha, background))
        .collect();
    let mut out = Gradients::zeros(scene.len());
    for (tile, local) in saved.tiles.iter().zip(&partials) {
        for (&prim, acc) in tile.prims.iter().zip(local) {
            out.add_slot(prim as usize, acc);
        }
    }
    Ok(out)
}

/// Sequential reference backward: re-evaluates every primitive at every
/// pixel with no tiles, no saved state and no skip threshold.
pub fn backward_naive(
    scene: &Scene,
    d_color: &Image,
    d_alpha: Option<&Plane>,
    background: &Background,
) -> Result<Gradients, GradError> {
    check_shapes(scene, d_color, d_alpha)?;
    let placements = placements_f32(scene);
    let order = scene.depth_order();
    let mut out = Gradients::zeros(scene.len());
    let mut hits = Vec::new();
    let mut prefix = Vec::new();
    for y in 0..scene.canvas_h {
        for x in 0..scene.canvas_w {
            hits.clear();
            composite_pixel(&placements, &order, x as f32, y as f32, f32::NEG_INFINITY, [0.0; 3], |slot, smp| {
                hits.push(Contribution {
                    slot: slot as u32,
                    alpha: smp.alpha,
                    color: smp.color,
                    mask: smp.mask,
                    tex: smp.tex,
                });
            });
            let g = pixel_grad(d_color, d_alpha, background, x, y);
            backprop_pixel(
                &hits,
                |slot| order[slot as usize] as usize,
                &placements,
                x,
                y,
                &g,
                &mut prefix,
                |slot, acc| out.add_slot(order[slot as usize] as usize, acc),
            );
        }
    }
    Ok(out)
}
