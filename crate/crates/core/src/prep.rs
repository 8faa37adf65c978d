//! Template preprocessing and scene initialization.

use std::f32::consts::{PI, TAU};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::image::{Image, Plane};
use crate::scene::{PrimitiveParams, PrimitiveTemplate, Scene};

/// Probability floor and variance weight for position sampling.
pub const DEFAULT_BASE_PROB: f32 = 0.1;
pub const DEFAULT_VARIANCE_WINDOW: usize = 7;
/// Saturated target samples are pulled this far inside (0, 1) before the logit.
pub const COLOR_CLAMP: f32 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrepError {
    #[error("variance window {0} must be odd and at least 3")]
    InvalidWindow(usize),
    #[error("{requested} primitives exceed the density cap capacity of {capacity}")]
    InfeasibleDensity { requested: usize, capacity: usize },
    #[error("scale range [{min}, {max}] is invalid")]
    InvalidScaleRange { min: f32, max: f32 },
    #[error("blur sigma {0} must be finite and >= 0")]
    InvalidSigma(f32),
    #[error("need at least one primitive and one template")]
    Empty,
    #[error("weight mask is {got_w}x{got_h}, target is {want_w}x{want_h}")]
    MaskShape { want_w: usize, want_h: usize, got_w: usize, got_h: usize },
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma as f64 * sigma as f64)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k.into_iter().map(|v| v as f32).collect()
}

/// Blurs all four channels with a truncated, renormalized Gaussian.
///
/// Separable, clamp-to-edge, same output size. `sigma == 0` returns a copy.
pub fn gaussian_blur_template(t: &PrimitiveTemplate, sigma: f32) -> Result<PrimitiveTemplate, PrepError> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(PrepError::InvalidSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(t.clone());
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (t.width(), t.height());
    let src = t.texels();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![[0.0f32; 4]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 4];
            for (j, kv) in k.iter().enumerate() {
                let sx = clamp(x as isize + j as isize - r, w);
                let px = src[y * w + sx];
                for ch in 0..4 {
                    acc[ch] += kv * px[ch];
                }
            }
            rows[y * w + x] = acc;
        }
    }
    let mut out = vec![[0.0f32; 4]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f32; 4];
            for (j, kv) in k.iter().enumerate() {
                let sy = clamp(y as isize + j as isize - r, h);
                let px = rows[sy * w + x];
                for ch in 0..4 {
                    acc[ch] += kv * px[ch];
                }
            }
            out[y * w + x] = acc.map(|v| v.clamp(0.0, 1.0));
        }
    }
    Ok(PrimitiveTemplate::new(w, h, out).expect("blur keeps shape and range"))
}

/// Cosine falloff `0.5 * (1 + cos(pi * min(r, 1)))` for a normalized radius.
pub fn falloff(r: f32) -> f32 {
    0.5 * (1.0 + (PI * r.min(1.0)).cos())
}

/// Multiplies alpha by a radial cosine falloff; RGB is unchanged.
///
/// The radius is normalized by the smaller of the half-width and half-height.
pub fn radial_falloff(t: &PrimitiveTemplate) -> PrimitiveTemplate {
    let cx = (t.width() - 1) as f32 * 0.5;
    let cy = (t.height() - 1) as f32 * 0.5;
    let norm = cx.min(cy);
    PrimitiveTemplate::from_fn(t.width(), t.height(), |x, y| {
        let mut px = t.texel(x, y);
        let r = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt() / norm;
        px[3] = (px[3] * falloff(r)).clamp(0.0, 1.0);
        px
    })
    .expect("falloff keeps range")
}

/// Normalized local variance of a target image, in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceMap {
    pub nlv: Plane,
}

impl VarianceMap {
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.nlv.get(x, y)
    }
}

/// Windowed variance averaged over RGB, then min-max normalized.
///
/// Edge pixels use the part of the window that lies on the canvas. A
/// constant image yields all zeros.
pub fn local_variance_map(target: &Image, window: usize) -> Result<VarianceMap, PrepError> {
    if window < 3 || window % 2 == 0 {
        return Err(PrepError::InvalidWindow(window));
    }
    let (w, h) = (target.width(), target.height());
    let half = window / 2;
    // Summed-area tables of x and x^2 per channel, one row/column of padding.
    let stride = w + 1;
    let mut sum = vec![[0.0f64; 3]; stride * (h + 1)];
    let mut sq = vec![[0.0f64; 3]; stride * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let px = target.get(x, y);
            let i = (y + 1) * stride + x + 1;
            for ch in 0..3 {
                let v = px[ch] as f64;
                sum[i][ch] = v + sum[i - 1][ch] + sum[i - stride][ch] - sum[i - stride - 1][ch];
                sq[i][ch] = v * v + sq[i - 1][ch] + sq[i - stride][ch] - sq[i - stride - 1][ch];
            }
        }
    }
    let rect = |t: &[[f64; 3]], x0: usize, y0: usize, x1: usize, y1: usize, ch: usize| {
        t[(y1 + 1) * stride + x1 + 1][ch] - t[y0 * stride + x1 + 1][ch] - t[(y1 + 1) * stride + x0][ch]
            + t[y0 * stride + x0][ch]
    };
    let mut raw = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(half), (x + half).min(w - 1));
            let (y0, y1) = (y.saturating_sub(half), (y + half).min(h - 1));
            let n = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
            let mut var = 0.0;
            for ch in 0..3 {
                let mean = rect(&sum, x0, y0, x1, y1, ch) / n;
                var += (rect(&sq, x0, y0, x1, y1, ch) / n - mean * mean).max(0.0);
            }
            raw[y * w + x] = var / 3.0;
        }
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = raw
        .iter()
        .map(|&v| if span > 1e-12 { ((v - lo) / span) as f32 } else { 0.0 })
        .collect();
    Ok(VarianceMap { nlv: Plane::from_vec(w, h, data) })
}

/// Knobs shared by both initializers.
#[derive(Clone, Debug, PartialEq)]
pub struct InitParams {
    pub count: usize,
    pub s_min: f32,
    pub s_max: f32,
    pub v_init_bias: f32,
    /// Standard deviation of the initial color around the target sample.
    pub sigma_c: f32,
    /// Maximum primitive centers per pixel.
    pub density_cap: usize,
    pub base_prob: f32,
    pub variance_window: usize,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            count: 300,
            s_min: 2.0,
            s_max: 12.0,
            v_init_bias: -4.0,
            sigma_c: 0.02,
            density_cap: 100,
            base_prob: DEFAULT_BASE_PROB,
            variance_window: DEFAULT_VARIANCE_WINDOW,
        }
    }
}

impl InitParams {
    fn check(&self) -> Result<(), PrepError> {
        if !(self.s_min > 0.0 && self.s_min <= self.s_max && self.s_max.is_finite()) {
            return Err(PrepError::InvalidScaleRange { min: self.s_min, max: self.s_max });
        }
        Ok(())
    }
}

fn logit(p: f32) -> f32 {
    (p / (1.0 - p)).ln()
}

fn color_logits<R: Rng + ?Sized>(target: [f32; 3], sigma_c: f32, rng: &mut R) -> [f32; 3] {
    let noise = Normal::new(0.0f32, sigma_c.max(0.0)).expect("finite sigma");
    target.map(|t| logit((t + noise.sample(rng)).clamp(COLOR_CLAMP, 1.0 - COLOR_CLAMP)))
}

/// Variance-weighted sampler over the pixel lattice.
///
/// Shared by structure-aware initialization and low-opacity re-initialization.
#[derive(Clone, Debug)]
pub struct StructureSampler {
    target: Image,
    variance: VarianceMap,
    weights: WeightedIndex<f32>,
    params: InitParams,
    support: usize,
}

impl StructureSampler {
    /// `mask`, when given, multiplies the weights (zero excludes a pixel).
    pub fn new(target: &Image, params: &InitParams, mask: Option<&Plane>) -> Result<Self, PrepError> {
        params.check()?;
        let variance = local_variance_map(target, params.variance_window)?;
        if let Some(m) = mask {
            if m.width() != target.width() || m.height() != target.height() {
                return Err(PrepError::MaskShape {
                    want_w: target.width(),
                    want_h: target.height(),
                    got_w: m.width(),
                    got_h: m.height(),
                });
            }
        }
        let raw: Vec<f32> = variance
            .nlv
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let base = params.base_prob + (1.0 - params.base_prob) * v;
                base * mask.map_or(1.0, |m| m.as_slice()[i])
            })
            .collect();
        let support = raw.iter().filter(|&&w| w > 0.0).count();
        let weights = WeightedIndex::new(&raw).map_err(|_| PrepError::InfeasibleDensity {
            requested: params.count,
            capacity: 0,
        })?;
        Ok(Self { target: target.clone(), variance, weights, params: params.clone(), support })
    }

    pub fn variance(&self) -> &VarianceMap {
        &self.variance
    }

    /// Primitive centers the lattice can hold under the density cap.
    pub fn capacity(&self) -> usize {
        self.support * self.params.density_cap
    }

    /// Draws one lattice pixel index.
    pub fn sample_pixel<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.weights.sample(rng)
    }

    /// Fresh parameters centered on lattice pixel `pixel`.
    pub fn primitive_at<R: Rng + ?Sized>(&self, pixel: usize, rng: &mut R) -> PrimitiveParams {
        let w = self.target.width();
        let (px, py) = (pixel % w, pixel / w);
        let nlv = self.variance.get(px, py);
        let p = &self.params;
        let s = p.s_max - (p.s_max - p.s_min) * nlv;
        let theta = rng.random_range(0.0..TAU);
        let c = color_logits(self.target.get(px, py), p.sigma_c, rng);
        PrimitiveParams::new(px as f32, py as f32, s, theta, p.v_init_bias, c)
    }

    /// Samples a primitive whose center pixel is below the density cap and
    /// records it in `occupancy`.
    pub fn sample_capped<R: Rng + ?Sized>(&self, occupancy: &mut [u32], rng: &mut R) -> PrimitiveParams {
        loop {
            let pixel = self.sample_pixel(rng);
            if (occupancy[pixel] as usize) < self.params.density_cap {
                occupancy[pixel] += 1;
                return self.primitive_at(pixel, rng);
            }
        }
    }
}

/// Per-pixel count of primitive centers, for density-capped resampling.
pub fn center_occupancy(scene: &Scene) -> Vec<u32> {
    let mut occ = vec![0u32; scene.canvas_w * scene.canvas_h];
    for p in &scene.primitives {
        let (x, y) = (p.x.round(), p.y.round());
        if x >= 0.0 && y >= 0.0 && (x as usize) < scene.canvas_w && (y as usize) < scene.canvas_h {
            occ[y as usize * scene.canvas_w + x as usize] += 1;
        }
    }
    occ
}

/// Variance-guided initialization.
///
/// Positions come from the pixel lattice with probability proportional to
/// `base + (1 - base) * NLV`; high-variance pixels get small primitives.
/// Templates are assigned round-robin and depth follows sampling order.
pub fn structure_aware_init<R: Rng + ?Sized>(
    target: &Image,
    templates: Vec<PrimitiveTemplate>,
    params: &InitParams,
    mask: Option<&Plane>,
    rng: &mut R,
) -> Result<Scene, PrepError> {
    if params.count == 0 || templates.is_empty() {
        return Err(PrepError::Empty);
    }
    let sampler = StructureSampler::new(target, params, mask)?;
    if params.count > sampler.capacity() {
        return Err(PrepError::InfeasibleDensity { requested: params.count, capacity: sampler.capacity() });
    }
    let template_count = templates.len();
    let mut scene = Scene::new(target.width(), target.height(), templates);
    let mut occupancy = vec![0u32; target.pixel_count()];
    for i in 0..params.count {
        let mut p = sampler.sample_capped(&mut occupancy, rng);
        p.template_id = (i % template_count) as u32;
        scene.push(p);
    }
    Ok(scene)
}

/// Uniform initialization: positions over the canvas, scale in range, small
/// random color logits.
pub fn random_init<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    templates: Vec<PrimitiveTemplate>,
    params: &InitParams,
    rng: &mut R,
) -> Result<Scene, PrepError> {
    if params.count == 0 || templates.is_empty() {
        return Err(PrepError::Empty);
    }
    params.check()?;
    let template_count = templates.len();
    let mut scene = Scene::new(width, height, templates);
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    for i in 0..params.count {
        let mut p = PrimitiveParams::new(
            rng.random_range(0.0..width as f32),
            rng.random_range(0.0..height as f32),
            rng.random_range(params.s_min..=params.s_max),
            rng.random_range(0.0..TAU),
            params.v_init_bias,
            [0; 3].map(|_| 0.02 * normal.sample(rng)),
        );
        p.template_id = (i % template_count) as u32;
        scene.push(p);
    }
    Ok(scene)
}

#[cfg(test)]
mod tests;
