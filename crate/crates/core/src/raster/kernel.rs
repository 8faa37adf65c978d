//! Per-pixel math shared by every render path: inverse affine map, texel
//! lookup, bilinear sampling, opacity and color blending.
//!
//! Everything is generic over [`Real`] so the finite-difference oracle can
//! evaluate the exact same formulas in `f64`.

use std::fmt::Debug;

use num_traits::{Float, NumCast};

use crate::scene::{PrimitiveParams, PrimitiveTemplate, Scene};

pub trait Real: Float + Send + Sync + Debug + 'static {}

impl Real for f32 {}
impl Real for f64 {}

#[inline(always)]
pub(crate) fn real<F: Real>(v: f32) -> F {
    <F as NumCast>::from(v).unwrap()
}

#[inline(always)]
pub(crate) fn real_usize<F: Real>(v: usize) -> F {
    <F as NumCast>::from(v).unwrap()
}

#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Integer cell and fractional weights of a bilinear lookup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Cell<F> {
    pub u0: usize,
    pub v0: usize,
    pub wu: F,
    pub wv: F,
}

/// Locates the 2x2 neighborhood for `(tu, tv)`; `None` outside the template.
///
/// The cell is floor-based; on the last lattice line the previous cell is
/// used with a weight of one so the sample stays on the border texel.
#[inline]
pub(crate) fn locate<F: Real>(tu: F, tv: F, w: usize, h: usize) -> Option<Cell<F>> {
    let wm1 = real_usize::<F>(w - 1);
    let hm1 = real_usize::<F>(h - 1);
    if !(tu >= F::zero() && tu <= wm1 && tv >= F::zero() && tv <= hm1) {
        return None;
    }
    let mut u0 = tu.floor().to_usize().unwrap_or(0);
    let mut v0 = tv.floor().to_usize().unwrap_or(0);
    if u0 >= w - 1 {
        u0 = w - 2;
    }
    if v0 >= h - 1 {
        v0 = h - 2;
    }
    Some(Cell { u0, v0, wu: tu - real_usize(u0), wv: tv - real_usize(v0) })
}

#[inline]
fn corners(t: &PrimitiveTemplate, cell_u0: usize, cell_v0: usize) -> [[f32; 4]; 4] {
    [
        t.texel(cell_u0, cell_v0),
        t.texel(cell_u0 + 1, cell_v0),
        t.texel(cell_u0, cell_v0 + 1),
        t.texel(cell_u0 + 1, cell_v0 + 1),
    ]
}

/// Bilinear RGBA at a located cell.
#[inline]
pub(crate) fn bilerp<F: Real>(t: &PrimitiveTemplate, c: &Cell<F>) -> [F; 4] {
    let p = corners(t, c.u0, c.v0);
    let one = F::one();
    let w = [
        (one - c.wu) * (one - c.wv),
        c.wu * (one - c.wv),
        (one - c.wu) * c.wv,
        c.wu * c.wv,
    ];
    let mut out = [F::zero(); 4];
    for (ch, o) in out.iter_mut().enumerate() {
        *o = w[0] * real(p[0][ch]) + w[1] * real(p[1][ch]) + w[2] * real(p[2][ch]) + w[3] * real(p[3][ch]);
    }
    out
}

/// Partial derivatives of every channel with respect to (U, V) at a cell.
#[inline]
pub(crate) fn bilerp_grad<F: Real>(t: &PrimitiveTemplate, c: &Cell<F>) -> [[F; 2]; 4] {
    let p = corners(t, c.u0, c.v0);
    let one = F::one();
    let mut out = [[F::zero(); 2]; 4];
    for (ch, o) in out.iter_mut().enumerate() {
        let p0: F = real(p[0][ch]);
        let p1: F = real(p[1][ch]);
        let p2: F = real(p[2][ch]);
        let p3: F = real(p[3][ch]);
        o[0] = (one - c.wv) * (p1 - p0) + c.wv * (p3 - p2);
        o[1] = (one - c.wu) * (p2 - p0) + c.wu * (p3 - p1);
    }
    out
}

/// Maps a canvas position into normalized primitive coordinates.
pub fn canvas_to_prim(x: f32, y: f32, p: &PrimitiveParams) -> (f32, f32) {
    let (sin, cos) = p.theta.sin_cos();
    let inv_s = 1.0 / p.s;
    to_prim(x, y, p.x, p.y, cos, sin, inv_s, inv_s)
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn to_prim<F: Real>(x: F, y: F, cx: F, cy: F, cos: F, sin: F, inv_su: F, inv_sv: F) -> (F, F) {
    let dx = x - cx;
    let dy = y - cy;
    ((cos * dx + sin * dy) * inv_su, (cos * dy - sin * dx) * inv_sv)
}

/// Maps normalized coordinates in [-1, 1] to texel coordinates.
pub fn prim_to_texel(u: f32, v: f32, w: usize, h: usize) -> (f32, f32) {
    to_texel(u, v, w, h)
}

#[inline(always)]
fn to_texel<F: Real>(u: F, v: F, w: usize, h: usize) -> (F, F) {
    let half = real::<F>(0.5);
    ((u + F::one()) * half * real_usize(w - 1), (v + F::one()) * half * real_usize(h - 1))
}

/// Bilinear sample of one channel (0..=2 color, 3 alpha); zero outside the template.
pub fn sample_bilinear(t: &PrimitiveTemplate, tu: f32, tv: f32, channel: usize) -> f32 {
    match locate(tu, tv, t.width(), t.height()) {
        Some(cell) => bilerp(t, &cell)[channel],
        None => 0.0,
    }
}

pub fn primitive_alpha(p: &PrimitiveParams, mask: f32, alpha_max: f32) -> f32 {
    alpha_max * sigmoid(p.nu) * mask
}

pub fn blend_color(p: &PrimitiveParams, c_org: [f32; 3], mu_blend: f32) -> [f32; 3] {
    let mut out = [0.0; 3];
    for ch in 0..3 {
        out[ch] = mu_blend * c_org[ch] + (1.0 - mu_blend) * sigmoid(p.c_var[ch]);
    }
    out
}

/// A primitive's per-render constants, evaluated once and reused per pixel.
#[derive(Clone, Debug)]
pub(crate) struct Placement<'a, F> {
    pub template: &'a PrimitiveTemplate,
    pub cx: F,
    pub cy: F,
    pub cos: F,
    pub sin: F,
    pub s: F,
    pub aspect: F,
    inv_su: F,
    inv_sv: F,
    pub sig_nu: F,
    /// alpha_max * sigmoid(nu)
    pub opacity: F,
    pub sig_c: [F; 3],
    pub mu: F,
}

/// Everything known about one primitive at one pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Sample<F> {
    pub tex: [F; 2],
    pub mask: F,
    pub alpha: F,
    pub color: [F; 3],
}

impl<'a, F: Real> Placement<'a, F> {
    pub fn new(scene: &'a Scene, index: usize) -> Self {
        let p = &scene.primitives[index];
        Self::from_params(scene, p)
    }

    pub fn from_params(scene: &'a Scene, p: &PrimitiveParams) -> Self {
        let template = &scene.templates[p.template_id as usize];
        let theta: F = real(p.theta);
        let s: F = real(p.s);
        let aspect: F = real(scene.aspect_of(template));
        let sig_nu = sigmoid::<F>(real(p.nu));
        Self {
            template,
            cx: real(p.x),
            cy: real(p.y),
            cos: theta.cos(),
            sin: theta.sin(),
            s,
            aspect,
            inv_su: F::one() / s,
            inv_sv: F::one() / (s * aspect),
            sig_nu,
            opacity: real::<F>(scene.alpha_max) * sig_nu,
            sig_c: [
                sigmoid(real(p.c_var[0])),
                sigmoid(real(p.c_var[1])),
                sigmoid(real(p.c_var[2])),
            ],
            mu: real(scene.mu_blend),
        }
    }

    #[inline]
    pub fn to_prim(&self, x: F, y: F) -> (F, F) {
        to_prim(x, y, self.cx, self.cy, self.cos, self.sin, self.inv_su, self.inv_sv)
    }

    #[inline]
    pub fn sample(&self, x: F, y: F) -> Option<Sample<F>> {
        let (u, v) = self.to_prim(x, y);
        let (tu, tv) = to_texel(u, v, self.template.width(), self.template.height());
        let cell = locate(tu, tv, self.template.width(), self.template.height())?;
        let rgba = bilerp(self.template, &cell);
        let mask = rgba[3];
        let one = F::one();
        let mut color = [F::zero(); 3];
        for ch in 0..3 {
            color[ch] = self.mu * rgba[ch] + (one - self.mu) * self.sig_c[ch];
        }
        Some(Sample { tex: [tu, tv], mask, alpha: self.opacity * mask, color })
    }

    /// Texel scale factors dU/du and dV/dv.
    #[inline]
    pub fn texel_scale(&self) -> (F, F) {
        let half = real::<F>(0.5);
        (
            half * real_usize(self.template.width() - 1),
            half * real_usize(self.template.height() - 1),
        )
    }
}
