//! Analytic backward pass, the finite-difference oracle and the
//! deterministic reduction of per-tile partial gradients.

mod backward;
mod check;
mod fd;

pub use backward::{backward, backward_naive, bilinear_grad};
pub use check::{check_seed, probe, run_gradcheck, GradCheckConfig, GradCheckReport, Mismatch, Probe, SeedReport};
pub use fd::{finite_diff_grad, FdSteps};

use thiserror::Error;

use crate::scene::{ParamGroup, PARAMS_PER_PRIMITIVE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("saved forward state belongs to a different scene (fingerprint {saved:#x}, scene {scene:#x})")]
    StaleSavedState { saved: u64, scene: u64 },
    #[error("partial gradient {index} has {got} primitives, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, got: usize },
    #[error("pixel gradient is {got_w}x{got_h}, canvas is {want_w}x{want_h}")]
    ShapeMismatch { want_w: usize, want_h: usize, got_w: usize, got_h: usize },
}

/// Loss partials for one primitive, in canvas-pixel and radian units.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PrimGrad {
    pub x: f64,
    pub y: f64,
    pub s: f64,
    pub theta: f64,
    pub nu: f64,
    pub c_var: [f64; 3],
}

impl PrimGrad {
    /// Values in packed-parameter order.
    pub fn to_array(&self) -> [f64; PARAMS_PER_PRIMITIVE] {
        [self.x, self.y, self.s, self.theta, self.nu, self.c_var[0], self.c_var[1], self.c_var[2]]
    }

    pub fn from_array(v: [f64; PARAMS_PER_PRIMITIVE]) -> Self {
        Self { x: v[0], y: v[1], s: v[2], theta: v[3], nu: v[4], c_var: [v[5], v[6], v[7]] }
    }

    pub fn get(&self, group: ParamGroup, channel: usize) -> f64 {
        match group {
            ParamGroup::X => self.x,
            ParamGroup::Y => self.y,
            ParamGroup::Scale => self.s,
            ParamGroup::Theta => self.theta,
            ParamGroup::Nu => self.nu,
            ParamGroup::Color => self.c_var[channel],
        }
    }
}

/// Per-primitive gradients, indexed like `Scene::primitives`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub prims: Vec<PrimGrad>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Self { prims: vec![PrimGrad::default(); n] }
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    /// Flat vector congruent with `pack_params`.
    pub fn to_flat(&self) -> Vec<f32> {
        self.prims.iter().flat_map(|g| g.to_array().map(|v| v as f32)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.prims.iter().all(|g| g.to_array().iter().all(|v| v.is_finite()))
    }

    pub(crate) fn add_slot(&mut self, index: usize, v: &[f64; PARAMS_PER_PRIMITIVE]) {
        let mut cur = self.prims[index].to_array();
        for (c, d) in cur.iter_mut().zip(v) {
            *c += d;
        }
        self.prims[index] = PrimGrad::from_array(cur);
    }
}

/// Elementwise sum of partials in list order.
///
/// The order is fixed by the caller (tile index), so the result does not
/// depend on how the partials were scheduled.
pub fn reduce_partials(partials: &[Gradients]) -> Result<Gradients, GradError> {
    let Some(first) = partials.first() else {
        return Ok(Gradients::default());
    };
    let n = first.len();
    let mut out = Gradients::zeros(n);
    for (index, part) in partials.iter().enumerate() {
        if part.len() != n {
            return Err(GradError::LengthMismatch { index, expected: n, got: part.len() });
        }
        for (i, g) in part.prims.iter().enumerate() {
            out.add_slot(i, &g.to_array());
        }
    }
    Ok(out)
}
