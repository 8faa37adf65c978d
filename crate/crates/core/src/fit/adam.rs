use crate::scene::{ParamGroup, ParamLayout, PARAMS_PER_PRIMITIVE};

use super::FitError;

pub const BETA1: f32 = 0.9;
pub const BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

/// Per-group learning-rate multipliers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrGains {
    pub x: f32,
    pub y: f32,
    pub s: f32,
    pub nu: f32,
    pub theta: f32,
    pub c: f32,
}

impl Default for LrGains {
    fn default() -> Self {
        Self { x: 10.0, y: 10.0, s: 10.0, nu: 1.5, theta: 1.0, c: 1.0 }
    }
}

impl LrGains {
    pub fn for_group(&self, group: ParamGroup) -> f32 {
        match group {
            ParamGroup::X => self.x,
            ParamGroup::Y => self.y,
            ParamGroup::Scale => self.s,
            ParamGroup::Theta => self.theta,
            ParamGroup::Nu => self.nu,
            ParamGroup::Color => self.c,
        }
    }

    pub fn all_positive(&self) -> bool {
        [self.x, self.y, self.s, self.nu, self.theta, self.c].iter().all(|g| *g > 0.0 && g.is_finite())
    }
}

/// `base_lr * final_fraction^(iter / (total - 1))` when decaying, else `base_lr`.
pub fn lr_schedule(iter: usize, total: usize, base_lr: f32, decay: bool, final_fraction: f32) -> f32 {
    if !decay || total <= 1 {
        return base_lr;
    }
    let t = iter.min(total - 1) as f64 / (total - 1) as f64;
    (base_lr as f64 * (final_fraction as f64).powf(t)) as f32
}

/// Adam moments, congruent with the packed parameter layout.
///
/// Step counts are kept per primitive so that primitives which were frozen
/// or re-initialized get the bias correction of their own history.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub steps: Vec<u32>,
}

impl OptimState {
    pub fn new(layout: ParamLayout) -> Self {
        Self { m: vec![0.0; layout.len()], v: vec![0.0; layout.len()], steps: vec![0; layout.primitives] }
    }

    pub fn primitives(&self) -> usize {
        self.steps.len()
    }

    /// Forgets the history of one primitive.
    pub fn reset_primitive(&mut self, i: usize) {
        let r = i * PARAMS_PER_PRIMITIVE..(i + 1) * PARAMS_PER_PRIMITIVE;
        self.m[r.clone()].fill(0.0);
        self.v[r].fill(0.0);
        self.steps[i] = 0;
    }
}

/// Options that stay fixed across steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOptions {
    pub gains: LrGains,
    pub s_min: f32,
    pub s_max: f32,
}

/// One Adam update of every non-frozen primitive, then projects scale into
/// `[s_min, s_max]`. Frozen primitives keep their parameters and moments.
pub fn adam_step(
    params: &mut [f32],
    grads: &[f32],
    state: &mut OptimState,
    lr: f32,
    opts: &StepOptions,
    frozen: Option<&[bool]>,
) -> Result<(), FitError> {
    let n = state.primitives();
    let len = n * PARAMS_PER_PRIMITIVE;
    if params.len() != len || grads.len() != len || state.m.len() != len || state.v.len() != len {
        return Err(FitError::LayoutMismatch { expected: len, got: params.len().min(grads.len()) });
    }
    if let Some(f) = frozen {
        if f.len() != n {
            return Err(FitError::LayoutMismatch { expected: n, got: f.len() });
        }
    }
    for i in 0..n {
        if frozen.is_some_and(|f| f[i]) {
            continue;
        }
        state.steps[i] += 1;
        let t = state.steps[i] as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for k in 0..PARAMS_PER_PRIMITIVE {
            let j = i * PARAMS_PER_PRIMITIVE + k;
            let g = grads[j];
            state.m[j] = BETA1 * state.m[j] + (1.0 - BETA1) * g;
            state.v[j] = BETA2 * state.v[j] + (1.0 - BETA2) * g * g;
            let m_hat = state.m[j] / bc1;
            let v_hat = state.v[j] / bc2;
            let step = lr * opts.gains.for_group(ParamGroup::of_slot(k));
            params[j] -= step * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        let s = &mut params[i * PARAMS_PER_PRIMITIVE + 2];
        *s = s.clamp(opts.s_min, opts.s_max);
    }
    Ok(())
}
