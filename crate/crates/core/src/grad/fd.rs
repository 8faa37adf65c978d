use rayon::prelude::*;

use super::{Gradients, PrimGrad};
use crate::raster::{render_naive_in, Background, NaiveRender};
use crate::scene::{pack_params, write_params, ParamGroup, Scene, PARAMS_PER_PRIMITIVE};

/// Central-difference step per parameter group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSteps {
    pub position: f64,
    pub scale: f64,
    pub theta: f64,
    pub nu: f64,
    pub color: f64,
}

impl Default for FdSteps {
    /// Steps small enough that the slope kinks of bilinear sampling at texel
    /// lattice lines do not bias the estimate; the double-precision reference
    /// render keeps the quotient well conditioned.
    fn default() -> Self {
        Self { position: 1e-4, scale: 1e-4, theta: 1e-5, nu: 1e-3, color: 1e-3 }
    }
}

impl FdSteps {
    /// Coarser steps (1e-2 px, 1e-3 rad). Adequate for smooth losses, but on
    /// bilinear templates they straddle lattice lines often enough to bias
    /// geometric partials by a few percent.
    pub fn coarse() -> Self {
        Self { position: 1e-2, scale: 1e-2, theta: 1e-3, nu: 1e-3, color: 1e-3 }
    }

    pub fn for_group(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::X | ParamGroup::Y => self.position,
            ParamGroup::Scale => self.scale,
            ParamGroup::Theta => self.theta,
            ParamGroup::Nu => self.nu,
            ParamGroup::Color => self.color,
        }
    }

    pub fn halved(&self) -> Self {
        Self {
            position: self.position * 0.5,
            scale: self.scale * 0.5,
            theta: self.theta * 0.5,
            nu: self.nu * 0.5,
            color: self.color * 0.5,
        }
    }
}

/// Central differences of `loss` over every learnable scalar.
///
/// Each evaluation renders with the double-precision reference renderer. The
/// perturbed parameter is stored as `f32`, so the quotient uses the step that
/// was actually taken rather than the nominal one.
pub fn finite_diff_grad(
    scene: &Scene,
    background: &Background,
    loss: impl Fn(&NaiveRender<f64>) -> f64 + Sync,
    steps: FdSteps,
) -> Gradients {
    let (base, layout) = pack_params(scene);
    let values: Vec<f64> = (0..base.len())
        .into_par_iter()
        .map(|k| {
            let h = steps.for_group(layout.group(k));
            let plus = (base[k] as f64 + h) as f32;
            let minus = (base[k] as f64 - h) as f32;
            let eval = |v: f32| {
                let mut params = base.clone();
                params[k] = v;
                let mut probe = scene.clone();
                write_params(&mut probe, &params, layout).expect("layout from pack_params");
                loss(&render_naive_in::<f64>(&probe, background))
            };
            (eval(plus) - eval(minus)) / (plus as f64 - minus as f64)
        })
        .collect();
    Gradients {
        prims: values
            .chunks_exact(PARAMS_PER_PRIMITIVE)
            .map(|c| PrimGrad::from_array(c.try_into().expect("chunk of eight")))
            .collect(),
    }
}
