use crate::image::{Image, Plane};
use crate::raster::RenderOutput;

use super::FitError;

/// Luma weights for the grayscale L1 term.
pub const GRAY_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Which objective drives optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    /// Masked color error plus an alpha-matching term.
    Spatial,
    /// Weighted MSE plus grayscale L1.
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mse: f32,
    pub gray_l1: f32,
    /// Weight of the alpha term of the spatial loss.
    pub alpha: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mse: 1.0, gray_l1: 0.0, alpha: 0.3 }
    }
}

/// Loss value and its pixel gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub d_color: Image,
    pub d_alpha: Option<Plane>,
}

fn check_shape(a: &Image, b: &Image) -> Result<(), FitError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(FitError::ShapeMismatch { expected: (b.width(), b.height()), got: (a.width(), a.height()) })
    }
}

fn check_plane(p: &Plane, w: usize, h: usize) -> Result<(), FitError> {
    if p.width() == w && p.height() == h {
        Ok(())
    } else {
        Err(FitError::ShapeMismatch { expected: (w, h), got: (p.width(), p.height()) })
    }
}

/// Mean squared error over every pixel and channel.
pub fn loss_mse(image: &Image, target: &Image) -> Result<(f64, Image), FitError> {
    check_shape(image, target)?;
    let n = image.as_slice().len() as f64;
    let scale = (2.0 / n) as f32;
    let mut sum = 0.0f64;
    let grad = image
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| {
            let r = a - b;
            sum += (r as f64) * (r as f64);
            scale * r
        })
        .collect();
    Ok((sum / n, Image::from_vec(image.width(), image.height(), grad)))
}

/// Mean absolute luma difference, with a zero subgradient at ties.
pub fn loss_grayscale_l1(image: &Image, target: &Image) -> Result<(f64, Image), FitError> {
    check_shape(image, target)?;
    let n = image.pixel_count();
    let scale = 1.0 / n as f32;
    let mut sum = 0.0f64;
    let mut grad = Vec::with_capacity(n * 3);
    for (a, b) in image.as_slice().chunks_exact(3).zip(target.as_slice().chunks_exact(3)) {
        let mut diff = 0.0f32;
        for ch in 0..3 {
            diff += GRAY_WEIGHTS[ch] * (a[ch] - b[ch]);
        }
        sum += diff.abs() as f64;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad.extend(GRAY_WEIGHTS.map(|w| sign * w * scale));
    }
    Ok((sum / n as f64, Image::from_vec(image.width(), image.height(), grad)))
}

/// Color error inside the target's alpha support plus `alpha_weight` times
/// the alpha MSE over the whole frame.
///
/// Both terms are full-frame means: the color term divides by `3 * H * W`
/// even though only masked pixels contribute.
pub fn loss_spatial(
    image: &Image,
    image_alpha: &Plane,
    target: &Image,
    target_alpha: Option<&Plane>,
    alpha_weight: f32,
) -> Result<LossEval, FitError> {
    let target_alpha = target_alpha.ok_or(FitError::MissingAlphaTarget)?;
    check_shape(image, target)?;
    let (w, h) = (image.width(), image.height());
    check_plane(image_alpha, w, h)?;
    check_plane(target_alpha, w, h)?;
    let n = (w * h) as f64;
    let color_scale = (2.0 / (3.0 * n)) as f32;
    let mut color_sum = 0.0f64;
    let mut d_color = Vec::with_capacity(w * h * 3);
    for ((a, b), &m) in image
        .as_slice()
        .chunks_exact(3)
        .zip(target.as_slice().chunks_exact(3))
        .zip(target_alpha.as_slice())
    {
        for ch in 0..3 {
            if m > 0.0 {
                let r = a[ch] - b[ch];
                color_sum += (r as f64) * (r as f64);
                d_color.push(color_scale * r);
            } else {
                d_color.push(0.0);
            }
        }
    }
    let alpha_scale = (2.0 * alpha_weight as f64 / n) as f32;
    let mut alpha_sum = 0.0f64;
    let d_alpha = image_alpha
        .as_slice()
        .iter()
        .zip(target_alpha.as_slice())
        .map(|(a, b)| {
            let r = a - b;
            alpha_sum += (r as f64) * (r as f64);
            alpha_scale * r
        })
        .collect();
    Ok(LossEval {
        value: color_sum / (3.0 * n) + alpha_weight as f64 * alpha_sum / n,
        d_color: Image::from_vec(w, h, d_color),
        d_alpha: Some(Plane::from_vec(w, h, d_alpha)),
    })
}

/// A loss bound to its target.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub weights: LossWeights,
    pub target: Image,
    pub target_alpha: Option<Plane>,
}

impl LossSpec {
    pub fn new(kind: LossKind, weights: LossWeights, target: Image, target_alpha: Option<Plane>) -> Result<Self, FitError> {
        let w = weights;
        if !(w.mse >= 0.0 && w.gray_l1 >= 0.0 && w.alpha >= 0.0) {
            return Err(FitError::NegativeWeight);
        }
        if kind == LossKind::Spatial && target_alpha.is_none() {
            return Err(FitError::MissingAlphaTarget);
        }
        if let Some(a) = &target_alpha {
            check_plane(a, target.width(), target.height())?;
        }
        Ok(Self { kind, weights, target, target_alpha })
    }

    pub fn evaluate(&self, out: &RenderOutput) -> Result<LossEval, FitError> {
        match self.kind {
            LossKind::Mse => {
                let (value, d_color) = loss_mse(&out.color, &self.target)?;
                Ok(LossEval { value, d_color, d_alpha: None })
            }
            LossKind::Spatial => {
                loss_spatial(&out.color, &out.alpha, &self.target, self.target_alpha.as_ref(), self.weights.alpha)
            }
            LossKind::Combined => {
                let (mse, mut d) = loss_mse(&out.color, &self.target)?;
                let (l1, g) = loss_grayscale_l1(&out.color, &self.target)?;
                let (wm, wg) = (self.weights.mse, self.weights.gray_l1);
                for (a, b) in d.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *a = wm * *a + wg * b;
                }
                Ok(LossEval { value: wm as f64 * mse + wg as f64 * l1, d_color: d, d_alpha: None })
            }
        }
    }
}

/// Peak signal-to-noise ratio in dB for signals in [0, 1]; `+inf` when identical.
pub fn psnr(image: &Image, target: &Image) -> Result<f64, FitError> {
    let (mse, _) = loss_mse(image, target)?;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// PSNR restricted to pixels where `mask > 0`.
pub fn masked_psnr(image: &Image, target: &Image, mask: &Plane) -> Result<f64, FitError> {
    check_shape(image, target)?;
    check_plane(mask, image.width(), image.height())?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for ((a, b), &m) in image
        .as_slice()
        .chunks_exact(3)
        .zip(target.as_slice().chunks_exact(3))
        .zip(mask.as_slice())
    {
        if m > 0.0 {
            for ch in 0..3 {
                sum += ((a[ch] - b[ch]) as f64).powi(2);
            }
            count += 3;
        }
    }
    if count == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(psnr_from_mse(sum / count as f64))
}

/// Formats a PSNR for logs: `inf` for identical images, else four decimals.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{db:.4}")
    }
}
