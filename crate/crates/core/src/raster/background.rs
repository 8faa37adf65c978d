use rand::Rng;

use crate::image::Image;
use crate::scene::BackgroundPolicy;

/// Concrete background for one render: either a flat color or a per-pixel image.
#[derive(Clone, Debug, PartialEq)]
pub enum Background {
    Solid([f32; 3]),
    Image(Image),
}

impl Background {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [f32; 3] {
        match self {
            Background::Solid(c) => *c,
            Background::Image(img) => img.get(x, y),
        }
    }

    /// Resolves a scene policy for one iteration; noise draws from `rng`.
    pub fn for_iteration<R: Rng + ?Sized>(policy: BackgroundPolicy, w: usize, h: usize, rng: &mut R) -> Self {
        match policy {
            BackgroundPolicy::Solid(c) => Background::Solid(c),
            BackgroundPolicy::Noise => Background::Image(noisy_background(w, h, rng)),
        }
    }

    /// Deterministic stand-in used outside optimization (final renders, export).
    pub fn for_display(policy: BackgroundPolicy) -> Self {
        match policy {
            BackgroundPolicy::Solid(c) => Background::Solid(c),
            BackgroundPolicy::Noise => Background::Solid([1.0; 3]),
        }
    }
}

/// Every channel of every pixel drawn i.i.d. from U[0, 1).
pub fn noisy_background<R: Rng + ?Sized>(w: usize, h: usize, rng: &mut R) -> Image {
    let data: Vec<f32> = (0..w * h * 3).map(|_| rng.random::<f32>()).collect();
    Image::from_vec(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seeded_noise_is_reproducible() {
        let a = noisy_background(16, 8, &mut ChaCha8Rng::seed_from_u64(3));
        let b = noisy_background(16, 8, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }

    #[test]
    fn noise_mean_is_one_half() {
        let img = noisy_background(512, 512, &mut ChaCha8Rng::seed_from_u64(11));
        let mean = img.as_slice().iter().map(|&v| v as f64).sum::<f64>() / img.as_slice().len() as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
        assert!(img.as_slice().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn stream_advances_between_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = noisy_background(8, 8, &mut rng);
        let b = noisy_background(8, 8, &mut rng);
        assert_ne!(a, b);
    }
}
