use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::raster::sigmoid;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn noise_template(w: usize, h: usize, seed: u64) -> PrimitiveTemplate {
    let mut r = rng(seed);
    PrimitiveTemplate::from_fn(w, h, |_, _| [r.random(), r.random(), r.random(), r.random()]).unwrap()
}

#[test]
fn zero_sigma_is_identity() {
    let t = noise_template(9, 7, 1);
    assert_eq!(gaussian_blur_template(&t, 0.0).unwrap(), t);
}

#[test]
fn constant_template_is_unchanged() {
    let t = PrimitiveTemplate::filled(12, 10, [0.3, 0.6, 0.9, 0.5]).unwrap();
    let b = gaussian_blur_template(&t, 1.7).unwrap();
    for (a, b) in t.texels().iter().zip(b.texels()) {
        for ch in 0..4 {
            assert!((a[ch] - b[ch]).abs() <= 1e-6);
        }
    }
}

#[test]
fn impulse_spreads_into_normalized_gaussian() {
    let n = 21;
    let t = PrimitiveTemplate::from_fn(n, n, |x, y| {
        let v = if x == 10 && y == 10 { 1.0 } else { 0.0 };
        [v; 4]
    })
    .unwrap();
    let b = gaussian_blur_template(&t, 1.0).unwrap();
    // Direct evaluation of the 1-D kernel: exp(-i^2/2) over |i| <= 3, normalized.
    let norm: f64 = (-3..=3).map(|i: i32| (-(i * i) as f64 / 2.0).exp()).sum();
    let center = 1.0 / norm;
    assert!((b.texel(10, 10)[3] as f64 - center * center).abs() <= 1e-6);
    let off = (-0.5f64).exp() / norm;
    assert!((b.texel(11, 10)[3] as f64 - off * center).abs() <= 1e-6);
    let mass: f64 = b.texels().iter().map(|p| p[3] as f64).sum();
    assert!((mass - 1.0).abs() <= 1e-6);
}

proptest! {
    #[test]
    fn blur_stays_in_unit_range(seed in 0u64..1000, sigma in 0.0f32..3.0) {
        let t = noise_template(8, 11, seed);
        let b = gaussian_blur_template(&t, sigma).unwrap();
        prop_assert!(b.texels().iter().all(|p| p.iter().all(|c| (0.0..=1.0).contains(c))));
    }
}

#[test]
fn negative_sigma_rejected() {
    let t = noise_template(4, 4, 0);
    assert_eq!(gaussian_blur_template(&t, -1.0), Err(PrepError::InvalidSigma(-1.0)));
}

#[test]
fn falloff_profile() {
    let t = PrimitiveTemplate::filled(9, 9, [0.2, 0.4, 0.6, 0.8]).unwrap();
    let f = radial_falloff(&t);
    assert_eq!(f.texel(4, 4), [0.2, 0.4, 0.6, 0.8]);
    let corner = f.texel(0, 0);
    assert!(corner[3] >= 0.0 && corner[3] <= 0.8);
    assert_eq!(&corner[..3], &[0.2, 0.4, 0.6]);
    assert!((falloff(0.5) - 0.5).abs() <= 1e-6);
    assert_eq!(falloff(3.0), 0.0);
    // Texel (6, 4) sits at half the normalized radius.
    assert!((f.texel(6, 4)[3] - 0.4).abs() <= 1e-6);
}

#[test]
fn constant_image_has_zero_variance() {
    let img = Image::filled(10, 8, [0.4, 0.1, 0.9]);
    let v = local_variance_map(&img, 7).unwrap();
    assert!(v.nlv.as_slice().iter().all(|&x| x == 0.0));
}

#[test]
fn seam_carries_the_maximum() {
    let img = Image::from_fn(20, 6, |x, _| if x < 10 { [0.0; 3] } else { [1.0; 3] });
    let v = local_variance_map(&img, 7).unwrap();
    for y in 0..6 {
        let row: Vec<f32> = (0..20).map(|x| v.get(x, y)).collect();
        let peak = row.iter().copied().fold(0.0, f32::max);
        assert_eq!(peak, 1.0);
        assert!(row[9] == peak || row[10] == peak);
        assert_eq!(row[0], 0.0);
        assert_eq!(row[19], 0.0);
    }
}

fn brute_variance(img: &Image, window: usize) -> Vec<f64> {
    let half = window as isize / 2;
    let (w, h) = (img.width() as isize, img.height() as isize);
    let mut raw = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ch in 0..3 {
                let mut vals = Vec::new();
                for dy in -half..=half {
                    for dx in -half..=half {
                        let (sx, sy) = (x + dx, y + dy);
                        if sx >= 0 && sy >= 0 && sx < w && sy < h {
                            vals.push(img.get(sx as usize, sy as usize)[ch] as f64);
                        }
                    }
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                acc += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            }
            raw.push(acc / 3.0);
        }
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

#[test]
fn variance_matches_brute_force() {
    let mut r = rng(42);
    let img = Image::from_fn(16, 16, |_, _| [r.random(), r.random(), r.random()]);
    let fast = local_variance_map(&img, 7).unwrap();
    let slow = brute_variance(&img, 7);
    for (a, b) in fast.nlv.as_slice().iter().zip(&slow) {
        assert!((*a as f64 - b).abs() <= 1e-6);
    }
    let min = fast.nlv.as_slice().iter().copied().fold(f32::INFINITY, f32::min);
    let max = fast.nlv.as_slice().iter().copied().fold(0.0, f32::max);
    assert_eq!((min, max), (0.0, 1.0));
}

#[test]
fn even_window_rejected() {
    assert_eq!(local_variance_map(&Image::new(4, 4), 6), Err(PrepError::InvalidWindow(6)));
}

fn one_template() -> Vec<PrimitiveTemplate> {
    vec![PrimitiveTemplate::filled(4, 4, [1.0; 4]).unwrap()]
}

#[test]
fn constant_target_gets_largest_scale() {
    let target = Image::filled(32, 24, [0.5; 3]);
    let params = InitParams { count: 200, s_min: 1.0, s_max: 9.0, ..Default::default() };
    let scene = structure_aware_init(&target, one_template(), &params, None, &mut rng(3)).unwrap();
    assert!(scene.primitives.iter().all(|p| p.s == 9.0));
    assert!(crate::scene::validate_scene(&scene).is_ok());
}

#[test]
fn high_variance_cluster_is_oversampled() {
    let mut r = rng(8);
    let target = Image::from_fn(32, 32, |x, y| {
        if (12..20).contains(&x) && (12..20).contains(&y) {
            [r.random(), r.random(), r.random()]
        } else {
            [0.5; 3]
        }
    });
    let params = InitParams::default();
    let sampler = StructureSampler::new(&target, &params, None).unwrap();
    // Oracle: the categorical probabilities implied by the weights.
    let nlv = sampler.variance().nlv.as_slice();
    let weights: Vec<f64> = nlv.iter().map(|&v| 0.1 + 0.9 * v as f64).collect();
    let total: f64 = weights.iter().sum();
    let in_cluster = |i: usize| {
        let (x, y) = (i % 32, i / 32);
        (9..23).contains(&x) && (9..23).contains(&y)
    };
    let p_cluster: f64 = weights.iter().enumerate().filter(|(i, _)| in_cluster(*i)).map(|(_, w)| w).sum::<f64>() / total;
    let draws = 10_000;
    let mut r = rng(77);
    let hits = (0..draws).filter(|_| in_cluster(sampler.sample_pixel(&mut r))).count() as f64;
    let uniform = (14.0 * 14.0) / 1024.0;
    assert!(hits / draws as f64 > uniform * 1.5, "cluster rate {}", hits / draws as f64);
    let expected = [p_cluster * draws as f64, (1.0 - p_cluster) * draws as f64];
    let observed = [hits, draws as f64 - hits];
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    // One degree of freedom, p = 0.001.
    assert!(chi2 < 10.83, "chi2 {chi2}");
}

#[test]
fn init_bias_sets_opacity() {
    let target = Image::filled(16, 16, [0.2; 3]);
    let params = InitParams { count: 20, ..Default::default() };
    let scene = structure_aware_init(&target, one_template(), &params, None, &mut rng(1)).unwrap();
    for p in &scene.primitives {
        assert!((sigmoid(p.nu) - 0.018).abs() < 5e-4);
    }
}

#[test]
fn init_is_seed_deterministic() {
    let mut r = rng(2);
    let target = Image::from_fn(24, 24, |_, _| [r.random(), r.random(), r.random()]);
    let params = InitParams { count: 50, ..Default::default() };
    let a = structure_aware_init(&target, one_template(), &params, None, &mut rng(9)).unwrap();
    let b = structure_aware_init(&target, one_template(), &params, None, &mut rng(9)).unwrap();
    assert_eq!(a, b);
    let z: Vec<u32> = a.primitives.iter().map(|p| p.z).collect();
    assert_eq!(z, (0..50).collect::<Vec<_>>());
}

#[test]
fn density_cap_is_enforced() {
    let target = Image::filled(4, 4, [0.5; 3]);
    let params = InitParams { count: 33, density_cap: 2, ..Default::default() };
    assert_eq!(
        structure_aware_init(&target, one_template(), &params, None, &mut rng(0)),
        Err(PrepError::InfeasibleDensity { requested: 33, capacity: 32 })
    );
    let params = InitParams { count: 32, density_cap: 2, ..Default::default() };
    let scene = structure_aware_init(&target, one_template(), &params, None, &mut rng(0)).unwrap();
    assert!(center_occupancy(&scene).iter().all(|&c| c == 2));
}

#[test]
fn saturated_colors_get_finite_logits() {
    let target = Image::from_fn(8, 8, |x, _| if x < 4 { [0.0; 3] } else { [1.0; 3] });
    let params = InitParams { count: 64, sigma_c: 0.0, ..Default::default() };
    let scene = structure_aware_init(&target, one_template(), &params, None, &mut rng(0)).unwrap();
    for p in &scene.primitives {
        assert!(p.c_var.iter().all(|c| c.is_finite() && c.abs() < 10.0));
    }
}

#[test]
fn mask_excludes_pixels() {
    let target = Image::filled(16, 16, [0.5; 3]);
    let mask = Plane::from_fn(16, 16, |x, _| if x < 8 { 1.0 } else { 0.0 });
    let params = InitParams { count: 100, ..Default::default() };
    let scene = structure_aware_init(&target, one_template(), &params, Some(&mask), &mut rng(4)).unwrap();
    assert!(scene.primitives.iter().all(|p| p.x < 8.0));
}

#[test]
fn random_init_properties() {
    let params = InitParams { count: 1000, s_min: 2.0, s_max: 6.0, ..Default::default() };
    let a = random_init(64, 48, one_template(), &params, &mut rng(5)).unwrap();
    let b = random_init(64, 48, one_template(), &params, &mut rng(5)).unwrap();
    assert_eq!(a, b);
    for p in &a.primitives {
        assert!((0.0..64.0).contains(&p.x) && (0.0..48.0).contains(&p.y));
        assert!((2.0..=6.0).contains(&p.s));
        assert_eq!(p.nu, -4.0);
    }
    // Uniform on [0, L): mean L/2, standard error L / sqrt(12 n).
    let n = a.len() as f64;
    let mx = a.primitives.iter().map(|p| p.x as f64).sum::<f64>() / n;
    let my = a.primitives.iter().map(|p| p.y as f64).sum::<f64>() / n;
    assert!((mx - 32.0).abs() <= 3.0 * 64.0 / (12.0 * n).sqrt());
    assert!((my - 24.0).abs() <= 3.0 * 48.0 / (12.0 * n).sqrt());
}
