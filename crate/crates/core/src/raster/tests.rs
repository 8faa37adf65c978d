use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::scene::{PrimitiveParams, PrimitiveTemplate};
use crate::synth::{blob_template, random_scene, square_template, SceneRanges};

fn blob_scene(seed: u64, n: usize, w: usize, h: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates = (0..3).map(|_| blob_template(16, 3, &mut rng)).collect();
    random_scene(&mut rng, n, w, h, templates, SceneRanges::default())
}

fn fast(scene: &Scene, bg: &Background, tile: usize, eps: f32) -> (RenderOutput, SavedForward) {
    let bins = bin_tiles(scene, tile, 3.0);
    let (out, saved) = render_forward(scene, &bins, bg, eps, true);
    (out, saved.unwrap())
}

#[test]
fn exact_fast_path_matches_reference() {
    for seed in 0..10 {
        let scene = blob_scene(seed, 40, 64, 48);
        let bg = Background::Solid([0.2, 0.7, 0.4]);
        let (out, _) = fast(&scene, &bg, 32, 0.0);
        let naive = render_naive(&scene, &bg);
        assert!(out.color.max_abs_diff(&naive.color) <= 1e-6, "seed {seed}");
        for (a, b) in out.alpha.as_slice().iter().zip(naive.alpha.as_slice()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
}

#[test]
fn tile_size_does_not_change_output() {
    let scene = blob_scene(7, 60, 80, 72);
    let bg = Background::Solid([1.0; 3]);
    let (a, _) = fast(&scene, &bg, 16, 0.0);
    let (b, _) = fast(&scene, &bg, 32, 0.0);
    assert!(a.color.max_abs_diff(&b.color) <= 1e-6);
}

#[test]
fn skip_threshold_error_is_bounded_by_skipped_opacity() {
    // Each skipped hit has alpha < eps * alpha_max and moves the pixel by at
    // most that much; the bound is the count of possible hits times eps.
    let scene = blob_scene(3, 50, 64, 64);
    let bg = Background::Solid([0.5; 3]);
    let (out, _) = fast(&scene, &bg, 32, DEFAULT_EPS_SKIP);
    let naive = render_naive(&scene, &bg);
    let bound = scene.len() as f32 * DEFAULT_EPS_SKIP * scene.alpha_max;
    let diff = out.color.max_abs_diff(&naive.color);
    assert!(diff <= bound, "diff {diff} bound {bound}");
}

#[test]
fn noise_background_matches_reference() {
    let scene = blob_scene(11, 30, 40, 40);
    let bg = Background::Image(noisy_background(40, 40, &mut ChaCha8Rng::seed_from_u64(1)));
    let (out, _) = fast(&scene, &bg, 32, 0.0);
    assert!(out.color.max_abs_diff(&render_naive(&scene, &bg).color) <= 1e-6);
}

#[test]
fn transparent_scene_shows_background() {
    let mut scene = blob_scene(5, 20, 32, 32);
    for p in &mut scene.primitives {
        p.nu = -200.0;
    }
    let bg = Background::Solid([0.1, 0.2, 0.3]);
    let out = render(&scene, &bg, &RenderOptions::default());
    assert_eq!(out.color, Image::filled(32, 32, [0.1, 0.2, 0.3]));
    assert!(out.alpha.as_slice().iter().all(|&a| a == 0.0));
}

fn opaque_square_scene() -> Scene {
    let mut scene = Scene::new(32, 32, vec![square_template(8, [1.0, 0.0, 0.0])]);
    scene.mu_blend = 1.0;
    scene.push(PrimitiveParams::new(16.0, 16.0, 8.0, 0.0, 50.0, [0.0; 3]));
    scene
}

#[test]
fn opaque_front_hides_everything_behind() {
    let mut scene = opaque_square_scene();
    let green = PrimitiveTemplate::filled(4, 4, [0.0, 1.0, 0.0, 0.8]).unwrap();
    scene.templates = vec![scene.templates[0].clone(), green].into();
    let mut behind = PrimitiveParams::new(14.0, 15.0, 6.0, 0.4, 1.0, [0.0; 3]);
    behind.template_id = 1;
    scene.push(behind);
    for bg in [Background::Solid([1.0; 3]), Background::Solid([0.0, 0.0, 1.0])] {
        let out = render_naive(&scene, &bg);
        for y in 12..=20 {
            for x in 12..=20 {
                assert_eq!(out.color.get(x, y), [1.0, 0.0, 0.0], "({x},{y})");
                assert_eq!(out.alpha.get(x, y), 1.0);
            }
        }
    }
}

#[test]
fn off_canvas_primitive_contributes_nothing() {
    let scene = opaque_square_scene();
    let mut far = scene.clone();
    far.push(PrimitiveParams::new(-100.0, 300.0, 8.0, 0.0, 50.0, [0.0; 3]));
    let bg = Background::Solid([0.3; 3]);
    assert_eq!(render_naive(&scene, &bg), render_naive(&far, &bg));
}

#[test]
fn alpha_plus_transmittance_is_one() {
    let scene = blob_scene(9, 25, 48, 40);
    let (out, saved) = fast(&scene, &Background::Solid([1.0; 3]), 32, 0.0);
    for y in 0..40 {
        for x in 0..48 {
            assert_eq!(out.alpha.get(x, y) + saved.final_transmittance(x, y), 1.0);
        }
    }
}

#[test]
fn saved_entries_are_depth_sorted_and_consistent() {
    let scene = blob_scene(4, 40, 64, 64);
    let (_, saved) = fast(&scene, &Background::Solid([1.0; 3]), 32, DEFAULT_EPS_SKIP);
    assert!(saved.total_entries() > 0);
    for y in 0..64 {
        for x in 0..64 {
            let mut last_z = None;
            let mut t = 1.0f64;
            for (prim, c) in saved.pixel(x, y) {
                let z = scene.primitives[prim as usize].z;
                assert!(last_z.is_none_or(|lz| lz < z));
                last_z = Some(z);
                assert!(c.mask >= DEFAULT_EPS_SKIP);
                t *= 1.0 - c.alpha as f64;
            }
            assert!((saved.final_transmittance(x, y) as f64 - t).abs() <= 1e-6);
        }
    }
}

#[test]
fn adding_a_primitive_never_raises_transmittance() {
    let scene = blob_scene(12, 15, 40, 40);
    let bg = Background::Solid([1.0; 3]);
    let before = render_naive(&scene, &bg);
    let mut more = scene.clone();
    more.push(PrimitiveParams::new(20.0, 18.0, 10.0, 0.7, 0.5, [1.0, -1.0, 0.0]));
    let after = render_naive(&more, &bg);
    for (a, b) in before.alpha.as_slice().iter().zip(after.alpha.as_slice()) {
        assert!(b >= a);
    }
}

#[test]
fn swapping_depth_changes_overlap_color() {
    let t = PrimitiveTemplate::filled(4, 4, [0.0, 0.0, 0.0, 1.0]).unwrap();
    let mut scene = Scene::new(16, 16, vec![t]);
    scene.push(PrimitiveParams::new(8.0, 8.0, 5.0, 0.0, 0.0, [4.0, -4.0, -4.0]));
    scene.push(PrimitiveParams::new(8.0, 8.0, 5.0, 0.0, 0.0, [-4.0, -4.0, 4.0]));
    let bg = Background::Solid([1.0; 3]);
    let a = render_naive(&scene, &bg);
    scene.primitives[0].z = 1;
    scene.primitives[1].z = 0;
    let b = render_naive(&scene, &bg);
    let (ca, cb) = (a.color.get(8, 8), b.color.get(8, 8));
    assert!(ca[0] > cb[0] + 0.1 && cb[2] > ca[2] + 0.1, "{ca:?} {cb:?}");
    assert_eq!(a.alpha.get(8, 8), b.alpha.get(8, 8));
}

#[test]
fn bins_cover_every_reference_hit() {
    let scene = blob_scene(21, 100, 96, 80);
    let bins = bin_tiles(&scene, 32, 0.0);
    let order = scene.depth_order();
    let placements = placements_f32(&scene);
    for y in 0..80 {
        for x in 0..96 {
            let tile = (y / 32) * bins.tiles_x + x / 32;
            composite_pixel(&placements, &order, x as f32, y as f32, f32::NEG_INFINITY, [0.0; 3], |slot, smp| {
                if smp.mask > 0.0 {
                    assert!(bins.list(tile).contains(&order[slot]), "pixel ({x},{y}) prim {}", order[slot]);
                }
            });
        }
    }
}

#[test]
fn nonzero_footprint_within_rotated_square() {
    let scene = blob_scene(30, 12, 64, 64);
    let order = scene.depth_order();
    let placements = placements_f32(&scene);
    for y in 0..64 {
        for x in 0..64 {
            composite_pixel(&placements, &order, x as f32, y as f32, f32::NEG_INFINITY, [0.0; 3], |slot, smp| {
                if smp.mask > 0.0 {
                    let p = &scene.primitives[order[slot] as usize];
                    let d = ((x as f32 - p.x).powi(2) + (y as f32 - p.y).powi(2)).sqrt();
                    assert!(d <= p.s * 2f32.sqrt() + 1e-3);
                }
            });
        }
    }
}

#[test]
fn forward_is_identical_across_thread_counts() {
    let scene = blob_scene(8, 80, 96, 96);
    let bg = Background::Solid([1.0; 3]);
    let runs: Vec<_> = [1, 2, 4]
        .iter()
        .map(|&n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| fast(&scene, &bg, 32, DEFAULT_EPS_SKIP))
        })
        .collect();
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn f64_reference_agrees_with_f32() {
    let scene = blob_scene(2, 20, 32, 32);
    let bg = Background::Solid([0.4; 3]);
    let hi = render_naive_in::<f64>(&scene, &bg);
    let lo = render_naive(&scene, &bg);
    for (a, b) in hi.color.iter().zip(lo.color.as_slice()) {
        assert!((*a as f32 - b).abs() < 1e-5);
    }
}
