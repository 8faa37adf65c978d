use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::scene::PrimitiveParams;
use crate::synth::{random_scene, square_template, SceneRanges};

fn moving_square(w: usize, h: usize, x0: usize, y0: usize, side: usize) -> Image {
    Image::from_fn(w, h, |x, y| {
        if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
            [0.9, 0.2, 0.1]
        } else {
            [0.2, 0.4, 0.8]
        }
    })
}

#[test]
fn identical_frames_have_an_empty_mask() {
    let f = moving_square(20, 16, 3, 4, 5);
    let mask = diff_mask(&f, &f, 2.0 / 255.0).unwrap();
    assert_eq!(mask.count(), 0);
}

#[test]
fn single_pixel_change_is_isolated() {
    let a = Image::filled(10, 10, [0.5; 3]);
    let mut b = a.clone();
    b.set(7, 2, [0.5, 0.52, 0.5]);
    let mask = diff_mask(&a, &b, 0.01).unwrap();
    assert_eq!(mask.count(), 1);
    assert!(mask.get(7, 2));
    // The threshold is strict.
    let mut c = a.clone();
    c.set(1, 1, [0.5, 0.5, 0.625]);
    assert_eq!(diff_mask(&a, &c, 0.125).unwrap().count(), 0);
}

#[test]
fn moving_square_mask_is_the_symmetric_difference() {
    let (a, b) = (moving_square(24, 24, 4, 6, 8), moving_square(24, 24, 7, 6, 8));
    let mask = diff_mask(&a, &b, 2.0 / 255.0).unwrap();
    let inside = |x0: usize, x: usize, y: usize| (x0..x0 + 8).contains(&x) && (6..14).contains(&y);
    for y in 0..24 {
        for x in 0..24 {
            assert_eq!(mask.get(x, y), inside(4, x, y) != inside(7, x, y), "({x}, {y})");
        }
    }
    assert_eq!(mask.count(), 2 * 3 * 8);
}

#[test]
fn mismatched_frames_are_rejected() {
    let a = Image::new(4, 4);
    let b = Image::new(5, 4);
    assert!(matches!(diff_mask(&a, &b, 0.1), Err(VideoError::ShapeMismatch { .. })));
}

fn scene_with(prims: &[(f32, f32, f32, f32, u32)]) -> Scene {
    let mut scene = Scene::new(64, 64, vec![square_template(8, [1.0; 3])]);
    for &(x, y, s, nu, z) in prims {
        let mut p = PrimitiveParams::new(x, y, s, 0.0, nu, [0.0; 3]);
        p.z = z;
        scene.primitives.push(p);
    }
    scene
}

#[test]
fn freeze_flags_follow_the_mask_extremes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let scene = random_scene(&mut rng, 40, 48, 40, vec![square_template(6, [1.0; 3])], SceneRanges::default());
    let all = DiffMask::from_fn(48, 40, |_, _| true);
    let none = DiffMask::from_fn(48, 40, |_, _| false);
    // Random centers lie on the canvas, so every box meets a changed pixel.
    assert!(freeze_flags(&scene, &all, 1.0).iter().all(|&f| !f));
    assert!(freeze_flags(&scene, &none, 1.0).iter().all(|&f| f));
}

#[test]
fn freeze_flags_for_a_single_changed_pixel() {
    // Square boxes: radius s * sqrt(2) + padding.
    let scene = scene_with(&[(10.0, 10.0, 3.0, 0.0, 0), (30.0, 30.0, 3.0, 0.0, 1), (20.0, 10.0, 5.0, 0.0, 2)]);
    let mask = DiffMask::from_fn(64, 64, |x, y| (x, y) == (14, 12));
    // |14 - 10| = 4 <= 3 * 1.414 + 0.5; |14 - 20| = 6 <= 5 * 1.414 + 0.5.
    assert_eq!(freeze_flags(&scene, &mask, 0.5), vec![false, true, false]);
    let mask = DiffMask::from_fn(64, 64, |x, y| (x, y) == (15, 10));
    assert_eq!(freeze_flags(&scene, &mask, 0.0), vec![true, true, false]);
}

#[test]
fn off_canvas_primitives_are_frozen() {
    let scene = scene_with(&[(-40.0, 10.0, 3.0, 0.0, 0)]);
    let all = DiffMask::from_fn(64, 64, |_, _| true);
    assert_eq!(freeze_flags(&scene, &all, 2.0), vec![true]);
}

fn logit(p: f32) -> f32 {
    (p / (1.0 - p)).ln()
}

#[test]
fn remove_stuck_decays_a_large_opaque_front_primitive() {
    let mut scene = scene_with(&[(8.0, 8.0, 10.0, 2.0, 0)]);
    let decayed = remove_stuck(&mut scene, None, &StuckPolicy::default());
    assert_eq!(decayed, vec![0]);
    assert!((scene.primitives[0].nu - 0.6).abs() < 1e-6);
}

#[test]
fn remove_stuck_ignores_small_faint_frozen_or_buried_primitives() {
    let policy = StuckPolicy::default();
    // Too small (6.4 is the scale floor on a 64-wide canvas), too faint, then frozen.
    let mut scene = scene_with(&[(8.0, 8.0, 6.0, 3.0, 0), (40.0, 8.0, 10.0, logit(0.6), 1), (8.0, 40.0, 10.0, 3.0, 2)]);
    let before = scene.clone();
    assert!(remove_stuck(&mut scene, Some(&[false, false, true]), &policy).is_empty());
    assert_eq!(scene, before);

    // A big opaque primitive behind nine others in its region ranks 1 of 10.
    let mut prims = vec![(5.0, 5.0, 10.0, 3.0, 9)];
    prims.extend((0..9).map(|k| (1.0 + k as f32, 2.0, 2.0, 0.0, k as u32)));
    let mut scene = scene_with(&prims);
    assert!(remove_stuck(&mut scene, None, &policy).is_empty());
}

#[test]
fn remove_stuck_respects_the_opacity_ceiling() {
    let mut scene = scene_with(&[(8.0, 8.0, 10.0, 5.0, 0)]);
    scene.alpha_max = 0.6;
    assert!(remove_stuck(&mut scene, None, &StuckPolicy::default()).is_empty());
}

#[test]
fn remove_stuck_caps_decays_per_region() {
    // Six qualifying primitives in front of fourteen small ones in the
    // top-left region; the four largest by s * alpha go.
    let mut prims: Vec<_> = (0..6).map(|k| (2.0 + k as f32, 3.0, 7.0 + k as f32, 2.0, k as u32)).collect();
    prims.extend((6..20).map(|k| (1.0, 1.0 + k as f32 * 0.5, 1.0, 0.0, k as u32)));
    let mut scene = scene_with(&prims);
    let decayed = remove_stuck(&mut scene, None, &StuckPolicy::default());
    assert_eq!(decayed, vec![2, 3, 4, 5]);
    assert_eq!(scene.primitives[0].nu, 2.0);
    assert_eq!(scene.primitives[1].nu, 2.0);
}

#[test]
fn regions_are_independent() {
    let mut scene = scene_with(&[(8.0, 8.0, 10.0, 2.0, 0), (56.0, 56.0, 10.0, 2.0, 1), (56.0, 8.0, 10.0, 2.0, 2)]);
    let policy = StuckPolicy { per_region: 1, ..StuckPolicy::default() };
    assert_eq!(remove_stuck(&mut scene, None, &policy), vec![0, 1, 2]);
}

#[test]
fn stuck_policy_validation() {
    assert!(StuckPolicy::default().validate().is_ok());
    assert!(StuckPolicy { grid: (0, 4), ..StuckPolicy::default() }.validate().is_err());
    assert!(StuckPolicy { decay: 1.0, ..StuckPolicy::default() }.validate().is_err());
    assert!(StuckPolicy { percentile: 0.0, ..StuckPolicy::default() }.validate().is_err());
}

fn small_fit_config() -> FitConfig {
    let mut cfg = FitConfig::default();
    cfg.init.count = 20;
    cfg.init.s_min = 2.0;
    cfg.init.s_max = 6.0;
    cfg.seed = 5;
    cfg
}

fn small_video_config() -> VideoConfig {
    VideoConfig { initial_iterations: 10, sequential_iterations: 6, ..VideoConfig::default() }
}

#[test]
fn static_video_leaves_the_scene_unchanged() {
    let frame = moving_square(24, 24, 5, 5, 8);
    let frames = vec![frame.clone(), frame.clone(), frame];
    let templates = [square_template(8, [1.0; 3])];
    let results = optimize_video(&frames, None, &templates, &small_fit_config(), &small_video_config()).unwrap();
    assert_eq!(results.len(), 3);
    for r in &results[1..] {
        assert_eq!(r.scene, results[0].scene);
        assert_eq!(r.frozen_count, r.scene.len());
    }
}

#[test]
fn without_heuristics_a_frame_is_a_plain_warm_start() {
    let (a, b) = (moving_square(24, 24, 5, 5, 8), moving_square(24, 24, 8, 6, 8));
    let cfg = small_fit_config();
    let video = VideoConfig { freeze: false, remove_stuck: false, ..small_video_config() };
    let templates = [square_template(8, [1.0; 3])];
    let results = optimize_video(&[a.clone(), b.clone()], None, &templates, &cfg, &video).unwrap();

    let manual = warm_start_fit(results[0].scene.clone(), &b, None, &cfg, 6, None, None, frame_rng(cfg.seed, 1)).unwrap();
    assert_eq!(results[1], manual);
    assert_eq!(manual.frozen_count, 0);
    assert!(manual.decayed.is_empty());
}

#[test]
fn split_runs_reproduce_a_whole_run() {
    let frames: Vec<Image> = (0..4).map(|k| moving_square(24, 24, 3 + 2 * k, 6, 7)).collect();
    let cfg = small_fit_config();
    let video = small_video_config();
    let templates = [square_template(8, [1.0; 3])];
    let whole = optimize_video(&frames, None, &templates, &cfg, &video).unwrap();
    let head = optimize_video(&frames[..2], None, &templates, &cfg, &video).unwrap();
    let tail = continue_video(head[1].scene.clone(), &frames[1], &frames[2..], 2, None, &cfg, &video).unwrap();
    assert_eq!(&whole[..2], &head[..]);
    assert_eq!(&whole[2..], &tail[..]);
}

#[test]
fn video_input_errors() {
    let cfg = small_fit_config();
    let templates = [square_template(8, [1.0; 3])];
    assert!(matches!(optimize_video(&[], None, &templates, &cfg, &small_video_config()), Err(VideoError::NoFrames)));
    let frames = [Image::new(8, 8), Image::new(8, 9)];
    assert!(matches!(
        optimize_video(&frames, None, &templates, &cfg, &small_video_config()),
        Err(VideoError::ShapeMismatch { index: 1, .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn freeze_flags_match_a_brute_force_scan(seed in any::<u64>(), density in 0.0f64..0.02, padding in 0.0f32..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (40, 32);
        let scene = random_scene(&mut rng, 25, w, h, vec![square_template(6, [1.0; 3])], SceneRanges::default());
        let mask = DiffMask::from_fn(w, h, |_, _| rng.random_bool(density));
        let flags = freeze_flags(&scene, &mask, padding);
        for (i, p) in scene.primitives.iter().enumerate() {
            let r = p.s * 2f32.sqrt() + padding;
            let mut touched = false;
            let mut borderline = false;
            for y in 0..h {
                for x in 0..w {
                    if !mask.get(x, y) {
                        continue;
                    }
                    let d = (x as f32 - p.x).abs().max((y as f32 - p.y).abs());
                    touched |= d <= r;
                    borderline |= (d - r).abs() < 1e-2;
                }
            }
            if !borderline {
                prop_assert_eq!(flags[i], !touched, "primitive {}", i);
            }
        }
    }

    #[test]
    fn remove_stuck_only_shrinks_opacity_logits(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranges = SceneRanges { s: (2.0, 16.0), nu: (-1.0, 4.0), ..SceneRanges::default() };
        let mut scene = random_scene(&mut rng, 60, 64, 64, vec![square_template(6, [1.0; 3])], ranges);
        let before = scene.clone();
        let policy = StuckPolicy::default();
        let decayed = remove_stuck(&mut scene, None, &policy);
        prop_assert!(decayed.len() <= policy.grid.0 * policy.grid.1 * policy.per_region);
        for (i, (a, b)) in before.primitives.iter().zip(&scene.primitives).enumerate() {
            if decayed.contains(&i) {
                prop_assert!((b.nu - policy.decay * a.nu).abs() < 1e-6);
                prop_assert!(a.s >= policy.tau_scale * 64.0 && sigmoid(a.nu) >= policy.tau_alpha);
            } else {
                prop_assert_eq!(a, b);
            }
        }
    }
}
