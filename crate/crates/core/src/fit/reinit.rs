use rand::Rng;

use super::adam::OptimState;
use crate::prep::{center_occupancy, StructureSampler};
use crate::raster::sigmoid;
use crate::scene::Scene;

/// Re-samples every primitive whose opacity `sigmoid(nu)` is below
/// `threshold`, keeping its depth rank and template. Frozen primitives are
/// skipped. Moments of re-sampled primitives are cleared when `state` is
/// given. Returns how many primitives were replaced.
pub fn reinit_low_opacity<R: Rng + ?Sized>(
    scene: &mut Scene,
    sampler: &StructureSampler,
    threshold: f32,
    mut state: Option<&mut OptimState>,
    frozen: Option<&[bool]>,
    rng: &mut R,
) -> usize {
    let mut occupancy = center_occupancy(scene);
    let mut count = 0;
    for i in 0..scene.len() {
        if frozen.is_some_and(|f| f[i]) {
            continue;
        }
        let old = scene.primitives[i];
        if sigmoid(old.nu) >= threshold {
            continue;
        }
        let mut fresh = sampler.sample_capped(&mut occupancy, rng);
        fresh.template_id = old.template_id;
        fresh.z = old.z;
        scene.primitives[i] = fresh;
        if let Some(st) = state.as_deref_mut() {
            st.reset_primitive(i);
        }
        count += 1;
    }
    count
}
