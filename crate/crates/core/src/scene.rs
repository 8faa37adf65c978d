//! Scene description: primitive parameters, templates, validation and packing.

use std::sync::Arc;

use thiserror::Error;

/// Learnable scalars per primitive: x, y, s, theta, nu, c_var[0..3].
pub const PARAMS_PER_PRIMITIVE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("primitive {index}: scale {s} must be finite and > 0")]
    InvalidScale { index: usize, s: f32 },
    #[error("primitive {index}: template id {template_id} out of range ({available} templates)")]
    BadTemplateRef { index: usize, template_id: u32, available: usize },
    #[error("primitive {index}: z values are not a permutation of 0..{count} (offending z = {z})")]
    NonPermutationZ { index: usize, z: u32, count: usize },
    #[error("template {template}: texel {texel} has a channel outside [0, 1]")]
    BadChannelRange { template: usize, texel: usize },
    #[error("template {template}: {width}x{height} is smaller than 2x2")]
    TemplateTooSmall { template: usize, width: usize, height: usize },
    #[error("template buffer holds {got} texels, expected {expected}")]
    TemplateBufferSize { expected: usize, got: usize },
    #[error("primitive {index}: non-finite parameter")]
    NonFiniteParam { index: usize },
    #[error("alpha_max {0} outside (0, 1]")]
    InvalidAlphaMax(f32),
    #[error("mu_blend {0} outside [0, 1]")]
    InvalidMuBlend(f32),
    #[error("canvas {0}x{1} is empty")]
    EmptyCanvas(usize, usize),
    #[error("scene has no primitives")]
    NoPrimitives,
    #[error("parameter vector has {got} scalars, layout expects {expected}")]
    LayoutMismatch { expected: usize, got: usize },
}

/// One placed bitmap primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrimitiveParams {
    /// Center, canvas pixels.
    pub x: f32,
    pub y: f32,
    /// Half-extent in canvas pixels.
    pub s: f32,
    /// Rotation in radians, never wrapped.
    pub theta: f32,
    /// Opacity logit.
    pub nu: f32,
    /// Color logits.
    pub c_var: [f32; 3],
    pub template_id: u32,
    /// Depth rank, 0 is front-most.
    pub z: u32,
}

impl PrimitiveParams {
    pub fn new(x: f32, y: f32, s: f32, theta: f32, nu: f32, c_var: [f32; 3]) -> Self {
        Self { x, y, s, theta, nu, c_var, template_id: 0, z: 0 }
    }

    pub fn scalars(&self) -> [f32; PARAMS_PER_PRIMITIVE] {
        [self.x, self.y, self.s, self.theta, self.nu, self.c_var[0], self.c_var[1], self.c_var[2]]
    }

    fn set_scalars(&mut self, v: &[f32]) {
        self.x = v[0];
        self.y = v[1];
        self.s = v[2];
        self.theta = v[3];
        self.nu = v[4];
        self.c_var = [v[5], v[6], v[7]];
    }
}

/// RGBA raster asset. Alpha is the mask, RGB the original color.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveTemplate {
    width: usize,
    height: usize,
    rgba: Vec<[f32; 4]>,
}

impl PrimitiveTemplate {
    pub fn new(width: usize, height: usize, rgba: Vec<[f32; 4]>) -> Result<Self, SceneError> {
        if rgba.len() != width * height {
            return Err(SceneError::TemplateBufferSize { expected: width * height, got: rgba.len() });
        }
        let t = Self { width, height, rgba };
        t.check(0)?;
        Ok(t)
    }

    /// Solid-color template with a constant alpha.
    pub fn filled(width: usize, height: usize, rgba: [f32; 4]) -> Result<Self, SceneError> {
        Self::new(width, height, vec![rgba; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 4],
    ) -> Result<Self, SceneError> {
        let mut rgba = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                rgba.push(f(x, y));
            }
        }
        Self::new(width, height, rgba)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn texel(&self, x: usize, y: usize) -> [f32; 4] {
        self.rgba[y * self.width + x]
    }

    pub fn texels(&self) -> &[[f32; 4]] {
        &self.rgba
    }

    fn check(&self, template: usize) -> Result<(), SceneError> {
        if self.width < 2 || self.height < 2 {
            return Err(SceneError::TemplateTooSmall { template, width: self.width, height: self.height });
        }
        if let Some(texel) = self
            .rgba
            .iter()
            .position(|px| px.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(SceneError::BadChannelRange { template, texel });
        }
        Ok(())
    }
}

/// What sits behind all primitives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BackgroundPolicy {
    Solid([f32; 3]),
    /// Fresh uniform noise every optimization iteration.
    Noise,
}

impl Default for BackgroundPolicy {
    fn default() -> Self {
        BackgroundPolicy::Solid([1.0; 3])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub primitives: Vec<PrimitiveParams>,
    pub templates: Arc<[PrimitiveTemplate]>,
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub background: BackgroundPolicy,
    pub alpha_max: f32,
    pub mu_blend: f32,
    /// Divide v by `s * H/W` so non-square templates keep their aspect ratio.
    pub preserve_aspect: bool,
}

impl Scene {
    pub fn new(canvas_w: usize, canvas_h: usize, templates: Vec<PrimitiveTemplate>) -> Self {
        Self {
            primitives: Vec::new(),
            templates: templates.into(),
            canvas_w,
            canvas_h,
            background: BackgroundPolicy::default(),
            alpha_max: 1.0,
            mu_blend: 0.0,
            preserve_aspect: false,
        }
    }

    /// Appends a primitive at the back of the depth order.
    pub fn push(&mut self, mut p: PrimitiveParams) {
        p.z = self.primitives.len() as u32;
        self.primitives.push(p);
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn template_of(&self, index: usize) -> &PrimitiveTemplate {
        &self.templates[self.primitives[index].template_id as usize]
    }

    /// Primitive indices sorted front-to-back.
    pub fn depth_order(&self) -> Vec<u32> {
        let mut order: Vec<u32> = (0..self.primitives.len() as u32).collect();
        order.sort_by_key(|&i| (self.primitives[i as usize].z, i));
        order
    }

    /// `v`-axis scale factor relative to `s` for a template.
    pub fn aspect_of(&self, template: &PrimitiveTemplate) -> f32 {
        if self.preserve_aspect {
            template.height() as f32 / template.width() as f32
        } else {
            1.0
        }
    }

    /// Half side of the axis-aligned square that bounds the primitive under any rotation.
    pub fn conservative_radius(&self, index: usize, padding: f32) -> f32 {
        let p = &self.primitives[index];
        let a = self.aspect_of(self.template_of(index));
        p.s * (1.0 + a * a).sqrt() + padding
    }

    /// Copy of the scene with positions, scales and canvas multiplied by `rho`.
    pub fn scaled(&self, rho: usize) -> Scene {
        let r = rho as f32;
        let mut out = self.clone();
        out.canvas_w *= rho;
        out.canvas_h *= rho;
        for p in &mut out.primitives {
            p.x *= r;
            p.y *= r;
            p.s *= r;
        }
        out
    }

    /// Stable 64-bit digest of everything the renderer reads.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bits; independent of process-level hash seeds.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.canvas_w as u64);
        feed(self.canvas_h as u64);
        feed(self.alpha_max.to_bits() as u64);
        feed(self.mu_blend.to_bits() as u64);
        feed(self.preserve_aspect as u64);
        feed(self.templates.len() as u64);
        for p in &self.primitives {
            for v in p.scalars() {
                feed(v.to_bits() as u64);
            }
            feed(((p.template_id as u64) << 32) | p.z as u64);
        }
        h
    }
}

/// Checks every scene invariant; the error names the first violation.
pub fn validate_scene(scene: &Scene) -> Result<(), SceneError> {
    if !(scene.alpha_max > 0.0 && scene.alpha_max <= 1.0) {
        return Err(SceneError::InvalidAlphaMax(scene.alpha_max));
    }
    if !(0.0..=1.0).contains(&scene.mu_blend) {
        return Err(SceneError::InvalidMuBlend(scene.mu_blend));
    }
    if scene.canvas_w == 0 || scene.canvas_h == 0 {
        return Err(SceneError::EmptyCanvas(scene.canvas_w, scene.canvas_h));
    }
    for (i, t) in scene.templates.iter().enumerate() {
        t.check(i)?;
    }
    if scene.primitives.is_empty() {
        return Err(SceneError::NoPrimitives);
    }
    let n = scene.primitives.len();
    let mut seen = vec![false; n];
    for (index, p) in scene.primitives.iter().enumerate() {
        if !(p.s.is_finite() && p.s > 0.0) {
            return Err(SceneError::InvalidScale { index, s: p.s });
        }
        if p.scalars().iter().any(|v| !v.is_finite()) {
            return Err(SceneError::NonFiniteParam { index });
        }
        if p.template_id as usize >= scene.templates.len() {
            return Err(SceneError::BadTemplateRef {
                index,
                template_id: p.template_id,
                available: scene.templates.len(),
            });
        }
        let z = p.z as usize;
        if z >= n || seen[z] {
            return Err(SceneError::NonPermutationZ { index, z: p.z, count: n });
        }
        seen[z] = true;
    }
    Ok(())
}

/// Which learnable group a packed scalar belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    X,
    Y,
    Scale,
    Theta,
    Nu,
    Color,
}

impl ParamGroup {
    /// Group of slot `k` within one primitive's 8 scalars.
    pub fn of_slot(k: usize) -> ParamGroup {
        match k {
            0 => ParamGroup::X,
            1 => ParamGroup::Y,
            2 => ParamGroup::Scale,
            3 => ParamGroup::Theta,
            4 => ParamGroup::Nu,
            _ => ParamGroup::Color,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::X => "x",
            ParamGroup::Y => "y",
            ParamGroup::Scale => "s",
            ParamGroup::Theta => "theta",
            ParamGroup::Nu => "nu",
            ParamGroup::Color => "c_var",
        }
    }
}

/// Describes the flat vector produced by [`pack_params`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub primitives: usize,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.primitives * PARAMS_PER_PRIMITIVE
    }

    pub fn is_empty(&self) -> bool {
        self.primitives == 0
    }

    pub fn offset(&self, primitive: usize) -> usize {
        primitive * PARAMS_PER_PRIMITIVE
    }

    pub fn group(&self, flat_index: usize) -> ParamGroup {
        ParamGroup::of_slot(flat_index % PARAMS_PER_PRIMITIVE)
    }
}

/// Flattens learnable scalars in primitive order, then (x, y, s, theta, nu, c_var).
pub fn pack_params(scene: &Scene) -> (Vec<f32>, ParamLayout) {
    let mut v = Vec::with_capacity(scene.primitives.len() * PARAMS_PER_PRIMITIVE);
    for p in &scene.primitives {
        v.extend_from_slice(&p.scalars());
    }
    (v, ParamLayout { primitives: scene.primitives.len() })
}

/// Writes a packed vector back; non-learnable fields come from `scene`.
pub fn unpack_params(scene: &Scene, params: &[f32], layout: ParamLayout) -> Result<Scene, SceneError> {
    let mut out = scene.clone();
    write_params(&mut out, params, layout)?;
    Ok(out)
}

pub(crate) fn write_params(scene: &mut Scene, params: &[f32], layout: ParamLayout) -> Result<(), SceneError> {
    if layout.primitives != scene.primitives.len() || params.len() != layout.len() {
        return Err(SceneError::LayoutMismatch {
            expected: scene.primitives.len() * PARAMS_PER_PRIMITIVE,
            got: params.len(),
        });
    }
    for (p, chunk) in scene.primitives.iter_mut().zip(params.chunks_exact(PARAMS_PER_PRIMITIVE)) {
        p.set_scalars(chunk);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_prim_scene(s: f32) -> Scene {
        let t = PrimitiveTemplate::filled(4, 4, [1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut scene = Scene::new(32, 32, vec![t]);
        scene.push(PrimitiveParams::new(10.0, 20.0, s, 0.0, -4.0, [0.0; 3]));
        scene
    }

    #[test]
    fn valid_single_primitive() {
        assert_eq!(validate_scene(&one_prim_scene(4.0)), Ok(()));
    }

    #[test]
    fn zero_scale_rejected() {
        assert_eq!(
            validate_scene(&one_prim_scene(0.0)),
            Err(SceneError::InvalidScale { index: 0, s: 0.0 })
        );
    }

    #[test]
    fn duplicate_z_rejected() {
        let mut scene = one_prim_scene(4.0);
        scene.push(PrimitiveParams::new(1.0, 1.0, 2.0, 0.0, 0.0, [0.0; 3]));
        scene.primitives[1].z = 0;
        assert!(matches!(validate_scene(&scene), Err(SceneError::NonPermutationZ { .. })));
    }

    #[test]
    fn bad_template_and_channels() {
        let mut scene = one_prim_scene(4.0);
        scene.primitives[0].template_id = 3;
        assert!(matches!(validate_scene(&scene), Err(SceneError::BadTemplateRef { index: 0, .. })));
        assert!(matches!(
            PrimitiveTemplate::filled(3, 3, [1.5, 0.0, 0.0, 1.0]),
            Err(SceneError::BadChannelRange { .. })
        ));
        assert!(matches!(
            PrimitiveTemplate::filled(1, 3, [0.5; 4]),
            Err(SceneError::TemplateTooSmall { .. })
        ));
    }

    #[test]
    fn validation_is_repeatable() {
        let mut scene = one_prim_scene(4.0);
        scene.alpha_max = 0.0;
        assert_eq!(validate_scene(&scene), validate_scene(&scene));
        assert_eq!(validate_scene(&scene), Err(SceneError::InvalidAlphaMax(0.0)));
    }

    #[test]
    fn pack_layout() {
        let scene = one_prim_scene(4.0);
        let (v, layout) = pack_params(&scene);
        assert_eq!(v, vec![10.0, 20.0, 4.0, 0.0, -4.0, 0.0, 0.0, 0.0]);
        assert_eq!(layout.group(4), ParamGroup::Nu);
        let mut two = scene.clone();
        two.push(PrimitiveParams::new(1.0, 1.0, 2.0, 0.0, 0.0, [0.0; 3]));
        assert_eq!(pack_params(&two).0.len(), 16);
    }

    #[test]
    fn unpack_rejects_wrong_length() {
        let scene = one_prim_scene(4.0);
        let (_, layout) = pack_params(&scene);
        assert!(matches!(
            unpack_params(&scene, &[0.0; 7], layout),
            Err(SceneError::LayoutMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(
            raw in proptest::collection::vec(
                (-100f32..100.0, -100f32..100.0, 0.1f32..50.0, -10f32..10.0, -8f32..8.0,
                 proptest::array::uniform3(-5f32..5.0)),
                1..12)
        ) {
            let t = PrimitiveTemplate::filled(2, 2, [0.5; 4]).unwrap();
            let mut scene = Scene::new(64, 64, vec![t]);
            for (x, y, s, th, nu, c) in raw {
                scene.push(PrimitiveParams::new(x, y, s, th, nu, c));
            }
            prop_assert!(validate_scene(&scene).is_ok());
            let (v, layout) = pack_params(&scene);
            let back = unpack_params(&scene, &v, layout).unwrap();
            prop_assert_eq!(back, scene);
        }
    }
}
