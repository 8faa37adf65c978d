//! Binary scene format, little-endian throughout:
//!
//! ```text
//! magic            8 bytes  "STMPSCN\0"
//! version          u32      currently 1
//! canvas_w, _h     u32 x 2
//! alpha_max        f32
//! mu_blend         f32
//! preserve_aspect  u8
//! background tag   u8       0 = solid, 1 = noise
//! background rgb   f32 x 3  (zeros for noise)
//! template count   u32
//!   width, height  u32 x 2
//!   sha256         32 bytes of the texel payload below
//!   texels         f32 x 4 x width x height, row-major RGBA
//! primitive count  u32
//!   x y s theta nu c0 c1 c2   f32 x 8
//!   template_id, z            u32 x 2
//! sha256           32 bytes of everything above
//! ```
//!
//! Floats are stored as raw bits, so a round trip is exact.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::scene::{validate_scene, BackgroundPolicy, PrimitiveParams, PrimitiveTemplate, Scene};
use crate::Error;

pub const SCENE_MAGIC: &[u8; 8] = b"STMPSCN\0";
pub const SCENE_VERSION: u32 = 1;

fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
}

fn texel_bytes(t: &PrimitiveTemplate) -> Vec<u8> {
    t.texels().iter().flat_map(|px| px.iter().flat_map(|v| v.to_le_bytes())).collect()
}

/// Serializes a scene into the documented binary layout.
pub fn encode_scene(scene: &Scene) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.bytes(SCENE_MAGIC);
    w.u32(SCENE_VERSION);
    w.u32(scene.canvas_w as u32);
    w.u32(scene.canvas_h as u32);
    w.f32(scene.alpha_max);
    w.f32(scene.mu_blend);
    w.u8(scene.preserve_aspect as u8);
    match scene.background {
        BackgroundPolicy::Solid(c) => {
            w.u8(0);
            c.iter().for_each(|&v| w.f32(v));
        }
        BackgroundPolicy::Noise => {
            w.u8(1);
            (0..3).for_each(|_| w.f32(0.0));
        }
    }
    w.u32(scene.templates.len() as u32);
    for t in scene.templates.iter() {
        let payload = texel_bytes(t);
        w.u32(t.width() as u32);
        w.u32(t.height() as u32);
        w.bytes(&sha256(&payload));
        w.bytes(&payload);
    }
    w.u32(scene.primitives.len() as u32);
    for p in &scene.primitives {
        p.scalars().iter().for_each(|&v| w.f32(v));
        w.u32(p.template_id);
        w.u32(p.z);
    }
    let digest = sha256(&w.0);
    w.bytes(&digest);
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
    fn f32(&mut self) -> Result<f32, Error> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

fn corrupt(why: &str) -> Error {
    Error::CorruptScene(why.to_string())
}

/// Parses and validates a serialized scene.
pub fn decode_scene(bytes: &[u8]) -> Result<Scene, Error> {
    if bytes.len() < SCENE_MAGIC.len() || &bytes[..SCENE_MAGIC.len()] != SCENE_MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let mut r = Reader { buf: bytes, pos: SCENE_MAGIC.len() };
    let version = r.u32()?;
    if version != SCENE_VERSION {
        return Err(Error::VersionMismatch { found: version, supported: SCENE_VERSION });
    }
    if bytes.len() < r.pos + 32 {
        return Err(corrupt("truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if sha256(body) != digest {
        return Err(corrupt("checksum mismatch"));
    }
    r.buf = body;

    let canvas_w = r.u32()? as usize;
    let canvas_h = r.u32()? as usize;
    let alpha_max = r.f32()?;
    let mu_blend = r.f32()?;
    let preserve_aspect = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(corrupt("bad aspect flag")),
    };
    let tag = r.u8()?;
    let rgb = [r.f32()?, r.f32()?, r.f32()?];
    let background = match tag {
        0 => BackgroundPolicy::Solid(rgb),
        1 => BackgroundPolicy::Noise,
        _ => return Err(corrupt("bad background tag")),
    };
    let template_count = r.u32()? as usize;
    let mut templates = Vec::new();
    for _ in 0..template_count {
        let (tw, th) = (r.u32()? as usize, r.u32()? as usize);
        let hash = r.take(32)?;
        let len = tw.checked_mul(th).and_then(|n| n.checked_mul(16)).ok_or_else(|| corrupt("template too large"))?;
        let payload = r.take(len)?;
        if sha256(payload) != hash {
            return Err(corrupt("template hash mismatch"));
        }
        let texels = payload
            .chunks_exact(16)
            .map(|c| std::array::from_fn(|k| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().expect("four bytes"))))
            .collect();
        templates.push(PrimitiveTemplate::new(tw, th, texels).map_err(|e| corrupt(&e.to_string()))?);
    }
    let count = r.u32()? as usize;
    let mut scene = Scene::new(canvas_w, canvas_h, templates);
    scene.alpha_max = alpha_max;
    scene.mu_blend = mu_blend;
    scene.preserve_aspect = preserve_aspect;
    scene.background = background;
    for _ in 0..count.min(body.len() / 40) {
        let v: [f32; 8] = [r.f32()?, r.f32()?, r.f32()?, r.f32()?, r.f32()?, r.f32()?, r.f32()?, r.f32()?];
        let mut p = PrimitiveParams::new(v[0], v[1], v[2], v[3], v[4], [v[5], v[6], v[7]]);
        p.template_id = r.u32()?;
        p.z = r.u32()?;
        scene.primitives.push(p);
    }
    if scene.primitives.len() != count || r.pos != body.len() {
        return Err(corrupt("primitive records do not match the declared count"));
    }
    validate_scene(&scene).map_err(|e| corrupt(&e.to_string()))?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<(), Error> {
    std::fs::write(path, encode_scene(scene)).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

pub fn load_scene(path: &Path) -> Result<Scene, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    decode_scene(&bytes)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::synth::{blob_template, random_scene, SceneRanges};

    fn sample_scene(seed: u64) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let templates = vec![blob_template(9, 2, &mut rng), blob_template(5, 1, &mut rng)];
        let mut scene = random_scene(&mut rng, 17, 40, 30, templates, SceneRanges::default());
        scene.alpha_max = 0.8;
        scene.mu_blend = 0.25;
        scene.preserve_aspect = true;
        scene.background = BackgroundPolicy::Solid([0.1, 0.2, 0.3]);
        scene
    }

    #[test]
    fn round_trip_is_exact() {
        let scene = sample_scene(1);
        assert_eq!(decode_scene(&encode_scene(&scene)).unwrap(), scene);
        let mut noisy = scene.clone();
        noisy.background = BackgroundPolicy::Noise;
        assert_eq!(decode_scene(&encode_scene(&noisy)).unwrap(), noisy);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let scene = sample_scene(2);
        save_scene(&scene, &path).unwrap();
        assert_eq!(load_scene(&path).unwrap(), scene);
        assert!(matches!(load_scene(&dir.path().join("missing.bin")), Err(Error::Io { .. })));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_scene(&sample_scene(3));
        bytes[0] = b'X';
        assert!(matches!(decode_scene(&bytes), Err(Error::CorruptScene(_))));
        assert!(matches!(decode_scene(b"STM"), Err(Error::CorruptScene(_))));
    }

    #[test]
    fn future_version_is_reported() {
        let mut bytes = encode_scene(&sample_scene(4));
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode_scene(&bytes), Err(Error::VersionMismatch { found: 2, supported: 1 })));
    }

    #[test]
    fn flipped_payload_bit_fails_the_checksum() {
        let clean = encode_scene(&sample_scene(5));
        for pos in [12, clean.len() / 2, clean.len() - 40, clean.len() - 1] {
            let mut bytes = clean.clone();
            bytes[pos] ^= 0x10;
            assert!(matches!(decode_scene(&bytes), Err(Error::CorruptScene(_))), "byte {pos}");
        }
        assert!(decode_scene(&clean[..clean.len() - 5]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn any_random_scene_round_trips(seed in any::<u64>()) {
            let scene = sample_scene(seed);
            prop_assert_eq!(decode_scene(&encode_scene(&scene)).unwrap(), scene);
        }
    }
}
