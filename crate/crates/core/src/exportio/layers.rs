//! Per-primitive layer export.
//!
//! Each primitive is rendered in isolation into a buffer cropped to its
//! conservative box at the export scale, stored as premultiplied 16-bit
//! RGBA. Stacking the layers bottom-to-top with the "over" operator onto
//! the background reproduces the composite.
//!
//! Manifest layout (one `key = value` per line, fixed order):
//!
//! ```text
//! manifest_version = 1
//! scale = 2
//! canvas = 256 256
//! background = 1 1 1
//! layers = 2
//! skipped = 1
//!
//! [layer]
//! stack = 0            # 0 is the bottom layer
//! index = 4            # primitive index in the scene
//! depth = 9            # scene depth rank, 0 is front-most
//! bbox = 10 12 30 28   # x0 y0 width height at export scale
//! file = layer_0000.png
//! params = x y s theta nu c0 c1 c2
//! template = 1
//!
//! [skipped]
//! index = 7
//! depth = 3
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::image_io::{load_rgba, save_png, save_rgba16};
use crate::image::Image;
use crate::raster::kernel::Placement;
use crate::raster::{conservative_bbox, render, Background, PixelRect, RenderOptions};
use crate::scene::{validate_scene, PrimitiveParams, Scene};
use crate::Error;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const COMPOSITE_FILE: &str = "composite.png";

#[derive(Clone, Debug, PartialEq)]
pub struct LayerEntry {
    /// Position in the stack, 0 at the bottom.
    pub stack: usize,
    pub index: usize,
    pub depth: u32,
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub file: String,
    pub params: PrimitiveParams,
}

/// A primitive whose box misses the export canvas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkippedLayer {
    pub index: usize,
    pub depth: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerManifest {
    pub scale: usize,
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub background: [f32; 3],
    /// Bottom to top.
    pub layers: Vec<LayerEntry>,
    pub skipped: Vec<SkippedLayer>,
}

/// Premultiplied RGBA of one primitive alone, cropped to `rect`.
pub fn render_layer(scene: &Scene, index: usize, rect: PixelRect) -> Vec<[f32; 4]> {
    let place = Placement::<f32>::new(scene, index);
    let mut out = Vec::with_capacity(rect.width() * rect.height());
    for y in rect.y0..=rect.y1 {
        for x in rect.x0..=rect.x1 {
            out.push(match place.sample(x as f32, y as f32) {
                Some(s) => [s.alpha * s.color[0], s.alpha * s.color[1], s.alpha * s.color[2], s.alpha],
                None => [0.0; 4],
            });
        }
    }
    out
}

fn background_rgb(scene: &Scene) -> [f32; 3] {
    match Background::for_display(scene.background) {
        Background::Solid(c) => c,
        Background::Image(_) => unreachable!("display backgrounds are solid"),
    }
}

/// Writes one PNG per visible primitive, the manifest and a flattened
/// composite at `scale` into `outdir`.
pub fn export_layers(scene: &Scene, scale: usize, outdir: &Path) -> Result<LayerManifest, Error> {
    if !matches!(scale, 1 | 2 | 4) {
        return Err(Error::InvalidScale(scale));
    }
    validate_scene(scene)?;
    std::fs::create_dir_all(outdir).map_err(|e| Error::Io { path: outdir.to_path_buf(), source: e })?;
    let big = scene.scaled(scale);

    // Bottom of the stack is the back-most primitive.
    let mut order: Vec<u32> = big.depth_order();
    order.reverse();
    let boxes: Vec<(usize, Option<PixelRect>)> =
        order.iter().map(|&i| (i as usize, conservative_bbox(&big, i as usize, 0.0))).collect();
    let buffers: Vec<Option<Vec<[f32; 4]>>> =
        boxes.par_iter().map(|&(i, rect)| rect.map(|r| render_layer(&big, i, r))).collect();

    let mut manifest = LayerManifest {
        scale,
        canvas_w: big.canvas_w,
        canvas_h: big.canvas_h,
        background: background_rgb(scene),
        layers: Vec::new(),
        skipped: Vec::new(),
    };
    for (&(index, rect), buffer) in boxes.iter().zip(&buffers) {
        let depth = scene.primitives[index].z;
        let (Some(r), Some(texels)) = (rect, buffer) else {
            manifest.skipped.push(SkippedLayer { index, depth });
            continue;
        };
        let stack = manifest.layers.len();
        let file = format!("layer_{stack:04}.png");
        save_rgba16(&outdir.join(&file), r.width(), r.height(), texels)?;
        manifest.layers.push(LayerEntry {
            stack,
            index,
            depth,
            x0: r.x0,
            y0: r.y0,
            width: r.width(),
            height: r.height(),
            file,
            params: scene.primitives[index],
        });
    }

    let composite = render(&big, &Background::Solid(manifest.background), &RenderOptions::default().exact());
    save_png(&outdir.join(COMPOSITE_FILE), &composite.color, None)?;
    let path = outdir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::Io { path, source: e })?;
    Ok(manifest)
}

/// Stacks the manifest's layers from `dir` onto its background.
pub fn composite_layers(manifest: &LayerManifest, dir: &Path) -> Result<Image, Error> {
    let mut out = Image::filled(manifest.canvas_w, manifest.canvas_h, manifest.background);
    for layer in &manifest.layers {
        let path: PathBuf = dir.join(&layer.file);
        let (w, h, texels) = load_rgba(&path)?;
        if (w, h) != (layer.width, layer.height)
            || layer.x0 + w > manifest.canvas_w
            || layer.y0 + h > manifest.canvas_h
        {
            return Err(Error::CorruptManifest(format!("layer {} does not fit its box", layer.stack)));
        }
        for ly in 0..h {
            for lx in 0..w {
                let [r, g, b, a] = texels[ly * w + lx];
                let (x, y) = (layer.x0 + lx, layer.y0 + ly);
                let under = out.get(x, y);
                out.set(x, y, [r + (1.0 - a) * under[0], g + (1.0 - a) * under[1], b + (1.0 - a) * under[2]]);
            }
        }
    }
    Ok(out)
}

fn join<T: ToString>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl LayerManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "manifest_version = {MANIFEST_VERSION}");
        let _ = writeln!(s, "scale = {}", self.scale);
        let _ = writeln!(s, "canvas = {} {}", self.canvas_w, self.canvas_h);
        let _ = writeln!(s, "background = {}", join(self.background));
        let _ = writeln!(s, "layers = {}", self.layers.len());
        let _ = writeln!(s, "skipped = {}", self.skipped.len());
        for l in &self.layers {
            let p = &l.params;
            let _ = writeln!(s, "\n[layer]");
            let _ = writeln!(s, "stack = {}", l.stack);
            let _ = writeln!(s, "index = {}", l.index);
            let _ = writeln!(s, "depth = {}", l.depth);
            let _ = writeln!(s, "bbox = {} {} {} {}", l.x0, l.y0, l.width, l.height);
            let _ = writeln!(s, "file = {}", l.file);
            let _ = writeln!(s, "params = {}", join(p.scalars()));
            let _ = writeln!(s, "template = {}", p.template_id);
        }
        for k in &self.skipped {
            let _ = writeln!(s, "\n[skipped]");
            let _ = writeln!(s, "index = {}", k.index);
            let _ = writeln!(s, "depth = {}", k.depth);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let bad = |why: String| Error::CorruptManifest(why);
        let mut header: Vec<(String, String)> = Vec::new();
        let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if line.starts_with('[') {
                sections.push((line.to_string(), Vec::new()));
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("malformed line `{line}`")))?;
            let kv = (k.trim().to_string(), v.trim().to_string());
            match sections.last_mut() {
                Some((_, fields)) => fields.push(kv),
                None => header.push(kv),
            }
        }
        let get = |fields: &[(String, String)], key: &str| -> Result<String, Error> {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| bad(format!("missing `{key}`")))
        };
        fn nums<T: std::str::FromStr>(v: &str) -> Result<Vec<T>, Error> {
            v.split_whitespace()
                .map(|t| t.parse::<T>().map_err(|_| Error::CorruptManifest(format!("bad number `{t}`"))))
                .collect()
        }
        let one = |v: String| -> Result<usize, Error> {
            nums::<usize>(&v)?.first().copied().ok_or_else(|| bad("empty value".into()))
        };

        if one(get(&header, "manifest_version")?)? != MANIFEST_VERSION as usize {
            return Err(bad("unsupported manifest version".into()));
        }
        let canvas = nums::<usize>(&get(&header, "canvas")?)?;
        let background = nums::<f32>(&get(&header, "background")?)?;
        if canvas.len() != 2 || background.len() != 3 {
            return Err(bad("bad canvas or background".into()));
        }
        let mut m = LayerManifest {
            scale: one(get(&header, "scale")?)?,
            canvas_w: canvas[0],
            canvas_h: canvas[1],
            background: [background[0], background[1], background[2]],
            layers: Vec::new(),
            skipped: Vec::new(),
        };
        for (name, f) in &sections {
            match name.as_str() {
                "[layer]" => {
                    let bbox = nums::<usize>(&get(f, "bbox")?)?;
                    let v = nums::<f32>(&get(f, "params")?)?;
                    if bbox.len() != 4 || v.len() != 8 {
                        return Err(bad("bad bbox or params".into()));
                    }
                    let mut params = PrimitiveParams::new(v[0], v[1], v[2], v[3], v[4], [v[5], v[6], v[7]]);
                    params.template_id = one(get(f, "template")?)? as u32;
                    let depth = one(get(f, "depth")?)? as u32;
                    params.z = depth;
                    m.layers.push(LayerEntry {
                        stack: one(get(f, "stack")?)?,
                        index: one(get(f, "index")?)?,
                        depth,
                        x0: bbox[0],
                        y0: bbox[1],
                        width: bbox[2],
                        height: bbox[3],
                        file: get(f, "file")?,
                        params,
                    });
                }
                "[skipped]" => m.skipped.push(SkippedLayer {
                    index: one(get(f, "index")?)?,
                    depth: one(get(f, "depth")?)? as u32,
                }),
                other => return Err(bad(format!("unknown section {other}"))),
            }
        }
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Self, Error> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
        Self::parse(&text)
    }
}
