use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageBuffer, ImageError, Rgb, Rgba};

use crate::image::{Image, Plane};
use crate::scene::PrimitiveTemplate;
use crate::Error;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn map_image_err(path: &Path, e: ImageError) -> Error {
    match e {
        ImageError::Unsupported(u) => Error::UnsupportedFormat { path: path.to_path_buf(), reason: u.to_string() },
        // The bytes are already in memory, so I/O errors here mean a truncated stream.
        other => Error::Decode { path: path.to_path_buf(), reason: other.to_string() },
    }
}

/// Sniffs the format from the file signature, ignoring the extension.
fn decode(path: &Path) -> Result<DynamicImage, Error> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let format = image::guess_format(&bytes).map_err(|_| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        reason: "unrecognized file signature".into(),
    })?;
    image::load_from_memory_with_format(&bytes, format).map_err(|e| map_image_err(path, e))
}

fn is_wide(color: ColorType) -> bool {
    color.bytes_per_pixel() / color.channel_count() > 1
}

/// RGBA values in [0, 1]: 8-bit `v` maps to `v / 255`, 16-bit to `v / 65535`.
fn rgba_values(img: &DynamicImage) -> (usize, usize, Vec<[f32; 4]>) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let texels = if is_wide(img.color()) {
        img.to_rgba16().pixels().map(|p| p.0.map(|v| v as f32 / 65535.0)).collect()
    } else {
        img.to_rgba8().pixels().map(|p| p.0.map(|v| v as f32 / 255.0)).collect()
    };
    (w, h, texels)
}

/// Decodes a PNG or JPEG. The alpha channel, when the file has one, is
/// returned separately.
pub fn load_image(path: &Path) -> Result<(Image, Option<Plane>), Error> {
    let img = decode(path)?;
    let has_alpha = img.color().has_alpha();
    let (w, h, texels) = rgba_values(&img);
    let color = Image::from_vec(w, h, texels.iter().flat_map(|t| [t[0], t[1], t[2]]).collect());
    let alpha = has_alpha.then(|| Plane::from_vec(w, h, texels.iter().map(|t| t[3]).collect()));
    Ok((color, alpha))
}

/// Loads a template; files without alpha are fully opaque.
pub fn load_template(path: &Path) -> Result<PrimitiveTemplate, Error> {
    let img = decode(path)?;
    let (w, h, texels) = rgba_values(&img);
    Ok(PrimitiveTemplate::new(w, h, texels)?)
}

fn is_image_file(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads templates from files, expanding directories in name order.
pub fn load_templates(paths: &[PathBuf]) -> Result<Vec<PrimitiveTemplate>, Error> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            for f in list_images(p)? {
                out.push(load_template(&f)?);
            }
        } else {
            out.push(load_template(p)?);
        }
    }
    Ok(out)
}

/// Loads every image in `dir`, in name order, as video frames.
pub fn load_frames(dir: &Path) -> Result<Vec<Image>, Error> {
    list_images(dir)?.iter().map(|p| load_image(p).map(|(img, _)| img)).collect()
}

fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn save(path: &Path, img: DynamicImage) -> Result<(), Error> {
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| map_image_err(path, e))
}

/// Writes an 8-bit PNG, RGBA when `alpha` is given.
pub fn save_png(path: &Path, color: &Image, alpha: Option<&Plane>) -> Result<(), Error> {
    let (w, h) = (color.width() as u32, color.height() as u32);
    let img = match alpha {
        None => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            Rgb(color.get(x as usize, y as usize).map(quantize8))
        })),
        Some(a) => DynamicImage::ImageRgba8(ImageBuffer::from_fn(w, h, |x, y| {
            let c = color.get(x as usize, y as usize);
            Rgba([quantize8(c[0]), quantize8(c[1]), quantize8(c[2]), quantize8(a.get(x as usize, y as usize))])
        })),
    };
    save(path, img)
}

/// Writes row-major RGBA texels as a 16-bit PNG.
pub fn save_rgba16(path: &Path, width: usize, height: usize, texels: &[[f32; 4]]) -> Result<(), Error> {
    assert_eq!(texels.len(), width * height, "texel count must match dimensions");
    let img = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        Rgba(texels[y as usize * width + x as usize].map(quantize16))
    });
    save(path, DynamicImage::ImageRgba16(img))
}

/// Reads RGBA texels in [0, 1] at whatever bit depth the file has.
pub fn load_rgba(path: &Path) -> Result<(usize, usize, Vec<[f32; 4]>), Error> {
    Ok(rgba_values(&decode(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_pixel_decodes_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.png");
        save_png(&p, &Image::filled(1, 1, [1.0; 3]), None).unwrap();
        let (img, alpha) = load_image(&p).unwrap();
        assert_eq!(img.get(0, 0), [1.0; 3]);
        assert!(alpha.is_none());
    }

    #[test]
    fn alpha_is_surfaced_separately() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let a = Plane::from_fn(2, 1, |x, _| x as f32);
        save_png(&p, &Image::filled(2, 1, [0.2, 0.4, 0.6]), Some(&a)).unwrap();
        let (img, alpha) = load_image(&p).unwrap();
        assert_eq!(alpha.unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(img.get(1, 0), [51.0 / 255.0, 102.0 / 255.0, 153.0 / 255.0]);
    }

    #[test]
    fn truncated_file_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        save_png(&p, &Image::filled(16, 16, [0.5; 3]), None).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&p), Err(Error::Decode { .. })));
    }

    #[test]
    fn unknown_signature_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        fs::write(&p, b"definitely not an image").unwrap();
        assert!(matches!(load_image(&p), Err(Error::UnsupportedFormat { .. })));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        assert!(matches!(load_image(Path::new("/nonexistent/x.png")), Err(Error::Io { .. })));
    }

    #[test]
    fn sixteen_bit_round_trip_is_fine_grained() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.png");
        let texels: Vec<[f32; 4]> = (0..6).map(|i| [i as f32 / 7.0, 0.123_456, 1.0, 0.5]).collect();
        save_rgba16(&p, 3, 2, &texels).unwrap();
        let (w, h, back) = load_rgba(&p).unwrap();
        assert_eq!((w, h), (3, 2));
        for (a, b) in texels.iter().zip(&back) {
            for c in 0..4 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 65535.0 + 1e-7);
            }
        }
    }
}
