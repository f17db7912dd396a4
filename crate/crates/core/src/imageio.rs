//! Input images: PNG files, raw planar dumps with a JSON sidecar, and seeded
//! synthetic scenes for benchmarking.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tiler::ImageBuffer;

/// Dimension header stored next to a raw planar file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub bit_depth: u8,
}

/// `scene.raw` → `scene.json`.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// Loads a PNG (as 8-bit RGB) or a raw planar file with its sidecar.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("raw") => load_raw(path),
        _ => load_png(path),
    }
}

pub fn load_png(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(u16::from).collect();
    ImageBuffer::new(h, w, 3, 8, data)
}

pub fn save_png(image: &ImageBuffer, path: &Path) -> Result<()> {
    if image.bit_depth != 8 || image.channels != 3 {
        return Err(Error::invalid("image", "PNG export supports 8-bit RGB only"));
    }
    let bytes: Vec<u8> = image.data.iter().map(|&v| v as u8).collect();
    let buf = image::RgbImage::from_raw(image.width, image.height, bytes)
        .ok_or_else(|| Error::Shape("buffer size mismatch".into()))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
}

/// Planar samples, one byte each at 8 bits, little-endian u16 otherwise.
pub fn load_raw(path: &Path) -> Result<ImageBuffer> {
    let side_path = sidecar_path(path);
    let side_text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let side: RawSidecar = serde_json::from_str(&side_text)
        .map_err(|e| Error::Config(format!("{}: {e}", side_path.display())))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let plane = side.height as usize * side.width as usize;
    let n = plane * side.channels as usize;
    let width = if side.bit_depth > 8 { 2 } else { 1 };
    if bytes.len() != n * width {
        return Err(Error::Shape(format!(
            "{}: expected {} bytes for {}x{}x{} at {} bits, found {}",
            path.display(),
            n * width,
            side.height,
            side.width,
            side.channels,
            side.bit_depth,
            bytes.len()
        )));
    }
    let planar: Vec<u16> = if width == 1 {
        bytes.iter().map(|&b| u16::from(b)).collect()
    } else {
        bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
    };
    let ch = side.channels as usize;
    let mut data = vec![0u16; n];
    for c in 0..ch {
        for i in 0..plane {
            data[i * ch + c] = planar[c * plane + i];
        }
    }
    ImageBuffer::new(side.height, side.width, side.channels, side.bit_depth, data)
}

pub fn save_raw(image: &ImageBuffer, path: &Path) -> Result<()> {
    let ch = image.channels as usize;
    let plane = image.pixel_count() as usize;
    let mut out = Vec::with_capacity(image.sample_count() * 2);
    for c in 0..ch {
        for i in 0..plane {
            let v = image.data[i * ch + c];
            if image.bit_depth > 8 {
                out.extend_from_slice(&v.to_le_bytes());
            } else {
                out.push(v as u8);
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let side = RawSidecar {
        height: image.height,
        width: image.width,
        channels: image.channels,
        bit_depth: image.bit_depth,
    };
    let side_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    fs::write(&side_path, text).map_err(|e| Error::io(&side_path, e))
}

/// Deterministic 8-bit RGB test scene: smooth gradients, a few blobs, and noise.
pub fn synthetic_image(height: u32, width: u32, seed: u64) -> ImageBuffer {
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    let blobs: Vec<(f32, f32, f32, [f32; 3])> = (0..6)
        .map(|_| {
            (
                rng.gen_range(0.0..height as f32),
                rng.gen_range(0.0..width as f32),
                rng.gen_range(4.0..64.0f32),
                [rng.gen_range(-80.0..80.0), rng.gen_range(-80.0..80.0), rng.gen_range(-80.0..80.0)],
            )
        })
        .collect();
    let phase: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let mut data = Vec::with_capacity(height as usize * width as usize * 3);
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                let fy = y as f32 / height.max(1) as f32;
                let fx = x as f32 / width.max(1) as f32;
                let mut v = 110.0 + 60.0 * (fx * 3.0 + fy * 2.0 + phase[c] * 6.0).sin();
                for &(by, bx, r, amp) in &blobs {
                    let d2 = ((y as f32 - by).powi(2) + (x as f32 - bx).powi(2)) / (r * r);
                    if d2 < 1.0 {
                        v += amp[c] * (1.0 - d2);
                    }
                }
                v += rng.gen_range(-12.0..12.0f32);
                data.push(v.clamp(0.0, 255.0) as u16);
            }
        }
    }
    ImageBuffer {
        height,
        width,
        channels: 3,
        bit_depth: 8,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("oec-imageio-{tag}-{}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn png_round_trip() {
        let dir = tmpdir("png");
        let img = synthetic_image(37, 53, 3);
        let p = dir.join("a.png");
        save_png(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn raw_round_trip_16_bit() {
        let dir = tmpdir("raw");
        let data = (0..5 * 7 * 4).map(|i| (i * 977 % 65536) as u16).collect();
        let img = ImageBuffer::new(5, 7, 4, 16, data).unwrap();
        let p = dir.join("scene.raw");
        save_raw(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
        fs::write(&p, [0u8; 3]).unwrap();
        assert!(load_image(&p).is_err());
    }

    #[test]
    fn unreadable_file_names_path() {
        let err = load_image(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }

    #[test]
    fn synthetic_is_seeded() {
        assert_eq!(synthetic_image(16, 16, 1), synthetic_image(16, 16, 1));
        assert_ne!(synthetic_image(16, 16, 1), synthetic_image(16, 16, 2));
    }
}
