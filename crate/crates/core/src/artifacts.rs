//! Latent artifacts exchanged between the transform and entropy-coding
//! stages, and their `.lat` container.
//!
//! Layout (little-endian):
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 4 | magic `FOLA` |
//! | 4  | 2 | version (1) |
//! | 6  | 1 | size class (0 = S, 1 = M, 2 = L) |
//! | 7  | 1 | reserved, 0 |
//! | 8  | 8 | encoder seed |
//! | 16 | 12 | tile origin: image id, row, col (u32 each) |
//! | 28 | 12 | ŷ dims C, H, W (u32 each) |
//! | 40 | 12 | ẑ dims C, H, W (u32 each) |
//! | 52 | 8 | payload length in bytes (u64) |
//! | 60 | n | ŷ as i32, ẑ as i32, μ as f32, σ as f32 |
//! | 60 + n | 4 | CRC32 of all preceding bytes |

use std::fs;
use std::path::Path;

use crate::codec::{SizeClass, SCALE_FLOOR};
use crate::error::{Error, Result};
use crate::tensor::{IntTensor, RealTensor};
use crate::tiler::TileOrigin;

pub const LAT_MAGIC: [u8; 4] = *b"FOLA";
pub const LAT_VERSION: u16 = 1;
pub const LAT_HEADER_LEN: usize = 60;

/// Quantized latents and the entropy parameters predicted for them.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentArtifacts {
    pub y_hat: IntTensor,
    pub z_hat: IntTensor,
    pub mu: RealTensor,
    pub sigma: RealTensor,
    pub tile: TileOrigin,
    pub seed: u64,
    pub size_class: SizeClass,
}

impl LatentArtifacts {
    pub fn validate(&self) -> Result<()> {
        if self.mu.dims != self.y_hat.dims || self.sigma.dims != self.y_hat.dims {
            return Err(Error::Shape(format!(
                "mu {:?} / sigma {:?} must match y_hat {:?}",
                self.mu.dims, self.sigma.dims, self.y_hat.dims
            )));
        }
        let [_, yh, yw] = self.y_hat.dims;
        let [_, zh, zw] = self.z_hat.dims;
        if yh != zh * 4 || yw != zw * 4 {
            return Err(Error::Shape(format!(
                "z_hat {:?} must be y_hat {:?} downsampled by 4",
                self.z_hat.dims, self.y_hat.dims
            )));
        }
        if let Some(s) = self.sigma.data.iter().find(|s| s.is_nan() || **s < SCALE_FLOOR) {
            return Err(Error::invalid("sigma", format!("{s} below floor {SCALE_FLOOR}")));
        }
        if self.mu.data.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mu", "must be finite"));
        }
        Ok(())
    }

    /// Tensor payload size: the worst-case per-tile file size without any
    /// sparsity-exploiting serialization.
    pub fn payload_len(&self) -> usize {
        4 * (self.y_hat.len() + self.z_hat.len() + self.mu.len() + self.sigma.len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = self.payload_len();
        let mut out = Vec::with_capacity(LAT_HEADER_LEN + payload + 4);
        out.extend_from_slice(&LAT_MAGIC);
        out.extend_from_slice(&LAT_VERSION.to_le_bytes());
        out.push(self.size_class.code());
        out.push(0);
        out.extend_from_slice(&self.seed.to_le_bytes());
        for v in [self.tile.image_id, self.tile.row, self.tile.col] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for d in self.y_hat.dims.iter().chain(&self.z_hat.dims) {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(payload as u64).to_le_bytes());
        for v in self.y_hat.data.iter().chain(&self.z_hat.data) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.mu.data.iter().chain(&self.sigma.data) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic: [u8; 4] = r.array()?;
        if magic != LAT_MAGIC {
            return Err(Error::BadMagic {
                expected: LAT_MAGIC,
                found: magic,
            });
        }
        let version = r.u16()?;
        if version != LAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let class = r.u8()?;
        let _reserved = r.u8()?;
        let seed = r.u64()?;
        let tile = TileOrigin {
            image_id: r.u32()?,
            row: r.u32()?,
            col: r.u32()?,
        };
        let y_dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let z_dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let payload = r.u64()? as usize;
        let total = LAT_HEADER_LEN
            .checked_add(payload)
            .and_then(|v| v.checked_add(4))
            .ok_or_else(|| Error::CorruptStream("payload length overflow".into()))?;
        if bytes.len() < total {
            return Err(Error::Truncated {
                needed: total,
                available: bytes.len(),
            });
        }
        let stored = u32::from_le_bytes(bytes[total - 4..total].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..total - 4]);
        if stored != computed {
            return Err(Error::Checksum {
                section: "lat",
                stored,
                computed,
            });
        }
        if bytes.len() != total {
            return Err(Error::CorruptStream(format!(
                "{} trailing bytes after artifact",
                bytes.len() - total
            )));
        }
        let size_class = SizeClass::from_code(class)
            .ok_or_else(|| Error::CorruptStream(format!("unknown size class {class}")))?;
        let ny: usize = y_dims.iter().product();
        let nz: usize = z_dims.iter().product();
        if 4 * (3 * ny + nz) != payload {
            return Err(Error::CorruptStream("payload length disagrees with tensor dims".into()));
        }
        let y_hat = IntTensor::from_vec(y_dims, r.i32s(ny)?)?;
        let z_hat = IntTensor::from_vec(z_dims, r.i32s(nz)?)?;
        let mu = RealTensor::from_vec(y_dims, r.f32s(ny)?)?;
        let sigma = RealTensor::from_vec(y_dims, r.f32s(ny)?)?;
        let a = LatentArtifacts {
            y_hat,
            z_hat,
            mu,
            sigma,
            tile,
            seed,
            size_class,
        };
        a.validate()?;
        Ok(a)
    }
}

/// Writes `artifacts` to `path`, returning the number of bytes written.
pub fn persist_artifacts(artifacts: &LatentArtifacts, path: &Path) -> Result<usize> {
    let bytes = artifacts.to_bytes();
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

pub fn load_artifacts(path: &Path) -> Result<LatentArtifacts> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LatentArtifacts::from_bytes(&bytes)
}

/// Little-endian cursor with bounds checks.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated {
            needed: self.pos.saturating_add(n),
            available: self.buf.len(),
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i32s(&mut self, n: usize) -> Result<Vec<i32>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
