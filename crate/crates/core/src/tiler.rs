//! Square tiling with zero padding, pseudo-temporal grouping and reassembly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted tile edge unless a caller overrides it.
pub const DEFAULT_MAX_TILE: u32 = 4096;

/// Interleaved (row-major, channel-last) image samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub bit_depth: u8,
    pub data: Vec<u16>,
}

impl ImageBuffer {
    pub fn new(height: u32, width: u32, channels: u32, bit_depth: u8, data: Vec<u16>) -> Result<Self> {
        let img = ImageBuffer {
            height,
            width,
            channels,
            bit_depth,
            data,
        };
        img.validate()?;
        Ok(img)
    }

    pub fn zeros(height: u32, width: u32, channels: u32, bit_depth: u8) -> Self {
        ImageBuffer {
            height,
            width,
            channels,
            bit_depth,
            data: vec![0; height as usize * width as usize * channels as usize],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![8, 12, 16].contains(&self.bit_depth) {
            return Err(Error::invalid("bit_depth", format!("must be 8, 12 or 16, got {}", self.bit_depth)));
        }
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be non-zero, got {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        let expected = self.sample_count();
        if self.data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match {}x{}x{} = {expected}",
                self.data.len(),
                self.height,
                self.width,
                self.channels
            )));
        }
        let max = self.max_value();
        if let Some(v) = self.data.iter().find(|&&v| v > max) {
            return Err(Error::invalid("data", format!("sample {v} exceeds {}-bit range", self.bit_depth)));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.height as usize * self.width as usize * self.channels as usize
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.height) * u64::from(self.width)
    }

    pub fn max_value(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    fn row_len(&self) -> usize {
        self.width as usize * self.channels as usize
    }

    fn row(&self, y: u32) -> &[u16] {
        let len = self.row_len();
        &self.data[y as usize * len..(y as usize + 1) * len]
    }
}

/// Where a tile came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileOrigin {
    pub image_id: u32,
    pub row: u32,
    pub col: u32,
}

/// Zero padding added at the bottom and right edges of a tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TilePad {
    pub bottom: u32,
    pub right: u32,
}

/// Tiles of one or more images in row-major partitioning order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileBatch {
    pub tile_size: u32,
    pub tiles: Vec<ImageBuffer>,
    pub origins: Vec<TileOrigin>,
    pub pads: Vec<TilePad>,
    pub group_len: usize,
}

impl TileBatch {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// Appends the tiles of `other`, which must share the tile size.
    pub fn extend(&mut self, other: TileBatch) -> Result<()> {
        if other.tile_size != self.tile_size {
            return Err(Error::Shape(format!(
                "cannot merge tile sizes {} and {}",
                self.tile_size, other.tile_size
            )));
        }
        self.tiles.extend(other.tiles);
        self.origins.extend(other.origins);
        self.pads.extend(other.pads);
        Ok(())
    }
}

/// Grid dimensions (rows, cols) for an image.
pub fn tile_grid(height: u32, width: u32, tile_size: u32) -> (u32, u32) {
    (height.div_ceil(tile_size), width.div_ceil(tile_size))
}

/// Splits an image into `tile_size`² tiles, zero-padding the bottom and right edges.
pub fn partition(image: &ImageBuffer, image_id: u32, tile_size: u32) -> Result<TileBatch> {
    partition_with_limit(image, image_id, tile_size, DEFAULT_MAX_TILE)
}

pub fn partition_with_limit(
    image: &ImageBuffer,
    image_id: u32,
    tile_size: u32,
    max_tile: u32,
) -> Result<TileBatch> {
    if tile_size == 0 {
        return Err(Error::invalid("tile_size", "must be > 0"));
    }
    if tile_size > max_tile {
        return Err(Error::invalid("tile_size", format!("{tile_size} exceeds maximum {max_tile}")));
    }
    image.validate()?;
    let (rows, cols) = tile_grid(image.height, image.width, tile_size);
    let ch = image.channels as usize;
    let ts = tile_size as usize;
    let mut batch = TileBatch {
        tile_size,
        tiles: Vec::with_capacity((rows * cols) as usize),
        origins: Vec::with_capacity((rows * cols) as usize),
        pads: Vec::with_capacity((rows * cols) as usize),
        group_len: 1,
    };
    for r in 0..rows {
        for c in 0..cols {
            let y0 = r * tile_size;
            let x0 = c * tile_size;
            let h = tile_size.min(image.height - y0);
            let w = tile_size.min(image.width - x0);
            let mut tile = ImageBuffer::zeros(tile_size, tile_size, image.channels, image.bit_depth);
            for y in 0..h {
                let src = &image.row(y0 + y)[x0 as usize * ch..(x0 + w) as usize * ch];
                let dst_start = y as usize * ts * ch;
                tile.data[dst_start..dst_start + src.len()].copy_from_slice(src);
            }
            batch.tiles.push(tile);
            batch.origins.push(TileOrigin { image_id, row: r, col: c });
            batch.pads.push(TilePad {
                bottom: tile_size - h,
                right: tile_size - w,
            });
        }
    }
    Ok(batch)
}

/// Groups tile indices into sequences of `group_len` tiles from the same image.
///
/// Order follows partitioning order. A final short group is completed by
/// cycling through that image's tiles from the start.
pub fn group_sequence(batch: &TileBatch, group_len: usize) -> Result<Vec<Vec<usize>>> {
    if group_len == 0 {
        return Err(Error::invalid("group_len", "must be >= 1"));
    }
    let mut per_image: Vec<(u32, Vec<usize>)> = Vec::new();
    for (i, o) in batch.origins.iter().enumerate() {
        match per_image.last_mut() {
            Some((id, v)) if *id == o.image_id => v.push(i),
            _ => per_image.push((o.image_id, vec![i])),
        }
    }
    let mut groups = Vec::new();
    for (_, tiles) in per_image {
        for chunk in tiles.chunks(group_len) {
            let mut g = chunk.to_vec();
            let mut fill = tiles.iter().cycle();
            while g.len() < group_len {
                g.push(*fill.next().expect("image has at least one tile"));
            }
            groups.push(g);
        }
    }
    Ok(groups)
}

/// Inverse of [`partition`] for a single image.
pub fn reassemble(batch: &TileBatch, height: u32, width: u32) -> Result<ImageBuffer> {
    let ts = batch.tile_size;
    if ts == 0 {
        return Err(Error::Shape("tile size is zero".into()));
    }
    let (rows, cols) = tile_grid(height, width, ts);
    if batch.len() != (rows * cols) as usize {
        return Err(Error::Shape(format!(
            "{} tiles cannot form a {height}x{width} image with tile size {ts} ({rows}x{cols} expected)",
            batch.len()
        )));
    }
    let first = batch
        .tiles
        .first()
        .ok_or_else(|| Error::Shape("empty tile batch".into()))?;
    let (channels, bit_depth) = (first.channels, first.bit_depth);
    let mut out = ImageBuffer::zeros(height, width, channels, bit_depth);
    let ch = channels as usize;
    for ((tile, origin), pad) in batch.tiles.iter().zip(&batch.origins).zip(&batch.pads) {
        if tile.height != ts || tile.width != ts || tile.channels != channels {
            return Err(Error::Shape("tiles have inconsistent dimensions".into()));
        }
        if origin.row >= rows || origin.col >= cols {
            return Err(Error::Shape(format!(
                "tile origin ({}, {}) outside {rows}x{cols} grid",
                origin.row, origin.col
            )));
        }
        let y0 = origin.row * ts;
        let x0 = origin.col * ts;
        let h = ts.min(height - y0);
        let w = ts.min(width - x0);
        if pad.bottom != ts - h || pad.right != ts - w {
            return Err(Error::Shape(format!(
                "tile ({}, {}) padding does not match {height}x{width}",
                origin.row, origin.col
            )));
        }
        for y in 0..h {
            let src = &tile.row(y)[..w as usize * ch];
            let dst = ((y0 + y) as usize * width as usize + x0 as usize) * ch;
            out.data[dst..dst + src.len()].copy_from_slice(src);
        }
    }
    Ok(out)
}
