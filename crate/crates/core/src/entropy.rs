//! Gaussian-conditional entropy model and a byte-wise rANS coder.
//!
//! Each latent element is modelled as a Gaussian convolved with a unit-width
//! uniform and evaluated on integers. Means and scales are snapped to a 1/64
//! grid before any table is built, so an encoder and a decoder reading the same
//! persisted floats always derive identical 16-bit tables. Symbols outside a
//! table's alphabet are coded through an escape slot and stored raw in a
//! separate bypass section.
//!
//! `.fenc` layout (little-endian):
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 4  | magic `FENC` |
//! | 4  | 2  | version (1) |
//! | 6  | 1  | size class code |
//! | 7  | 1  | flags, 0 |
//! | 8  | 8  | encoder seed |
//! | 16 | 12 | tile origin: image id, row, col |
//! | 28 | 12 | ŷ dims C, H, W |
//! | 40 | 12 | ẑ dims C, H, W |
//! | 52 | 4  | alphabet minimum (i32) |
//! | 56 | 4  | alphabet maximum (i32) |
//! | 60 | 4  | ẑ prior scale in 1/64 units |
//! | 64 | 4  | rANS payload length |
//! | 68 | 4  | escape count |
//! | 72 | 4  | bypass length |
//! | 76 | 4  | CRC32 of bytes 0..76 |
//! | 80 | …  | rANS payload, then bypass section |
//! | end | 4 | CRC32 of payload and bypass |

use std::collections::HashMap;
use std::sync::Arc;

use crate::artifacts::{LatentArtifacts, Reader};
use crate::codec::{SizeClass, SCALE_FLOOR};
use crate::error::{Error, Result};
use crate::tensor::IntTensor;
use crate::tiler::TileOrigin;

pub const PRECISION_BITS: u32 = 16;
pub const PROB_TOTAL: u32 = 1 << PRECISION_BITS;
/// Largest magnitude a table alphabet may reach.
pub const ALPHABET_LIMIT: i32 = 255;
/// Alphabet half-width in standard deviations.
pub const TAIL_SIGMAS: f64 = 8.0;
/// Grid on which μ and σ are snapped before table construction.
pub const PARAM_STEPS_PER_UNIT: f64 = 64.0;
pub const DEFAULT_Z_SCALE: f32 = 2.0;

pub const FENC_MAGIC: [u8; 4] = *b"FENC";
pub const FENC_VERSION: u16 = 1;
pub const FENC_HEADER_LEN: usize = 80;

const RANS_L: u32 = 1 << 23;
const BYPASS_BITS: u32 = 9;
const BYPASS_LONG: u32 = 1 << (BYPASS_BITS - 1);

/// Standard normal CDF, computed from whichever tail keeps precision.
fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// P(symbol) under N(μ, σ²) convolved with U(−½, ½).
pub fn gaussian_likelihood(symbol: i32, mu: f64, sigma: f64) -> Result<f64> {
    if !sigma.is_finite() || sigma < f64::from(SCALE_FLOOR) - 1e-7 {
        return Err(Error::invalid("sigma", format!("{sigma} below floor {SCALE_FLOOR}")));
    }
    if !mu.is_finite() {
        return Err(Error::invalid("mu", "must be finite"));
    }
    Ok(likelihood_unchecked(symbol, mu, sigma))
}

fn likelihood_unchecked(symbol: i32, mu: f64, sigma: f64) -> f64 {
    let d = f64::from(symbol) - mu;
    let hi = (d + 0.5) / sigma;
    let lo = (d - 0.5) / sigma;
    let p = if d > 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// μ and σ on the 1/64 grid; the identity of a coding distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelParams {
    mu_steps: i32,
    sigma_steps: i32,
}

impl ModelParams {
    pub fn snap(mu: f32, sigma: f32) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::invalid("mu/sigma", format!("non-finite ({mu}, {sigma})")));
        }
        if sigma < SCALE_FLOOR {
            return Err(Error::invalid("sigma", format!("{sigma} below floor {SCALE_FLOOR}")));
        }
        let step = |v: f32| (f64::from(v) * PARAM_STEPS_PER_UNIT).round_ties_even();
        let mu_steps = step(mu).clamp(-1e9, 1e9) as i32;
        let sigma_steps = step(sigma).clamp(0.0, 1e9) as i32;
        Ok(ModelParams { mu_steps, sigma_steps })
    }

    pub fn mu(self) -> f64 {
        f64::from(self.mu_steps) / PARAM_STEPS_PER_UNIT
    }

    pub fn sigma(self) -> f64 {
        (f64::from(self.sigma_steps) / PARAM_STEPS_PER_UNIT).max(f64::from(SCALE_FLOOR))
    }
}

/// Quantized cumulative distribution over `[min_sym, max_sym]` plus an escape slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdfTable {
    pub min_sym: i32,
    /// `symbols + 2` entries: one per symbol, one for the escape slot, and the total.
    pub cumulative: Vec<u32>,
}

impl CdfTable {
    /// Number of in-alphabet symbols.
    pub fn symbols(&self) -> usize {
        self.cumulative.len() - 2
    }

    pub fn max_sym(&self) -> i32 {
        self.min_sym + self.symbols() as i32 - 1
    }

    pub fn escape_slot(&self) -> usize {
        self.symbols()
    }

    pub fn slot_of(&self, symbol: i32) -> usize {
        if symbol < self.min_sym || symbol > self.max_sym() {
            self.escape_slot()
        } else {
            (symbol - self.min_sym) as usize
        }
    }

    pub fn start(&self, slot: usize) -> u32 {
        self.cumulative[slot]
    }

    pub fn freq(&self, slot: usize) -> u32 {
        self.cumulative[slot + 1] - self.cumulative[slot]
    }

    /// Slot whose interval contains `cum`.
    pub fn find(&self, cum: u32) -> usize {
        self.cumulative.partition_point(|&c| c <= cum) - 1
    }

    /// Code length in bits of `symbol` under this table, excluding bypass bits.
    pub fn cost_bits(&self, symbol: i32) -> f64 {
        f64::from(PRECISION_BITS) - f64::from(self.freq(self.slot_of(symbol))).log2()
    }

    fn check(&self) -> bool {
        self.cumulative.first() == Some(&0)
            && self.cumulative.last() == Some(&PROB_TOTAL)
            && self.cumulative.windows(2).all(|w| w[0] < w[1])
    }
}

/// Table for N(μ, σ²) after snapping both parameters to the 1/64 grid.
pub fn build_cdf(mu: f32, sigma: f32) -> Result<CdfTable> {
    Ok(build_cdf_for(ModelParams::snap(mu, sigma)?))
}

pub fn build_cdf_for(params: ModelParams) -> CdfTable {
    let (mu, sigma) = (params.mu(), params.sigma());
    let lo = ((mu - TAIL_SIGMAS * sigma).floor() as i64).clamp(-ALPHABET_LIMIT as i64, ALPHABET_LIMIT as i64) as i32;
    let hi = ((mu + TAIL_SIGMAS * sigma).ceil() as i64).clamp(-ALPHABET_LIMIT as i64, ALPHABET_LIMIT as i64) as i32;
    let probs: Vec<f64> = (lo..=hi).map(|s| likelihood_unchecked(s, mu, sigma)).collect();
    let escape = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let slots = probs.len() + 1;
    let spare = f64::from(PROB_TOTAL - slots as u32);
    let mut freqs: Vec<u32> = probs
        .iter()
        .chain(std::iter::once(&escape))
        .map(|&p| 1 + (p * spare).floor() as u32)
        .collect();
    let assigned: u32 = freqs.iter().sum();
    let mode = probs
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
    freqs[mode] += PROB_TOTAL - assigned;
    let mut cumulative = Vec::with_capacity(slots + 1);
    cumulative.push(0);
    let mut acc = 0;
    for f in freqs {
        acc += f;
        cumulative.push(acc);
    }
    let table = CdfTable { min_sym: lo, cumulative };
    debug_assert!(table.check());
    table
}

/// Memoizes tables by snapped parameters.
#[derive(Debug, Default)]
pub struct TableCache {
    tables: HashMap<ModelParams, Arc<CdfTable>>,
}

impl TableCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, mu: f32, sigma: f32) -> Result<Arc<CdfTable>> {
        let key = ModelParams::snap(mu, sigma)?;
        Ok(self
            .tables
            .entry(key)
            .or_insert_with(|| Arc::new(build_cdf_for(key)))
            .clone())
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }
}

/// LSB-first bit packer for escaped values.
#[derive(Debug, Default)]
struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    bits: u32,
}

impl BitWriter {
    fn put(&mut self, value: u32, bits: u32) {
        self.acc |= u64::from(value) << self.bits;
        self.bits += bits;
        while self.bits >= 8 {
            self.bytes.push(self.acc as u8);
            self.acc >>= 8;
            self.bits -= 8;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.bits > 0 {
            self.bytes.push(self.acc as u8);
        }
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u64,
    bits: u32,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        BitReader { bytes, pos: 0, acc: 0, bits: 0 }
    }

    fn get(&mut self, bits: u32) -> Result<u32> {
        while self.bits < bits {
            let b = *self
                .bytes
                .get(self.pos)
                .ok_or_else(|| Error::CorruptStream("bypass section exhausted".into()))?;
            self.acc |= u64::from(b) << self.bits;
            self.pos += 1;
            self.bits += 8;
        }
        let v = (self.acc & ((1u64 << bits) - 1)) as u32;
        self.acc >>= bits;
        self.bits -= bits;
        Ok(v)
    }
}

fn put_escape(w: &mut BitWriter, v: i32) {
    if (-ALPHABET_LIMIT..=ALPHABET_LIMIT).contains(&v) {
        w.put((v as u32) & ((1 << BYPASS_BITS) - 1), BYPASS_BITS);
    } else {
        w.put(BYPASS_LONG, BYPASS_BITS);
        w.put(v as u32, 32);
    }
}

fn get_escape(r: &mut BitReader<'_>) -> Result<i32> {
    let raw = r.get(BYPASS_BITS)?;
    if raw == BYPASS_LONG {
        return Ok(r.get(32)? as i32);
    }
    // sign-extend 9 bits
    Ok(((raw << (32 - BYPASS_BITS)) as i32) >> (32 - BYPASS_BITS))
}

/// rANS bytes plus the bypass section for escaped symbols.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RansPayload {
    pub bytes: Vec<u8>,
    pub bypass: Vec<u8>,
    pub escapes: u32,
}

impl RansPayload {
    pub fn payload_bits(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }
}

/// Encodes `symbols[i]` with `tables[i]`. An empty input yields an empty payload.
pub fn rans_encode<T: AsRef<CdfTable>>(symbols: &[i32], tables: &[T]) -> Result<RansPayload> {
    if symbols.len() != tables.len() {
        return Err(Error::Shape(format!(
            "{} symbols but {} tables",
            symbols.len(),
            tables.len()
        )));
    }
    if symbols.is_empty() {
        return Ok(RansPayload::default());
    }
    let mut bypass = BitWriter::default();
    let mut escapes = 0;
    let slots: Vec<usize> = symbols
        .iter()
        .zip(tables)
        .map(|(&s, t)| {
            let t = t.as_ref();
            let slot = t.slot_of(s);
            if slot == t.escape_slot() {
                put_escape(&mut bypass, s);
                escapes += 1;
            }
            slot
        })
        .collect();

    let mut out = Vec::with_capacity(symbols.len() / 2 + 8);
    let mut x = RANS_L;
    for (&slot, t) in slots.iter().zip(tables).rev() {
        let t = t.as_ref();
        let (start, freq) = (t.start(slot), t.freq(slot));
        let x_max = ((RANS_L >> PRECISION_BITS) << 8) * freq;
        while x >= x_max {
            out.push(x as u8);
            x >>= 8;
        }
        x = ((x / freq) << PRECISION_BITS) + (x % freq) + start;
    }
    out.extend_from_slice(&x.to_le_bytes());
    out.reverse();
    Ok(RansPayload {
        bytes: out,
        bypass: bypass.finish(),
        escapes,
    })
}

/// Exact inverse of [`rans_encode`] given the same tables.
pub fn rans_decode<T: AsRef<CdfTable>>(payload: &RansPayload, tables: &[T], n: usize) -> Result<Vec<i32>> {
    if tables.len() != n {
        return Err(Error::Shape(format!("{n} symbols requested but {} tables", tables.len())));
    }
    if n == 0 {
        if !payload.bytes.is_empty() {
            return Err(Error::CorruptStream("non-empty payload for zero symbols".into()));
        }
        return Ok(Vec::new());
    }
    let data = &payload.bytes;
    if data.len() < 4 {
        return Err(Error::CorruptStream("payload shorter than the rANS state".into()));
    }
    let mut x = u32::from_be_bytes(data[..4].try_into().unwrap());
    let mut pos = 4;
    let mask = PROB_TOTAL - 1;
    let mut bypass = BitReader::new(&payload.bypass);
    let mut escapes = 0;
    let mut out = Vec::with_capacity(n);
    for t in tables {
        let t = t.as_ref();
        let slot = t.find(x & mask);
        x = t.freq(slot) * (x >> PRECISION_BITS) + (x & mask) - t.start(slot);
        while x < RANS_L {
            let b = *data
                .get(pos)
                .ok_or_else(|| Error::CorruptStream("premature end of rANS payload".into()))?;
            x = (x << 8) | u32::from(b);
            pos += 1;
        }
        if slot == t.escape_slot() {
            escapes += 1;
            out.push(get_escape(&mut bypass)?);
        } else {
            out.push(t.min_sym + slot as i32);
        }
    }
    if x != RANS_L || pos != data.len() || escapes != payload.escapes {
        return Err(Error::CorruptStream("rANS stream did not terminate cleanly".into()));
    }
    Ok(out)
}

/// Parsed `.fenc` header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub size_class: SizeClass,
    pub seed: u64,
    pub tile: TileOrigin,
    pub y_dims: [usize; 3],
    pub z_dims: [usize; 3],
    pub min_sym: i32,
    pub max_sym: i32,
    pub z_scale_steps: u32,
}

impl StreamHeader {
    pub fn z_scale(&self) -> f32 {
        self.z_scale_steps as f32 / PARAM_STEPS_PER_UNIT as f32
    }

    pub fn symbol_count(&self) -> usize {
        self.y_dims.iter().product::<usize>() + self.z_dims.iter().product::<usize>()
    }
}

/// A complete coded tile: ẑ followed by ŷ in one rANS stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    pub header: StreamHeader,
    pub payload: RansPayload,
}

impl EncodedStream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(FENC_HEADER_LEN + self.payload.bytes.len() + self.payload.bypass.len() + 4);
        out.extend_from_slice(&FENC_MAGIC);
        out.extend_from_slice(&FENC_VERSION.to_le_bytes());
        out.push(h.size_class.code());
        out.push(0);
        out.extend_from_slice(&h.seed.to_le_bytes());
        for v in [h.tile.image_id, h.tile.row, h.tile.col] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for d in h.y_dims.iter().chain(&h.z_dims) {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        out.extend_from_slice(&h.min_sym.to_le_bytes());
        out.extend_from_slice(&h.max_sym.to_le_bytes());
        out.extend_from_slice(&h.z_scale_steps.to_le_bytes());
        out.extend_from_slice(&(self.payload.bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload.escapes.to_le_bytes());
        out.extend_from_slice(&(self.payload.bypass.len() as u32).to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        let body_start = out.len();
        out.extend_from_slice(&self.payload.bytes);
        out.extend_from_slice(&self.payload.bypass);
        let crc = crc32fast::hash(&out[body_start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic: [u8; 4] = r.array()?;
        if magic != FENC_MAGIC {
            return Err(Error::BadMagic { expected: FENC_MAGIC, found: magic });
        }
        let version = r.u16()?;
        if version != FENC_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let class = r.u8()?;
        let _flags = r.u8()?;
        let seed = r.u64()?;
        let tile = TileOrigin { image_id: r.u32()?, row: r.u32()?, col: r.u32()? };
        let y_dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let z_dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let min_sym = r.i32()?;
        let max_sym = r.i32()?;
        let z_scale_steps = r.u32()?;
        let payload_len = r.u32()? as usize;
        let escapes = r.u32()?;
        let bypass_len = r.u32()? as usize;
        debug_assert_eq!(r.position(), FENC_HEADER_LEN - 4);
        let stored = r.u32()?;
        let computed = crc32fast::hash(&bytes[..FENC_HEADER_LEN - 4]);
        if stored != computed {
            return Err(Error::Checksum { section: "fenc header", stored, computed });
        }
        let size_class = SizeClass::from_code(class)
            .ok_or_else(|| Error::CorruptStream(format!("unknown size class {class}")))?;
        let body = r.take(payload_len + bypass_len)?;
        let stored = r.u32()?;
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { section: "fenc payload", stored, computed });
        }
        if r.position() != bytes.len() {
            return Err(Error::CorruptStream("trailing bytes after stream".into()));
        }
        Ok(EncodedStream {
            header: StreamHeader { size_class, seed, tile, y_dims, z_dims, min_sym, max_sym, z_scale_steps },
            payload: RansPayload {
                bytes: body[..payload_len].to_vec(),
                bypass: body[payload_len..].to_vec(),
                escapes,
            },
        })
    }
}

/// Entropy-coding settings shared by encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoderConfig {
    /// Scale of the fixed zero-mean prior used for ẑ.
    pub z_scale: f32,
}

impl Default for CoderConfig {
    fn default() -> Self {
        CoderConfig { z_scale: DEFAULT_Z_SCALE }
    }
}

/// Per-symbol tables in stream order: ẑ under the fixed prior, then ŷ.
fn stream_tables(
    z_len: usize,
    z_scale: f32,
    mu: &[f32],
    sigma: &[f32],
    cache: &mut TableCache,
) -> Result<Vec<Arc<CdfTable>>> {
    let z_table = cache.get(0.0, z_scale)?;
    let mut tables = Vec::with_capacity(z_len + mu.len());
    tables.extend(std::iter::repeat_n(z_table, z_len));
    for (&m, &s) in mu.iter().zip(sigma) {
        tables.push(cache.get(m, s)?);
    }
    Ok(tables)
}

fn snap_scale(z_scale: f32) -> Result<u32> {
    let p = ModelParams::snap(0.0, z_scale)?;
    Ok(p.sigma_steps as u32)
}

pub fn encode_latents(a: &LatentArtifacts, cfg: &CoderConfig) -> Result<EncodedStream> {
    encode_latents_cached(a, cfg, &mut TableCache::new())
}

pub fn encode_latents_cached(a: &LatentArtifacts, cfg: &CoderConfig, cache: &mut TableCache) -> Result<EncodedStream> {
    a.validate()?;
    let z_scale_steps = snap_scale(cfg.z_scale)?;
    let tables = stream_tables(a.z_hat.len(), cfg.z_scale, &a.mu.data, &a.sigma.data, cache)?;
    let symbols: Vec<i32> = a.z_hat.data.iter().chain(&a.y_hat.data).copied().collect();
    let payload = rans_encode(&symbols, &tables)?;
    Ok(EncodedStream {
        header: StreamHeader {
            size_class: a.size_class,
            seed: a.seed,
            tile: a.tile,
            y_dims: a.y_hat.dims,
            z_dims: a.z_hat.dims,
            min_sym: -ALPHABET_LIMIT,
            max_sym: ALPHABET_LIMIT,
            z_scale_steps,
        },
        payload,
    })
}

/// Recovers (ŷ, ẑ) using the entropy parameters persisted alongside them.
pub fn decode_latents(stream: &EncodedStream, mu: &[f32], sigma: &[f32]) -> Result<(IntTensor, IntTensor)> {
    let h = &stream.header;
    let ny: usize = h.y_dims.iter().product();
    let nz: usize = h.z_dims.iter().product();
    if mu.len() != ny || sigma.len() != ny {
        return Err(Error::Shape(format!(
            "stream declares {ny} latent elements, parameters have {} / {}",
            mu.len(),
            sigma.len()
        )));
    }
    let z_scale = h.z_scale();
    let tables = stream_tables(nz, z_scale, mu, sigma, &mut TableCache::new())?;
    let symbols = rans_decode(&stream.payload, &tables, nz + ny)?;
    let z_hat = IntTensor::from_vec(h.z_dims, symbols[..nz].to_vec())?;
    let y_hat = IntTensor::from_vec(h.y_dims, symbols[nz..].to_vec())?;
    Ok((y_hat, z_hat))
}

/// Cross-entropy of ŷ and ẑ under the coding model, in bits.
pub fn estimate_bits(a: &LatentArtifacts, cfg: &CoderConfig) -> Result<f64> {
    a.validate()?;
    let z = ModelParams::snap(0.0, cfg.z_scale)?;
    let mut bits = 0.0;
    for &s in &a.z_hat.data {
        bits -= likelihood_unchecked(s, z.mu(), z.sigma()).log2();
    }
    for ((&s, &m), &sd) in a.y_hat.data.iter().zip(&a.mu.data).zip(&a.sigma.data) {
        let p = ModelParams::snap(m, sd)?;
        bits -= likelihood_unchecked(s, p.mu(), p.sigma()).log2();
    }
    Ok(bits)
}

/// Bits per pixel for a stream of `stream_bytes` covering `pixel_count` pixels.
pub fn bpp(stream_bytes: u64, pixel_count: u64) -> Result<f64> {
    if pixel_count == 0 {
        return Err(Error::invalid("pixel_count", "must be > 0"));
    }
    Ok(8.0 * stream_bytes as f64 / pixel_count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn likelihood_oracle_values() {
        // mpmath: Φ(0.5) − Φ(−0.5)
        let p = gaussian_likelihood(0, 0.0, 1.0).unwrap();
        assert!((p - 0.382_924_922_548_026).abs() < 1e-12);
        let p = gaussian_likelihood(3, 0.0, 1.0).unwrap();
        assert!((p - 0.005_977_036_246_740_61).abs() < 1e-13);
        let p = gaussian_likelihood(1, 0.3, 0.7).unwrap();
        assert!((p - 0.344_310_348_351_159_5).abs() < 1e-12);
        assert!(gaussian_likelihood(0, 0.0, 0.05).is_err());
    }

    #[test]
    fn likelihood_symmetry_and_translation() {
        for k in -20..=20 {
            let a = gaussian_likelihood(k, 0.0, 1.7).unwrap();
            let b = gaussian_likelihood(-k, 0.0, 1.7).unwrap();
            assert!((a - b).abs() <= 1e-15 * a.max(1e-300).max(b), "{k}");
            let c = gaussian_likelihood(k + 5, 5.0, 1.7).unwrap();
            assert_eq!(a, c);
        }
    }

    #[test]
    fn likelihood_far_tail_positive() {
        let p = gaussian_likelihood(255, 0.0, 0.11).unwrap();
        assert!(p > 0.0 && p < 1e-300);
    }

    #[test]
    fn narrow_table_concentrates_mass() {
        let t = build_cdf(0.0, 0.11).unwrap();
        assert!(t.check());
        assert_eq!((t.min_sym, t.max_sym()), (-1, 1));
        assert_eq!(t.freq(t.slot_of(0)), PROB_TOTAL - 3);
        for slot in [0, 2, t.escape_slot()] {
            assert_eq!(t.freq(slot), 1);
        }
    }

    #[test]
    fn alphabet_covers_eight_sigma_and_clamps() {
        let t = build_cdf(2.0, 1.0).unwrap();
        assert_eq!((t.min_sym, t.max_sym()), (-6, 10));
        let t = build_cdf(0.0, 100.0).unwrap();
        assert_eq!((t.min_sym, t.max_sym()), (-255, 255));
        let t = build_cdf(1000.0, 1.0).unwrap();
        assert_eq!(t.symbols(), 1);
        assert_eq!(t.slot_of(1000), t.escape_slot());
    }

    #[test]
    fn out_of_alphabet_maps_to_escape() {
        let t = build_cdf(0.0, 1.0).unwrap();
        assert_eq!(t.slot_of(9), t.escape_slot());
        assert_eq!(t.slot_of(-9), t.escape_slot());
        assert_eq!(t.slot_of(8), t.symbols() - 1);
    }

    #[test]
    fn snapping_is_on_a_64th_grid() {
        let a = ModelParams::snap(0.3, 1.0).unwrap();
        assert_eq!(a.mu(), 19.0 / 64.0);
        assert_eq!(ModelParams::snap(0.11, 0.11).unwrap().sigma(), f64::from(SCALE_FLOOR));
        assert_eq!(build_cdf(0.3, 1.0).unwrap(), build_cdf(0.2999, 1.0001).unwrap());
    }

    #[test]
    fn empty_sequence() {
        let tables: Vec<Arc<CdfTable>> = Vec::new();
        let p = rans_encode(&[], &tables).unwrap();
        assert!(p.bytes.is_empty());
        assert_eq!(rans_decode(&p, &tables, 0).unwrap(), Vec::<i32>::new());
    }

    #[test]
    fn single_symbol_round_trip() {
        let t = Arc::new(build_cdf(0.0, 1.0).unwrap());
        for s in [-3, 0, 2, 300, -70000] {
            let p = rans_encode(&[s], std::slice::from_ref(&t)).unwrap();
            assert_eq!(rans_decode(&p, std::slice::from_ref(&t), 1).unwrap(), vec![s]);
        }
    }

    #[test]
    fn escapes_use_bypass() {
        let t = Arc::new(build_cdf(0.0, 0.5).unwrap());
        let syms = vec![0, 40, -255, 255, -256, 1 << 20, i32::MIN, i32::MAX, 1];
        let tables = vec![t; syms.len()];
        let p = rans_encode(&syms, &tables).unwrap();
        assert_eq!(p.escapes, 7);
        // 40, -255, 255 short (9 bits); the rest long (9 + 32 bits)
        assert_eq!(p.bypass.len(), (3 * 9 + 4 * 41usize).div_ceil(8));
        assert_eq!(rans_decode(&p, &tables, syms.len()).unwrap(), syms);
    }

    #[test]
    fn truncated_payload_detected() {
        let t = Arc::new(build_cdf(0.0, 3.0).unwrap());
        let syms: Vec<i32> = (0..200).map(|i| (i % 7) - 3).collect();
        let tables = vec![t; syms.len()];
        let mut p = rans_encode(&syms, &tables).unwrap();
        p.bytes.pop();
        assert!(rans_decode(&p, &tables, syms.len()).is_err());
    }

    #[test]
    fn bpp_definition() {
        assert_eq!(bpp(1, 8).unwrap(), 1.0);
        assert_eq!(bpp(10, 8).unwrap(), 10.0);
        assert!(bpp(1, 0).is_err());
    }
}
