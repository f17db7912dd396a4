//! Seeded stand-in for a trained hyperprior encoder.
//!
//! The analysis transform is four stride-2 3×3 convolutions with rectifiers
//! in between (total downsampling 16). The hyper-analysis adds two more
//! stride-2 convolutions (further factor 4) and the hyper-synthesis mirrors
//! it with nearest-neighbour upsampling, producing a mean and a scale for
//! every latent element. Weights are drawn from a PCG generator and scaled by
//! fan-in, so nothing here is trained; it exists to give the pipeline a real
//! width- and resolution-dependent compute load and realistic latents.
//!
//! All arithmetic is plain f32 multiply-add in a fixed loop order, and the
//! only transcendental functions come from `libm`, so outputs are
//! bit-identical across runs, threads and platforms.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::artifacts::LatentArtifacts;
use crate::error::{Error, Result};
use crate::tensor::{IntTensor, RealTensor};
use crate::tiler::{ImageBuffer, TileBatch, TileOrigin};

/// Lower bound applied to every predicted scale.
pub const SCALE_FLOOR: f32 = 0.11;
/// Spatial reduction of the analysis transform.
pub const ANALYSIS_DOWNSAMPLE: usize = 16;
/// Additional spatial reduction of the hyper-analysis.
pub const HYPER_DOWNSAMPLE: usize = 4;
/// Tiles are zero-padded to a multiple of this before the analysis transform.
pub const INPUT_ALIGN: usize = ANALYSIS_DOWNSAMPLE * HYPER_DOWNSAMPLE;
const KERNEL: usize = 3;

/// Model capacity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeClass {
    S,
    M,
    L,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::S, SizeClass::M, SizeClass::L];

    /// Encoder-side parameter budget the class is sized against.
    pub fn target_params(self) -> usize {
        match self {
            SizeClass::S => 350_000,
            SizeClass::M => 690_000,
            SizeClass::L => 1_190_000,
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeClass::S => "S",
            SizeClass::M => "M",
            SizeClass::L => "L",
        })
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" => Ok(SizeClass::S),
            "M" => Ok(SizeClass::M),
            "L" => Ok(SizeClass::L),
            other => Err(Error::invalid("size_class", format!("expected S, M or L, got {other:?}"))),
        }
    }
}

/// Architecture of the toy encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyEncoderSpec {
    pub size_class: SizeClass,
    /// Hidden widths: three analysis stages, then the hyper transforms.
    pub widths: [usize; 4],
    pub latent_channels: usize,
    pub hyper_channels: usize,
    pub in_channels: usize,
    pub seed: u64,
}

impl ToyEncoderSpec {
    pub fn for_class(size_class: SizeClass, seed: u64) -> Self {
        let (widths, latent_channels, hyper_channels) = match size_class {
            SizeClass::S => ([64, 96, 128, 64], 48, 32),
            SizeClass::M => ([96, 144, 208, 96], 48, 32),
            SizeClass::L => ([128, 208, 304, 128], 48, 48),
        };
        ToyEncoderSpec {
            size_class,
            widths,
            latent_channels,
            hyper_channels,
            in_channels: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.contains(&0)
            || self.latent_channels == 0
            || self.hyper_channels == 0
            || self.in_channels == 0
        {
            return Err(Error::invalid("widths", "all channel counts must be > 0"));
        }
        Ok(())
    }

    /// (in, out) channels of every convolution in execution order.
    fn layer_shapes(&self) -> [(usize, usize); 8] {
        let [a, b, c, h] = self.widths;
        let (cy, cz) = (self.latent_channels, self.hyper_channels);
        [
            (self.in_channels, a),
            (a, b),
            (b, c),
            (c, cy),
            (cy, h),
            (h, cz),
            (cz, h),
            (h, 2 * cy),
        ]
    }

    /// Encoder-side parameter count (analysis plus both hyper transforms).
    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(ci, co)| co * (KERNEL * KERNEL * ci + 1))
            .sum()
    }

    /// Multiply-accumulates per tile of the given (aligned) edge length.
    pub fn macs_per_tile(&self, tile: usize) -> u64 {
        let padded = tile.div_ceil(INPUT_ALIGN) * INPUT_ALIGN;
        let shapes = self.layer_shapes();
        let out_edge = [2, 4, 8, 16, 32, 64, 32, 16].map(|d| padded / d);
        shapes
            .iter()
            .zip(out_edge)
            .map(|(&(ci, co), e)| (e * e * co * ci * KERNEL * KERNEL) as u64)
            .sum()
    }
}

/// One 3×3 convolution; weights laid out `[ky][kx][cin][cout]`.
#[derive(Debug, Clone, PartialEq)]
struct Conv {
    cin: usize,
    cout: usize,
    stride: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv {
    fn init(rng: &mut Pcg64Mcg, cin: usize, cout: usize, stride: usize) -> Self {
        let fan_in = (KERNEL * KERNEL * cin) as f32;
        // uniform(-a, a) has variance a²/3; target He variance 2 / fan_in
        let a = (6.0 / fan_in).sqrt();
        let weights = (0..KERNEL * KERNEL * cin * cout)
            .map(|_| rng.gen_range(-a..a))
            .collect();
        let bias = (0..cout).map(|_| rng.gen_range(-0.05..0.05)).collect();
        Conv {
            cin,
            cout,
            stride,
            weights,
            bias,
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Zero-padded 3×3 convolution over an HWC feature map.
    fn forward(&self, input: &Hwc, relu: bool) -> Hwc {
        debug_assert_eq!(input.c, self.cin);
        let oh = input.h.div_ceil(self.stride);
        let ow = input.w.div_ceil(self.stride);
        let mut out = Hwc::zeros(oh, ow, self.cout);
        let co_n = self.cout;
        for oy in 0..oh {
            for ox in 0..ow {
                let acc = &mut out.data[(oy * ow + ox) * co_n..(oy * ow + ox + 1) * co_n];
                acc.copy_from_slice(&self.bias);
                for ky in 0..KERNEL {
                    let iy = (oy * self.stride + ky) as isize - 1;
                    if iy < 0 || iy >= input.h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * self.stride + kx) as isize - 1;
                        if ix < 0 || ix >= input.w as isize {
                            continue;
                        }
                        let px = input.pixel(iy as usize, ix as usize);
                        let tap = &self.weights[(ky * KERNEL + kx) * self.cin * co_n..][..self.cin * co_n];
                        for (ci, &v) in px.iter().enumerate() {
                            if v == 0.0 {
                                continue;
                            }
                            let row = &tap[ci * co_n..(ci + 1) * co_n];
                            for (a, &w) in acc.iter_mut().zip(row) {
                                *a += v * w;
                            }
                        }
                    }
                }
                if relu {
                    for a in acc.iter_mut() {
                        *a = a.max(0.0);
                    }
                }
            }
        }
        out
    }
}

/// Channel-last feature map used internally.
#[derive(Debug, Clone)]
struct Hwc {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f32>,
}

impl Hwc {
    fn zeros(h: usize, w: usize, c: usize) -> Self {
        Hwc {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    fn pixel(&self, y: usize, x: usize) -> &[f32] {
        &self.data[(y * self.w + x) * self.c..(y * self.w + x + 1) * self.c]
    }

    fn upsample2(&self) -> Hwc {
        let mut out = Hwc::zeros(self.h * 2, self.w * 2, self.c);
        for y in 0..out.h {
            for x in 0..out.w {
                let src = self.pixel(y / 2, x / 2);
                let dst = (y * out.w + x) * self.c;
                out.data[dst..dst + self.c].copy_from_slice(src);
            }
        }
        out
    }

    fn to_chw(&self) -> RealTensor {
        let mut data = vec![0.0; self.data.len()];
        let plane = self.h * self.w;
        for (i, px) in self.data.chunks_exact(self.c).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * plane + i] = v;
            }
        }
        RealTensor {
            dims: [self.c, self.h, self.w],
            data,
        }
    }

    fn from_chw<T: Copy>(t: &crate::tensor::Tensor<T>, conv: impl Fn(T) -> f32) -> Hwc {
        let [c, h, w] = t.dims;
        let plane = h * w;
        let mut out = Hwc::zeros(h, w, c);
        for ch in 0..c {
            for i in 0..plane {
                out.data[i * c + ch] = conv(t.data[ch * plane + i]);
            }
        }
        out
    }
}

/// Deterministically generated parameters for every convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    spec: ToyEncoderSpec,
    layers: Vec<Conv>,
}

impl EncoderWeights {
    pub fn spec(&self) -> &ToyEncoderSpec {
        &self.spec
    }

    /// Parameters actually allocated; equals [`ToyEncoderSpec::param_count`].
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Conv::param_count).sum()
    }

    /// Raw view of all parameters in layer order, for hashing and comparison.
    pub fn flat(&self) -> impl Iterator<Item = f32> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }
}

pub fn init_weights(spec: &ToyEncoderSpec) -> Result<EncoderWeights> {
    spec.validate()?;
    let mut rng = Pcg64Mcg::seed_from_u64(spec.seed);
    let strides = [2, 2, 2, 2, 2, 2, 1, 1];
    let layers = spec
        .layer_shapes()
        .iter()
        .zip(strides)
        .map(|(&(ci, co), s)| Conv::init(&mut rng, ci, co, s))
        .collect();
    Ok(EncoderWeights {
        spec: spec.clone(),
        layers,
    })
}

/// Maps samples to roughly zero-mean unit-range floats and pads the tile to
/// a multiple of [`INPUT_ALIGN`].
fn tile_input(tile: &ImageBuffer, in_channels: usize) -> Result<Hwc> {
    if tile.channels as usize != in_channels {
        return Err(Error::Shape(format!(
            "encoder expects {in_channels} channels, tile has {}",
            tile.channels
        )));
    }
    let h = (tile.height as usize).div_ceil(INPUT_ALIGN) * INPUT_ALIGN;
    let w = (tile.width as usize).div_ceil(INPUT_ALIGN) * INPUT_ALIGN;
    let scale = 2.0 / f32::from(tile.max_value());
    let mut out = Hwc::zeros(h, w, in_channels);
    let tw = tile.width as usize;
    for y in 0..tile.height as usize {
        for x in 0..tw {
            let src = &tile.data[(y * tw + x) * in_channels..(y * tw + x + 1) * in_channels];
            let dst = (y * w + x) * in_channels;
            for (d, &s) in out.data[dst..dst + in_channels].iter_mut().zip(src) {
                *d = f32::from(s) * scale - 1.0;
            }
        }
    }
    Ok(out)
}

/// Analysis transform of a single tile: C_y × (H/16) × (W/16) after alignment.
pub fn analysis_tile(tile: &ImageBuffer, w: &EncoderWeights) -> Result<RealTensor> {
    let mut x = tile_input(tile, w.spec.in_channels)?;
    for (i, layer) in w.layers[..4].iter().enumerate() {
        x = layer.forward(&x, i < 3);
    }
    Ok(x.to_chw())
}

/// Analysis transform over every tile of a batch, in order.
pub fn analysis_transform(tiles: &TileBatch, w: &EncoderWeights) -> Result<Vec<RealTensor>> {
    tiles.tiles.iter().map(|t| analysis_tile(t, w)).collect()
}

fn check_latent(y: &RealTensor, channels: usize, what: &str) -> Result<()> {
    let [c, h, wd] = y.dims;
    if c != channels || h % HYPER_DOWNSAMPLE != 0 || wd % HYPER_DOWNSAMPLE != 0 {
        return Err(Error::Shape(format!(
            "{what} {:?} incompatible with {channels} channels and hyper factor {HYPER_DOWNSAMPLE}",
            y.dims
        )));
    }
    Ok(())
}

/// Hyper-analysis: C_z × (h/4) × (w/4).
pub fn hyper_analysis(y: &RealTensor, w: &EncoderWeights) -> Result<RealTensor> {
    check_latent(y, w.spec.latent_channels, "latent")?;
    let x = Hwc::from_chw(y, |v| v);
    let x = w.layers[4].forward(&x, true);
    Ok(w.layers[5].forward(&x, false).to_chw())
}

/// Hyper-synthesis: per-element mean and scale for the latent.
pub fn hyper_synthesis(z_hat: &IntTensor, w: &EncoderWeights) -> Result<(RealTensor, RealTensor)> {
    if z_hat.channels() != w.spec.hyper_channels {
        return Err(Error::Shape(format!(
            "hyper-latent has {} channels, expected {}",
            z_hat.channels(),
            w.spec.hyper_channels
        )));
    }
    let x = Hwc::from_chw(z_hat, |v| v as f32);
    let x = w.layers[6].forward(&x.upsample2(), true);
    let out = w.layers[7].forward(&x.upsample2(), false).to_chw();
    let cy = w.spec.latent_channels;
    let plane = out.height() * out.width();
    let dims = [cy, out.height(), out.width()];
    let mu = RealTensor::from_vec(dims, out.data[..cy * plane].to_vec())?;
    let sigma = out.data[cy * plane..]
        .iter()
        .map(|&v| softplus(v).max(SCALE_FLOOR))
        .collect();
    Ok((mu, RealTensor::from_vec(dims, sigma)?))
}

fn softplus(v: f32) -> f32 {
    if v > 20.0 {
        v
    } else {
        libm::log1pf(libm::expf(v))
    }
}

/// Round half to even.
pub fn quantize(values: &RealTensor) -> Result<IntTensor> {
    let data = values
        .data
        .iter()
        .map(|&v| {
            if v.is_finite() {
                Ok(v.round_ties_even() as i32)
            } else {
                Err(Error::invalid("values", format!("non-finite element {v}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    IntTensor::from_vec(values.dims, data)
}

/// Full encoder path for one tile.
pub fn encode_tile(tile: &ImageBuffer, origin: TileOrigin, w: &EncoderWeights) -> Result<LatentArtifacts> {
    let y = analysis_tile(tile, w)?;
    let y_hat = quantize(&y)?;
    let z = hyper_analysis(&y, w)?;
    let z_hat = quantize(&z)?;
    let (mu, sigma) = hyper_synthesis(&z_hat, w)?;
    Ok(LatentArtifacts {
        y_hat,
        z_hat,
        mu,
        sigma,
        tile: origin,
        seed: w.spec.seed,
        size_class: w.spec.size_class,
    })
}

/// Encodes every tile in `batch`, preserving order.
pub fn encode_batch(batch: &TileBatch, w: &EncoderWeights) -> Result<Vec<LatentArtifacts>> {
    batch
        .tiles
        .iter()
        .zip(&batch.origins)
        .map(|(t, &o)| encode_tile(t, o, w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::synthetic_image;
    use crate::tiler::partition;

    fn small_spec(seed: u64) -> ToyEncoderSpec {
        ToyEncoderSpec {
            size_class: SizeClass::S,
            widths: [8, 8, 8, 8],
            latent_channels: 6,
            hyper_channels: 4,
            in_channels: 3,
            seed,
        }
    }

    #[test]
    fn param_count_matches_hand_oracle() {
        // C_out · (9·C_in + 1) per layer
        let s = small_spec(0);
        let hand = 8 * (27 + 1) + 8 * (72 + 1) + 8 * (72 + 1) + 6 * (72 + 1)
            + 8 * (54 + 1) + 4 * (72 + 1) + 8 * (36 + 1) + 12 * (72 + 1);
        assert_eq!(s.param_count(), hand);
        assert_eq!(init_weights(&s).unwrap().param_count(), hand);
    }

    #[test]
    fn class_param_targets_within_ten_percent() {
        for class in SizeClass::ALL {
            let spec = ToyEncoderSpec::for_class(class, 1);
            let n = spec.param_count() as f64;
            let t = class.target_params() as f64;
            assert!((n / t - 1.0).abs() <= 0.10, "{class}: {n} vs {t}");
        }
    }

    #[test]
    fn weights_are_seeded() {
        let a = init_weights(&small_spec(5)).unwrap();
        assert_eq!(a, init_weights(&small_spec(5)).unwrap());
        assert_ne!(a, init_weights(&small_spec(6)).unwrap());
    }

    #[test]
    fn latent_shapes() {
        let w = init_weights(&small_spec(1)).unwrap();
        let img = synthetic_image(128, 128, 0);
        let y = analysis_tile(&img, &w).unwrap();
        assert_eq!(y.dims, [6, 8, 8]);
        let z = hyper_analysis(&y, &w).unwrap();
        assert_eq!(z.dims, [4, 2, 2]);
        let (mu, sigma) = hyper_synthesis(&quantize(&z).unwrap(), &w).unwrap();
        assert_eq!(mu.dims, [6, 8, 8]);
        assert_eq!(sigma.dims, [6, 8, 8]);
        assert!(sigma.data.iter().all(|&s| s >= SCALE_FLOOR));
    }

    #[test]
    fn unaligned_tiles_are_padded() {
        let w = init_weights(&small_spec(1)).unwrap();
        let y = analysis_tile(&synthetic_image(100, 70, 0), &w).unwrap();
        assert_eq!(y.dims, [6, 8, 8]);
    }

    #[test]
    fn zero_tile_gives_deterministic_bias_response() {
        let w = init_weights(&small_spec(2)).unwrap();
        let mut img = ImageBuffer::zeros(64, 64, 3, 8);
        img.data.iter_mut().for_each(|v| *v = 128);
        let a = analysis_tile(&img, &w).unwrap();
        assert_eq!(a, analysis_tile(&img, &w).unwrap());
    }

    #[test]
    fn batch_is_order_preserving() {
        let w = init_weights(&small_spec(3)).unwrap();
        let mut batch = partition(&synthetic_image(64, 64, 1), 0, 64).unwrap();
        batch.extend(partition(&synthetic_image(64, 64, 2), 1, 64).unwrap()).unwrap();
        let ys = analysis_transform(&batch, &w).unwrap();
        assert_eq!(ys[0], analysis_tile(&batch.tiles[0], &w).unwrap());
        assert_eq!(ys[1], analysis_tile(&batch.tiles[1], &w).unwrap());
        assert_ne!(ys[0], ys[1]);
    }

    #[test]
    fn latent_scale_is_order_one() {
        let w = init_weights(&ToyEncoderSpec::for_class(SizeClass::S, 11)).unwrap();
        let y = analysis_tile(&synthetic_image(64, 64, 4), &w).unwrap();
        let n = y.data.len() as f32;
        let mean = y.data.iter().sum::<f32>() / n;
        let std = (y.data.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / n).sqrt();
        assert!((0.05..20.0).contains(&std), "{std}");
    }

    #[test]
    fn quantizer_rounds_half_to_even() {
        let t = RealTensor::from_vec([1, 1, 5], vec![0.4, -1.5, 2.5, 3.5, -0.5]).unwrap();
        assert_eq!(quantize(&t).unwrap().data, vec![0, -2, 2, 4, 0]);
        let bad = RealTensor::from_vec([1, 1, 1], vec![f32::NAN]).unwrap();
        assert!(quantize(&bad).is_err());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let w = init_weights(&small_spec(1)).unwrap();
        assert!(analysis_tile(&ImageBuffer::zeros(64, 64, 1, 8), &w).is_err());
        assert!(hyper_analysis(&RealTensor::zeros([5, 4, 4]), &w).is_err());
        assert!(hyper_synthesis(&IntTensor::zeros([3, 1, 1]), &w).is_err());
    }
}
