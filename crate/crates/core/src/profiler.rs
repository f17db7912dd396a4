//! Configuration profiler: sweeps tile size × batch size × model class,
//! measures images/s and pixels/s, and ranks configurations by transfer cost
//! reduction per second, `PP/s × (bpp_raw − bpp_codec)`.
//!
//! Images per second rewards small tiles regardless of how much work each
//! image represents; pixels per second fixes that but ignores rate savings;
//! the transfer-cost objective weighs throughput against the bits saved per
//! pixel, so a wider model wins whenever its lower bitrate outweighs its
//! lower throughput.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{encode_tile, init_weights, EncoderWeights, SizeClass, ToyEncoderSpec};
use crate::error::{Error, Result};
use crate::imageio::synthetic_image;
use crate::orbit::SensorSpec;
use crate::pipeline::{self, PipelineConfig, SampleInput};
use crate::tiler::partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileSource {
    Fixture,
    Measured,
}

/// Expected rate of a named codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecProfile {
    pub name: String,
    pub family: String,
    pub size_class: SizeClass,
    pub bpp_by_task: BTreeMap<String, f64>,
    pub encoder_params: u64,
    pub source: ProfileSource,
}

impl CodecProfile {
    pub fn validate(&self, bpp_raw: f64) -> Result<()> {
        if self.bpp_by_task.is_empty() {
            return Err(Error::invalid("bpp_by_task", format!("{} has no entries", self.name)));
        }
        for (task, &b) in &self.bpp_by_task {
            if !(b > 0.0 && b < bpp_raw) {
                return Err(Error::invalid(
                    "bpp_by_task",
                    format!("{}/{task}: {b} not in (0, {bpp_raw})", self.name),
                ));
            }
        }
        Ok(())
    }

    /// Mean over tasks; the per-task spread is small enough that one figure
    /// stands for the codec.
    pub fn mean_bpp(&self) -> f64 {
        self.bpp_by_task.values().sum::<f64>() / self.bpp_by_task.len() as f64
    }
}

/// Uncompressed bits per pixel: bands × radiometric bits.
pub fn raw_bpp(bands: u32, radiometric_bits: u32) -> f64 {
    f64::from(bands) * f64::from(radiometric_bits)
}

pub fn raw_bpp_for(sensor: &SensorSpec) -> f64 {
    raw_bpp(sensor.bands, sensor.radiometric_bits)
}

/// Transfer cost reduction per second.
pub fn tcr_per_second(pixels_per_s: f64, bpp_raw: f64, bpp_codec: f64) -> Result<f64> {
    if !(pixels_per_s.is_finite() && pixels_per_s >= 0.0) {
        return Err(Error::invalid("pixels_per_s", format!("must be finite and >= 0, got {pixels_per_s}")));
    }
    if !(bpp_codec >= 0.0 && bpp_codec < bpp_raw) {
        return Err(Error::invalid(
            "bpp_codec",
            format!("must satisfy 0 <= bpp_codec < bpp_raw, got {bpp_codec} vs {bpp_raw}"),
        ));
    }
    Ok(pixels_per_s * (bpp_raw - bpp_codec))
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProfileCell {
    pub tile_size: u32,
    pub batch_size: usize,
    pub size_class: SizeClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileGrid {
    pub tile_sizes: Vec<u32>,
    pub batch_sizes: Vec<usize>,
    pub size_classes: Vec<SizeClass>,
}

impl Default for ProfileGrid {
    fn default() -> Self {
        ProfileGrid {
            tile_sizes: vec![256, 384, 512, 600, 768],
            batch_sizes: vec![1, 2, 4, 6, 8],
            size_classes: SizeClass::ALL.to_vec(),
        }
    }
}

impl ProfileGrid {
    pub fn cells(&self) -> Vec<ProfileCell> {
        let mut out = Vec::new();
        for &size_class in &self.size_classes {
            for &tile_size in &self.tile_sizes {
                for &batch_size in &self.batch_sizes {
                    out.push(ProfileCell { tile_size, batch_size, size_class });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_sizes.is_empty() || self.batch_sizes.is_empty() || self.size_classes.is_empty() {
            return Err(Error::invalid("grid", "every axis needs at least one value"));
        }
        if self.tile_sizes.contains(&0) || self.batch_sizes.contains(&0) {
            return Err(Error::invalid("grid", "tile and batch sizes must be > 0"));
        }
        Ok(())
    }
}

/// Images processed in one timed invocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunTiming {
    pub images: usize,
    pub seconds: f64,
}

/// Something that can execute one configuration and report how long it took.
pub trait ProfileRunner {
    fn run(&mut self, cell: &ProfileCell) -> Result<RunTiming>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileMeasurement {
    pub tile_size: u32,
    pub batch_size: usize,
    pub size_class: SizeClass,
    pub img_per_s: f64,
    pub pixels_per_s: f64,
    /// Filled in by [`select_best`].
    pub tcr_per_s: Option<f64>,
    pub repeats: usize,
    /// Coefficient of variation of PP/s across repeats.
    pub dispersion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ProfileMeasurement {
    pub fn cell(&self) -> ProfileCell {
        ProfileCell { tile_size: self.tile_size, batch_size: self.batch_size, size_class: self.size_class }
    }

    /// Builds a measurement from known throughput, e.g. a replayed table row.
    pub fn from_pixels_per_s(cell: ProfileCell, pixels_per_s: f64) -> Self {
        ProfileMeasurement {
            tile_size: cell.tile_size,
            batch_size: cell.batch_size,
            size_class: cell.size_class,
            img_per_s: pixels_per_s / f64::from(cell.tile_size).powi(2),
            pixels_per_s,
            tcr_per_s: None,
            repeats: 0,
            dispersion: 0.0,
            error: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub repeats: usize,
    pub warmups: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { repeats: 10, warmups: 2 }
    }
}

/// Measures every grid cell, one at a time.
pub fn sweep(grid: &ProfileGrid, runner: &mut dyn ProfileRunner, opts: SweepOptions) -> Result<Vec<ProfileMeasurement>> {
    grid.validate()?;
    if opts.repeats == 0 {
        return Err(Error::invalid("repeats", "must be >= 1"));
    }
    Ok(grid.cells().iter().map(|cell| measure_cell(cell, runner, opts)).collect())
}

fn measure_cell(cell: &ProfileCell, runner: &mut dyn ProfileRunner, opts: SweepOptions) -> ProfileMeasurement {
    let px = f64::from(cell.tile_size).powi(2);
    let failed = |e: Error| ProfileMeasurement {
        error: Some(e.to_string()),
        ..ProfileMeasurement::from_pixels_per_s(*cell, 0.0)
    };
    for _ in 0..opts.warmups {
        if let Err(e) = runner.run(cell) {
            return failed(e);
        }
    }
    let mut img_rates = Vec::with_capacity(opts.repeats);
    for _ in 0..opts.repeats {
        match runner.run(cell) {
            Ok(t) if t.seconds > 0.0 && t.images > 0 => img_rates.push(t.images as f64 / t.seconds),
            Ok(t) => return failed(Error::invalid("timing", format!("degenerate run {t:?}"))),
            Err(e) => return failed(e),
        }
    }
    let n = img_rates.len() as f64;
    let mean = img_rates.iter().sum::<f64>() / n;
    let var = if img_rates.iter().all(|&r| r == img_rates[0]) {
        0.0
    } else {
        img_rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n
    };
    ProfileMeasurement {
        tile_size: cell.tile_size,
        batch_size: cell.batch_size,
        size_class: cell.size_class,
        img_per_s: mean,
        pixels_per_s: mean * px,
        tcr_per_s: None,
        repeats: img_rates.len(),
        dispersion: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
        error: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileResult {
    pub grid: Vec<ProfileMeasurement>,
    pub chosen: usize,
    pub chosen_cell: ProfileCell,
    pub chosen_codec: String,
    pub expected_tcr_per_s: f64,
    pub tie_break: String,
}

pub const TIE_BREAK_RULE: &str = "max TCR/s; ties -> smaller size class, then smaller batch";

/// Picks the measurement maximizing TCR/s under the matching codec profile.
pub fn select_best(measurements: &[ProfileMeasurement], codecs: &[CodecProfile], bpp_raw: f64) -> Result<ProfileResult> {
    if measurements.is_empty() || codecs.is_empty() {
        return Err(Error::invalid("measurements", "need at least one measurement and one codec"));
    }
    let mut by_class: HashMap<SizeClass, &CodecProfile> = HashMap::new();
    for c in codecs {
        c.validate(bpp_raw)?;
        by_class.entry(c.size_class).or_insert(c);
    }
    let mut grid = measurements.to_vec();
    let mut best: Option<usize> = None;
    for (i, m) in grid.iter_mut().enumerate() {
        if m.error.is_some() {
            continue;
        }
        let Some(codec) = by_class.get(&m.size_class) else { continue };
        let tcr = tcr_per_second(m.pixels_per_s, bpp_raw, codec.mean_bpp())?;
        m.tcr_per_s = Some(tcr);
        best = Some(match best {
            None => i,
            Some(b) => {
                if beats(m, &measurements[b], tcr, grid_tcr(&measurements[b], &by_class, bpp_raw)) {
                    i
                } else {
                    b
                }
            }
        });
    }
    let chosen = best.ok_or_else(|| Error::invalid("measurements", "no successful measurement has a matching codec profile"))?;
    let m = &grid[chosen];
    Ok(ProfileResult {
        chosen,
        chosen_cell: m.cell(),
        chosen_codec: by_class[&m.size_class].name.clone(),
        expected_tcr_per_s: m.tcr_per_s.unwrap_or_default(),
        tie_break: TIE_BREAK_RULE.to_string(),
        grid,
    })
}

fn grid_tcr(m: &ProfileMeasurement, by_class: &HashMap<SizeClass, &CodecProfile>, bpp_raw: f64) -> f64 {
    by_class
        .get(&m.size_class)
        .map(|c| m.pixels_per_s * (bpp_raw - c.mean_bpp()))
        .unwrap_or(f64::NEG_INFINITY)
}

fn beats(a: &ProfileMeasurement, b: &ProfileMeasurement, tcr_a: f64, tcr_b: f64) -> bool {
    if tcr_a != tcr_b {
        return tcr_a > tcr_b;
    }
    (a.size_class, a.batch_size) < (b.size_class, b.batch_size)
}

/// Closed-form batch latency used to study the metrics without hardware:
///
/// `seconds = batch_overhead_s + batch · per_pixel_s · width · px · (1 + max(0, px − cache_px) / cache_px)`
///
/// where `px` is tile pixels and `width` is the model's relative width.
/// Per-image time grows with pixels, so img/s always favours the smallest
/// tile; the per-batch overhead is amortized over more pixels as tiles grow
/// until the working set spills past `cache_px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCostModel {
    pub per_pixel_s: f64,
    pub batch_overhead_s: f64,
    pub cache_px: f64,
}

impl Default for SyntheticCostModel {
    fn default() -> Self {
        SyntheticCostModel { per_pixel_s: 2e-8, batch_overhead_s: 4e-3, cache_px: 600.0 * 600.0 }
    }
}

impl SyntheticCostModel {
    pub fn width(class: SizeClass) -> f64 {
        ToyEncoderSpec::for_class(class, 0).param_count() as f64 / ToyEncoderSpec::for_class(SizeClass::S, 0).param_count() as f64
    }

    pub fn batch_seconds(&self, cell: &ProfileCell) -> f64 {
        let px = f64::from(cell.tile_size).powi(2);
        let spill = 1.0 + (px - self.cache_px).max(0.0) / self.cache_px;
        self.batch_overhead_s + cell.batch_size as f64 * self.per_pixel_s * Self::width(cell.size_class) * px * spill
    }
}

impl ProfileRunner for SyntheticCostModel {
    fn run(&mut self, cell: &ProfileCell) -> Result<RunTiming> {
        Ok(RunTiming { images: cell.batch_size, seconds: self.batch_seconds(cell) })
    }
}

/// Times the toy encoder alone on seeded synthetic tiles.
pub struct TransformRunner {
    seed: u64,
    weights: HashMap<SizeClass, EncoderWeights>,
}

impl TransformRunner {
    pub fn new(seed: u64) -> Self {
        TransformRunner { seed, weights: HashMap::new() }
    }
}

impl ProfileRunner for TransformRunner {
    fn run(&mut self, cell: &ProfileCell) -> Result<RunTiming> {
        let seed = self.seed;
        let w = match self.weights.entry(cell.size_class) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(init_weights(&ToyEncoderSpec::for_class(cell.size_class, seed))?),
        };
        let image = synthetic_image(cell.tile_size, cell.tile_size * cell.batch_size as u32, seed);
        let batch = partition(&image, 0, cell.tile_size)?;
        let start = Instant::now();
        for (t, &o) in batch.tiles.iter().zip(&batch.origins) {
            std::hint::black_box(encode_tile(t, o, w)?);
        }
        Ok(RunTiming { images: batch.len(), seconds: start.elapsed().as_secs_f64() })
    }
}

/// Times the full pipeline over `samples` images of one tile each.
pub struct PipelineRunner {
    pub base: PipelineConfig,
    pub samples: usize,
}

impl ProfileRunner for PipelineRunner {
    fn run(&mut self, cell: &ProfileCell) -> Result<RunTiming> {
        let config = PipelineConfig {
            tile_size: cell.tile_size,
            batch_size: cell.batch_size,
            size_class: cell.size_class,
            ..self.base.clone()
        };
        let inputs: Vec<SampleInput> = (0..self.samples)
            .map(|i| SampleInput::Synthetic {
                height: cell.tile_size,
                width: cell.tile_size * cell.batch_size as u32,
                seed: self.base.seed + i as u64,
            })
            .collect();
        let run = pipeline::run(&inputs, &config)?;
        Ok(RunTiming { images: run.report.tiles, seconds: run.report.wall_s })
    }
}

/// Index of the measurement maximizing `key`, ignoring failed cells.
pub fn argmax_by(measurements: &[ProfileMeasurement], key: impl Fn(&ProfileMeasurement) -> f64) -> Option<usize> {
    measurements
        .iter()
        .enumerate()
        .filter(|(_, m)| m.error.is_none())
        .fold(None, |best: Option<(usize, f64)>, (i, m)| {
            let v = key(m);
            match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            }
        })
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(name: &str, class: SizeClass, bpp: f64) -> CodecProfile {
        CodecProfile {
            name: name.into(),
            family: "test".into(),
            size_class: class,
            bpp_by_task: [("a".to_string(), bpp)].into_iter().collect(),
            encoder_params: 0,
            source: ProfileSource::Fixture,
        }
    }

    fn m(tile: u32, batch: usize, class: SizeClass, pps: f64) -> ProfileMeasurement {
        ProfileMeasurement::from_pixels_per_s(ProfileCell { tile_size: tile, batch_size: batch, size_class: class }, pps)
    }

    #[test]
    fn raw_bpp_examples() {
        assert_eq!(raw_bpp(3, 8), 24.0);
        assert_eq!(raw_bpp(4, 12), 48.0);
    }

    #[test]
    fn tcr_examples() {
        assert_eq!(tcr_per_second(1e6, 24.0, 0.0).unwrap(), 2.4e7);
        let pps = 1.3386e9 / (24.0 - 0.2303);
        assert!((tcr_per_second(pps, 24.0, 0.2303).unwrap() - 1.3386e9).abs() < 1.0);
        assert_eq!(tcr_per_second(2e6, 24.0, 1.0).unwrap(), 2.0 * tcr_per_second(1e6, 24.0, 1.0).unwrap());
        assert!(tcr_per_second(1e6, 24.0, 24.0).is_err());
        assert!(tcr_per_second(-1.0, 24.0, 1.0).is_err());
    }

    #[test]
    fn mean_bpp_over_tasks() {
        let mut p = profile("x", SizeClass::S, 0.2389);
        p.bpp_by_task.insert("b".into(), 0.223);
        p.bpp_by_task.insert("c".into(), 0.2290);
        assert!((p.mean_bpp() - 0.2303).abs() < 1e-12);
    }

    #[test]
    fn wider_model_wins_when_rate_gain_dominates() {
        // Exhaustive check over the constructed set:
        // S: 1.00e8 · (24 − 20) = 4.0e8; M: 0.9e8 · (24 − 10) = 1.26e9; L: 0.5e8 · (24 − 5) = 9.5e8
        let codecs = [profile("S", SizeClass::S, 20.0), profile("M", SizeClass::M, 10.0), profile("L", SizeClass::L, 5.0)];
        let ms = [m(512, 4, SizeClass::S, 1.0e8), m(512, 4, SizeClass::M, 0.9e8), m(512, 4, SizeClass::L, 0.5e8)];
        let r = select_best(&ms, &codecs, 24.0).unwrap();
        assert_eq!(r.chosen, 1);
        assert_eq!(r.chosen_codec, "M");
        assert!((r.expected_tcr_per_s - 1.26e9).abs() < 1.0);
    }

    #[test]
    fn single_candidate_chosen() {
        let r = select_best(&[m(256, 1, SizeClass::L, 5.0)], &[profile("L", SizeClass::L, 1.0)], 24.0).unwrap();
        assert_eq!(r.chosen, 0);
    }

    #[test]
    fn ties_prefer_smaller_class_then_batch() {
        let codecs = [profile("S", SizeClass::S, 4.0), profile("M", SizeClass::M, 4.0)];
        let ms = [m(512, 8, SizeClass::M, 1e6), m(512, 8, SizeClass::S, 1e6), m(512, 4, SizeClass::S, 1e6)];
        assert_eq!(select_best(&ms, &codecs, 24.0).unwrap().chosen, 2);
    }

    #[test]
    fn failed_cells_are_skipped() {
        let mut bad = m(512, 1, SizeClass::S, 1e12);
        bad.error = Some("boom".into());
        let ms = [bad, m(256, 1, SizeClass::S, 1.0)];
        assert_eq!(select_best(&ms, &[profile("S", SizeClass::S, 1.0)], 24.0).unwrap().chosen, 1);
    }

    struct Flaky(usize);

    impl ProfileRunner for Flaky {
        fn run(&mut self, cell: &ProfileCell) -> Result<RunTiming> {
            self.0 += 1;
            if cell.tile_size == 384 {
                return Err(Error::invalid("tile", "unsupported"));
            }
            Ok(RunTiming { images: cell.batch_size, seconds: 0.01 * (1 + self.0 % 2) as f64 })
        }
    }

    #[test]
    fn sweep_records_failures_and_dispersion() {
        let grid = ProfileGrid { tile_sizes: vec![256, 384], batch_sizes: vec![1], size_classes: vec![SizeClass::S] };
        let out = sweep(&grid, &mut Flaky(0), SweepOptions { repeats: 4, warmups: 1 }).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].error.is_none() && out[0].dispersion > 0.0);
        assert!(out[1].error.is_some());
    }

    #[test]
    fn single_cell_deterministic_runner() {
        let grid = ProfileGrid { tile_sizes: vec![512], batch_sizes: vec![4], size_classes: vec![SizeClass::M] };
        let out = sweep(&grid, &mut SyntheticCostModel::default(), SweepOptions::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].dispersion, 0.0);
        assert_eq!(out[0].repeats, 10);
        assert!((out[0].pixels_per_s - out[0].img_per_s * 512.0 * 512.0).abs() < 1e-6 * out[0].pixels_per_s);
    }

    #[test]
    fn grid_validation() {
        assert!(ProfileGrid { tile_sizes: vec![], ..Default::default() }.validate().is_err());
        assert!(ProfileGrid { batch_sizes: vec![0], ..Default::default() }.validate().is_err());
        assert_eq!(ProfileGrid::default().cells().len(), 75);
    }
}
