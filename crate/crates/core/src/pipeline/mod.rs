//! Three-stage tiling → transform → entropy-coding executor.
//!
//! In concurrent mode each stage runs in its own worker group, connected by
//! bounded two-slot queues, so tiling of sample i+1, the transform of sample
//! i and entropy coding of sample i−1 overlap. Values move between stages by
//! ownership transfer; nothing is shared mutably. Outputs are assembled by
//! sample id, so concurrent and sequential runs emit identical bytes.

mod queue;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::artifacts::LatentArtifacts;
use crate::codec::{encode_tile, init_weights, EncoderWeights, SizeClass, ToyEncoderSpec};
use crate::entropy::{encode_latents_cached, estimate_bits, CoderConfig, TableCache};
use crate::error::{Error, Result};
use crate::imageio::{load_image, synthetic_image};
use crate::tiler::{group_sequence, partition, ImageBuffer, TileBatch, TileOrigin};

use queue::{BoundedQueue, Pop, PushError};

pub const DEFAULT_BUFFER_SLOTS: usize = 2;
pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(alias = "seq")]
    Sequential,
    #[serde(alias = "conc")]
    Concurrent,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq" | "sequential" => Ok(Mode::Sequential),
            "conc" | "concurrent" => Ok(Mode::Concurrent),
            other => Err(Error::invalid("mode", format!("expected seq or conc, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageWorkers {
    pub tiling: usize,
    pub transform: usize,
    pub entropy: usize,
}

impl Default for StageWorkers {
    fn default() -> Self {
        StageWorkers { tiling: 1, transform: 1, entropy: 1 }
    }
}

impl StageWorkers {
    /// Applies a global cap, keeping at least one worker per stage.
    pub fn capped(self, cap: usize) -> Self {
        let cap = cap.max(1);
        StageWorkers {
            tiling: self.tiling.clamp(1, cap),
            transform: self.transform.clamp(1, cap),
            entropy: self.entropy.clamp(1, cap),
        }
    }
}

/// Fixed per-sample stage costs replayed by sleeping instead of computing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCosts {
    pub tiling: Duration,
    pub transform: Duration,
    pub entropy: Duration,
}

impl SyntheticCosts {
    pub fn from_millis(tiling: u64, transform: u64, entropy: u64) -> Self {
        SyntheticCosts {
            tiling: Duration::from_millis(tiling),
            transform: Duration::from_millis(transform),
            entropy: Duration::from_millis(entropy),
        }
    }

    pub fn bottleneck(&self) -> Duration {
        self.tiling.max(self.transform).max(self.entropy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tile_size: u32,
    pub batch_size: usize,
    pub group_len: usize,
    pub size_class: SizeClass,
    pub mode: Mode,
    pub workers: StageWorkers,
    pub seed: u64,
    pub z_scale: f32,
    pub buffer_slots: usize,
    pub watchdog: Duration,
    /// Directory where `.lat` artifacts are persisted between stages; kept in
    /// memory when unset.
    pub artifact_dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticCosts>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tile_size: 512,
            batch_size: 1,
            group_len: 1,
            size_class: SizeClass::S,
            mode: Mode::Sequential,
            workers: StageWorkers::default(),
            seed: 0,
            z_scale: crate::entropy::DEFAULT_Z_SCALE,
            buffer_slots: DEFAULT_BUFFER_SLOTS,
            watchdog: DEFAULT_WATCHDOG,
            artifact_dir: None,
            synthetic: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be >= 1"));
        }
        if self.group_len == 0 {
            return Err(Error::invalid("group_len", "must be >= 1"));
        }
        if self.tile_size == 0 || self.tile_size > crate::tiler::DEFAULT_MAX_TILE {
            return Err(Error::invalid("tile_size", format!("{} out of range", self.tile_size)));
        }
        if self.buffer_slots == 0 {
            return Err(Error::invalid("buffer_slots", "must be >= 1"));
        }
        Ok(())
    }

    pub fn coder(&self) -> CoderConfig {
        CoderConfig { z_scale: self.z_scale }
    }
}

/// A sample handed to the tiling stage.
#[derive(Debug, Clone)]
pub enum SampleInput {
    Image(ImageBuffer),
    Path(PathBuf),
    /// Seeded synthetic scene of the given height and width.
    Synthetic { height: u32, width: u32, seed: u64 },
}

impl SampleInput {
    fn load(&self) -> Result<ImageBuffer> {
        match self {
            SampleInput::Image(img) => Ok(img.clone()),
            SampleInput::Path(p) => load_image(p),
            SampleInput::Synthetic { height, width, seed } => Ok(synthetic_image(*height, *width, *seed)),
        }
    }
}

/// Coded output of one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct TileOutput {
    pub sample: usize,
    pub origin: TileOrigin,
    pub fenc: Vec<u8>,
    pub lat_bytes: usize,
    pub lat_path: Option<PathBuf>,
    pub estimate_bits: f64,
}

/// Timestamps (seconds since run start) for one sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemTrace {
    pub sample: usize,
    pub tiling_start: f64,
    pub tiling_end: f64,
    pub transform_enqueued: f64,
    pub transform_dequeued: f64,
    pub transform_start: f64,
    pub transform_end: f64,
    pub entropy_enqueued: f64,
    pub entropy_dequeued: f64,
    pub entropy_start: f64,
    pub entropy_end: f64,
}

impl ItemTrace {
    pub fn timestamps(&self) -> [f64; 10] {
        [
            self.tiling_start,
            self.tiling_end,
            self.transform_enqueued,
            self.transform_dequeued,
            self.transform_start,
            self.transform_end,
            self.entropy_enqueued,
            self.entropy_dequeued,
            self.entropy_start,
            self.entropy_end,
        ]
    }

    pub fn is_monotone(&self) -> bool {
        self.timestamps().windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub tiling_s: f64,
    pub transform_s: f64,
    pub entropy_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub mode: Mode,
    pub tile_size: u32,
    pub batch_size: usize,
    pub group_len: usize,
    pub size_class: SizeClass,
    pub samples: usize,
    pub tiles: usize,
    pub groups: usize,
    /// Pixels covered by processed tiles (tile edge² per tile).
    pub tile_pixels: u64,
    /// Unpadded source pixels.
    pub source_pixels: u64,
    pub wall_s: f64,
    /// Busy time summed over the workers of each stage.
    pub stage_busy: StageTimes,
    pub pixels_per_s: f64,
    pub bytes_emitted: u64,
    pub lat_bytes: u64,
    pub achieved_bpp: f64,
    pub bpp_raw: f64,
    pub tcr_per_s: f64,
    /// PP/s the transform stage alone would sustain given its busy time.
    pub transform_only_pixels_per_s: f64,
    /// 1 − PP/s(run) / PP/s(transform stage only).
    pub degradation_vs_transform_only: f64,
    /// Median spacing between consecutive completions after warm-up.
    pub steady_period_s: Option<f64>,
    pub max_queue_occupancy: [usize; 2],
    pub buffer_slots: usize,
    pub trace: Vec<ItemTrace>,
}

pub struct PipelineRun {
    pub report: PipelineReport,
    pub tiles: Vec<TileOutput>,
}

struct Tiled {
    sample: usize,
    batches: Vec<TileBatch>,
    groups: usize,
    source_pixels: u64,
    bpp_raw: f64,
    trace: ItemTrace,
}

struct Transformed {
    sample: usize,
    artifacts: Vec<LatentArtifacts>,
    groups: usize,
    source_pixels: u64,
    bpp_raw: f64,
    tile_count: usize,
    trace: ItemTrace,
}

struct Coded {
    sample: usize,
    tiles: Vec<TileOutput>,
    groups: usize,
    tile_count: usize,
    source_pixels: u64,
    bpp_raw: f64,
    trace: ItemTrace,
}

/// State shared read-only by all stages.
struct Context {
    config: PipelineConfig,
    weights: Option<EncoderWeights>,
    epoch: Instant,
}

impl Context {
    fn new(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let weights = match config.synthetic {
            Some(_) => None,
            None => Some(init_weights(&ToyEncoderSpec::for_class(config.size_class, config.seed))?),
        };
        if let Some(dir) = &config.artifact_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(Context { config: config.clone(), weights, epoch: Instant::now() })
    }

    fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    fn tile(&self, sample: usize, input: &SampleInput) -> Result<Tiled> {
        let mut trace = ItemTrace { sample, tiling_start: self.now(), ..Default::default() };
        let tiled = if let Some(costs) = self.config.synthetic {
            thread::sleep(costs.tiling);
            Tiled { sample, batches: Vec::new(), groups: 1, source_pixels: 0, bpp_raw: 24.0, trace: ItemTrace::default() }
        } else {
            let image = input.load()?;
            let bpp_raw = f64::from(image.channels) * f64::from(image.bit_depth);
            let batch = partition(&image, sample as u32, self.config.tile_size)?;
            let groups = group_sequence(&batch, self.config.group_len)?.len();
            Tiled {
                sample,
                batches: split_batches(batch, self.config.batch_size),
                groups,
                source_pixels: image.pixel_count(),
                bpp_raw,
                trace: ItemTrace::default(),
            }
        };
        trace.tiling_end = self.now();
        Ok(Tiled { trace, ..tiled })
    }

    fn transform(&self, tiled: Tiled) -> Result<Transformed> {
        let mut trace = tiled.trace;
        trace.transform_start = self.now();
        let mut artifacts = Vec::new();
        let mut tile_count = 0;
        if let Some(costs) = self.config.synthetic {
            thread::sleep(costs.transform);
        } else {
            let w = self.weights.as_ref().expect("weights exist outside synthetic mode");
            for batch in &tiled.batches {
                tile_count += batch.len();
                for (tile, &origin) in batch.tiles.iter().zip(&batch.origins) {
                    artifacts.push(encode_tile(tile, origin, w)?);
                }
            }
        }
        trace.transform_end = self.now();
        Ok(Transformed {
            sample: tiled.sample,
            artifacts,
            groups: tiled.groups,
            source_pixels: tiled.source_pixels,
            bpp_raw: tiled.bpp_raw,
            tile_count,
            trace,
        })
    }

    fn entropy(&self, t: Transformed, cache: &mut TableCache) -> Result<Coded> {
        let mut trace = t.trace;
        trace.entropy_start = self.now();
        let mut tiles = Vec::with_capacity(t.artifacts.len());
        if let Some(costs) = self.config.synthetic {
            thread::sleep(costs.entropy);
        } else {
            let coder = self.config.coder();
            for a in &t.artifacts {
                let lat = a.to_bytes();
                let lat_path = match &self.config.artifact_dir {
                    Some(dir) => {
                        let p = dir.join(artifact_name(a.tile, "lat"));
                        std::fs::write(&p, &lat).map_err(|e| Error::io(&p, e))?;
                        Some(p)
                    }
                    None => None,
                };
                let reloaded = match &lat_path {
                    Some(p) => crate::artifacts::load_artifacts(p)?,
                    None => LatentArtifacts::from_bytes(&lat)?,
                };
                let stream = encode_latents_cached(&reloaded, &coder, cache)?;
                tiles.push(TileOutput {
                    sample: t.sample,
                    origin: reloaded.tile,
                    fenc: stream.to_bytes(),
                    lat_bytes: lat.len(),
                    lat_path,
                    estimate_bits: estimate_bits(&reloaded, &coder)?,
                });
            }
        }
        trace.entropy_end = self.now();
        Ok(Coded {
            sample: t.sample,
            tiles,
            groups: t.groups,
            tile_count: t.tile_count,
            source_pixels: t.source_pixels,
            bpp_raw: t.bpp_raw,
            trace,
        })
    }
}

/// `img00003_r001_c002.<ext>`
pub fn artifact_name(origin: TileOrigin, ext: &str) -> String {
    format!("img{:05}_r{:03}_c{:03}.{ext}", origin.image_id, origin.row, origin.col)
}

fn split_batches(batch: TileBatch, batch_size: usize) -> Vec<TileBatch> {
    let TileBatch { tile_size, tiles, origins, pads, group_len } = batch;
    let mut out = Vec::new();
    let mut it = tiles.into_iter().zip(origins).zip(pads).peekable();
    while it.peek().is_some() {
        let mut b = TileBatch { tile_size, tiles: Vec::new(), origins: Vec::new(), pads: Vec::new(), group_len };
        for ((t, o), p) in it.by_ref().take(batch_size) {
            b.tiles.push(t);
            b.origins.push(o);
            b.pads.push(p);
        }
        out.push(b);
    }
    out
}

/// Runs all three stages strictly in order for every sample.
pub fn run_sequential(samples: &[SampleInput], config: &PipelineConfig) -> Result<PipelineRun> {
    let ctx = Context::new(config)?;
    let mut cache = TableCache::new();
    let mut coded = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let mut step = || -> Result<Coded> {
            let mut tiled = ctx.tile(i, s)?;
            let t = ctx.now();
            tiled.trace.transform_enqueued = t;
            tiled.trace.transform_dequeued = t;
            let mut tr = ctx.transform(tiled)?;
            let t = ctx.now();
            tr.trace.entropy_enqueued = t;
            tr.trace.entropy_dequeued = t;
            ctx.entropy(tr, &mut cache)
        };
        coded.push(step().map_err(|e| e.in_sample(i))?);
    }
    let wall = ctx.now();
    Ok(assemble(&ctx, Mode::Sequential, coded, wall, [0, 0]))
}

/// Runs the stages in overlapping worker groups joined by bounded queues.
pub fn run_concurrent(samples: &[SampleInput], config: &PipelineConfig) -> Result<PipelineRun> {
    let ctx = Arc::new(Context::new(config)?);
    let workers = config.workers;
    let to_transform = Arc::new(BoundedQueue::<Tiled>::new(config.buffer_slots, workers.tiling, ctx.epoch));
    let to_entropy = Arc::new(BoundedQueue::<Transformed>::new(config.buffer_slots, workers.transform, ctx.epoch));
    let next_sample = Arc::new(AtomicUsize::new(0));
    let failed = Arc::new(AtomicBool::new(false));
    let first_error: Arc<Mutex<Option<Error>>> = Arc::new(Mutex::new(None));
    let (done_tx, done_rx) = mpsc::channel::<Coded>();
    let samples: Arc<Vec<SampleInput>> = Arc::new(samples.to_vec());
    let watchdog = config.watchdog;

    let fail = {
        let failed = failed.clone();
        let first_error = first_error.clone();
        let q1 = to_transform.clone();
        let q2 = to_entropy.clone();
        Arc::new(move |e: Error| {
            let mut slot = first_error.lock().unwrap();
            if slot.is_none() {
                *slot = Some(e);
            }
            failed.store(true, Ordering::SeqCst);
            q1.abort();
            q2.abort();
        })
    };

    let mut handles = Vec::new();
    for _ in 0..workers.tiling {
        let (ctx, q, next, samples, failed, fail) =
            (ctx.clone(), to_transform.clone(), next_sample.clone(), samples.clone(), failed.clone(), fail.clone());
        handles.push(thread::spawn(move || {
            loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= samples.len() {
                    break;
                }
                match ctx.tile(i, &samples[i]) {
                    Ok(tiled) => match q.push(tiled, watchdog) {
                        Ok(_) => {}
                        Err(PushError::Aborted) => break,
                        Err(PushError::TimedOut) => {
                            fail(Error::Watchdog { stage: "transform", timeout_s: watchdog.as_secs_f64() }.in_sample(i));
                            break;
                        }
                    },
                    Err(e) => {
                        fail(e.in_sample(i));
                        break;
                    }
                }
            }
            q.producer_done();
        }));
    }
    for _ in 0..workers.transform {
        let (ctx, qin, qout, fail) = (ctx.clone(), to_transform.clone(), to_entropy.clone(), fail.clone());
        handles.push(thread::spawn(move || {
            loop {
                match qin.pop(watchdog) {
                    Pop::Item { value: mut tiled, pushed_s, popped_s } => {
                        tiled.trace.transform_enqueued = pushed_s;
                        tiled.trace.transform_dequeued = popped_s;
                        let i = tiled.sample;
                        match ctx.transform(tiled) {
                            Ok(t) => match qout.push(t, watchdog) {
                                Ok(_) => {}
                                Err(PushError::Aborted) => break,
                                Err(PushError::TimedOut) => {
                                    fail(Error::Watchdog { stage: "transform", timeout_s: watchdog.as_secs_f64() }.in_sample(i));
                                    break;
                                }
                            },
                            Err(e) => {
                                fail(e.in_sample(i));
                                break;
                            }
                        }
                    }
                    Pop::Closed => break,
                    Pop::TimedOut => {
                        fail(Error::Watchdog { stage: "tiling", timeout_s: watchdog.as_secs_f64() });
                        break;
                    }
                }
            }
            qout.producer_done();
        }));
    }
    for _ in 0..workers.entropy {
        let (ctx, qin, tx, fail) = (ctx.clone(), to_entropy.clone(), done_tx.clone(), fail.clone());
        handles.push(thread::spawn(move || {
            let mut cache = TableCache::new();
            loop {
                match qin.pop(watchdog) {
                    Pop::Item { value: mut t, pushed_s, popped_s } => {
                        t.trace.entropy_enqueued = pushed_s;
                        t.trace.entropy_dequeued = popped_s;
                        let i = t.sample;
                        match ctx.entropy(t, &mut cache) {
                            Ok(c) => {
                                if tx.send(c).is_err() {
                                    break;
                                }
                            }
                            Err(e) => {
                                fail(e.in_sample(i));
                                break;
                            }
                        }
                    }
                    Pop::Closed => break,
                    Pop::TimedOut => {
                        fail(Error::Watchdog { stage: "transform", timeout_s: watchdog.as_secs_f64() });
                        break;
                    }
                }
            }
        }));
    }
    drop(done_tx);

    let mut coded: Vec<Coded> = done_rx.iter().collect();
    for h in handles {
        if h.join().is_err() {
            fail(Error::CorruptStream("pipeline worker panicked".into()));
        }
    }
    if let Some(e) = first_error.lock().unwrap().take() {
        return Err(e);
    }
    let wall = ctx.now();
    coded.sort_by_key(|c| c.sample);
    let occupancy = [to_transform.max_occupancy(), to_entropy.max_occupancy()];
    Ok(assemble(&ctx, Mode::Concurrent, coded, wall, occupancy))
}

/// Dispatches on `config.mode`.
pub fn run(samples: &[SampleInput], config: &PipelineConfig) -> Result<PipelineRun> {
    match config.mode {
        Mode::Sequential => run_sequential(samples, config),
        Mode::Concurrent => run_concurrent(samples, config),
    }
}

fn assemble(ctx: &Context, mode: Mode, coded: Vec<Coded>, wall: f64, occupancy: [usize; 2]) -> PipelineRun {
    let cfg = &ctx.config;
    let mut busy = StageTimes::default();
    let mut trace = Vec::with_capacity(coded.len());
    let mut tiles_out = Vec::new();
    let (mut tiles, mut groups, mut source_pixels) = (0usize, 0usize, 0u64);
    let mut bpp_raw = 0.0f64;
    for c in coded {
        busy.tiling_s += c.trace.tiling_end - c.trace.tiling_start;
        busy.transform_s += c.trace.transform_end - c.trace.transform_start;
        busy.entropy_s += c.trace.entropy_end - c.trace.entropy_start;
        tiles += c.tile_count;
        groups += c.groups;
        source_pixels += c.source_pixels;
        bpp_raw = bpp_raw.max(c.bpp_raw);
        trace.push(c.trace);
        tiles_out.extend(c.tiles);
    }
    let tile_pixels = tiles as u64 * u64::from(cfg.tile_size).pow(2);
    let bytes_emitted: u64 = tiles_out.iter().map(|t| t.fenc.len() as u64).sum();
    let lat_bytes: u64 = tiles_out.iter().map(|t| t.lat_bytes as u64).sum();
    let pixels_per_s = if wall > 0.0 { tile_pixels as f64 / wall } else { 0.0 };
    let achieved_bpp = if tile_pixels > 0 { 8.0 * bytes_emitted as f64 / tile_pixels as f64 } else { 0.0 };
    let transform_only = if busy.transform_s > 0.0 { tile_pixels as f64 / busy.transform_s } else { 0.0 };
    let degradation = if transform_only > 0.0 { 1.0 - pixels_per_s / transform_only } else { 0.0 };
    let steady_period_s = steady_period(&trace);
    PipelineRun {
        report: PipelineReport {
            mode,
            tile_size: cfg.tile_size,
            batch_size: cfg.batch_size,
            group_len: cfg.group_len,
            size_class: cfg.size_class,
            samples: trace.len(),
            tiles,
            groups,
            tile_pixels,
            source_pixels,
            wall_s: wall,
            stage_busy: busy,
            pixels_per_s,
            bytes_emitted,
            lat_bytes,
            achieved_bpp,
            bpp_raw,
            tcr_per_s: pixels_per_s * (bpp_raw - achieved_bpp).max(0.0),
            transform_only_pixels_per_s: transform_only,
            degradation_vs_transform_only: degradation,
            steady_period_s,
            max_queue_occupancy: occupancy,
            buffer_slots: cfg.buffer_slots,
            trace,
        },
        tiles: tiles_out,
    }
}

/// Median gap between consecutive completions, skipping the pipeline fill.
fn steady_period(trace: &[ItemTrace]) -> Option<f64> {
    let mut ends: Vec<f64> = trace.iter().map(|t| t.entropy_end).collect();
    ends.sort_by(f64::total_cmp);
    let gaps: Vec<f64> = ends.windows(2).skip(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return None;
    }
    let mut g = gaps;
    g.sort_by(f64::total_cmp);
    Some(g[g.len() / 2])
}

/// Trace rows as CSV: one line per sample with every stage timestamp.
pub fn trace_csv(trace: &[ItemTrace]) -> String {
    let mut out = String::from(
        "sample,tiling_start,tiling_end,transform_enqueued,transform_dequeued,transform_start,transform_end,entropy_enqueued,entropy_dequeued,entropy_start,entropy_end\n",
    );
    for t in trace {
        out.push_str(&t.sample.to_string());
        for v in t.timestamps() {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    out
}

/// Whether CPU-side stages run alongside the transform during measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interference {
    Idle,
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceReport {
    pub mode: Interference,
    pub cores: usize,
    pub rounds: usize,
    pub transform_only_pixels_per_s: Vec<f64>,
    pub concurrent_pixels_per_s: Vec<f64>,
    /// 1 − median(concurrent) / median(transform only).
    pub degradation: f64,
}

/// Measures how much the CPU stages slow the transform stage down.
///
/// Each round times the transform loop alone for `duration`, then again with
/// tiling and entropy-coding workers kept busy from an auxiliary stream
/// (`Saturated`) or left idle (`Idle`). Rounds alternate to cancel drift.
pub fn measure_interference(
    config: &PipelineConfig,
    duration: Duration,
    rounds: usize,
    mode: Interference,
) -> Result<InterferenceReport> {
    config.validate()?;
    let weights = Arc::new(init_weights(&ToyEncoderSpec::for_class(config.size_class, config.seed))?);
    let ts = config.tile_size;
    let image = synthetic_image(ts, ts * config.batch_size as u32, config.seed);
    let batch = Arc::new(partition(&image, 0, ts)?);
    let coder = config.coder();
    let sample_artifacts = Arc::new(crate::codec::encode_batch(&batch, &weights)?);

    let transform_loop = |weights: &EncoderWeights| -> Result<f64> {
        let start = Instant::now();
        let mut pixels = 0u64;
        while start.elapsed() < duration {
            for (tile, &o) in batch.tiles.iter().zip(&batch.origins) {
                std::hint::black_box(encode_tile(tile, o, weights)?);
                pixels += u64::from(ts) * u64::from(ts);
            }
        }
        Ok(pixels as f64 / start.elapsed().as_secs_f64())
    };

    let mut alone = Vec::with_capacity(rounds);
    let mut busy = Vec::with_capacity(rounds);
    for _ in 0..rounds.max(1) {
        alone.push(transform_loop(&weights)?);
        let stop = Arc::new(AtomicBool::new(false));
        let mut aux = Vec::new();
        if mode == Interference::Saturated {
            let (s, img) = (stop.clone(), image.clone());
            let tile_size = ts;
            aux.push(thread::spawn(move || -> Result<()> {
                while !s.load(Ordering::Relaxed) {
                    std::hint::black_box(partition(&img, 0, tile_size)?);
                }
                Ok(())
            }));
            let (s, arts) = (stop.clone(), sample_artifacts.clone());
            aux.push(thread::spawn(move || -> Result<()> {
                let mut cache = TableCache::new();
                while !s.load(Ordering::Relaxed) {
                    for a in arts.iter() {
                        let reloaded = LatentArtifacts::from_bytes(&a.to_bytes())?;
                        std::hint::black_box(encode_latents_cached(&reloaded, &coder, &mut cache)?.to_bytes());
                    }
                }
                Ok(())
            }));
        }
        let measured = transform_loop(&weights);
        stop.store(true, Ordering::Relaxed);
        for h in aux {
            h.join().map_err(|_| Error::CorruptStream("auxiliary worker panicked".into()))??;
        }
        busy.push(measured?);
    }
    let degradation = 1.0 - median(&busy) / median(&alone);
    Ok(InterferenceReport {
        mode,
        cores: thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        rounds: alone.len(),
        transform_only_pixels_per_s: alone,
        concurrent_pixels_per_s: busy,
        degradation,
    })
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Writes each tile's stream as `<dir>/img…_r…_c….fenc`, returning the paths.
pub fn write_streams(tiles: &[TileOutput], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    tiles
        .iter()
        .map(|t| {
            let p = dir.join(artifact_name(t.origin, "fenc"));
            std::fs::write(&p, &t.fenc).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}
