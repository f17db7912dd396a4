use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use oec_core::codec::{encode_tile, init_weights, ToyEncoderSpec};
use oec_core::downlink::{energy_to_double, simulate_pass, transmission_savings, PassReport};
use oec_core::entropy::{decode_latents, encode_latents_cached, estimate_bits, CoderConfig, EncodedStream, TableCache, DEFAULT_Z_SCALE};
use oec_core::fixtures::{self, MissionFile};
use oec_core::imageio::load_image;
use oec_core::pipeline::{self, artifact_name, trace_csv, write_streams, Mode, PipelineConfig, SampleInput, StageWorkers};
use oec_core::profiler::{
    select_best, sweep, CodecProfile, PipelineRunner, ProfileGrid, ProfileRunner, SweepOptions, SyntheticCostModel, TransformRunner,
};
use oec_core::reports::{self, ReportEnvelope, ReportKind, RunManifest};
use oec_core::tiler::partition;
use oec_core::{load_artifacts, persist_artifacts, SizeClass};

use crate::config::{thread_cap, FileConfig};
use crate::{ClassArg, Failure, Global};

type CmdResult = Result<(), Failure>;

fn config_error(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(anyhow!("{msg}"))
}

fn seed(g: &Global, cfg: &FileConfig) -> u64 {
    g.seed.or(cfg.seed).unwrap_or(0)
}

fn emit<T: Serialize>(g: &Global, value: &T, human: impl FnOnce()) {
    if g.json {
        println!("{}", serde_json::to_string_pretty(value).expect("result serializes"));
    } else {
        human();
    }
}

fn write(manifest: &mut RunManifest, path: PathBuf, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    manifest.record(path);
    Ok(())
}

fn finish_manifest(g: &Global, mut manifest: RunManifest, name: &str) -> anyhow::Result<PathBuf> {
    manifest.finish();
    let path = g.out_dir.join(format!("manifest-{name}.json"));
    std::fs::create_dir_all(&g.out_dir).with_context(|| format!("creating {}", g.out_dir.display()))?;
    manifest.write(&path)?;
    Ok(path)
}

#[derive(Args)]
pub struct EncodeArgs {
    /// PNG or .raw (with .json sidecar) images
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    tile: Option<u32>,
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
    #[arg(long)]
    z_scale: Option<f32>,
}

#[derive(Serialize)]
struct EncodeSummary {
    files: usize,
    failed: Vec<String>,
    tiles: usize,
    total_fenc_bytes: u64,
    total_lat_bytes: u64,
    tile_pixels: u64,
    achieved_bpp: f64,
    estimate_bits: f64,
}

#[derive(Serialize)]
struct EncodeConfig {
    inputs: Vec<PathBuf>,
    tile_size: u32,
    size_class: SizeClass,
    z_scale: f32,
    seed: u64,
}

pub fn encode(g: &Global, cfg: &FileConfig, a: EncodeArgs) -> CmdResult {
    let config = EncodeConfig {
        inputs: a.inputs.clone(),
        tile_size: a.tile.or(cfg.tile_size).unwrap_or(512),
        size_class: a.class.map(Into::into).or(cfg.size_class).unwrap_or(SizeClass::S),
        z_scale: a.z_scale.or(cfg.z_scale).unwrap_or(DEFAULT_Z_SCALE),
        seed: seed(g, cfg),
    };
    if config.tile_size == 0 {
        return Err(config_error("--tile must be > 0"));
    }
    let mut manifest = RunManifest::start("encode", &config, config.seed)?;
    let weights = init_weights(&ToyEncoderSpec::for_class(config.size_class, config.seed))?;
    let coder = CoderConfig { z_scale: config.z_scale };
    let mut cache = TableCache::new();
    let mut summary = EncodeSummary {
        files: a.inputs.len(),
        failed: Vec::new(),
        tiles: 0,
        total_fenc_bytes: 0,
        total_lat_bytes: 0,
        tile_pixels: 0,
        achieved_bpp: 0.0,
        estimate_bits: 0.0,
    };
    for (id, path) in a.inputs.iter().enumerate() {
        let mut one = || -> anyhow::Result<()> {
            let image = load_image(path)?;
            let batch = partition(&image, id as u32, config.tile_size)?;
            for (tile, &origin) in batch.tiles.iter().zip(&batch.origins) {
                let lat = encode_tile(tile, origin, &weights)?;
                let lat_path = g.out_dir.join("lat").join(artifact_name(origin, "lat"));
                std::fs::create_dir_all(lat_path.parent().unwrap())?;
                summary.total_lat_bytes += persist_artifacts(&lat, &lat_path)? as u64;
                manifest.record(lat_path);
                let stream = encode_latents_cached(&lat, &coder, &mut cache)?;
                let bytes = stream.to_bytes();
                summary.total_fenc_bytes += bytes.len() as u64;
                summary.estimate_bits += estimate_bits(&lat, &coder)?;
                summary.tiles += 1;
                summary.tile_pixels += u64::from(config.tile_size).pow(2);
                write(&mut manifest, g.out_dir.join("fenc").join(artifact_name(origin, "fenc")), &bytes)?;
            }
            Ok(())
        };
        if let Err(e) = one() {
            eprintln!("error: {}: {e:#}", path.display());
            summary.failed.push(path.display().to_string());
        }
    }
    if summary.tile_pixels > 0 {
        summary.achieved_bpp = 8.0 * summary.total_fenc_bytes as f64 / summary.tile_pixels as f64;
    }
    let summary_path = g.out_dir.join("encode.json");
    let env = ReportEnvelope::new(ReportKind::Encode, &summary)?;
    write(&mut manifest, summary_path, env.to_json().as_bytes())?;
    let manifest_path = finish_manifest(g, manifest, "encode")?;
    emit(g, &summary, || {
        println!(
            "encoded {} tiles from {} files: {} bytes, {:.4} bpp",
            summary.tiles,
            summary.files - summary.failed.len(),
            summary.total_fenc_bytes,
            summary.achieved_bpp
        );
        println!("manifest: {}", manifest_path.display());
    });
    if summary.failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Operational(anyhow!("{} of {} inputs failed", summary.failed.len(), summary.files)))
    }
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, num_args = 1.., required = true)]
    fenc: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    lat: Vec<PathBuf>,
}

#[derive(Serialize)]
struct VerifyRow {
    fenc: PathBuf,
    lat: PathBuf,
    ok: bool,
    detail: String,
}

fn verify_pair(fenc: &Path, lat: &Path) -> anyhow::Result<Option<String>> {
    let bytes = std::fs::read(fenc).with_context(|| format!("reading {}", fenc.display()))?;
    let stream = EncodedStream::from_bytes(&bytes)?;
    let a = load_artifacts(lat)?;
    if stream.header.tile != a.tile {
        return Ok(Some(format!("tile {:?} in stream, {:?} in artifacts", stream.header.tile, a.tile)));
    }
    let (y, z) = decode_latents(&stream, &a.mu.data, &a.sigma.data)?;
    let decoded = z.data.iter().chain(&y.data);
    let expected = a.z_hat.data.iter().chain(&a.y_hat.data);
    if let Some((i, (d, e))) = decoded.zip(expected).enumerate().find(|(_, (d, e))| d != e) {
        let t = a.tile;
        return Ok(Some(format!(
            "tile img{} r{} c{}: first difference at symbol {i} (decoded {d}, expected {e})",
            t.image_id, t.row, t.col
        )));
    }
    Ok(None)
}

pub fn verify(g: &Global, a: VerifyArgs) -> CmdResult {
    if a.fenc.len() != a.lat.len() {
        return Err(config_error(format!("{} .fenc files but {} .lat files", a.fenc.len(), a.lat.len())));
    }
    let rows: Vec<VerifyRow> = a
        .fenc
        .iter()
        .zip(&a.lat)
        .map(|(f, l)| {
            let (ok, detail) = match verify_pair(f, l) {
                Ok(None) => (true, "symbols identical".to_string()),
                Ok(Some(d)) => (false, d),
                Err(e) => (false, format!("{e:#}")),
            };
            VerifyRow { fenc: f.clone(), lat: l.clone(), ok, detail }
        })
        .collect();
    let failed = rows.iter().filter(|r| !r.ok).count();
    emit(g, &rows, || {
        for r in &rows {
            println!("{} {}: {}", if r.ok { "ok  " } else { "FAIL" }, r.fenc.display(), r.detail);
        }
    });
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Operational(anyhow!("{failed} of {} pairs failed verification", rows.len())))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunnerKind {
    /// Closed-form cost model, no computation
    Synthetic,
    /// Toy encoder alone
    Transform,
    /// Full sequential pipeline
    Pipeline,
}

#[derive(Args)]
pub struct ProfileArgs {
    /// JSON grid file {tile_sizes, batch_sizes, size_classes}
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    tiles: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    batches: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    classes: Option<Vec<ClassArg>>,
    /// Codec family from the bundled profiles, or a JSON file of codec profiles
    #[arg(long)]
    codec: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    warmups: Option<usize>,
    #[arg(long, value_enum, default_value = "transform")]
    runner: RunnerKind,
    /// Uncompressed bits per pixel of the input
    #[arg(long, default_value_t = 24.0)]
    bpp_raw: f64,
}

#[derive(Serialize)]
struct ProfileConfig {
    grid: ProfileGrid,
    codecs: Vec<CodecProfile>,
    repeats: usize,
    warmups: usize,
    runner: RunnerKind,
    bpp_raw: f64,
    seed: u64,
}

fn load_codecs(spec: &str) -> Result<Vec<CodecProfile>, Failure> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())));
    }
    let list: Vec<CodecProfile> = fixtures::codecs()?.into_iter().filter(|c| c.family.eq_ignore_ascii_case(spec)).collect();
    if list.is_empty() {
        return Err(config_error(format!("no bundled codec family {spec:?}")));
    }
    Ok(list)
}

pub fn profile(g: &Global, cfg: &FileConfig, a: ProfileArgs) -> CmdResult {
    let mut grid = match &a.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => cfg.grid.clone().unwrap_or_default(),
    };
    if let Some(t) = a.tiles {
        grid.tile_sizes = t;
    }
    if let Some(b) = a.batches {
        grid.batch_sizes = b;
    }
    if let Some(c) = a.classes {
        grid.size_classes = c.into_iter().map(Into::into).collect();
    }
    grid.validate()?;
    let seed = seed(g, cfg);
    let config = ProfileConfig {
        codecs: load_codecs(a.codec.as_deref().or(cfg.codec_family.as_deref()).unwrap_or("FOOL"))?,
        grid,
        repeats: a.repeats.or(cfg.repeats).unwrap_or(SweepOptions::default().repeats),
        warmups: a.warmups.or(cfg.warmups).unwrap_or(SweepOptions::default().warmups),
        runner: a.runner,
        bpp_raw: a.bpp_raw,
        seed,
    };
    let mut manifest = RunManifest::start("profile", &config, seed)?;
    let mut runner: Box<dyn ProfileRunner> = match config.runner {
        RunnerKind::Synthetic => Box::new(SyntheticCostModel::default()),
        RunnerKind::Transform => Box::new(TransformRunner::new(seed)),
        RunnerKind::Pipeline => Box::new(PipelineRunner { base: PipelineConfig { seed, ..Default::default() }, samples: 2 }),
    };
    let opts = SweepOptions { repeats: config.repeats, warmups: config.warmups };
    let measurements = sweep(&config.grid, runner.as_mut(), opts)?;
    let result = select_best(&measurements, &config.codecs, config.bpp_raw)?;
    let env = ReportEnvelope::new(ReportKind::Profile, &result)?;
    write(&mut manifest, g.out_dir.join("profile.json"), env.to_json().as_bytes())?;
    write(&mut manifest, g.out_dir.join("profile.csv"), reports::profile_csv(&result.grid)?.as_bytes())?;
    finish_manifest(g, manifest, "profile")?;
    emit(g, &result, || {
        let c = result.chosen_cell;
        println!(
            "best: {} tile {} batch {} -> {:.4e} TCR/s ({} cells, {} failed)",
            result.chosen_codec,
            c.tile_size,
            c.batch_size,
            result.expected_tcr_per_s,
            result.grid.len(),
            result.grid.iter().filter(|m| m.error.is_some()).count()
        );
    });
    Ok(())
}

#[derive(Args)]
pub struct PipelineArgs {
    /// Input images; when empty, --synthetic images are generated
    inputs: Vec<PathBuf>,
    /// Number of seeded synthetic images of mixed sizes
    #[arg(long, default_value_t = 8)]
    synthetic: usize,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    tile: Option<u32>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
    #[arg(long)]
    tiling_workers: Option<usize>,
    #[arg(long)]
    transform_workers: Option<usize>,
    #[arg(long)]
    entropy_workers: Option<usize>,
    /// Per-wait stall limit in seconds
    #[arg(long)]
    watchdog: Option<f64>,
}

pub fn pipeline(g: &Global, cfg: &FileConfig, a: PipelineArgs) -> CmdResult {
    let seed = seed(g, cfg);
    let mut workers = cfg.workers.unwrap_or_default();
    workers = StageWorkers {
        tiling: a.tiling_workers.unwrap_or(workers.tiling),
        transform: a.transform_workers.unwrap_or(workers.transform),
        entropy: a.entropy_workers.unwrap_or(workers.entropy),
    };
    if let Some(cap) = thread_cap().map_err(Failure::Config)? {
        workers = workers.capped(cap);
    }
    let watchdog_s = a.watchdog.or(cfg.watchdog_s).unwrap_or(pipeline::DEFAULT_WATCHDOG.as_secs_f64());
    if !(watchdog_s.is_finite() && watchdog_s > 0.0) {
        return Err(config_error("--watchdog must be > 0"));
    }
    let config = PipelineConfig {
        tile_size: a.tile.or(cfg.tile_size).unwrap_or(512),
        batch_size: a.batch.or(cfg.batch_size).unwrap_or(1),
        group_len: cfg.group_len.unwrap_or(1),
        size_class: a.class.map(Into::into).or(cfg.size_class).unwrap_or(SizeClass::S),
        mode: a.mode.or(cfg.mode).unwrap_or(Mode::Concurrent),
        workers,
        seed,
        z_scale: cfg.z_scale.unwrap_or(DEFAULT_Z_SCALE),
        watchdog: Duration::from_secs_f64(watchdog_s),
        artifact_dir: Some(g.out_dir.join("lat")),
        ..Default::default()
    };
    config.validate()?;
    let inputs: Vec<SampleInput> = if a.inputs.is_empty() {
        (0..a.synthetic)
            .map(|i| SampleInput::Synthetic {
                height: 256 + 96 * (i as u32 % 3),
                width: 320 + 64 * (i as u32 % 4),
                seed: seed.wrapping_add(i as u64),
            })
            .collect()
    } else {
        a.inputs.iter().cloned().map(SampleInput::Path).collect()
    };
    if inputs.is_empty() {
        return Err(config_error("no inputs"));
    }
    let mut manifest = RunManifest::start("pipeline run", &config, seed)?;
    let run = pipeline::run(&inputs, &config)?;
    for t in &run.tiles {
        if let Some(p) = &t.lat_path {
            manifest.record(p.clone());
        }
    }
    for p in write_streams(&run.tiles, &g.out_dir.join("fenc"))? {
        manifest.record(p);
    }
    let env = ReportEnvelope::new(ReportKind::Pipeline, &run.report)?;
    write(&mut manifest, g.out_dir.join("pipeline.json"), env.to_json().as_bytes())?;
    write(&mut manifest, g.out_dir.join("trace.csv"), trace_csv(&run.report.trace).as_bytes())?;
    finish_manifest(g, manifest, "pipeline")?;
    let r = &run.report;
    emit(g, r, || {
        println!(
            "{:?}: {} samples, {} tiles in {:.3} s -> {:.4e} PP/s, {:.4} bpp, {:.4e} TCR/s, max queue occupancy {:?}",
            r.mode, r.samples, r.tiles, r.wall_s, r.pixels_per_s, r.achieved_bpp, r.tcr_per_s, r.max_queue_occupancy
        );
    });
    Ok(())
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Mission file naming a sensor, device, links and codecs
    #[arg(long)]
    mission: PathBuf,
}

#[derive(Serialize)]
struct EnergyRow {
    link: String,
    codec: String,
    energy_to_double_j: f64,
    transmission_savings_j: f64,
}

#[derive(Serialize)]
struct SimulateOutput {
    mission: MissionFile,
    passes: Vec<PassReport>,
    energy: Vec<EnergyRow>,
}

pub fn simulate(g: &Global, a: SimulateArgs) -> CmdResult {
    let mission = MissionFile::load(&a.mission)?;
    let profiles = mission.expand()?;
    let mut manifest = RunManifest::start("simulate", &mission, g.seed.unwrap_or(0))?;
    let mut passes = Vec::with_capacity(profiles.len());
    let mut energy = Vec::with_capacity(profiles.len());
    for m in &profiles {
        passes.push(simulate_pass(m)?);
        energy.push(EnergyRow {
            link: m.link.name.clone(),
            codec: m.codec.name.clone(),
            energy_to_double_j: energy_to_double(&m.device, &m.link, &m.codec, m.bpp_raw())?,
            transmission_savings_j: transmission_savings(&m.device, &m.link, &m.codec, m.bpp_raw())?,
        });
    }
    let out = SimulateOutput { mission, passes, energy };
    let env = ReportEnvelope::new(ReportKind::Simulate, &out)?;
    write(&mut manifest, g.out_dir.join("simulate.json"), env.to_json().as_bytes())?;
    write(&mut manifest, g.out_dir.join("simulate.csv"), reports::pass_csv(&out.passes)?.as_bytes())?;
    finish_manifest(g, manifest, "simulate")?;
    emit(g, &out, || {
        for p in &out.passes {
            println!(
                "{:<14} {:<8} raw-equivalent {:>10.3} GB  gain {:>7.2}x  saturated {}",
                p.link,
                p.codec,
                p.raw_equivalent_bytes / 1e9,
                p.gain_factor,
                p.saturation
            );
        }
    });
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureKind {
    All,
    Links,
    Devices,
    Codecs,
    Selection,
}

pub fn fixtures_list(g: &Global, kind: FixtureKind) -> CmdResult {
    let want = |k: FixtureKind| matches!(kind, FixtureKind::All) || std::mem::discriminant(&k) == std::mem::discriminant(&kind);
    let mut all = serde_json::Map::new();
    if want(FixtureKind::Links) {
        all.insert("links".into(), serde_json::to_value(fixtures::links()?)?);
    }
    if want(FixtureKind::Devices) {
        all.insert("devices".into(), serde_json::to_value(fixtures::devices()?)?);
    }
    if want(FixtureKind::Codecs) {
        all.insert("codecs".into(), serde_json::to_value(fixtures::codecs()?)?);
    }
    if want(FixtureKind::Selection) {
        all.insert("selection".into(), serde_json::to_value(fixtures::selection_table()?)?);
    }
    emit(g, &all, || {
        if want(FixtureKind::Links) {
            for l in fixtures::links().unwrap_or_default() {
                println!("link    {:<14} {:>6} Mbps {:>5} s", l.name, l.rate_mbps, l.pass_duration_s);
            }
        }
        if want(FixtureKind::Devices) {
            for d in fixtures::devices().unwrap_or_default() {
                println!("device  {:<14} {:.4e} px/s  {} W cap", d.name, d.calibrated_pps, d.power_cap_w);
            }
        }
        if want(FixtureKind::Codecs) {
            for c in fixtures::codecs().unwrap_or_default() {
                println!("codec   {:<14} mean {:.4} bpp  {} params", c.name, c.mean_bpp(), c.encoder_params);
            }
        }
        if want(FixtureKind::Selection) {
            for r in fixtures::selection_table().unwrap_or_default() {
                println!(
                    "select  {:<10} {}-{} tile {} batch {} {:.4e} TCR/s{}",
                    r.device,
                    r.family,
                    r.size_class,
                    r.tile_size,
                    r.batch_size,
                    r.tcr_per_s(),
                    if r.selected { "  *" } else { "" }
                );
            }
        }
    });
    Ok(())
}

#[derive(Args)]
pub struct ReportArgs {
    /// JSON report written by profile, simulate or pipeline run
    input: PathBuf,
    /// Output CSV path; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn report(_g: &Global, a: ReportArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let env = ReportEnvelope::parse(&text)?;
    let csv = reports::envelope_to_csv(&env)?;
    match a.output {
        Some(p) => reports::write_text(&p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}
