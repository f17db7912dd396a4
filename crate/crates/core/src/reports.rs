//! Run manifests and the CSV / JSON report formats.
//!
//! Every JSON report is wrapped in a [`ReportEnvelope`] carrying the schema
//! version; CSV column orders are fixed by the `*_COLUMNS` constants.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::downlink::PassReport;
use crate::error::{Error, Result};
use crate::pipeline::InterferenceReport;
use crate::profiler::ProfileMeasurement;

pub const SCHEMA_VERSION: u32 = 1;

pub const PROFILE_COLUMNS: &[&str] = &[
    "tile_size", "batch_size", "size_class", "img_per_s", "pixels_per_s", "tcr_per_s", "repeats", "dispersion", "error",
];

pub const PASS_COLUMNS: &[&str] = &[
    "link",
    "codec",
    "device",
    "bpp_raw",
    "bpp_codec",
    "link_capacity_bytes",
    "processed_raw_bytes",
    "encoded_bytes_transmitted",
    "raw_fill_bytes",
    "raw_equivalent_bytes",
    "gain_factor",
    "saturation",
    "deadline_met",
    "compute_energy_j",
    "transmit_energy_j",
];

pub const OVERHEAD_COLUMNS: &[&str] = &["mode", "cores", "round", "transform_only_pixels_per_s", "concurrent_pixels_per_s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Encode,
    Pipeline,
    Profile,
    Simulate,
    Overhead,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub schema_version: u32,
    pub kind: ReportKind,
    pub payload: serde_json::Value,
}

impl ReportEnvelope {
    pub fn new<T: Serialize>(kind: ReportKind, payload: &T) -> Result<Self> {
        let payload = serde_json::to_value(payload).map_err(|e| Error::Config(format!("serialize report: {e}")))?;
        Ok(ReportEnvelope { schema_version: SCHEMA_VERSION, kind, payload })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let env: ReportEnvelope = serde_json::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))?;
        check_schema(env.schema_version)?;
        Ok(env)
    }

    pub fn payload<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        serde_json::from_value(self.payload.clone()).map_err(|e| Error::Config(format!("{:?} payload: {e}", self.kind)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }
}

pub fn check_schema(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Config(format!("schema version {found} is not supported (expected {SCHEMA_VERSION})")));
    }
    Ok(())
}

/// Everything needed to rerun a command and the list of what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn start<T: Serialize>(command: &str, config: &T, seed: u64) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::Config(format!("serialize config: {e}")))?;
        Ok(RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config_hash: config_hash(&config),
            config,
            seed,
            started_unix_s: unix_now(),
            finished_unix_s: 0.0,
            versions: [("oec-core".to_string(), env!("CARGO_PKG_VERSION").to_string())].into_iter().collect(),
            outputs: Vec::new(),
        })
    }

    pub fn record(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    pub fn finish(&mut self) {
        self.finished_unix_s = unix_now();
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        check_schema(m.schema_version)?;
        Ok(m)
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// CRC-32 of the canonical (key-sorted) JSON form.
pub fn config_hash(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("value serializes");
    format!("{:08x}", crc32fast::hash(canonical.as_bytes()))
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new())
}

fn finish(mut w: csv::Writer<Vec<u8>>) -> Result<String> {
    w.flush().map_err(|e| Error::Config(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

pub fn profile_csv(rows: &[ProfileMeasurement]) -> Result<String> {
    let mut w = writer();
    w.write_record(PROFILE_COLUMNS).map_err(csv_err)?;
    for m in rows {
        w.write_record([
            m.tile_size.to_string(),
            m.batch_size.to_string(),
            m.size_class.to_string(),
            m.img_per_s.to_string(),
            m.pixels_per_s.to_string(),
            m.tcr_per_s.map(|v| v.to_string()).unwrap_or_default(),
            m.repeats.to_string(),
            m.dispersion.to_string(),
            m.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn pass_csv(rows: &[PassReport]) -> Result<String> {
    let mut w = writer();
    w.write_record(PASS_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.link.clone(),
            r.codec.clone(),
            r.device.clone(),
            r.bpp_raw.to_string(),
            r.bpp_codec.to_string(),
            r.link_capacity_bytes.to_string(),
            r.processed_raw_bytes.to_string(),
            r.encoded_bytes_transmitted.to_string(),
            r.raw_fill_bytes.to_string(),
            r.raw_equivalent_bytes.to_string(),
            r.gain_factor.to_string(),
            r.saturation.to_string(),
            r.deadline_met.to_string(),
            r.compute_energy_j.to_string(),
            r.transmit_energy_j.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn overhead_csv(rows: &[InterferenceReport]) -> Result<String> {
    let mut w = writer();
    w.write_record(OVERHEAD_COLUMNS).map_err(csv_err)?;
    for r in rows {
        let mode = serde_json::to_value(r.mode).expect("mode serializes");
        for (i, (a, b)) in r.transform_only_pixels_per_s.iter().zip(&r.concurrent_pixels_per_s).enumerate() {
            w.write_record([
                mode.as_str().unwrap_or_default().to_string(),
                r.cores.to_string(),
                i.to_string(),
                a.to_string(),
                b.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Converts a JSON report into its CSV table.
pub fn envelope_to_csv(env: &ReportEnvelope) -> Result<String> {
    check_schema(env.schema_version)?;
    match env.kind {
        ReportKind::Profile => {
            let grid: Vec<ProfileMeasurement> = match env.payload.get("grid") {
                Some(g) => serde_json::from_value(g.clone()).map_err(|e| Error::Config(e.to_string()))?,
                None => env.payload()?,
            };
            profile_csv(&grid)
        }
        ReportKind::Simulate => passes_csv(env),
        ReportKind::Overhead => overhead_csv(&env.payload::<Vec<InterferenceReport>>()?),
        ReportKind::Pipeline => {
            let trace: Vec<crate::pipeline::ItemTrace> = match env.payload.get("trace") {
                Some(t) => serde_json::from_value(t.clone()).map_err(|e| Error::Config(e.to_string()))?,
                None => Vec::new(),
            };
            Ok(crate::pipeline::trace_csv(&trace))
        }
        ReportKind::Encode => Err(Error::Config("encode reports have no tabular form".into())),
    }
}

fn passes_csv(env: &ReportEnvelope) -> Result<String> {
    let passes: Vec<PassReport> = match env.payload.get("passes") {
        Some(p) => serde_json::from_value(p.clone()).map_err(|e| Error::Config(e.to_string()))?,
        None => env.payload()?,
    };
    pass_csv(&passes)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
