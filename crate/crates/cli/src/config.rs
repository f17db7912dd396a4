use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use oec_core::pipeline::{Mode, StageWorkers};
use oec_core::profiler::ProfileGrid;
use oec_core::SizeClass;

/// Defaults read from `--config`; command-line flags take precedence.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub tile_size: Option<u32>,
    pub batch_size: Option<usize>,
    pub group_len: Option<usize>,
    pub size_class: Option<SizeClass>,
    pub mode: Option<Mode>,
    pub workers: Option<StageWorkers>,
    pub z_scale: Option<f32>,
    pub watchdog_s: Option<f64>,
    pub repeats: Option<usize>,
    pub warmups: Option<usize>,
    pub grid: Option<ProfileGrid>,
    pub codec_family: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Caps worker counts from `OEC_BENCH_THREADS` when set.
pub fn thread_cap() -> anyhow::Result<Option<usize>> {
    match std::env::var("OEC_BENCH_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("OEC_BENCH_THREADS={v:?} is not a count"))?;
            anyhow::ensure!(n > 0, "OEC_BENCH_THREADS must be >= 1");
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}
