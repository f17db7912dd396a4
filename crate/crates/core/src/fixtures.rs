//! Bundled reference data: mission links, edge devices, codec rate profiles,
//! the throughput-selection table and the toy encoder size classes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::SizeClass;
use crate::downlink::{CaptureSupply, DeviceProfile, MissionProfile};
use crate::error::{Error, Result};
use crate::orbit::{LinkSpec, SensorSpec};
use crate::profiler::{select_best, CodecProfile, ProfileCell, ProfileMeasurement};

const LINKS: &str = include_str!("../fixtures/links.json");
const DEVICES: &str = include_str!("../fixtures/devices.json");
const CODECS: &str = include_str!("../fixtures/codecs.json");
const SELECTION: &str = include_str!("../fixtures/selection_table.json");
const SIZE_CLASSES: &str = include_str!("../fixtures/size_classes.json");
const OVERHEAD: &str = include_str!("../fixtures/overhead_reference.json");
pub const EXAMPLE_MISSION: &str = include_str!("../fixtures/missions/rgb-nanosat.json");

/// Every bundled codec profile assumes 8-bit RGB input.
pub const FIXTURE_BPP_RAW: f64 = 24.0;

fn parse<T: for<'de> Deserialize<'de>>(name: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("fixture {name}: {e}")))
}

pub fn links() -> Result<Vec<LinkSpec>> {
    parse("links", LINKS)
}

pub fn devices() -> Result<Vec<DeviceProfile>> {
    parse("devices", DEVICES)
}

pub fn codecs() -> Result<Vec<CodecProfile>> {
    parse("codecs", CODECS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub device: String,
    pub family: String,
    pub size_class: SizeClass,
    pub tile_size: u32,
    pub batch_size: usize,
    pub published_tcr_per_s: f64,
    /// Replaces the published value where its exponent is off by ten.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_tcr_per_s: Option<f64>,
    pub selected: bool,
}

impl SelectionRow {
    pub fn tcr_per_s(&self) -> f64 {
        self.corrected_tcr_per_s.unwrap_or(self.published_tcr_per_s)
    }
}

pub fn selection_table() -> Result<Vec<SelectionRow>> {
    parse("selection_table", SELECTION)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeClassEntry {
    pub size_class: SizeClass,
    pub widths: [usize; 4],
    pub latent_channels: usize,
    pub hyper_channels: usize,
}

pub fn size_classes() -> Result<Vec<SizeClassEntry>> {
    parse("size_classes", SIZE_CLASSES)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReference {
    pub model: String,
    pub tcr_decrease_pct: f64,
    pub file_size_mb: f64,
}

pub fn overhead_reference() -> Result<Vec<OverheadReference>> {
    parse("overhead_reference", OVERHEAD)
}

fn by_name<T: Clone>(items: &[T], name: &str, what: &str, key: impl Fn(&T) -> &str) -> Result<T> {
    items
        .iter()
        .find(|x| key(x).eq_ignore_ascii_case(name))
        .cloned()
        .ok_or_else(|| {
            let known: Vec<&str> = items.iter().map(&key).collect();
            Error::Config(format!("unknown {what} {name:?}; known: {}", known.join(", ")))
        })
}

pub fn link(name: &str) -> Result<LinkSpec> {
    by_name(&links()?, name, "link", |l| &l.name)
}

pub fn device(name: &str) -> Result<DeviceProfile> {
    by_name(&devices()?, name, "device", |d| &d.name)
}

pub fn codec(name: &str) -> Result<CodecProfile> {
    by_name(&codecs()?, name, "codec", |c| &c.name)
}

/// A mission description naming bundled links, codecs and a device; expands
/// to one [`MissionProfile`] per link × codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionFile {
    pub name: String,
    pub sensor: SensorSpec,
    pub device: String,
    pub links: Vec<String>,
    pub codecs: Vec<String>,
    pub inter_pass_s: f64,
    #[serde(default)]
    pub capture: CaptureSupply,
}

impl MissionFile {
    pub fn parse(text: &str) -> Result<Self> {
        let m: MissionFile = serde_json::from_str(text).map_err(|e| Error::Config(format!("mission: {e}")))?;
        if m.links.is_empty() || m.codecs.is_empty() {
            return Err(Error::Config("mission needs at least one link and one codec".into()));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn expand(&self) -> Result<Vec<MissionProfile>> {
        let device = device(&self.device)?;
        let mut out = Vec::new();
        for l in &self.links {
            let link = link(l)?;
            for c in &self.codecs {
                let m = MissionProfile {
                    link: link.clone(),
                    sensor: self.sensor.clone(),
                    codec: codec(c)?,
                    device: device.clone(),
                    inter_pass_s: self.inter_pass_s,
                    capture: self.capture,
                };
                m.validate()?;
                out.push(m);
            }
        }
        Ok(out)
    }
}

/// Outcome of re-running the selection on one device × family block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub device: String,
    pub family: String,
    pub expected: String,
    pub chosen: String,
    pub chosen_tcr_per_s: f64,
}

impl ReplayOutcome {
    pub fn matches(&self) -> bool {
        self.expected == self.chosen
    }
}

/// Recovers PP/s from each row's TCR/s and the family's mean bpp, then asks
/// [`select_best`] to pick again.
pub fn replay_selection() -> Result<Vec<ReplayOutcome>> {
    let rows = selection_table()?;
    let all_codecs = codecs()?;
    let mut blocks: Vec<(String, String)> = Vec::new();
    for r in &rows {
        let key = (r.device.clone(), r.family.clone());
        if !blocks.contains(&key) {
            blocks.push(key);
        }
    }
    blocks
        .into_iter()
        .map(|(device, family)| {
            let block: Vec<&SelectionRow> = rows.iter().filter(|r| r.device == device && r.family == family).collect();
            let fam_codecs: Vec<CodecProfile> = all_codecs.iter().filter(|c| c.family == family).cloned().collect();
            let mut measurements = Vec::new();
            for r in &block {
                let codec = fam_codecs
                    .iter()
                    .find(|c| c.size_class == r.size_class)
                    .ok_or_else(|| Error::Config(format!("no {family} codec for class {}", r.size_class)))?;
                let pps = r.tcr_per_s() / (FIXTURE_BPP_RAW - codec.mean_bpp());
                let cell = ProfileCell { tile_size: r.tile_size, batch_size: r.batch_size, size_class: r.size_class };
                measurements.push(ProfileMeasurement::from_pixels_per_s(cell, pps));
            }
            let result = select_best(&measurements, &fam_codecs, FIXTURE_BPP_RAW)?;
            let expected = block
                .iter()
                .find(|r| r.selected)
                .map(|r| format!("{family}-{}", r.size_class))
                .ok_or_else(|| Error::Config(format!("{device}/{family} has no selected row")))?;
            Ok(ReplayOutcome { device, family, expected, chosen: result.chosen_codec, chosen_tcr_per_s: result.expected_tcr_per_s })
        })
        .collect()
}
