//! Downlink pass simulation: how much raw capture a pass can carry once the
//! onboard codec has shrunk it, and what that costs in compute and radio
//! energy.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::orbit::{link_capacity_bytes, volume_per_pass_bytes, LinkSpec, SensorSpec};
use crate::profiler::CodecProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub compute_power_w: f64,
    pub transmit_power_w: f64,
    /// Pixels per second of the selected pipeline configuration.
    pub calibrated_pps: f64,
    pub power_cap_w: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("compute_power_w", self.compute_power_w)?;
        ensure_positive("transmit_power_w", self.transmit_power_w)?;
        ensure_positive("calibrated_pps", self.calibrated_pps)?;
        ensure_positive("power_cap_w", self.power_cap_w)?;
        if self.compute_power_w > self.power_cap_w {
            return Err(Error::invalid(
                "compute_power_w",
                format!("{} W exceeds the {} W cap", self.compute_power_w, self.power_cap_w),
            ));
        }
        Ok(())
    }
}

/// Where the raw data processed between passes comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bytes")]
pub enum CaptureSupply {
    /// Whatever the sensor captures in one orbit.
    #[default]
    Orbit,
    /// Never runs dry.
    Unlimited,
    Bytes(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionProfile {
    pub link: LinkSpec,
    pub sensor: SensorSpec,
    pub codec: CodecProfile,
    pub device: DeviceProfile,
    pub inter_pass_s: f64,
    #[serde(default)]
    pub capture: CaptureSupply,
}

impl MissionProfile {
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.sensor.validate()?;
        self.device.validate()?;
        self.codec.validate(self.bpp_raw())?;
        if !(self.inter_pass_s.is_finite() && self.inter_pass_s >= 0.0) {
            return Err(Error::invalid("inter_pass_s", format!("must be finite and >= 0, got {}", self.inter_pass_s)));
        }
        if let CaptureSupply::Bytes(b) = self.capture {
            ensure_positive("capture.bytes", b)?;
        }
        Ok(())
    }

    pub fn bpp_raw(&self) -> f64 {
        self.sensor.raw_bpp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub link: String,
    pub codec: String,
    pub device: String,
    pub bpp_raw: f64,
    pub bpp_codec: f64,
    pub link_capacity_bytes: f64,
    pub processed_raw_bytes: f64,
    pub encoded_bytes: f64,
    pub encoded_bytes_transmitted: f64,
    /// Raw bytes sent uncompressed to fill capacity the encoded data left idle.
    pub raw_fill_bytes: f64,
    pub raw_equivalent_bytes: f64,
    pub saturation: bool,
    pub deadline_met: bool,
    pub compute_energy_j: f64,
    pub transmit_energy_j: f64,
    pub gain_factor: f64,
}

fn check_bpp(bpp_raw: f64, bpp_codec: f64) -> Result<()> {
    ensure_positive("bpp_raw", bpp_raw)?;
    if !(bpp_codec > 0.0 && bpp_codec <= bpp_raw) {
        return Err(Error::invalid(
            "bpp_codec",
            format!("must satisfy 0 < bpp_codec <= bpp_raw, got {bpp_codec} vs {bpp_raw}"),
        ));
    }
    Ok(())
}

/// Raw capture bytes a saturated pass represents.
pub fn downlinkable_raw_equivalent(link: &LinkSpec, bpp_raw: f64, bpp_codec: f64) -> Result<f64> {
    check_bpp(bpp_raw, bpp_codec)?;
    Ok(link_capacity_bytes(link)? * (bpp_raw / bpp_codec))
}

pub fn simulate_pass(mission: &MissionProfile) -> Result<PassReport> {
    mission.validate()?;
    let bpp_raw = mission.bpp_raw();
    let bpp_codec = mission.codec.mean_bpp();
    let v_link = link_capacity_bytes(&mission.link)?;
    let orbit_capture = volume_per_pass_bytes(std::slice::from_ref(&mission.sensor))?;
    let available = match mission.capture {
        CaptureSupply::Orbit => orbit_capture,
        CaptureSupply::Unlimited => f64::INFINITY,
        CaptureSupply::Bytes(b) => b,
    };
    let dev = &mission.device;
    let bytes_per_px = bpp_raw / 8.0;

    let processed = available.min(dev.calibrated_pps * mission.inter_pass_s * bytes_per_px);
    let encoded = processed * bpp_codec / bpp_raw;
    let saturation = encoded >= v_link;
    let encoded_tx = encoded.min(v_link);
    let raw_fill = (v_link - encoded_tx).min(available - processed).max(0.0);
    let raw_equivalent = encoded_tx * bpp_raw / bpp_codec + raw_fill;

    let tx_s = (encoded_tx + raw_fill) * 8.0 / (mission.link.rate_mbps * 1e6);
    Ok(PassReport {
        link: mission.link.name.clone(),
        codec: mission.codec.name.clone(),
        device: dev.name.clone(),
        bpp_raw,
        bpp_codec,
        link_capacity_bytes: v_link,
        processed_raw_bytes: processed,
        encoded_bytes: encoded,
        encoded_bytes_transmitted: encoded_tx,
        raw_fill_bytes: raw_fill,
        raw_equivalent_bytes: raw_equivalent,
        saturation,
        deadline_met: processed >= orbit_capture,
        compute_energy_j: dev.compute_power_w * processed / (dev.calibrated_pps * bytes_per_px),
        transmit_energy_j: dev.transmit_power_w * tx_s,
        gain_factor: raw_equivalent / v_link,
    })
}

/// Compute energy to encode enough raw data that one pass carries twice the
/// bent-pipe volume.
pub fn energy_to_double(device: &DeviceProfile, link: &LinkSpec, codec: &CodecProfile, bpp_raw: f64) -> Result<f64> {
    device.validate()?;
    codec.validate(bpp_raw)?;
    let raw = 2.0 * link_capacity_bytes(link)?;
    Ok(device.compute_power_w * raw / (device.calibrated_pps * bpp_raw / 8.0))
}

/// Radio energy avoided by sending the encoded pass instead of its raw
/// equivalent.
pub fn transmission_savings(device: &DeviceProfile, link: &LinkSpec, codec: &CodecProfile, bpp_raw: f64) -> Result<f64> {
    device.validate()?;
    let raw_eq = downlinkable_raw_equivalent(link, bpp_raw, codec.mean_bpp())?;
    let v_link = link_capacity_bytes(link)?;
    Ok(device.transmit_power_w * (raw_eq - v_link) * 8.0 / (link.rate_mbps * 1e6))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::SizeClass;
    use crate::profiler::ProfileSource;

    fn link(gb: f64, rate: f64) -> LinkSpec {
        LinkSpec { name: "l".into(), rate_mbps: rate, pass_duration_s: 600.0, data_per_pass_override_bytes: Some(gb * 1e9) }
    }

    fn codec(bpp: f64) -> CodecProfile {
        CodecProfile {
            name: "c".into(),
            family: "f".into(),
            size_class: SizeClass::S,
            bpp_by_task: [("t".to_string(), bpp)].into_iter().collect(),
            encoder_params: 0,
            source: ProfileSource::Fixture,
        }
    }

    fn device(pps: f64) -> DeviceProfile {
        DeviceProfile {
            name: "d".into(),
            compute_power_w: 15.0,
            transmit_power_w: 10.0,
            calibrated_pps: pps,
            power_cap_w: 15.0,
            notes: String::new(),
        }
    }

    fn mission(inter_pass_s: f64, bpp: f64) -> MissionProfile {
        MissionProfile {
            link: link(40.0, 560.0),
            sensor: SensorSpec {
                orbit_altitude_m: 500_000.0,
                capture_rate_hz: 1.0,
                spatial_res_m: (3.0, 3.0),
                bands: 3,
                radiometric_bits: 8,
                fov_deg: 3.0,
            },
            codec: codec(bpp),
            device: device(5e7),
            inter_pass_s,
            capture: CaptureSupply::Unlimited,
        }
    }

    #[test]
    fn worldview_nine_terabytes() {
        let v = downlinkable_raw_equivalent(&link(90.0, 1200.0), 24.0, 0.24).unwrap();
        assert!((v - 9e12).abs() < 1.0);
    }

    #[test]
    fn raw_equivalent_identities() {
        let l = link(40.0, 560.0);
        assert_eq!(downlinkable_raw_equivalent(&l, 24.0, 24.0).unwrap(), 40e9);
        let a = downlinkable_raw_equivalent(&l, 24.0, 0.5).unwrap();
        let b = downlinkable_raw_equivalent(&l, 24.0, 0.25).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-3);
        assert!(downlinkable_raw_equivalent(&l, 24.0, 25.0).is_err());
        assert!(downlinkable_raw_equivalent(&l, 24.0, 0.0).is_err());
    }

    #[test]
    fn zero_inter_pass_is_bent_pipe() {
        let r = simulate_pass(&mission(0.0, 0.24)).unwrap();
        assert_eq!(r.processed_raw_bytes, 0.0);
        assert_eq!(r.raw_equivalent_bytes, 40e9);
        assert_eq!(r.gain_factor, 1.0);
        assert!(!r.saturation);
        assert_eq!(r.compute_energy_j, 0.0);
    }

    #[test]
    fn saturated_gain_is_rate_ratio() {
        let r = simulate_pass(&mission(1e6, 0.24)).unwrap();
        assert!(r.saturation);
        assert!((r.gain_factor - 100.0).abs() < 1e-9);
        assert_eq!(r.raw_fill_bytes, 0.0);
        assert!(r.compute_energy_j > 0.0 && r.transmit_energy_j > 0.0);
    }

    #[test]
    fn partial_pass_fills_with_raw() {
        // 5e7 px/s · 100 s · 3 B = 1.5e10 B processed → 1.5e8 B encoded
        let r = simulate_pass(&mission(100.0, 0.24)).unwrap();
        assert!(!r.saturation);
        assert!((r.encoded_bytes - 1.5e8).abs() < 1.0);
        assert!((r.raw_fill_bytes - (40e9 - 1.5e8)).abs() < 1.0);
        assert!((r.raw_equivalent_bytes - (1.5e10 + 40e9 - 1.5e8)).abs() < 10.0);
    }

    #[test]
    fn deadline_flag_not_enforced() {
        let mut m = mission(1.0, 0.24);
        m.capture = CaptureSupply::Orbit;
        let r = simulate_pass(&m).unwrap();
        assert!(!r.deadline_met);
        assert!(r.processed_raw_bytes > 0.0);
    }

    #[test]
    fn replay_is_identical() {
        let m = mission(321.0, 0.3);
        assert_eq!(simulate_pass(&m).unwrap(), simulate_pass(&m).unwrap());
    }

    #[test]
    fn energy_to_double_example() {
        // 80 GB raw at 3 B/px = 2.6667e10 px; at 5e7 px/s that is 533.33 s; × 15 W
        let e = energy_to_double(&device(5e7), &link(40.0, 560.0), &codec(0.24), 24.0).unwrap();
        assert!((e - 8000.0).abs() < 1e-6);
        let half = energy_to_double(&device(1e8), &link(40.0, 560.0), &codec(0.24), 24.0).unwrap();
        assert!((half - 4000.0).abs() < 1e-6);
    }

    #[test]
    fn transmission_savings_examples() {
        let wv = link(90.0, 1200.0);
        let mut d = device(5e7);
        d.transmit_power_w = 1.0;
        let s = transmission_savings(&d, &wv, &codec(0.24), 24.0).unwrap();
        assert!((s - 59_400.0).abs() < 1e-6);
        assert_eq!(transmission_savings(&d, &wv, &codec(23.999_999_999), 24.0).unwrap().round(), 0.0);
        d.transmit_power_w = 3.0;
        assert!((transmission_savings(&d, &wv, &codec(0.24), 24.0).unwrap() - 3.0 * s).abs() < 1e-6);
    }

    #[test]
    fn device_validation() {
        let mut d = device(1.0);
        d.compute_power_w = 20.0;
        assert!(d.validate().is_err());
        assert!(device(0.0).validate().is_err());
    }
}
