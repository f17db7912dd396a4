//! Constellation and downlink-bottleneck arithmetic.
//!
//! Sensor geometry determines how many bits a single capture costs, the orbit
//! altitude determines how many captures accumulate between passes, and the
//! ground-station elevation mask bounds how many satellites can share the sky
//! without competing for the same downlink interval.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Standard gravitational parameter of the Earth, m³/s².
pub const GM_EARTH: f64 = 3.986004418e14;
/// Mean Earth radius, m.
pub const R_EARTH_M: f64 = 6.371e6;
/// Decimal gigabyte.
pub const GB: f64 = 1e9;

/// Imaging payload of a single satellite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub orbit_altitude_m: f64,
    pub capture_rate_hz: f64,
    /// Ground sample distance as (height, width) in metres.
    pub spatial_res_m: (f64, f64),
    pub bands: u32,
    pub radiometric_bits: u32,
    /// Full field of view in degrees.
    pub fov_deg: f64,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("orbit_altitude_m", self.orbit_altitude_m)?;
        ensure_positive("capture_rate_hz", self.capture_rate_hz)?;
        ensure_positive("spatial_res_m.0", self.spatial_res_m.0)?;
        ensure_positive("spatial_res_m.1", self.spatial_res_m.1)?;
        ensure_positive("fov_deg", self.fov_deg)?;
        if self.fov_deg >= 90.0 {
            return Err(Error::invalid("fov_deg", format!("must be < 90, got {}", self.fov_deg)));
        }
        if !(1..=16).contains(&self.bands) {
            return Err(Error::invalid("bands", format!("must be in [1, 16], got {}", self.bands)));
        }
        if !(1..=32).contains(&self.radiometric_bits) {
            return Err(Error::invalid(
                "radiometric_bits",
                format!("must be in [1, 32], got {}", self.radiometric_bits),
            ));
        }
        Ok(())
    }

    /// Uncompressed bits per pixel: bands × radiometric bits.
    pub fn raw_bpp(&self) -> f64 {
        f64::from(self.bands) * f64::from(self.radiometric_bits)
    }

    /// Ground pixels covered by one capture.
    pub fn pixels_per_capture(&self) -> f64 {
        let half = (self.fov_deg / 2.0).to_radians().tan();
        self.orbit_altitude_m.powi(2) * half * half / (self.spatial_res_m.0 * self.spatial_res_m.1)
    }
}

/// Downlink to a ground segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    pub rate_mbps: f64,
    pub pass_duration_s: f64,
    /// Published per-pass volume; authoritative over `rate × duration` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_per_pass_override_bytes: Option<f64>,
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("rate_mbps", self.rate_mbps)?;
        ensure_positive("pass_duration_s", self.pass_duration_s)?;
        if let Some(v) = self.data_per_pass_override_bytes {
            ensure_positive("data_per_pass_override_bytes", v)?;
        }
        Ok(())
    }

    /// Bytes per second at the nominal link rate.
    pub fn bytes_per_s(&self) -> f64 {
        self.rate_mbps * 1e6 / 8.0
    }
}

/// Satellites sharing one link, each assigned to a pass interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub satellites: Vec<SensorSpec>,
    pub link: LinkSpec,
    pub min_elevation_deg: f64,
    /// Satellite index → interval index.
    pub interval_assignment: BTreeMap<usize, usize>,
}

impl Constellation {
    /// Checks that the interval assignment partitions the satellite set.
    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        for s in &self.satellites {
            s.validate()?;
        }
        let n = self.satellites.len();
        if self.interval_assignment.len() != n
            || self.interval_assignment.keys().any(|&i| i >= n)
        {
            return Err(Error::invalid(
                "interval_assignment",
                format!("must assign each of the {n} satellites exactly once"),
            ));
        }
        Ok(())
    }

    /// Groups satellite indices by interval, each group sorted.
    pub fn groups(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (&sat, &interval) in &self.interval_assignment {
            groups.entry(interval).or_default().push(sat);
        }
        groups
    }

    /// Per-pass volume for every interval group.
    pub fn volume_per_interval_bytes(&self) -> Result<BTreeMap<usize, f64>> {
        self.validate()?;
        self.groups()
            .into_iter()
            .map(|(interval, members)| {
                let sensors: Vec<SensorSpec> =
                    members.iter().map(|&i| self.satellites[i].clone()).collect();
                volume_per_pass_bytes(&sensors).map(|v| (interval, v))
            })
            .collect()
    }
}

/// Bits produced by one capture.
pub fn capture_volume_bits(sensor: &SensorSpec) -> Result<f64> {
    sensor.validate()?;
    Ok(sensor.pixels_per_capture() * sensor.raw_bpp())
}

/// Orbital period for a circular orbit at the given altitude.
pub fn orbit_period_s(orbit_altitude_m: f64) -> Result<f64> {
    if !(orbit_altitude_m.is_finite() && orbit_altitude_m >= 0.0) {
        return Err(Error::invalid(
            "orbit_altitude_m",
            format!("must be finite and >= 0, got {orbit_altitude_m}"),
        ));
    }
    let r = orbit_altitude_m + R_EARTH_M;
    Ok(2.0 * std::f64::consts::PI * (r * r * r / GM_EARTH).sqrt())
}

/// Minimum angular separation (degrees) between two satellites such that they
/// never see a polar ground station at the same time above `min_elevation_deg`.
pub fn min_separation_angle_deg(orbit_altitude_m: f64, min_elevation_deg: f64) -> Result<f64> {
    ensure_positive("orbit_altitude_m", orbit_altitude_m)?;
    if !(min_elevation_deg.is_finite() && (0.0..90.0).contains(&min_elevation_deg)) {
        return Err(Error::invalid(
            "min_elevation_deg",
            format!("must be in [0, 90), got {min_elevation_deg}"),
        ));
    }
    let arg = R_EARTH_M * (90.0 + min_elevation_deg).to_radians().sin()
        / (orbit_altitude_m + R_EARTH_M);
    if !(-1.0..=1.0).contains(&arg) {
        return Err(Error::invalid("min_elevation_deg", format!("arcsin argument {arg} out of range")));
    }
    let nadir = arg.asin().to_degrees();
    Ok(2.0 * (180.0 - (min_elevation_deg + 90.0) - nadir))
}

/// Largest constellation that avoids interval sharing, `360° / β*` rounded to
/// the nearest integer and never below one.
pub fn max_nonsharing_size(beta_star_deg: f64) -> Result<u32> {
    if !(beta_star_deg.is_finite() && beta_star_deg > 0.0 && beta_star_deg <= 360.0) {
        return Err(Error::invalid(
            "beta_star_deg",
            format!("must be in (0, 360], got {beta_star_deg}"),
        ));
    }
    Ok(((360.0 / beta_star_deg).round() as u32).max(1))
}

/// Bytes captured by a group of satellites between two passes.
pub fn volume_per_pass_bytes(group: &[SensorSpec]) -> Result<f64> {
    if group.is_empty() {
        return Err(Error::invalid("group", "must contain at least one sensor"));
    }
    group.iter().try_fold(0.0, |acc, s| {
        let bits = capture_volume_bits(s)?;
        let period = orbit_period_s(s.orbit_altitude_m)?;
        Ok(acc + period * s.capture_rate_hz * bits / 8.0)
    })
}

/// Bytes transmittable in one pass.
pub fn link_capacity_bytes(link: &LinkSpec) -> Result<f64> {
    link.validate()?;
    Ok(link
        .data_per_pass_override_bytes
        .unwrap_or_else(|| link.rate_mbps * 1e6 * link.pass_duration_s / 8.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentinel_like() -> SensorSpec {
        SensorSpec {
            orbit_altitude_m: 790_000.0,
            capture_rate_hz: 1.0,
            spatial_res_m: (10.0, 10.0),
            bands: 4,
            radiometric_bits: 12,
            fov_deg: 21.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn sentinel_capture_volume() {
        let s = sentinel_like();
        // mpmath: 790000² · tan²(10.5°) / 100
        assert!(rel(s.pixels_per_capture(), 214_381_854.796_648) < 1e-12);
        assert!(rel(capture_volume_bits(&s).unwrap(), 10_290_329_030.239_106) < 1e-12);
    }

    #[test]
    fn unit_bit_depth_counts_pixels() {
        let s = SensorSpec { bands: 1, radiometric_bits: 1, ..sentinel_like() };
        assert_eq!(capture_volume_bits(&s).unwrap(), s.pixels_per_capture());
    }

    #[test]
    fn coarser_ground_sampling_quarters_bits() {
        let s = sentinel_like();
        let coarse = SensorSpec { spatial_res_m: (20.0, 20.0), ..s.clone() };
        let ratio = capture_volume_bits(&s).unwrap() / capture_volume_bits(&coarse).unwrap();
        assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_sensor() {
        let mut s = sentinel_like();
        s.fov_deg = 90.0;
        assert!(capture_volume_bits(&s).is_err());
        s.fov_deg = f64::NAN;
        assert!(capture_volume_bits(&s).is_err());
        let s = SensorSpec { bands: 0, ..sentinel_like() };
        assert!(capture_volume_bits(&s).is_err());
        let s = SensorSpec { radiometric_bits: 33, ..sentinel_like() };
        assert!(capture_volume_bits(&s).is_err());
    }

    #[test]
    fn orbit_periods() {
        assert!((orbit_period_s(790_000.0).unwrap() - 6_030.752_299).abs() < 1e-5);
        assert!((orbit_period_s(0.0).unwrap() - 5_060.837_447).abs() < 1e-5);
        assert!(orbit_period_s(800_000.0).unwrap() > orbit_period_s(160_000.0).unwrap());
        assert!(orbit_period_s(-1.0).is_err());
    }

    #[test]
    fn separation_angle_worked_example() {
        let beta = min_separation_angle_deg(790_000.0, 25.0).unwrap();
        assert!((beta - 22.52).abs() < 0.05, "{beta}");
        assert_eq!(max_nonsharing_size(beta).unwrap(), 16);
    }

    #[test]
    fn separation_angle_zero_elevation() {
        let beta = min_separation_angle_deg(790_000.0, 0.0).unwrap();
        assert!((beta - 54.333_820_050_661).abs() < 1e-9);
    }

    #[test]
    fn separation_angle_vanishes_towards_zenith() {
        let beta = min_separation_angle_deg(790_000.0, 89.999).unwrap();
        assert!(beta > 0.0 && beta < 0.01, "{beta}");
        assert!(min_separation_angle_deg(790_000.0, 90.0).is_err());
        assert!(min_separation_angle_deg(0.0, 10.0).is_err());
    }

    #[test]
    fn nonsharing_sizes() {
        assert_eq!(max_nonsharing_size(360.0).unwrap(), 1);
        assert_eq!(max_nonsharing_size(10.0).unwrap(), 36);
        assert!(max_nonsharing_size(0.0).is_err());
        assert!(max_nonsharing_size(400.0).is_err());
    }

    #[test]
    fn pass_volume_linear_in_group_size() {
        let s = sentinel_like();
        let one = volume_per_pass_bytes(std::slice::from_ref(&s)).unwrap();
        let five = volume_per_pass_bytes(&vec![s; 5]).unwrap();
        assert!(rel(five, 5.0 * one) < 1e-12);
        assert!(volume_per_pass_bytes(&[]).is_err());
    }

    #[test]
    fn five_captures_per_pass() {
        let mut s = sentinel_like();
        let period = orbit_period_s(s.orbit_altitude_m).unwrap();
        s.capture_rate_hz = 5.0 / period;
        let per_capture_bytes = 214_381_854.796_648 * 48.0 / 8.0;
        let v = volume_per_pass_bytes(&[s]).unwrap();
        assert!(rel(v, 5.0 * per_capture_bytes) < 1e-9);
    }

    #[test]
    fn link_capacities() {
        let dove = LinkSpec {
            name: "HSD 1".into(),
            rate_mbps: 160.0,
            pass_duration_s: 510.0,
            data_per_pass_override_bytes: None,
        };
        assert_eq!(link_capacity_bytes(&dove).unwrap(), 1.02e10);
        let wv3 = LinkSpec {
            name: "WorldView-3".into(),
            rate_mbps: 1200.0,
            pass_duration_s: 600.0,
            data_per_pass_override_bytes: Some(90.0 * GB),
        };
        assert_eq!(link_capacity_bytes(&wv3).unwrap(), 9.0e10);
        let bad = LinkSpec { pass_duration_s: 0.0, ..dove };
        assert!(link_capacity_bytes(&bad).is_err());
    }

    #[test]
    fn constellation_partition_checks() {
        let link = LinkSpec {
            name: "l".into(),
            rate_mbps: 100.0,
            pass_duration_s: 100.0,
            data_per_pass_override_bytes: None,
        };
        let mut c = Constellation {
            satellites: vec![sentinel_like(); 3],
            link,
            min_elevation_deg: 25.0,
            interval_assignment: [(0, 0), (1, 1), (2, 0)].into_iter().collect(),
        };
        c.validate().unwrap();
        let groups = c.groups();
        assert_eq!(groups[&0], vec![0, 2]);
        assert_eq!(groups[&1], vec![1]);
        let per = c.volume_per_interval_bytes().unwrap();
        let single = volume_per_pass_bytes(&[sentinel_like()]).unwrap();
        assert!(rel(per[&0], 2.0 * single) < 1e-12);
        c.interval_assignment.remove(&2);
        assert!(c.validate().is_err());
    }
}
