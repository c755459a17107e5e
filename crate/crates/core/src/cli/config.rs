use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::EnvelopeShape;
use crate::counting;
use crate::error::{Error, Result};
use crate::scans::{CountingModel, ScanKind, ScanSpec, SlitMode};
use crate::setup::{DerivedQuantities, OpticalSetup, SetupConfig};
use crate::states::Pairing;

/// Everything a run needs, in lab units. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "SetupConfig::reference")]
    pub setup: SetupConfig,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dephasing: Option<DephasingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counting: Option<CountingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub alpha_deg: f64,
    pub theta_deg: f64,
}

impl Default for StateConfig {
    /// The NOON state.
    fn default() -> Self {
        Self {
            alpha_deg: 22.5,
            theta_deg: 0.0,
        }
    }
}

/// Spatial scans take `start_um`/`stop_um`, angular scans `start_deg`/`stop_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub kind: ScanKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_deg: Option<f64>,
    pub points: usize,
    #[serde(default)]
    pub slit_mode: SlitMode,
    #[serde(default)]
    pub pairing: Pairing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingConfig {
    pub sigma_theta_deg: f64,
    pub mc_samples: usize,
}

/// Accidentals come from `accidental_rate_hz`, or from `singles_hz` and the
/// setup's coincidence window; absent both they are zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingConfig {
    pub integration_time_s: f64,
    pub peak_rate_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accidental_rate_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singles_hz: Option<[f64; 2]>,
}

/// Square grid in ξ = x/Λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub xi_min: f64,
    pub xi_max: f64,
    pub points: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            xi_min: -2.0,
            xi_max: 2.0,
            points: 101,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_error(e.to_string()))
    }

    pub fn optical_setup(&self) -> OpticalSetup {
        self.setup.to_setup()
    }

    pub fn alpha(&self) -> f64 {
        self.state.alpha_deg.to_radians()
    }

    pub fn theta(&self) -> f64 {
        self.state.theta_deg.to_radians()
    }

    /// Checks everything that does not need the physics modules.
    pub fn validate(&self) -> Result<()> {
        self.optical_setup().check()?;
        if !(self.state.alpha_deg.is_finite() && self.state.theta_deg.is_finite()) {
            return Err(config_error("state angles must be finite"));
        }
        if let Some(scan) = &self.scan {
            scan.spec(self)?;
        }
        if let Some(d) = &self.dephasing {
            if !(d.sigma_theta_deg.is_finite() && d.sigma_theta_deg >= 0.0) {
                return Err(config_error("dephasing.sigma_theta_deg must be >= 0"));
            }
            if d.mc_samples == 0 {
                return Err(config_error("dephasing.mc_samples must be at least 1"));
            }
        }
        if let Some(c) = &self.counting {
            c.model(&self.optical_setup())?;
        }
        if let Some(m) = &self.map {
            if !(m.xi_min.is_finite() && m.xi_max.is_finite() && m.xi_max > m.xi_min) {
                return Err(config_error("map.xi_max must exceed map.xi_min"));
            }
            if m.points < 2 {
                return Err(config_error("map.points must be at least 2"));
            }
        }
        Ok(())
    }

    pub fn scan_spec(&self) -> Result<ScanSpec> {
        self.scan
            .as_ref()
            .ok_or_else(|| config_error("missing 'scan' section"))?
            .spec(self)
    }
}

impl ScanConfig {
    fn spec(&self, run: &RunConfig) -> Result<ScanSpec> {
        let (start, stop) = if self.kind.is_spatial() {
            if self.start_deg.is_some() || self.stop_deg.is_some() {
                return Err(config_error("spatial scans take start_um/stop_um"));
            }
            match (self.start_um, self.stop_um) {
                (Some(a), Some(b)) => (a * 1e-6, b * 1e-6),
                _ => return Err(config_error("spatial scans need start_um and stop_um")),
            }
        } else {
            if self.start_um.is_some() || self.stop_um.is_some() {
                return Err(config_error("angular scans take start_deg/stop_deg"));
            }
            match (self.start_deg, self.stop_deg) {
                (Some(a), Some(b)) => (a.to_radians(), b.to_radians()),
                _ => return Err(config_error("angular scans need start_deg and stop_deg")),
            }
        };
        let spec = ScanSpec::new(self.kind, start, stop, self.points)
            .with_state(run.alpha(), run.theta())
            .with_slit_mode(self.slit_mode)
            .with_pairing(self.pairing);
        spec.validate().map_err(|e| config_error(e.to_string()))?;
        Ok(spec)
    }
}

impl CountingConfig {
    pub fn model(&self, setup: &OpticalSetup) -> Result<CountingModel> {
        if !(self.integration_time_s.is_finite() && self.integration_time_s > 0.0) {
            return Err(config_error("counting.integration_time_s must be > 0"));
        }
        if !(self.peak_rate_hz.is_finite() && self.peak_rate_hz >= 0.0) {
            return Err(config_error("counting.peak_rate_hz must be >= 0"));
        }
        let accidental_rate = match (self.accidental_rate_hz, self.singles_hz) {
            (Some(_), Some(_)) => {
                return Err(config_error(
                    "give either accidental_rate_hz or singles_hz, not both",
                ))
            }
            (Some(r), None) if r.is_finite() && r >= 0.0 => r,
            (Some(_), None) => {
                return Err(config_error("counting.accidental_rate_hz must be >= 0"))
            }
            (None, Some([r1, r2])) => counting::accidental_rate(r1, r2, setup.coincidence_window)
                .map_err(|e| config_error(e.to_string()))?,
            (None, None) => 0.0,
        };
        Ok(CountingModel {
            peak_rate: self.peak_rate_hz,
            accidental_rate,
            integration_time: self.integration_time_s,
        })
    }
}

/// Provenance record embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub generator: String,
    pub command: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<DerivedQuantities>,
    /// Input file for `fit`, as given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeShape>,
    /// Output file names, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            generator: concat!("twophoton ", env!("CARGO_PKG_VERSION")).to_string(),
            command: command.to_string(),
            seed,
            config: None,
            derived: None,
            input: None,
            envelope: None,
            outputs: Vec::new(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }
}

/// What `--config` pointed at: a run configuration or an earlier manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigSource {
    Run(RunConfig),
    Manifest(RunManifest),
}

impl ConfigSource {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
        // JSON outputs wrap the manifest next to their results
        if let Some(inner) = value.get_mut("manifest") {
            value = inner.take();
        }
        let is_manifest = value.get("command").is_some() && value.get("generator").is_some();
        if is_manifest {
            serde_json::from_value(value)
                .map(ConfigSource::Manifest)
                .map_err(|e| config_error(format!("manifest: {e}")))
        } else {
            serde_json::from_value(value)
                .map(ConfigSource::Run)
                .map_err(|e| config_error(e.to_string()))
        }
    }

    pub fn config(&self) -> Option<&RunConfig> {
        match self {
            ConfigSource::Run(c) => Some(c),
            ConfigSource::Manifest(m) => m.config.as_ref(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            ConfigSource::Run(c) => c.seed,
            ConfigSource::Manifest(m) => Some(m.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOON_SCAN: &str = r#"{
        "scan": {"kind": "same_direction", "start_um": -1500, "stop_um": 1500, "points": 121}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json(NOON_SCAN).unwrap();
        assert_eq!(cfg.setup, SetupConfig::reference());
        assert_eq!(cfg.state, StateConfig::default());
        let spec = cfg.scan_spec().unwrap();
        assert!((spec.start + 1.5e-3).abs() < 1e-15);
        assert!((spec.alpha - std::f64::consts::FRAC_PI_8).abs() < 1e-15);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let err =
            RunConfig::from_json(r#"{"scan": {"kind": "phase", "points": 3, "stat_deg": 0}}"#)
                .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unit_keys_must_match_kind() {
        let cfg = RunConfig::from_json(
            r#"{"scan": {"kind": "phase", "start_um": 0, "stop_um": 1, "points": 5}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig::from_json(
            r#"{"scan": {"kind": "hwp", "start_deg": 0, "stop_deg": 45, "points": 5}}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn accidentals_from_singles() {
        let c = CountingConfig {
            integration_time_s: 300.0,
            peak_rate_hz: 1.0,
            accidental_rate_hz: None,
            singles_hz: Some([1e4, 1e4]),
        };
        let model = c.model(&OpticalSetup::reference()).unwrap();
        assert!((model.accidental_rate - 0.7).abs() < 1e-12);
    }

    #[test]
    fn manifest_detection() {
        let mut m = RunManifest::new("scan", 7);
        m.config = Some(RunConfig::from_json(NOON_SCAN).unwrap());
        let parsed = ConfigSource::parse(&m.to_json_line()).unwrap();
        assert_eq!(parsed.seed(), Some(7));
        assert_eq!(parsed, ConfigSource::Manifest(m));
        assert!(matches!(
            ConfigSource::parse(NOON_SCAN).unwrap(),
            ConfigSource::Run(_)
        ));
    }
}
