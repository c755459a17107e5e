//! Interferometer constants and derived far-field scales.
//!
//! Everything is stored in SI units. The JSON form ([`SetupConfig`]) carries
//! unit-suffixed keys and is converted on parse.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum ratio d/R for which the two fiber modes are treated as orthogonal.
///
/// At d = 5R the mode overlap exp(-d²/8R²) is below 0.05.
pub const MIN_SEPARATION_RATIO: f64 = 5.0;

/// Coincidence window of the reference experiment, 7 ns.
pub const DEFAULT_COINCIDENCE_WINDOW_NS: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalSetup {
    /// Wavelength λ in m.
    pub wavelength: f64,
    /// Focal length f of the collimating lens in m.
    pub focal_length: f64,
    /// Fiber pitch d in m.
    pub mode_separation: f64,
    /// Gaussian mode radius R in m.
    pub mode_radius: f64,
    /// Detector slit width a in m.
    pub slit_width: f64,
    /// Coincidence window τ in s.
    pub coincidence_window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Far-field envelope size σ = λf / (4πR), m.
    pub sigma: f64,
    /// Fringe period Λ = λf / d, m.
    pub period: f64,
}

impl OpticalSetup {
    /// The fiber-array interferometer of the reference experiment:
    /// λ = 814 nm, f = 60 mm, d = 72 µm, R = 4.3 µm, a = 62.5 µm, τ = 7 ns.
    pub fn reference() -> Self {
        Self {
            wavelength: 814e-9,
            focal_length: 60e-3,
            mode_separation: 72e-6,
            mode_radius: 4.3e-6,
            slit_width: 62.5e-6,
            coincidence_window: 7e-9,
        }
    }

    /// Every violated invariant, as a human-readable message. Empty when the
    /// setup is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let positive = [
            ("λ", self.wavelength),
            ("f", self.focal_length),
            ("d", self.mode_separation),
            ("R", self.mode_radius),
            ("a", self.slit_width),
            ("τ", self.coincidence_window),
        ];
        for (symbol, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                violations.push(format!("{symbol} > 0 fails ({symbol} = {value:e})"));
            }
        }
        let (d, r) = (self.mode_separation, self.mode_radius);
        if d.is_finite() && r.is_finite() && r > 0.0 && d < MIN_SEPARATION_RATIO * r {
            violations.push(format!(
                "d ≥ 5R fails (d = {:.4} µm, 5R = {:.4} µm)",
                d * 1e6,
                MIN_SEPARATION_RATIO * r * 1e6
            ));
        }
        violations
    }

    pub fn check(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSetup(violations))
        }
    }

    /// σ and Λ for this setup.
    pub fn derive(&self) -> Result<DerivedQuantities> {
        self.check()?;
        Ok(self.derived_unchecked())
    }

    /// Same as [`derive`](Self::derive) for a setup already known to be valid.
    pub(crate) fn derived_unchecked(&self) -> DerivedQuantities {
        let lambda_f = self.wavelength * self.focal_length;
        DerivedQuantities {
            sigma: lambda_f / (4.0 * PI * self.mode_radius),
            period: lambda_f / self.mode_separation,
        }
    }

    /// λf, the scale of the lens Fourier transform.
    pub fn lambda_f(&self) -> f64 {
        self.wavelength * self.focal_length
    }
}

/// JSON form of [`OpticalSetup`] with unit-suffixed keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupConfig {
    pub wavelength_nm: f64,
    pub focal_length_mm: f64,
    pub mode_separation_um: f64,
    pub mode_radius_um: f64,
    pub slit_width_um: f64,
    #[serde(default = "default_window_ns")]
    pub coincidence_window_ns: f64,
}

fn default_window_ns() -> f64 {
    DEFAULT_COINCIDENCE_WINDOW_NS
}

impl SetupConfig {
    pub fn to_setup(&self) -> OpticalSetup {
        OpticalSetup {
            wavelength: self.wavelength_nm * 1e-9,
            focal_length: self.focal_length_mm * 1e-3,
            mode_separation: self.mode_separation_um * 1e-6,
            mode_radius: self.mode_radius_um * 1e-6,
            slit_width: self.slit_width_um * 1e-6,
            coincidence_window: self.coincidence_window_ns * 1e-9,
        }
    }

    pub fn reference() -> Self {
        Self {
            wavelength_nm: 814.0,
            focal_length_mm: 60.0,
            mode_separation_um: 72.0,
            mode_radius_um: 4.3,
            slit_width_um: 62.5,
            coincidence_window_ns: DEFAULT_COINCIDENCE_WINDOW_NS,
        }
    }
}

impl From<SetupConfig> for OpticalSetup {
    fn from(config: SetupConfig) -> Self {
        config.to_setup()
    }
}
