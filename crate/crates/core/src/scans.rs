//! Measurement sweeps over the detection model.
//!
//! Spatial scans move both slits by a common displacement s, either in the
//! same direction (s1 = s2 = s) or in opposite directions (s1 = -s2 = s).
//! Because the fringe argument is 2π(s1 ± s2)/Λ, the fringe period in s is
//! Λ/2.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{self, CountRecord};
use crate::detection::{self, RateUnits, SlitPair, DEFAULT_SLIT_POINTS};
use crate::error::{Error, Result};
use crate::setup::{DerivedQuantities, OpticalSetup};
use crate::states::{characterization_scan, Pairing, TwoPhotonState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    /// s1 = s2 = s, metres.
    SameDirection,
    /// s1 = -s2 = s, metres.
    OppositeDirection,
    /// Interferometer phase θ at s1 = s2 = 0, radians.
    Phase,
    /// HWP angle α on the characterization detectors, radians.
    Hwp,
}

impl ScanKind {
    pub fn is_spatial(self) -> bool {
        matches!(self, ScanKind::SameDirection | ScanKind::OppositeDirection)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlitMode {
    #[default]
    Narrow,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub kind: ScanKind,
    /// First parameter value: metres for spatial scans, radians otherwise.
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    /// Interferometer phase for non-phase scans, rad.
    pub theta: f64,
    /// HWP angle for non-HWP scans, rad.
    pub alpha: f64,
    pub slit_mode: SlitMode,
    /// Detector pairing for HWP scans.
    pub pairing: Pairing,
}

impl ScanSpec {
    pub fn new(kind: ScanKind, start: f64, stop: f64, points: usize) -> Self {
        Self {
            kind,
            start,
            stop,
            points,
            theta: 0.0,
            alpha: std::f64::consts::FRAC_PI_8,
            slit_mode: SlitMode::Narrow,
            pairing: Pairing::SameOutput,
        }
    }

    pub fn with_state(mut self, alpha: f64, theta: f64) -> Self {
        self.alpha = alpha;
        self.theta = theta;
        self
    }

    pub fn with_slit_mode(mut self, slit_mode: SlitMode) -> Self {
        self.slit_mode = slit_mode;
        self
    }

    pub fn with_pairing(mut self, pairing: Pairing) -> Self {
        self.pairing = pairing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::InvalidScan(format!(
                "need at least 2 points, got {}",
                self.points
            )));
        }
        if !(self.start.is_finite() && self.stop.is_finite() && self.stop > self.start) {
            return Err(Error::InvalidScan(format!(
                "stop must exceed start (start = {}, stop = {})",
                self.start, self.stop
            )));
        }
        if !(self.theta.is_finite() && self.alpha.is_finite()) {
            return Err(Error::InvalidScan("non-finite state angles".into()));
        }
        Ok(())
    }

    /// Evenly spaced parameter values from start to stop inclusive.
    pub fn parameters(&self) -> Vec<f64> {
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.start + i as f64 * step)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub parameter: f64,
    /// Peak-normalized ideal rate.
    pub ideal_rate: f64,
    /// Raw sampled coincidences.
    pub counts: Option<u64>,
    /// Counts minus expected accidentals.
    pub corrected: Option<f64>,
    pub count_error: Option<f64>,
    /// Monte-Carlo standard error of `ideal_rate` for dephased scans.
    pub mc_error: Option<f64>,
}

impl ScanSample {
    fn ideal(parameter: f64, ideal_rate: f64) -> Self {
        Self {
            parameter,
            ideal_rate,
            counts: None,
            corrected: None,
            count_error: None,
            mc_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub spec: ScanSpec,
    pub samples: Vec<ScanSample>,
    pub derived: DerivedQuantities,
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    Dephasing = 1,
    Counting = 2,
}

/// Generator for scan point `index`. Each (purpose, index) pair gets its own
/// ChaCha stream, so results do not depend on evaluation order.
pub fn point_rng(seed: u64, purpose: StreamPurpose, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 40) | index as u64);
    rng
}

/// Ideal rate at one scan parameter with the interferometer phase `theta`.
/// Phase scans pass their parameter as `theta`.
fn rate_at(spec: &ScanSpec, parameter: f64, theta: f64, setup: &OpticalSetup) -> Result<f64> {
    let units = RateUnits::PeakNormalized;
    let (state, s1, s2) = match spec.kind {
        ScanKind::Hwp => {
            return Ok(characterization_scan(&[parameter], spec.pairing)?[0].1);
        }
        ScanKind::Phase => (
            TwoPhotonState::prepare_from_hwp(spec.alpha, theta),
            0.0,
            0.0,
        ),
        ScanKind::SameDirection => (
            TwoPhotonState::prepare_from_hwp(spec.alpha, theta),
            parameter,
            parameter,
        ),
        ScanKind::OppositeDirection => (
            TwoPhotonState::prepare_from_hwp(spec.alpha, theta),
            parameter,
            -parameter,
        ),
    };
    match spec.slit_mode {
        SlitMode::Narrow => detection::rate_narrow(&state, s1, s2, setup, units),
        SlitMode::Finite => detection::rate_slit(
            &state,
            SlitPair::new(s1, s2, setup.slit_width)?,
            setup,
            DEFAULT_SLIT_POINTS,
            units,
        ),
    }
}

/// Evaluates the ideal (noise-free) scan.
pub fn run_scan(spec: &ScanSpec, setup: &OpticalSetup) -> Result<ScanResult> {
    spec.validate()?;
    let derived = setup.derive()?;
    let samples = spec
        .parameters()
        .into_par_iter()
        .map(|p| {
            let theta = if spec.kind == ScanKind::Phase {
                p
            } else {
                spec.theta
            };
            rate_at(spec, p, theta, setup).map(|rate| ScanSample::ideal(p, rate))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanResult {
        spec: *spec,
        samples,
        derived,
    })
}

/// Scan averaged over Gaussian phase noise: at every point the rate is the
/// mean over `mc_samples` phases θ' ~ N(θ, sigma_theta²). For NOON fringes the
/// expected visibility factor is exp(-2·sigma_theta²).
///
/// The draws for point i come from [`point_rng`]`(seed, Dephasing, i)`; a
/// fixed seed therefore reuses the same standard-normal draws at every
/// `sigma_theta`.
pub fn dephased_scan(
    spec: &ScanSpec,
    setup: &OpticalSetup,
    sigma_theta: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<ScanResult> {
    if !(sigma_theta.is_finite() && sigma_theta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma_theta must be >= 0, got {sigma_theta}"
        )));
    }
    if mc_samples == 0 {
        return Err(Error::InvalidArgument(
            "mc_samples must be at least 1".into(),
        ));
    }
    if sigma_theta == 0.0 {
        return run_scan(spec, setup);
    }
    spec.validate()?;
    let derived = setup.derive()?;
    let samples = spec
        .parameters()
        .into_par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = point_rng(seed, StreamPurpose::Dephasing, i);
            let centre = if spec.kind == ScanKind::Phase {
                p
            } else {
                spec.theta
            };
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..mc_samples {
                let z: f64 = StandardNormal.sample(&mut rng);
                let theta = centre + sigma_theta * z;
                let rate = rate_at(spec, p, theta, setup)?;
                sum += rate;
                sum_sq += rate * rate;
            }
            let n = mc_samples as f64;
            let mean = sum / n;
            let mc_error = if mc_samples > 1 {
                ((sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            Ok(ScanSample {
                mc_error: Some(mc_error),
                ..ScanSample::ideal(p, mean)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanResult {
        spec: *spec,
        samples,
        derived,
    })
}

/// Conversion from peak-normalized rates to detector counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingModel {
    /// Coincidences/s at ideal_rate = 1.
    pub peak_rate: f64,
    /// Uncorrelated coincidences/s.
    pub accidental_rate: f64,
    /// Integration time per point, s.
    pub integration_time: f64,
}

/// Adds sampled counts to every point of `result`, drawing point i from
/// [`point_rng`]`(seed, Counting, i)`.
pub fn apply_counting(result: &ScanResult, model: &CountingModel, seed: u64) -> Result<ScanResult> {
    if !(model.peak_rate.is_finite() && model.peak_rate >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "peak_rate must be >= 0, got {}",
            model.peak_rate
        )));
    }
    let samples = result
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = point_rng(seed, StreamPurpose::Counting, i);
            let record: CountRecord = counting::sample_with(
                s.ideal_rate.max(0.0) * model.peak_rate,
                model.accidental_rate,
                model.integration_time,
                &mut rng,
            )?;
            Ok(ScanSample {
                counts: Some(record.counts),
                corrected: Some(record.corrected),
                count_error: Some(record.count_error()),
                ..*s
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanResult {
        samples,
        ..result.clone()
    })
}
