//! Simulated photon-counting records.
//!
//! Coincidence counts are Poisson with mean (true + accidental rate) × T, and
//! the expected accidental background is subtracted afterwards, as done for
//! the measured scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Means at or below this use exact inversion; above it, a rounded normal.
pub const NORMAL_APPROX_THRESHOLD: f64 = 1e6;

/// Below this mean the inversion walks up from k = 0.
const SEQUENTIAL_INVERSION_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    /// Coincidences/s from the two-photon signal.
    pub true_rate: f64,
    /// Coincidences/s from uncorrelated pairs.
    pub accidental_rate: f64,
    /// Integration time, s.
    pub integration_time: f64,
    pub counts: u64,
    /// counts − accidental_rate × integration_time; may be negative.
    pub corrected: f64,
}

impl CountRecord {
    /// √counts, floored at one count so that empty bins keep a finite weight.
    pub fn count_error(&self) -> f64 {
        (self.counts.max(1) as f64).sqrt()
    }
}

/// Rate of uncorrelated coincidences, R₁R₂τ.
pub fn accidental_rate(singles1: f64, singles2: f64, window: f64) -> Result<f64> {
    for (name, v) in [
        ("singles1", singles1),
        ("singles2", singles2),
        ("window", window),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be >= 0, got {v}"
            )));
        }
    }
    Ok(singles1 * singles2 * window)
}

/// Poisson variate with the given mean.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else if mean < SEQUENTIAL_INVERSION_LIMIT {
        sequential_inversion(mean, rng)
    } else if mean <= NORMAL_APPROX_THRESHOLD {
        mode_inversion(mean, rng)
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (mean + mean.sqrt() * z).round().max(0.0) as u64
    }
}

fn sequential_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut pmf = (-mean).exp();
    let mut cdf = pmf;
    while u > cdf {
        k += 1;
        pmf *= mean / k as f64;
        cdf += pmf;
        if pmf == 0.0 {
            break;
        }
    }
    k
}

/// Inversion starting at the mode, so the search length is O(√mean).
fn mode_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mode = mean.floor();
    let mut k = mode as u64;
    let pmf_mode = (mode * mean.ln() - mean - ln_gamma(mode + 1.0)).exp();
    // P(X ≤ mode) = Q(mode + 1, mean)
    let cdf_mode = gamma_ur(mode + 1.0, mean);

    if u <= cdf_mode {
        // walk down while u still lies below F(k - 1)
        let mut pmf = pmf_mode;
        let mut cdf = cdf_mode;
        while k > 0 && u <= cdf - pmf {
            cdf -= pmf;
            pmf *= k as f64 / mean;
            k -= 1;
            if pmf == 0.0 {
                break;
            }
        }
    } else {
        let mut pmf = pmf_mode;
        let mut cdf = cdf_mode;
        while u > cdf {
            k += 1;
            pmf *= mean / k as f64;
            cdf += pmf;
            if pmf == 0.0 {
                break;
            }
        }
    }
    k
}

fn check_rates(true_rate: f64, accidental_rate: f64, integration_time: f64) -> Result<()> {
    for (name, v) in [
        ("true_rate", true_rate),
        ("accidental_rate", accidental_rate),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be >= 0, got {v}"
            )));
        }
    }
    if !(integration_time.is_finite() && integration_time > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "integration_time must be > 0, got {integration_time}"
        )));
    }
    Ok(())
}

/// Draws one counting record from `rng`.
pub fn sample_with<R: Rng + ?Sized>(
    true_rate: f64,
    accidental_rate: f64,
    integration_time: f64,
    rng: &mut R,
) -> Result<CountRecord> {
    check_rates(true_rate, accidental_rate, integration_time)?;
    let counts = poisson((true_rate + accidental_rate) * integration_time, rng);
    Ok(CountRecord {
        true_rate,
        accidental_rate,
        integration_time,
        counts,
        corrected: counts as f64 - accidental_rate * integration_time,
    })
}

/// Draws one counting record from a generator seeded with `seed`.
pub fn sample(
    true_rate: f64,
    accidental_rate: f64,
    integration_time: f64,
    seed: u64,
) -> Result<CountRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(true_rate, accidental_rate, integration_time, &mut rng)
}
