//! Coincidence rates seen by two slit detectors in the far field.
//!
//! Slits are long along y, so every rate here is already integrated over
//! y1 and y2. That integral is Gaussian and done in closed form: for the
//! far-field factor F(x, y) = f(x) f(y) with ∫ f² = 1, marginalizing y
//! multiplies the y = 0 intensity by 1/f(0)⁴ = 2πσ².

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{intensity, PlanePoint};
use crate::quadrature::simpson_nodes;
use crate::setup::OpticalSetup;
use crate::states::TwoPhotonState;

/// Default Simpson intervals per axis across a slit.
pub const DEFAULT_SLIT_POINTS: usize = 64;
pub const MIN_SLIT_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateUnits {
    /// Relative to 1/(πσ²), the on-axis fringe maximum of a NOON or separable
    /// state. Superpositions of both can exceed 1.
    #[default]
    PeakNormalized,
    /// y-marginalized probability density, m⁻² (narrow slits) or coincidence
    /// probability per pair (finite slits).
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitPair {
    pub s1: f64,
    pub s2: f64,
    pub width: f64,
}

impl SlitPair {
    pub fn new(s1: f64, s2: f64, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "slit width must be positive, got {width:e}"
            )));
        }
        Ok(Self { s1, s2, width })
    }
}

/// 1/(πσ²): y-marginalized density at the on-axis fringe maximum.
pub fn reference_rate(sigma: f64) -> f64 {
    1.0 / (PI * sigma * sigma)
}

fn narrow_density(
    state: &TwoPhotonState,
    s1: f64,
    s2: f64,
    setup: &OpticalSetup,
    sigma: f64,
) -> Result<f64> {
    let at_axis = intensity(state, PlanePoint::on_x(s1), PlanePoint::on_x(s2), setup)?;
    Ok(at_axis * 2.0 * PI * sigma * sigma)
}

/// Narrow-slit coincidence rate at slit centres `s1`, `s2`.
///
/// For a NOON state the peak-normalized value is
/// ½·exp(-(s1² + s2²)/2σ²)·(1 + cos(2π(s1 + s2)/Λ - 2θ)).
pub fn rate_narrow(
    state: &TwoPhotonState,
    s1: f64,
    s2: f64,
    setup: &OpticalSetup,
    units: RateUnits,
) -> Result<f64> {
    let sigma = setup.derive()?.sigma;
    let density = narrow_density(state, s1, s2, setup, sigma)?;
    Ok(match units {
        RateUnits::Density => density,
        RateUnits::PeakNormalized => density / reference_rate(sigma),
    })
}

/// Finite-slit coincidence rate: the narrow-slit density integrated over
/// [s1 ± a/2] × [s2 ± a/2] by Simpson quadrature with `quad_points` intervals
/// per axis.
///
/// In [`RateUnits::Density`] this is a probability; peak normalization also
/// divides by a², so it tends to [`rate_narrow`] as a → 0.
pub fn rate_slit(
    state: &TwoPhotonState,
    slits: SlitPair,
    setup: &OpticalSetup,
    quad_points: usize,
    units: RateUnits,
) -> Result<f64> {
    let sigma = setup.derive()?.sigma;
    state.check_normalized()?;
    let slits = SlitPair::new(slits.s1, slits.s2, slits.width)?;
    if quad_points < MIN_SLIT_POINTS {
        return Err(Error::InvalidQuadrature(format!(
            "slit quadrature needs at least {MIN_SLIT_POINTS} points, got {quad_points}"
        )));
    }
    let half = slits.width / 2.0;
    let nodes1 = simpson_nodes(slits.s1 - half, slits.s1 + half, quad_points);
    let nodes2 = simpson_nodes(slits.s2 - half, slits.s2 + half, quad_points);
    let mut total = 0.0;
    for &(x1, w1) in &nodes1 {
        let mut row = 0.0;
        for &(x2, w2) in &nodes2 {
            row += w2 * narrow_density(state, x1, x2, setup, sigma)?;
        }
        total += w1 * row;
    }
    Ok(match units {
        RateUnits::Density => total,
        RateUnits::PeakNormalized => total / (slits.width * slits.width * reference_rate(sigma)),
    })
}

/// Both detectors at the origin: a single two-photon-absorbing pixel. The
/// interferometer phase is carried by `state`.
pub fn single_pixel_rate(
    state: &TwoPhotonState,
    setup: &OpticalSetup,
    units: RateUnits,
) -> Result<f64> {
    rate_narrow(state, 0.0, 0.0, setup, units)
}

/// [`single_pixel_rate`] for states prepared at HWP angle `alpha` over a
/// sweep of interferometer phases.
pub fn single_pixel_phase_curve(
    alpha: f64,
    thetas: &[f64],
    setup: &OpticalSetup,
    units: RateUnits,
) -> Result<Vec<(f64, f64)>> {
    thetas
        .iter()
        .map(|&theta| {
            let state = TwoPhotonState::prepare_from_hwp(alpha, theta);
            single_pixel_rate(&state, setup, units).map(|rate| (theta, rate))
        })
        .collect()
}

/// Visibility reduction sinc²(πa/Λ) of fringes of period Λ (in each
/// detector coordinate) averaged over two slits of width a.
pub fn slit_visibility_factor(width: f64, period: f64) -> f64 {
    let z = PI * width / period;
    if z == 0.0 {
        1.0
    } else {
        (z.sin() / z).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> OpticalSetup {
        OpticalSetup::reference()
    }

    #[test]
    fn noon_peak_is_one_at_origin() {
        let v = rate_narrow(
            &TwoPhotonState::noon(0.0),
            0.0,
            0.0,
            &setup(),
            RateUnits::PeakNormalized,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-14, "{v}");
    }

    #[test]
    fn noon_fringe_null() {
        let p = setup().derive().unwrap().period;
        let v = rate_narrow(
            &TwoPhotonState::noon(0.0),
            p / 4.0,
            p / 4.0,
            &setup(),
            RateUnits::PeakNormalized,
        )
        .unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn separable_fringe_null() {
        let p = setup().derive().unwrap().period;
        let v = rate_narrow(
            &TwoPhotonState::separable(),
            p / 4.0,
            -p / 4.0,
            &setup(),
            RateUnits::PeakNormalized,
        )
        .unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn narrow_rate_closed_form() {
        let s = setup();
        let d = s.derive().unwrap();
        let theta = 0.6;
        for (s1, s2) in [(1e-4, 3e-4), (-7e-4, 2e-4), (1.2e-3, -1.3e-3)] {
            let v = rate_narrow(
                &TwoPhotonState::noon(theta),
                s1,
                s2,
                &s,
                RateUnits::PeakNormalized,
            )
            .unwrap();
            let env = (-(s1 * s1 + s2 * s2) / (2.0 * d.sigma * d.sigma)).exp();
            let expected =
                0.5 * env * (1.0 + (2.0 * PI * (s1 + s2) / d.period - 2.0 * theta).cos());
            assert!((v - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn density_units_marginalize_y() {
        // ∫dy1 dy2 of the closed-form intensity, done by brute-force quadrature
        let s = setup();
        let sigma = s.derive().unwrap().sigma;
        let state = TwoPhotonState::prepare_from_hwp(0.3, 0.2);
        let (x1, x2) = (2e-4, -5e-4);
        let nodes = simpson_nodes(-8.0 * sigma, 8.0 * sigma, 200);
        let mut brute = 0.0;
        for &(y1, w1) in &nodes {
            for &(y2, w2) in &nodes {
                let r1 = PlanePoint { x: x1, y: y1 };
                let r2 = PlanePoint { x: x2, y: y2 };
                brute += w1 * w2 * intensity(&state, r1, r2, &s).unwrap();
            }
        }
        let v = rate_narrow(&state, x1, x2, &s, RateUnits::Density).unwrap();
        assert!((v / brute - 1.0).abs() < 1e-10);
    }

    #[test]
    fn slit_rate_tends_to_narrow_rate() {
        let s = setup();
        let state = TwoPhotonState::prepare_from_hwp(0.25, 0.4);
        let (s1, s2) = (1.5e-4, -2.5e-4);
        let narrow = rate_narrow(&state, s1, s2, &s, RateUnits::Density).unwrap();
        let width = s.slit_width / 100.0;
        let slit = rate_slit(
            &state,
            SlitPair::new(s1, s2, width).unwrap(),
            &s,
            16,
            RateUnits::Density,
        )
        .unwrap();
        assert!((slit / (width * width) / narrow - 1.0).abs() < 1e-4);
        let normalized = rate_slit(
            &state,
            SlitPair::new(s1, s2, width).unwrap(),
            &s,
            16,
            RateUnits::PeakNormalized,
        )
        .unwrap();
        let narrow_norm = rate_narrow(&state, s1, s2, &s, RateUnits::PeakNormalized).unwrap();
        assert!((normalized / narrow_norm - 1.0).abs() < 1e-4);
    }

    #[test]
    fn slit_reduces_noon_visibility_by_sinc_squared() {
        let s = setup();
        let d = s.derive().unwrap();
        let state = TwoPhotonState::noon(0.0);
        let slit_at = |x: f64| SlitPair::new(x, x, s.slit_width).unwrap();
        let sep = TwoPhotonState::noon(PI / 2.0);
        // fringe-free reference from the incoherent sum of θ = 0 and θ = π/2
        let envelope = |x: f64| {
            rate_slit(&state, slit_at(x), &s, 64, RateUnits::Density).unwrap()
                + rate_slit(&sep, slit_at(x), &s, 64, RateUnits::Density).unwrap()
        };
        let max =
            rate_slit(&state, slit_at(0.0), &s, 64, RateUnits::Density).unwrap() / envelope(0.0);
        let q = d.period / 4.0;
        let min = rate_slit(&state, slit_at(q), &s, 64, RateUnits::Density).unwrap() / envelope(q);
        let visibility = (max - min) / (max + min);
        assert!((visibility - 0.972_381_351).abs() < 1e-4, "{visibility}");
        assert!((slit_visibility_factor(s.slit_width, d.period) - 0.972_381_351).abs() < 1e-9);
    }

    #[test]
    fn slit_leaves_envelope_direction_shape() {
        let s = setup();
        let state = TwoPhotonState::noon(0.0);
        let xs: Vec<f64> = (0..9).map(|i| -1.2e-3 + i as f64 * 3e-4).collect();
        let narrow: Vec<f64> = xs
            .iter()
            .map(|&x| rate_narrow(&state, x, -x, &s, RateUnits::PeakNormalized).unwrap())
            .collect();
        let slit: Vec<f64> = xs
            .iter()
            .map(|&x| {
                rate_slit(
                    &state,
                    SlitPair::new(x, -x, s.slit_width).unwrap(),
                    &s,
                    64,
                    RateUnits::PeakNormalized,
                )
                .unwrap()
            })
            .collect();
        let (n0, s0) = (narrow[4], slit[4]);
        for (n, sl) in narrow.iter().zip(&slit) {
            assert!((sl / s0 - n / n0).abs() < 1e-3);
        }
    }

    #[test]
    fn slit_validation() {
        assert!(SlitPair::new(0.0, 0.0, 0.0).is_err());
        let slits = SlitPair::new(0.0, 0.0, 1e-5).unwrap();
        assert!(rate_slit(
            &TwoPhotonState::noon(0.0),
            slits,
            &setup(),
            8,
            RateUnits::Density
        )
        .is_err());
    }

    #[test]
    fn single_pixel_phase_dependence() {
        let s = setup();
        let thetas = [0.0, PI / 4.0, PI / 2.0, PI];
        let noon = single_pixel_phase_curve(
            std::f64::consts::FRAC_PI_8,
            &thetas,
            &s,
            RateUnits::PeakNormalized,
        )
        .unwrap();
        assert!((noon[0].1 - 1.0).abs() < 1e-14);
        assert!((noon[1].1 - 0.5).abs() < 1e-14);
        assert!(noon[2].1.abs() < 1e-14);
        assert!((noon[3].1 - 1.0).abs() < 1e-14);
        let sep = single_pixel_phase_curve(0.0, &thetas, &s, RateUnits::PeakNormalized).unwrap();
        for (_, r) in &sep {
            assert!((r - sep[0].1).abs() < 1e-14);
        }
    }
}
