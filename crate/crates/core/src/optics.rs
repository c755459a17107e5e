//! Near- and far-field two-photon wavefunctions.
//!
//! Each fiber carries the Gaussian mode Π(u) = exp(-|u|²/4R²)/(√(2π)R),
//! centred at x = -d/2 (mode a) or x = +d/2 (mode b). A two-photon state is
//! then a sum of four product terms c·Π(u1 - c1)Π(u2 - c2), which the lens
//! maps to the far field through the Fourier kernel
//! exp[-2πi (r1·u1 + r2·u2)/λf] with prefactor 1/(-λ²f²).
//!
//! The closed form ([`far_field_analytic`]) transforms each Gaussian exactly.
//! [`far_field_numeric`] integrates the same kernel by Simpson quadrature and
//! serves as the independent check. Both keep the x and y integrals separate:
//! mode and kernel factorize per axis.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{simpson, simpson_nodes};
use crate::setup::OpticalSetup;
use crate::states::TwoPhotonState;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const ORIGIN: PlanePoint = PlanePoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(Error::InvalidArgument(format!(
                "non-finite point ({x}, {y})"
            )))
        }
    }

    /// Point on the x axis.
    pub fn on_x(x: f64) -> Self {
        Self { x, y: 0.0 }
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y
    }
}

/// Discretization of the lens transform used by [`far_field_numeric`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Integration runs over ±half_extent around each mode centre, per axis.
    pub half_extent: f64,
    /// Simpson intervals per axis; step Δu = 2·half_extent/points_per_axis.
    pub points_per_axis: usize,
}

pub const MIN_POINTS_PER_AXIS: usize = 64;

impl QuadratureSpec {
    pub fn new(half_extent: f64, points_per_axis: usize) -> Result<Self> {
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(Error::InvalidQuadrature(format!(
                "half_extent must be positive, got {half_extent:e}"
            )));
        }
        if points_per_axis < MIN_POINTS_PER_AXIS {
            return Err(Error::InvalidQuadrature(format!(
                "points_per_axis must be at least {MIN_POINTS_PER_AXIS}, got {points_per_axis}"
            )));
        }
        if !points_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidQuadrature(format!(
                "points_per_axis must be even for Simpson's rule, got {points_per_axis}"
            )));
        }
        Ok(Self {
            half_extent,
            points_per_axis,
        })
    }

    /// ±8R with 512 intervals per axis.
    pub fn default_for(setup: &OpticalSetup) -> Self {
        Self {
            half_extent: 8.0 * setup.mode_radius,
            points_per_axis: 512,
        }
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_extent / self.points_per_axis as f64
    }

    /// Rejects far-field coordinates whose kernel phase advances by π or more
    /// per quadrature step.
    pub fn check_nyquist(&self, x_max: f64, setup: &OpticalSetup) -> Result<()> {
        let phase_step = 2.0 * PI / setup.lambda_f() * x_max.abs() * self.step();
        if phase_step < PI {
            Ok(())
        } else {
            Err(Error::NyquistViolation {
                phase_step,
                x_max: x_max.abs(),
            })
        }
    }

    fn doubled(&self) -> Self {
        Self {
            points_per_axis: self.points_per_axis * 2,
            ..*self
        }
    }
}

/// Π(u) = exp(-|u|²/4R²) / (√(2π) R), in m⁻¹.
pub fn gaussian_mode(u: PlanePoint, mode_radius: f64) -> f64 {
    (-u.norm_squared() / (4.0 * mode_radius * mode_radius)).exp()
        / ((2.0 * PI).sqrt() * mode_radius)
}

/// One-axis factor of a Gaussian mode of size `width`:
/// (2πw²)^{-1/4} exp(-t²/4w²), normalized so that ∫ g² dt = 1.
pub fn gaussian_factor(t: f64, width: f64) -> f64 {
    (2.0 * PI * width * width).powf(-0.25) * (-t * t / (4.0 * width * width)).exp()
}

/// One product term c·Π(u1 - c1 x̂)·Π(u2 - c2 x̂) of the near field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeTerm {
    pub coeff: Complex64,
    pub center1: f64,
    pub center2: f64,
}

/// Expansion of a state into mode-product terms. Mode a is centred at -d/2,
/// mode b at +d/2, and |1,1⟩ is symmetrized with weight 1/√2 per ordering.
pub fn mode_terms(state: &TwoPhotonState, setup: &OpticalSetup) -> [ModeTerm; 4] {
    let a = -0.5 * setup.mode_separation;
    let b = 0.5 * setup.mode_separation;
    let cross = state.amp11 * std::f64::consts::FRAC_1_SQRT_2;
    [
        ModeTerm {
            coeff: state.amp20,
            center1: a,
            center2: a,
        },
        ModeTerm {
            coeff: state.amp02,
            center1: b,
            center2: b,
        },
        ModeTerm {
            coeff: cross,
            center1: a,
            center2: b,
        },
        ModeTerm {
            coeff: cross,
            center1: b,
            center2: a,
        },
    ]
}

/// Two-photon wavefunction φ(u1, u2) at the fiber tips, m⁻².
pub fn near_field(
    state: &TwoPhotonState,
    u1: PlanePoint,
    u2: PlanePoint,
    setup: &OpticalSetup,
) -> Result<Complex64> {
    setup.check()?;
    state.check_normalized()?;
    let r = setup.mode_radius;
    let shifted = |u: PlanePoint, c: f64| PlanePoint { x: u.x - c, y: u.y };
    Ok(mode_terms(state, setup)
        .iter()
        .map(|t| {
            t.coeff
                * gaussian_mode(shifted(u1, t.center1), r)
                * gaussian_mode(shifted(u2, t.center2), r)
        })
        .sum())
}

/// Kernel phase factor of a mode centred at `center` seen at far-field `x`.
fn displacement_phase(x: f64, center: f64, lambda_f: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * x * center / lambda_f)
}

/// Closed-form far field ψ(r1, r2), m⁻².
///
/// Each mode transforms to (1/λf)·Π̃(r) = exp(-|r|²/4σ²)/(√(2π)σ) times the
/// displacement phase exp(∓iπ d x/λf), so the far field carries exactly unit
/// norm when the modes are orthogonal.
pub fn far_field_analytic(
    state: &TwoPhotonState,
    r1: PlanePoint,
    r2: PlanePoint,
    setup: &OpticalSetup,
) -> Result<Complex64> {
    let derived = setup.derive()?;
    state.check_normalized()?;
    let lf = setup.lambda_f();
    let envelope = gaussian_mode(r1, derived.sigma) * gaussian_mode(r2, derived.sigma);
    let sum: Complex64 = mode_terms(state, setup)
        .iter()
        .map(|t| {
            t.coeff
                * displacement_phase(r1.x, t.center1, lf)
                * displacement_phase(r2.x, t.center2, lf)
        })
        .sum();
    Ok(-envelope * sum)
}

/// |F(r1)|·|F(r2)|: the far-field magnitude of a single product term, used as
/// the natural error scale when comparing far-field evaluations.
pub fn far_field_envelope(r1: PlanePoint, r2: PlanePoint, setup: &OpticalSetup) -> Result<f64> {
    let sigma = setup.derive()?.sigma;
    Ok(gaussian_mode(r1, sigma) * gaussian_mode(r2, sigma))
}

/// ∫ g_R(u - c) exp(-2πi x u/λf) du over c ± half_extent.
fn axis_transform(x: f64, center: f64, setup: &OpticalSetup, quad: &QuadratureSpec) -> Complex64 {
    let r = setup.mode_radius;
    let k = 2.0 * PI * x / setup.lambda_f();
    simpson(
        center - quad.half_extent,
        center + quad.half_extent,
        quad.points_per_axis,
        |u| Complex64::from_polar(gaussian_factor(u - center, r), -k * u),
    )
}

/// Far field by direct Simpson quadrature of the lens transform.
///
/// Each term's four-dimensional integral is evaluated as a product of
/// one-dimensional integrals (x and y per photon); no closed-form Gaussian
/// transform is used.
pub fn far_field_numeric(
    state: &TwoPhotonState,
    r1: PlanePoint,
    r2: PlanePoint,
    setup: &OpticalSetup,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    setup.check()?;
    state.check_normalized()?;
    let quad = QuadratureSpec::new(quad.half_extent, quad.points_per_axis)?;
    let x_max = [r1.x, r1.y, r2.x, r2.y]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    quad.check_nyquist(x_max, setup)?;

    let lf = setup.lambda_f();
    let y1 = axis_transform(r1.y, 0.0, setup, &quad);
    let y2 = axis_transform(r2.y, 0.0, setup, &quad);
    let a = -0.5 * setup.mode_separation;
    let b = 0.5 * setup.mode_separation;
    let x1 = [
        axis_transform(r1.x, a, setup, &quad),
        axis_transform(r1.x, b, setup, &quad),
    ];
    let x2 = [
        axis_transform(r2.x, a, setup, &quad),
        axis_transform(r2.x, b, setup, &quad),
    ];
    let pick = |table: &[Complex64; 2], c: f64| if c < 0.0 { table[0] } else { table[1] };

    let sum: Complex64 = mode_terms(state, setup)
        .iter()
        .map(|t| t.coeff * pick(&x1, t.center1) * pick(&x2, t.center2))
        .sum();
    Ok(-sum * y1 * y2 / (lf * lf))
}

/// Relative change below which [`far_field_converged`] stops refining.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-8;

/// [`far_field_numeric`] with the grid doubled until successive values differ
/// by less than [`CONVERGENCE_TOLERANCE`] relative to the envelope scale.
/// Returns the value and the final intervals per axis.
pub fn far_field_converged(
    state: &TwoPhotonState,
    r1: PlanePoint,
    r2: PlanePoint,
    setup: &OpticalSetup,
    quad: &QuadratureSpec,
    max_points: usize,
) -> Result<(Complex64, usize)> {
    let scale = far_field_envelope(r1, r2, setup)?;
    let mut current = *quad;
    let mut value = far_field_numeric(state, r1, r2, setup, &current)?;
    while current.points_per_axis * 2 <= max_points {
        let next = current.doubled();
        let refined = far_field_numeric(state, r1, r2, setup, &next)?;
        let change = (refined - value).norm() / scale;
        value = refined;
        current = next;
        if change < CONVERGENCE_TOLERANCE {
            return Ok((value, current.points_per_axis));
        }
    }
    Err(Error::InvalidQuadrature(format!(
        "no convergence up to {max_points} points per axis"
    )))
}

/// |ψ(r1, r2)|², m⁻⁴.
pub fn intensity(
    state: &TwoPhotonState,
    r1: PlanePoint,
    r2: PlanePoint,
    setup: &OpticalSetup,
) -> Result<f64> {
    far_field_analytic(state, r1, r2, setup).map(|psi| psi.norm_sqr())
}

/// On-axis fringe maximum of a NOON or separable state, 2/(2πσ²)²; the
/// reference for peak-normalized intensities.
pub fn reference_intensity(sigma: f64) -> f64 {
    2.0 / (2.0 * PI * sigma * sigma).powi(2)
}

/// ∫∫ |φ|² d²u1 d²u2 by Simpson quadrature.
///
/// The four-fold integral splits into per-axis overlap integrals of the mode
/// products; the x grid covers both modes out to ±half_extent beyond them, so
/// the (tiny) inter-mode overlaps are retained.
pub fn near_field_norm(
    state: &TwoPhotonState,
    setup: &OpticalSetup,
    quad: &QuadratureSpec,
) -> Result<f64> {
    setup.check()?;
    let r = setup.mode_radius;
    let h = quad.half_extent;
    let x_lo = -0.5 * setup.mode_separation - h;
    let x_hi = 0.5 * setup.mode_separation + h;
    let x_intervals = quad.points_per_axis * ((x_hi - x_lo) / (2.0 * h)).ceil() as usize;
    let x_nodes = simpson_nodes(x_lo, x_hi, x_intervals);
    let y_nodes = simpson_nodes(-h, h, quad.points_per_axis);

    let overlap = |c: f64, c2: f64| -> f64 {
        x_nodes
            .iter()
            .map(|&(u, w)| w * gaussian_factor(u - c, r) * gaussian_factor(u - c2, r))
            .sum()
    };
    let y_overlap: f64 = y_nodes
        .iter()
        .map(|&(u, w)| w * gaussian_factor(u, r).powi(2))
        .sum();

    let terms = mode_terms(state, setup);
    let mut norm = Complex64::new(0.0, 0.0);
    for tk in &terms {
        for tl in &terms {
            norm += tk.coeff
                * tl.coeff.conj()
                * overlap(tk.center1, tl.center1)
                * overlap(tk.center2, tl.center2)
                * y_overlap
                * y_overlap;
        }
    }
    Ok(norm.re)
}

/// ∫∫ |ψ_analytic|² d²r1 d²r2 over ±`extent_sigmas`·σ per axis by Simpson
/// quadrature with `intervals` per axis.
///
/// Expanding |Σ_k ψ_k|² into pairs of product terms reduces the four-fold
/// integral to one-dimensional integrals of the closed-form per-axis factors.
pub fn far_field_norm(
    state: &TwoPhotonState,
    setup: &OpticalSetup,
    extent_sigmas: f64,
    intervals: usize,
) -> Result<f64> {
    let sigma = setup.derive()?.sigma;
    state.check_normalized()?;
    let lf = setup.lambda_f();
    let extent = extent_sigmas * sigma;
    let nodes = simpson_nodes(-extent, extent, intervals);

    // ∫ f(x)² exp(-2πi x (c - c')/λf) dx, with f the per-axis far-field factor
    let x_overlap = |c: f64, c2: f64| -> Complex64 {
        nodes
            .iter()
            .map(|&(x, w)| {
                let f = gaussian_factor(x, sigma);
                displacement_phase(x, c, lf) * displacement_phase(x, c2, lf).conj() * (w * f * f)
            })
            .sum()
    };
    let y_overlap: f64 = nodes
        .iter()
        .map(|&(y, w)| w * gaussian_factor(y, sigma).powi(2))
        .sum();

    let terms = mode_terms(state, setup);
    let mut norm = Complex64::new(0.0, 0.0);
    for tk in &terms {
        for tl in &terms {
            norm += tk.coeff
                * tl.coeff.conj()
                * x_overlap(tk.center1, tl.center1)
                * x_overlap(tk.center2, tl.center2)
                * (y_overlap * y_overlap);
        }
    }
    Ok(norm.re)
}
