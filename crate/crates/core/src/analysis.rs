//! Fringe fitting and comparison with theory.
//!
//! Scans are fitted with
//!
//! ```text
//! value(s) = baseline + amplitude · exp(-(s - c)² / 2w²) · (1 + V cos(2πs/P + φ0))
//! ```
//!
//! by weighted Levenberg-Marquardt least squares. The envelope is written in
//! terms of its curvature κ = 1/2w², so a flat envelope is an ordinary
//! parameter value rather than w → ∞. Angular scans (phase, HWP) use the
//! [`EnvelopeShape::Flat`] model amplitude · (1 + V cos(2πs/P + φ0)).
//!
//! Spatial scans run along a detector diagonal, so the fringe period in s is
//! Λ/2 and the reported Λ is twice the fitted period.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setup::OpticalSetup;

/// Highest two-photon fringe visibility attainable with classical light.
pub const CLASSICAL_VISIBILITY_BOUND: f64 = 0.5;

pub const MIN_FIT_SAMPLES: usize = 8;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;
pub const DEFAULT_STEP_TOLERANCE: f64 = 1e-10;

/// One scan point: parameter, measured value and optional standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeSample {
    pub s: f64,
    pub value: f64,
    pub error: Option<f64>,
}

impl FringeSample {
    pub fn new(s: f64, value: f64) -> Self {
        Self {
            s,
            value,
            error: None,
        }
    }

    pub fn with_error(s: f64, value: f64, error: f64) -> Self {
        Self {
            s,
            value,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    /// Gaussian envelope with free baseline, width and centre.
    #[default]
    Gaussian,
    /// No envelope and no baseline: amplitude · (1 + V cos(...)).
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeModel {
    pub baseline: f64,
    pub amplitude: f64,
    /// Gaussian envelope width in s; `None` for a flat or growing envelope.
    pub envelope_sigma: Option<f64>,
    pub envelope_center: f64,
    /// Fringe period in s; `None` when no fringe was fitted.
    pub period_s: Option<f64>,
    pub phase0: f64,
    pub visibility: f64,
}

impl FringeModel {
    pub fn evaluate(&self, s: f64) -> f64 {
        let envelope = match self.envelope_sigma {
            Some(w) => (-(s - self.envelope_center).powi(2) / (2.0 * w * w)).exp(),
            None => 1.0,
        };
        let fringe = match self.period_s {
            Some(p) => 1.0 + self.visibility * (2.0 * PI * s / p + self.phase0).cos(),
            None => 1.0,
        };
        self.baseline + self.amplitude * envelope * fringe
    }
}

/// Standard errors of the fitted parameters, scaled by the residual variance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Uncertainties {
    pub baseline: Option<f64>,
    pub amplitude: Option<f64>,
    pub envelope_sigma: Option<f64>,
    pub envelope_center: Option<f64>,
    pub period_s: Option<f64>,
    pub phase0: Option<f64>,
    pub visibility: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Fringe,
    /// No significant fringe; visibility is reported as 0.
    EnvelopeOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub envelope: EnvelopeShape,
    pub model: FringeModel,
    pub uncertainties: Uncertainties,
    /// √χ² at the optimum (weighted when errors are given).
    pub residual_norm: f64,
    /// √χ² at the starting point of the selected solution.
    pub initial_residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fitted visibility fell outside [0, 1] and was clamped.
    pub visibility_clamped: bool,
    /// Reported Λ = 2 × period_s; spatial (Gaussian-envelope) fits only.
    pub lambda_reported: Option<f64>,
    pub lambda_uncertainty: Option<f64>,
    pub degrees_of_freedom: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub envelope: EnvelopeShape,
    /// Skip spectral seeding and start from this model.
    pub initial: Option<FringeModel>,
    pub max_iterations: usize,
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            envelope: EnvelopeShape::Gaussian,
            initial: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            step_tolerance: DEFAULT_STEP_TOLERANCE,
        }
    }
}

impl FitOptions {
    pub fn flat() -> Self {
        Self {
            envelope: EnvelopeShape::Flat,
            ..Self::default()
        }
    }
}

// Parameter layout, in coordinates scaled by the data extents.
const BASE: usize = 0;
const AMP: usize = 1;
const CURV: usize = 2;
const CENTER: usize = 3;
const PERIOD: usize = 4;
const PHASE: usize = 5;
const VIS: usize = 6;
const NPAR: usize = 7;

type Params = [f64; NPAR];
type Mask = [bool; NPAR];

const FRINGE_GAUSSIAN: Mask = [true; NPAR];
const FRINGE_FLAT: Mask = [false, true, false, false, true, true, true];
const ENVELOPE_ONLY: Mask = [true, true, true, true, false, false, false];

fn model_with_gradient(p: &Params, s: f64) -> (f64, Params) {
    let ds = s - p[CENTER];
    let g = (-p[CURV] * ds * ds).exp();
    let arg = 2.0 * PI * s / p[PERIOD] + p[PHASE];
    let (sn, cs) = arg.sin_cos();
    let m = 1.0 + p[VIS] * cs;
    let agm = p[AMP] * g * m;
    let agv = p[AMP] * g * p[VIS];
    let value = p[BASE] + agm;
    let mut grad = [0.0; NPAR];
    grad[BASE] = 1.0;
    grad[AMP] = g * m;
    grad[CURV] = -agm * ds * ds;
    grad[CENTER] = agm * 2.0 * p[CURV] * ds;
    grad[PERIOD] = agv * sn * 2.0 * PI * s / (p[PERIOD] * p[PERIOD]);
    grad[PHASE] = -agv * sn;
    grad[VIS] = p[AMP] * g * cs;
    (value, grad)
}

/// Data rescaled to unit extent in s and value, with weights.
struct Prepared {
    s: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    s_scale: f64,
    y_scale: f64,
    /// Converts χ² in scaled units back to data units (1 when weighted).
    chi2_scale: f64,
}

impl Prepared {
    fn chi2(&self, p: &Params) -> f64 {
        self.s
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((&s, &y), &w)| {
                let (f, _) = model_with_gradient(p, s);
                w * (y - f).powi(2)
            })
            .sum()
    }

    fn weighted_norm_sq(&self) -> f64 {
        self.y.iter().zip(&self.w).map(|(y, w)| w * y * y).sum()
    }
}

fn prepare(samples: &[FringeSample]) -> Result<Prepared> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::DegenerateData(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples
        .iter()
        .any(|x| !(x.s.is_finite() && x.value.is_finite()))
    {
        return Err(Error::DegenerateData("non-finite sample".into()));
    }
    let with_errors = samples.iter().filter(|x| x.error.is_some()).count();
    if with_errors != 0 && with_errors != samples.len() {
        return Err(Error::DegenerateData(
            "errors given for only some samples".into(),
        ));
    }
    if samples
        .iter()
        .any(|x| x.error.is_some_and(|e| !(e.is_finite() && e > 0.0)))
    {
        return Err(Error::DegenerateData(
            "sample errors must be positive".into(),
        ));
    }
    let s_scale = samples.iter().fold(0.0f64, |m, x| m.max(x.s.abs()));
    let y_scale = samples.iter().fold(0.0f64, |m, x| m.max(x.value.abs()));
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x.value), hi.max(x.value))
        });
    if y_scale == 0.0 || hi - lo <= 1e-14 * y_scale {
        return Err(Error::DegenerateData("constant input".into()));
    }
    let s_lo = samples.iter().fold(f64::INFINITY, |m, x| m.min(x.s));
    let s_hi = samples.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.s));
    if s_scale == 0.0 || s_hi - s_lo <= 1e-14 * s_scale {
        return Err(Error::DegenerateData(
            "all samples at the same parameter".into(),
        ));
    }
    Ok(Prepared {
        s: samples.iter().map(|x| x.s / s_scale).collect(),
        y: samples.iter().map(|x| x.value / y_scale).collect(),
        w: samples
            .iter()
            .map(|x| x.error.map_or(1.0, |e| (y_scale / e).powi(2)))
            .collect(),
        s_scale,
        y_scale,
        chi2_scale: if with_errors > 0 {
            1.0
        } else {
            y_scale * y_scale
        },
    })
}

struct LmOutcome {
    params: Params,
    chi2: f64,
    initial_chi2: f64,
    iterations: usize,
    converged: bool,
    /// Undamped JᵀWJ over the free parameters at the optimum.
    normal: DMatrix<f64>,
}

fn normal_equations(data: &Prepared, p: &Params, free: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let k = free.len();
    let mut h = DMatrix::zeros(k, k);
    let mut g = DVector::zeros(k);
    for ((&s, &y), &w) in data.s.iter().zip(&data.y).zip(&data.w) {
        let (f, grad) = model_with_gradient(p, s);
        let r = y - f;
        for (a, &ia) in free.iter().enumerate() {
            g[a] += w * grad[ia] * r;
            for (b, &ib) in free.iter().enumerate().take(a + 1) {
                h[(a, b)] += w * grad[ia] * grad[ib];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            h[(b, a)] = h[(a, b)];
        }
    }
    (h, g)
}

/// Damped Gauss-Newton with Marquardt's diagonal scaling.
fn levenberg_marquardt(
    data: &Prepared,
    start: Params,
    mask: &Mask,
    options: &FitOptions,
) -> LmOutcome {
    let free: Vec<usize> = (0..NPAR).filter(|&i| mask[i]).collect();
    let exact_fit = 1e-24 * data.weighted_norm_sq();
    let mut p = start;
    let mut chi2 = data.chi2(&p);
    let initial_chi2 = chi2;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations && chi2.is_finite() {
        iterations += 1;
        if chi2 <= exact_fit {
            converged = true;
            break;
        }
        let (h, g) = normal_equations(data, &p, &free);
        // gradient orthogonality test: |Jᵢᵀr| / (‖Jᵢ‖ ‖r‖)
        let gmax = (0..free.len())
            .map(|a| g[a].abs() / (h[(a, a)].sqrt() * chi2.sqrt()).max(f64::MIN_POSITIVE))
            .fold(0.0f64, f64::max);
        if gmax < 1e-12 {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = h.clone();
            for a in 0..free.len() {
                damped[(a, a)] += lambda * h[(a, a)].max(1e-30);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&g);
            let mut trial = p;
            for (a, &i) in free.iter().enumerate() {
                trial[i] += step[a];
            }
            let trial_chi2 = data.chi2(&trial);
            if trial_chi2.is_finite() && trial_chi2 < chi2 {
                let step_norm = step.norm();
                let p_norm = free.iter().map(|&i| p[i] * p[i]).sum::<f64>().sqrt();
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if step_norm <= options.step_tolerance * (p_norm + options.step_tolerance) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at working precision
            converged = gmax < 1e-6 || chi2 <= 1e-20 * data.weighted_norm_sq();
            break;
        }
        if converged {
            break;
        }
    }
    let (normal, _) = normal_equations(data, &p, &free);
    LmOutcome {
        params: p,
        chi2,
        initial_chi2,
        iterations,
        converged,
        normal,
    }
}

/// Weighted DFT of `r` at frequency `f` (cycles per unit s).
fn dft(s: &[f64], r: &[f64], f: f64) -> (f64, f64) {
    s.iter().zip(r).fold((0.0, 0.0), |(re, im), (&x, &v)| {
        let (sn, cs) = (2.0 * PI * f * x).sin_cos();
        (re + v * cs, im - v * sn)
    })
}

/// Frequencies of the strongest local maxima of the DFT power of `r`,
/// searched from one cycle per span up to the mean-spacing Nyquist limit.
fn spectral_peaks(s: &[f64], r: &[f64], count: usize) -> Vec<f64> {
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let span = hi - lo;
    let f_min = 1.0 / span;
    let f_max = (s.len() - 1) as f64 / (2.0 * span);
    if f_max <= f_min {
        return Vec::new();
    }
    let df = 1.0 / (8.0 * span);
    let grid: Vec<f64> = (0..)
        .map(|i| f_min + i as f64 * df)
        .take_while(|&f| f <= f_max)
        .collect();
    let power: Vec<f64> = grid
        .iter()
        .map(|&f| {
            let (re, im) = dft(s, r, f);
            re * re + im * im
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (1..power.len().saturating_sub(1))
        .filter(|&i| power[i] > power[i - 1] && power[i] >= power[i + 1])
        .map(|i| (power[i], grid[i]))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    peaks.into_iter().take(count).map(|(_, f)| f).collect()
}

fn moment_envelope(data: &Prepared) -> (f64, f64) {
    let min = data.y.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = data.y.iter().map(|y| y - min).collect();
    let total: f64 = weights.iter().sum();
    let center = data.s.iter().zip(&weights).map(|(s, w)| s * w).sum::<f64>() / total;
    let var = data
        .s
        .iter()
        .zip(&weights)
        .map(|(s, w)| w * (s - center).powi(2))
        .sum::<f64>()
        / total;
    (center, 1.0 / (2.0 * var.max(1e-6)))
}

fn envelope_seeds(data: &Prepared) -> Vec<Params> {
    let n = data.y.len() as f64;
    let mean = data.y.iter().sum::<f64>() / n;
    let max = data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = data.y.iter().copied().fold(f64::INFINITY, f64::min);
    let (center, curvature) = moment_envelope(data);
    let seed = |base: f64, amp: f64| {
        let mut p = [0.0; NPAR];
        p[BASE] = base;
        p[AMP] = amp;
        p[CURV] = curvature;
        p[CENTER] = center;
        p[PERIOD] = 1.0;
        p
    };
    vec![seed(mean, max - mean), seed(min, max - min)]
}

fn best_of<I: IntoIterator<Item = LmOutcome>>(outcomes: I) -> Option<LmOutcome> {
    outcomes
        .into_iter()
        .filter(|o| o.chi2.is_finite())
        .min_by(|a, b| {
            // prefer converged solutions, then lower χ²
            b.converged
                .cmp(&a.converged)
                .then(a.chi2.total_cmp(&b.chi2))
        })
}

/// Fringe seeds from the residual spectrum of `background`.
fn fringe_seeds(data: &Prepared, background: &Params, flat: bool) -> Vec<Params> {
    let residual: Vec<f64> = data
        .s
        .iter()
        .zip(&data.y)
        .map(|(&s, &y)| y - model_with_gradient(background, s).0)
        .collect();
    let envelope_sum: f64 = data
        .s
        .iter()
        .map(|&s| model_with_gradient(background, s).0 - background[BASE])
        .sum();
    spectral_peaks(&data.s, &residual, 3)
        .into_iter()
        .map(|f| {
            let (re, im) = dft(&data.s, &residual, f);
            let mut p = *background;
            p[PERIOD] = 1.0 / f;
            p[PHASE] = im.atan2(re);
            p[VIS] = (2.0 * (re * re + im * im).sqrt() / envelope_sum.abs().max(1e-300))
                .clamp(0.05, 1.0);
            if flat {
                p[BASE] = 0.0;
                p[CURV] = 0.0;
                p[CENTER] = 0.0;
            }
            p
        })
        .collect()
}

fn wrap_phase(phi: f64) -> f64 {
    let wrapped = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

fn params_from_model(model: &FringeModel, data: &Prepared) -> Params {
    let mut p = [0.0; NPAR];
    p[BASE] = model.baseline / data.y_scale;
    p[AMP] = model.amplitude / data.y_scale;
    p[CURV] = model
        .envelope_sigma
        .map_or(0.0, |w| data.s_scale * data.s_scale / (2.0 * w * w));
    p[CENTER] = model.envelope_center / data.s_scale;
    p[PERIOD] = model.period_s.map_or(1.0, |x| x / data.s_scale);
    p[PHASE] = model.phase0;
    p[VIS] = if model.period_s.is_some() {
        model.visibility
    } else {
        0.0
    };
    p
}

fn build_result(
    data: &Prepared,
    outcome: &LmOutcome,
    mask: &Mask,
    kind: FitKind,
    envelope: EnvelopeShape,
) -> FitResult {
    let mut p = outcome.params;
    let free: Vec<usize> = (0..NPAR).filter(|&i| mask[i]).collect();
    let n = data.y.len();
    let dof = n.saturating_sub(free.len());
    let residual_variance = if dof > 0 {
        outcome.chi2 / dof as f64
    } else {
        0.0
    };

    let mut errors = [None; NPAR];
    if let Some(inverse) = outcome.normal.clone().cholesky().map(|c| c.inverse()) {
        for (a, &i) in free.iter().enumerate() {
            let var = inverse[(a, a)] * residual_variance;
            if var.is_finite() && var >= 0.0 {
                errors[i] = Some(var.sqrt());
            }
        }
    }

    let fringe = kind == FitKind::Fringe;
    let mut clamped = false;
    if fringe {
        if p[VIS] < 0.0 {
            p[VIS] = -p[VIS];
            p[PHASE] += PI;
        }
        if p[PERIOD] < 0.0 {
            // cos(-x + φ) = cos(x - φ)
            p[PERIOD] = -p[PERIOD];
            p[PHASE] = -p[PHASE];
        }
        if p[VIS] > 1.0 {
            p[VIS] = 1.0;
            clamped = true;
        }
        p[PHASE] = wrap_phase(p[PHASE]);
    }
    if p[AMP] < 0.0 {
        clamped = true;
    }

    let (ss, ys) = (data.s_scale, data.y_scale);
    let envelope_sigma = (mask[CURV] && p[CURV] > 0.0).then(|| ss / (2.0 * p[CURV]).sqrt());
    let sigma_error = match (envelope_sigma, errors[CURV]) {
        (Some(_), Some(e)) => Some(ss * (2.0 * p[CURV]).powf(-1.5) * e),
        _ => None,
    };
    let period_s = fringe.then(|| p[PERIOD] * ss);
    let period_error = if fringe {
        errors[PERIOD].map(|e| e * ss)
    } else {
        None
    };
    // Λ only has meaning for spatial (enveloped) scans
    let spatial = envelope == EnvelopeShape::Gaussian;

    FitResult {
        kind,
        envelope,
        model: FringeModel {
            baseline: p[BASE] * ys,
            amplitude: p[AMP] * ys,
            envelope_sigma,
            envelope_center: p[CENTER] * ss,
            period_s,
            phase0: if fringe { p[PHASE] } else { 0.0 },
            visibility: if fringe { p[VIS] } else { 0.0 },
        },
        uncertainties: Uncertainties {
            baseline: errors[BASE].map(|e| e * ys),
            amplitude: errors[AMP].map(|e| e * ys),
            envelope_sigma: sigma_error,
            envelope_center: errors[CENTER].map(|e| e * ss),
            period_s: period_error,
            phase0: if fringe { errors[PHASE] } else { None },
            visibility: if fringe { errors[VIS] } else { None },
        },
        residual_norm: (outcome.chi2.max(0.0) * data.chi2_scale).sqrt(),
        initial_residual_norm: (outcome.initial_chi2.max(0.0) * data.chi2_scale).sqrt(),
        iterations: outcome.iterations,
        converged: outcome.converged,
        visibility_clamped: clamped,
        lambda_reported: period_s.filter(|_| spatial).map(|p| 2.0 * p),
        lambda_uncertainty: period_error.filter(|_| spatial).map(|e| 2.0 * e),
        degrees_of_freedom: dof,
    }
}

/// True when the envelope-only model already explains the data: a noiseless
/// residual, or (with errors) a reduced χ² consistent with pure noise.
fn envelope_suffices(data: &Prepared, outcome: &LmOutcome, has_errors: bool, free: usize) -> bool {
    let n = data.y.len() as f64;
    let mean = data.y.iter().sum::<f64>() / n;
    let spread: f64 = data
        .y
        .iter()
        .zip(&data.w)
        .map(|(y, w)| w * (y - mean).powi(2))
        .sum();
    if outcome.chi2 <= 1e-12 * spread {
        return true;
    }
    if has_errors {
        let dof = (n - free as f64).max(1.0);
        return outcome.chi2 / dof <= 1.0 + 3.0 * (2.0 / dof).sqrt();
    }
    false
}

/// Weighted nonlinear least-squares fringe fit.
///
/// Samples carry standard errors (weights 1/error²) or none (uniform
/// weights). Without `options.initial`, the period is seeded from the
/// strongest peaks of the residual spectrum after an envelope-only fit, and the
/// best converged candidate is returned. Data without a significant fringe
/// yield a [`FitKind::EnvelopeOnly`] result.
pub fn fit_fringe(samples: &[FringeSample], options: &FitOptions) -> Result<FitResult> {
    let data = prepare(samples)?;
    let has_errors = samples[0].error.is_some();
    let flat = options.envelope == EnvelopeShape::Flat;
    let fringe_mask = if flat { FRINGE_FLAT } else { FRINGE_GAUSSIAN };

    if let Some(initial) = options.initial {
        let start = params_from_model(&initial, &data);
        let outcome = levenberg_marquardt(&data, start, &fringe_mask, options);
        if !outcome.converged {
            return Err(Error::NoConvergence {
                iterations: outcome.iterations,
                chi2: outcome.chi2 * data.chi2_scale,
            });
        }
        return Ok(build_result(
            &data,
            &outcome,
            &fringe_mask,
            FitKind::Fringe,
            options.envelope,
        ));
    }

    let background = if flat {
        let n = data.y.len() as f64;
        let mut p = [0.0; NPAR];
        p[AMP] = data.y.iter().sum::<f64>() / n;
        p[PERIOD] = 1.0;
        let mut envelope_mask = [false; NPAR];
        envelope_mask[AMP] = true;
        let outcome = levenberg_marquardt(&data, p, &envelope_mask, options);
        if envelope_suffices(&data, &outcome, has_errors, 1) {
            return Ok(build_result(
                &data,
                &outcome,
                &envelope_mask,
                FitKind::EnvelopeOnly,
                options.envelope,
            ));
        }
        outcome.params
    } else {
        let outcome = best_of(
            envelope_seeds(&data)
                .into_iter()
                .map(|seed| levenberg_marquardt(&data, seed, &ENVELOPE_ONLY, options)),
        )
        .ok_or(Error::NoConvergence {
            iterations: options.max_iterations,
            chi2: f64::NAN,
        })?;
        if envelope_suffices(&data, &outcome, has_errors, 4) {
            return Ok(build_result(
                &data,
                &outcome,
                &ENVELOPE_ONLY,
                FitKind::EnvelopeOnly,
                options.envelope,
            ));
        }
        outcome.params
    };

    let seeds = fringe_seeds(&data, &background, flat);
    if seeds.is_empty() {
        return Err(Error::DegenerateData(
            "no fringe frequency resolvable within the scan".into(),
        ));
    }
    let best = best_of(
        seeds
            .into_iter()
            .map(|seed| levenberg_marquardt(&data, seed, &fringe_mask, options)),
    );
    match best {
        Some(outcome) if outcome.converged => Ok(build_result(
            &data,
            &outcome,
            &fringe_mask,
            FitKind::Fringe,
            options.envelope,
        )),
        Some(outcome) => Err(Error::NoConvergence {
            iterations: outcome.iterations,
            chi2: outcome.chi2 * data.chi2_scale,
        }),
        None => Err(Error::NoConvergence {
            iterations: options.max_iterations,
            chi2: f64::NAN,
        }),
    }
}

/// Model-free visibility (max − min)/(max + min).
///
/// With `envelope_sigma`, values are first divided by a centred Gaussian
/// envelope of that width (in s) and only samples with |s| ≤ envelope_sigma/2
/// are used.
pub fn visibility_from_extrema(
    samples: &[FringeSample],
    envelope_sigma: Option<f64>,
) -> Result<f64> {
    let corrected: Vec<f64> = match envelope_sigma {
        Some(w) => samples
            .iter()
            .filter(|x| x.s.abs() <= w / 2.0)
            .map(|x| x.value / (-(x.s * x.s) / (2.0 * w * w)).exp())
            .collect(),
        None => samples.iter().map(|x| x.value).collect(),
    };
    if corrected.len() < 3 {
        return Err(Error::DegenerateData(format!(
            "need at least 3 samples near the envelope peak, got {}",
            corrected.len()
        )));
    }
    let max = corrected.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = corrected.iter().copied().fold(f64::INFINITY, f64::min);
    if max + min == 0.0 {
        return Err(Error::DegenerateData("max + min = 0".into()));
    }
    Ok(((max - min) / (max + min)).clamp(0.0, 1.0))
}

/// Residual modulation of a scan after removing its best Gaussian envelope.
///
/// ln(value) is fitted with a quadratic in s by linear least squares; the
/// returned depth is (max − min)/(max + min) of value / exp(quadratic). A pure
/// Gaussian gives 0 up to rounding, a fringe pattern with nulls gives 1.
pub fn modulation_depth(samples: &[FringeSample]) -> Result<f64> {
    let positive: Vec<&FringeSample> = samples.iter().filter(|x| x.value > 0.0).collect();
    if positive.len() < 3 {
        return Err(Error::DegenerateData(
            "need at least 3 positive samples".into(),
        ));
    }
    let scale = positive
        .iter()
        .fold(0.0f64, |m, x| m.max(x.s.abs()))
        .max(f64::MIN_POSITIVE);
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for x in &positive {
        let t = x.s / scale;
        let basis = Vector3::new(1.0, t, t * t);
        normal += basis * basis.transpose();
        rhs += basis * x.value.ln();
    }
    let coeffs = normal
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateData("envelope fit is singular".into()))?;
    let ratios: Vec<f64> = samples
        .iter()
        .map(|x| {
            let t = x.s / scale;
            let envelope = (coeffs[0] + coeffs[1] * t + coeffs[2] * t * t).exp();
            x.value.max(0.0) / envelope
        })
        .collect();
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max - min) / (max + min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub theory_lambda: f64,
    pub fitted_lambda: Option<f64>,
    pub fitted_lambda_uncertainty: Option<f64>,
    /// fitted Λ / theory Λ.
    pub lambda_ratio: Option<f64>,
    pub theory_sigma: f64,
    /// √2 × fitted envelope width: diagonal scans see exp(-s²/σ²).
    pub fitted_sigma: Option<f64>,
    pub sigma_ratio: Option<f64>,
    pub visibility: f64,
    pub visibility_uncertainty: Option<f64>,
    pub classical_bound: f64,
    /// (V − 0.5)/σ_V.
    pub bound_exceedance_sigmas: Option<f64>,
    pub converged: bool,
    pub summary: Vec<String>,
}

/// Fitted fringe period, envelope and visibility against the setup's theory
/// values, for a scan along a detector diagonal.
pub fn compare(fit: &FitResult, setup: &OpticalSetup) -> Result<Comparison> {
    let derived = setup.derive()?;
    let lambda_ratio = fit.lambda_reported.map(|l| l / derived.period);
    let fitted_sigma = fit
        .model
        .envelope_sigma
        .map(|w| w * std::f64::consts::SQRT_2);
    let sigma_ratio = fitted_sigma.map(|s| s / derived.sigma);
    let v = fit.model.visibility;
    let exceedance = fit
        .uncertainties
        .visibility
        .filter(|e| *e > 0.0)
        .map(|e| (v - CLASSICAL_VISIBILITY_BOUND) / e);

    let um = |x: f64| x * 1e6;
    let mut summary = Vec::new();
    match (fit.lambda_reported, lambda_ratio) {
        (Some(l), Some(ratio)) => {
            let pm = fit
                .lambda_uncertainty
                .map_or(String::new(), |e| format!(" ± {:.1}", um(e)));
            let deviation = (1.0 - ratio) * 100.0;
            let relation = if deviation >= 0.0 {
                format!("{:.1}% below theory", deviation)
            } else {
                format!("{:.1}% above theory", -deviation)
            };
            summary.push(format!(
                "fringe period: fitted Λ = {:.1}{pm} µm, theory {:.1} µm, ratio {:.3} ({relation})",
                um(l),
                um(derived.period),
                ratio
            ));
        }
        _ => summary.push(format!(
            "fringe period: none fitted, theory Λ = {:.1} µm",
            um(derived.period)
        )),
    }
    match (fitted_sigma, sigma_ratio) {
        (Some(s), Some(r)) => summary.push(format!(
            "envelope: fitted σ = {:.1} µm, theory {:.1} µm, ratio {:.3}",
            um(s),
            um(derived.sigma),
            r
        )),
        _ => summary.push(format!(
            "envelope: flat, theory σ = {:.1} µm",
            um(derived.sigma)
        )),
    }
    let pm = fit
        .uncertainties
        .visibility
        .map_or(String::new(), |e| format!(" ± {:.1}", e * 100.0));
    summary.push(format!(
        "visibility: {:.1}{pm} % (fit standard error)",
        v * 100.0
    ));
    if let Some(k) = exceedance {
        let relation = if k >= 0.0 { "above" } else { "below" };
        summary.push(format!(
            "classical bound: {:.1} standard errors {relation} the 50% classical limit",
            k.abs()
        ));
    }
    if !fit.converged {
        summary.push("warning: fit did not converge".into());
    }

    Ok(Comparison {
        theory_lambda: derived.period,
        fitted_lambda: fit.lambda_reported,
        fitted_lambda_uncertainty: fit.lambda_uncertainty,
        lambda_ratio,
        theory_sigma: derived.sigma,
        fitted_sigma,
        sigma_ratio,
        visibility: v,
        visibility_uncertainty: fit.uncertainties.visibility,
        classical_bound: CLASSICAL_VISIBILITY_BOUND,
        bound_exceedance_sigmas: exceedance,
        converged: fit.converged,
        summary,
    })
}
