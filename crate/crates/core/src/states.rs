//! Two-photon states over the two fiber modes a and b.
//!
//! A state is the triple of amplitudes on the Fock basis {|2,0⟩, |0,2⟩, |1,1⟩}.
//! The interferometer phase θ enters as e^{iθ} per photon in mode b and is
//! applied once, at preparation.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_8};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of the total probability from one.
pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPhotonState {
    pub amp20: Complex64,
    pub amp02: Complex64,
    pub amp11: Complex64,
}

/// Which interferometer outputs the two characterization detectors see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Both detectors behind a 50/50 split of one fiber output.
    #[default]
    SameOutput,
    /// One detector on each fiber output.
    DifferentOutputs,
}

impl TwoPhotonState {
    /// Builds a state from raw amplitudes, rejecting unnormalized input.
    pub fn new(amp20: Complex64, amp02: Complex64, amp11: Complex64) -> Result<Self> {
        let state = Self {
            amp20,
            amp02,
            amp11,
        };
        state.check_normalized()?;
        Ok(state)
    }

    /// State behind a half-wave plate at angle `alpha` with interferometer
    /// phase `theta`:
    /// sin(4α)/√2 (|2,0⟩ + e^{2iθ}|0,2⟩) + cos(4α) e^{iθ} |1,1⟩.
    pub fn prepare_from_hwp(alpha: f64, theta: f64) -> Self {
        let (s, c) = (4.0 * alpha).sin_cos();
        let pair = s * FRAC_1_SQRT_2;
        Self {
            amp20: Complex64::new(pair, 0.0),
            amp02: Complex64::from_polar(pair, 2.0 * theta),
            amp11: Complex64::from_polar(c, theta),
        }
    }

    /// (|2,0⟩ + e^{2iθ}|0,2⟩)/√2.
    pub fn noon(theta: f64) -> Self {
        Self::prepare_from_hwp(FRAC_PI_8, theta)
    }

    /// |1,1⟩.
    pub fn separable() -> Self {
        Self::prepare_from_hwp(0.0, 0.0)
    }

    pub fn norm_squared(&self) -> f64 {
        self.amp20.norm_sqr() + self.amp02.norm_sqr() + self.amp11.norm_sqr()
    }

    pub fn check_normalized(&self) -> Result<()> {
        let norm = self.norm_squared();
        if (norm - 1.0).abs() <= NORM_TOLERANCE {
            Ok(())
        } else {
            Err(Error::NotNormalized { norm })
        }
    }

    /// (p20, p02, p11).
    pub fn occupation_probabilities(&self) -> Result<(f64, f64, f64)> {
        self.check_normalized()?;
        Ok((
            self.amp20.norm_sqr(),
            self.amp02.norm_sqr(),
            self.amp11.norm_sqr(),
        ))
    }
}

/// Unnormalized characterization coincidence probability at HWP angle
/// `alpha`: p20 for [`Pairing::SameOutput`], p11 for
/// [`Pairing::DifferentOutputs`].
pub fn characterization_probability(alpha: f64, pairing: Pairing) -> f64 {
    let state = TwoPhotonState::prepare_from_hwp(alpha, 0.0);
    match pairing {
        Pairing::SameOutput => state.amp20.norm_sqr(),
        Pairing::DifferentOutputs => state.amp11.norm_sqr(),
    }
}

/// Largest value of [`characterization_probability`] over all angles.
fn characterization_peak(pairing: Pairing) -> f64 {
    match pairing {
        Pairing::SameOutput => 0.5,
        Pairing::DifferentOutputs => 1.0,
    }
}

/// Peak-normalized characterization curve: `(alpha, rate)` with the rate in
/// [0, 1]. Both curves have period π/4 in α and ideal visibility 1.
pub fn characterization_scan(alphas: &[f64], pairing: Pairing) -> Result<Vec<(f64, f64)>> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument(
            "characterization scan needs at least one angle".into(),
        ));
    }
    let peak = characterization_peak(pairing);
    Ok(alphas
        .iter()
        .map(|&alpha| (alpha, characterization_probability(alpha, pairing) / peak))
        .collect())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

    use proptest::prelude::*;

    use super::*;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-14
    }

    #[test]
    fn alpha_zero_is_separable() {
        let s = TwoPhotonState::prepare_from_hwp(0.0, 0.0);
        assert!(close(s.amp20, 0.0.into()));
        assert!(close(s.amp02, 0.0.into()));
        assert!(close(s.amp11, 1.0.into()));
        assert_eq!(s, TwoPhotonState::separable());
    }

    #[test]
    fn alpha_pi_over_8_is_noon() {
        let s = TwoPhotonState::prepare_from_hwp(FRAC_PI_8, 0.0);
        assert!(close(s.amp20, FRAC_1_SQRT_2.into()));
        assert!(close(s.amp02, FRAC_1_SQRT_2.into()));
        assert!(s.amp11.norm() < 1e-15);
    }

    #[test]
    fn alpha_pi_over_16_mixture() {
        let s = TwoPhotonState::prepare_from_hwp(PI / 16.0, 0.0);
        assert!(close(s.amp20, 0.5.into()));
        assert!(close(s.amp02, 0.5.into()));
        assert!(close(s.amp11, (SQRT_2 / 2.0).into()));
        let (p20, p02, p11) = s.occupation_probabilities().unwrap();
        assert!((p20 - 0.25).abs() < 1e-15);
        assert!((p02 - 0.25).abs() < 1e-15);
        assert!((p11 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn noon_half_pi_flips_sign() {
        let s = TwoPhotonState::noon(FRAC_PI_2);
        assert!(close(s.amp20, FRAC_1_SQRT_2.into()));
        assert!(close(s.amp02, (-FRAC_1_SQRT_2).into()));
    }

    #[test]
    fn noon_probabilities() {
        for theta in [0.0, 0.3, 1.7, -2.2] {
            let (p20, p02, p11) = TwoPhotonState::noon(theta)
                .occupation_probabilities()
                .unwrap();
            assert!((p20 - 0.5).abs() < 1e-15 && (p02 - 0.5).abs() < 1e-15 && p11 < 1e-30);
        }
    }

    #[test]
    fn unnormalized_rejected() {
        let err = TwoPhotonState::new(1.0.into(), 1.0.into(), 0.0.into()).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { norm } if (norm - 2.0).abs() < 1e-15));
        let raw = TwoPhotonState {
            amp20: 0.5.into(),
            amp02: 0.0.into(),
            amp11: 0.0.into(),
        };
        assert!(raw.occupation_probabilities().is_err());
    }

    #[test]
    fn characterization_extrema() {
        let same = characterization_scan(&[0.0, FRAC_PI_8], Pairing::SameOutput).unwrap();
        assert!(same[0].1.abs() < 1e-15);
        assert!((same[1].1 - 1.0).abs() < 1e-15);
        let diff = characterization_scan(
            &[0.0, FRAC_PI_8, FRAC_PI_4, FRAC_PI_4 + FRAC_PI_8],
            Pairing::DifferentOutputs,
        )
        .unwrap();
        assert!((diff[0].1 - 1.0).abs() < 1e-15);
        assert!(diff[1].1.abs() < 1e-15);
        assert!((diff[2].1 - 1.0).abs() < 1e-15);
        assert!(diff[3].1.abs() < 1e-15);
    }

    #[test]
    fn characterization_needs_angles() {
        assert!(characterization_scan(&[], Pairing::SameOutput).is_err());
    }

    #[test]
    fn characterization_period_is_quarter_pi() {
        // brute-force comparison over a dense grid
        for i in 0..400 {
            let alpha = -1.0 + i as f64 * 0.01;
            for pairing in [Pairing::SameOutput, Pairing::DifferentOutputs] {
                let a = characterization_probability(alpha, pairing);
                let b = characterization_probability(alpha + FRAC_PI_4, pairing);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn prepared_states_are_normalized(alpha in -10.0f64..10.0, theta in -10.0f64..10.0) {
            let state = TwoPhotonState::prepare_from_hwp(alpha, theta);
            prop_assert!((state.norm_squared() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn probabilities_ignore_phase(alpha in -4.0f64..4.0, theta in -4.0f64..4.0) {
            let (a20, a02, a11) = TwoPhotonState::prepare_from_hwp(alpha, theta)
                .occupation_probabilities().unwrap();
            let (b20, b02, b11) = TwoPhotonState::prepare_from_hwp(alpha, 0.0)
                .occupation_probabilities().unwrap();
            prop_assert!((a20 - b20).abs() < 1e-14);
            prop_assert!((a02 - b02).abs() < 1e-14);
            prop_assert!((a11 - b11).abs() < 1e-14);
        }

        #[test]
        fn characterization_matches_closed_form(alpha in -4.0f64..4.0) {
            let p20 = characterization_probability(alpha, Pairing::SameOutput);
            let p11 = characterization_probability(alpha, Pairing::DifferentOutputs);
            prop_assert!((p20 - (4.0 * alpha).sin().powi(2) / 2.0).abs() < 1e-12);
            prop_assert!((p11 - (4.0 * alpha).cos().powi(2)).abs() < 1e-12);
        }
    }
}
