//! Far-field coincidence patterns of two-photon states emitted from a
//! fiber-based double-slit Young interferometer.
//!
//! The crate is organised bottom-up:
//!
//! - [`setup`]: interferometer constants and the derived envelope size σ and
//!   fringe period Λ.
//! - [`states`]: two-photon states over the two fiber modes, prepared from a
//!   half-wave-plate angle and interferometer phase.
//! - [`optics`]: near-field wavefunction, closed-form far field and an
//!   independent Fourier quadrature of the lens transform.
//! - [`detection`]: slit-detector coincidence rates (finite and narrow slits)
//!   and the single two-photon pixel.
//! - [`scans`]: the measurement sweeps (same/opposite direction, phase, HWP)
//!   and their dephasing-averaged variants.
//! - [`counting`]: Poisson photon counting with accidental coincidences.
//! - [`analysis`]: fringe fitting, visibility estimates and comparison with
//!   theory.
//! - [`cli`]: configuration files, CSV/JSON/SVG output and the `twophoton`
//!   command-line front end.

pub mod analysis;
pub mod cli;
pub mod counting;
pub mod detection;
pub mod error;
pub mod optics;
pub mod quadrature;
pub mod scans;
pub mod setup;
pub mod states;

pub use error::{Error, Result};
pub use setup::{DerivedQuantities, OpticalSetup};
pub use states::TwoPhotonState;
