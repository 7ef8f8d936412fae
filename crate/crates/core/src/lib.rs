//! Simulation and analysis of a pulse-driven NV-centre two-level system
//! under a large-amplitude AC field.
//!
//! The crate is organised bottom-up:
//!
//! - [`math`]: spin states, 2×2 unitaries and high-order Bessel functions.
//! - [`analytic`]: closed-form delta-pulse model (phase accumulation,
//!   readout probability, Bessel harmonic amplitudes, τ-sweep model).
//! - [`dynamics`]: finite-pulse XY8/CP schedules integrated with an adaptive
//!   Runge–Kutta solver, plus toggling-frame diagnostics.
//! - [`readout`]: sequential-readout series, photon shot noise and
//!   count normalisation.
//! - [`spectral`]: DFT, sinc peak fits, harmonic extraction and
//!   amplitude × harmonic maps.
//! - [`calibration`]: τ-sweep and Bessel-amplitude parameter fits.
//! - [`cli`]: configuration, the `simulate`/`analyze`/`map`/`calibrate`
//!   commands and file export.
//!
//! Runnable walkthroughs for each capability live in the crate's
//! `examples/` directory (`cargo run --release --example <name>`).

pub mod analytic;
pub mod calibration;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod math;
pub mod readout;
pub mod spectral;

pub use error::{Error, Result};
