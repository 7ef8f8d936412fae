//! Scalar and 2×2 linear-algebra primitives shared by the physics modules.

mod bessel;
mod spin;

pub use bessel::{bessel_j, bessel_j_row, MAX_BESSEL_ORDER, UNDERFLOW_FLOOR};
pub use spin::{flip_operator, Mat2, SpinState, Unitary2};

pub use num_complex::Complex64;

use serde::{Deserialize, Serialize};

/// Gyromagnetic ratio of the NV electron spin, rad/(s·T).
pub const NV_GYROMAGNETIC_RATIO: f64 = 2.0 * std::f64::consts::PI * 28e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// rad/(s·T)
    pub gamma: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            gamma: NV_GYROMAGNETIC_RATIO,
        }
    }
}
