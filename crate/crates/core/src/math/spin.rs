use std::ops::{Add, Mul};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Normalised amplitude pair over the basis `{|0⟩, |1⟩}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinState {
    pub amp0: Complex64,
    pub amp1: Complex64,
}

impl SpinState {
    /// Builds a state from raw amplitudes, normalising them.
    pub fn new(amp0: Complex64, amp1: Complex64) -> Result<Self> {
        let norm = (amp0.norm_sqr() + amp1.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Config("spin state must have non-zero finite norm".into()));
        }
        Ok(Self {
            amp0: amp0 / norm,
            amp1: amp1 / norm,
        })
    }

    /// Wraps amplitudes that the caller already knows to be normalised.
    pub(crate) const fn from_raw(amp0: Complex64, amp1: Complex64) -> Self {
        Self { amp0, amp1 }
    }

    pub const fn zero() -> Self {
        Self::from_raw(ONE, ZERO)
    }

    pub const fn one() -> Self {
        Self::from_raw(ZERO, ONE)
    }

    /// `(|0⟩ - i|1⟩)/√2`, the interferometric initial state.
    pub fn sensing_superposition() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_raw(Complex64::new(r, 0.0), Complex64::new(0.0, -r))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp0.norm_sqr() + self.amp1.norm_sqr()
    }

    pub fn population0(&self) -> f64 {
        self.amp0.norm_sqr()
    }

    pub fn population1(&self) -> f64 {
        self.amp1.norm_sqr()
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &SpinState) -> Complex64 {
        self.amp0.conj() * other.amp0 + self.amp1.conj() * other.amp1
    }

    pub fn as_array(&self) -> [Complex64; 2] {
        [self.amp0, self.amp1]
    }

    /// Representative of the global-phase class: the larger-magnitude
    /// component is made real and positive.
    pub fn phase_normalized(&self) -> Self {
        let pivot = if self.amp0.norm_sqr() >= self.amp1.norm_sqr() {
            self.amp0
        } else {
            self.amp1
        };
        if pivot.norm() == 0.0 {
            return *self;
        }
        let rot = pivot.conj() / pivot.norm();
        Self::from_raw(self.amp0 * rot, self.amp1 * rot)
    }

    /// Entrywise comparison modulo global phase.
    pub fn approx_eq_up_to_phase(&self, other: &SpinState, tol: f64) -> bool {
        let a = self.phase_normalized();
        let b = other.phase_normalized();
        (a.amp0 - b.amp0).norm() <= tol && (a.amp1 - b.amp1).norm() <= tol
    }
}

/// General complex 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);

    pub fn diagonal(d0: f64, d1: f64) -> Self {
        Mat2([[d0.into(), ZERO], [ZERO, d1.into()]])
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Mat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let m = &self.0;
        Mat2([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    #[inline]
    pub fn mul_vec(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1],
            m[1][0] * v[0] + m[1][1] * v[1],
        ]
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Mat2(out)
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, rhs: Mat2) -> Mat2 {
        let mut out = self.0;
        for r in 0..2 {
            for c in 0..2 {
                out[r][c] += rhs.0[r][c];
            }
        }
        Mat2(out)
    }
}

/// Spin-flip operator `Ŝ(φ) = ½(e^{iφ}|1⟩⟨0| + e^{-iφ}|0⟩⟨1|)`.
///
/// A π rotation about it takes `|0⟩` to `-i e^{iφ}|1⟩`.
pub fn flip_operator(phase: f64) -> Mat2 {
    let e = Complex64::from_polar(0.5, phase);
    Mat2([[ZERO, e.conj()], [e, ZERO]])
}

/// Unitary 2×2 operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary2(Mat2);

impl Unitary2 {
    pub const IDENTITY: Unitary2 = Unitary2(Mat2::IDENTITY);

    /// Accepts `m` if `m†m = 1` within `1e-12` entrywise.
    pub fn from_matrix(m: Mat2) -> Result<Self> {
        let residual = (m.adjoint() * m).max_abs_diff(&Mat2::IDENTITY);
        if residual > 1e-12 {
            return Err(Error::Config(format!(
                "matrix is not unitary (residual {residual:e})"
            )));
        }
        Ok(Unitary2(m))
    }

    /// Matrix whose columns are the images of `|0⟩` and `|1⟩`; no unitarity check.
    pub fn from_columns_unchecked(col0: SpinState, col1: SpinState) -> Mat2 {
        Mat2([[col0.amp0, col1.amp0], [col0.amp1, col1.amp1]])
    }

    /// Rotation by `angle` about the equatorial axis at `phase`:
    /// `cos(θ/2)·1 − 2i sin(θ/2) Ŝ(φ)`.
    pub fn rotation(phase: f64, angle: f64) -> Self {
        let (s, c) = (0.5 * angle).sin_cos();
        let flip = flip_operator(phase).scale(Complex64::new(0.0, -2.0 * s));
        Unitary2(Mat2::IDENTITY.scale(c.into()) + flip)
    }

    /// Rectangular pulse of phase `phase` held during `[t_i, t_f]` with π time `t_pi`.
    pub fn pulse(phase: f64, t_f: f64, t_i: f64, t_pi: f64) -> Self {
        Self::rotation(phase, std::f64::consts::PI * (t_f - t_i) / t_pi)
    }

    /// `exp(-i θ |1⟩⟨1|)`
    pub fn phase_on_one(theta: f64) -> Self {
        Unitary2(Mat2([[ONE, ZERO], [ZERO, Complex64::from_polar(1.0, -theta)]]))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Unitary2(self.0.adjoint())
    }

    pub fn apply(&self, s: &SpinState) -> SpinState {
        let [a0, a1] = self.0.mul_vec(s.as_array());
        SpinState::from_raw(a0, a1)
    }

    pub fn unitarity_residual(&self) -> f64 {
        (self.0.adjoint() * self.0).max_abs_diff(&Mat2::IDENTITY)
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Unitary2) -> Unitary2 {
        Unitary2(self.0 * rhs.0)
    }
}
