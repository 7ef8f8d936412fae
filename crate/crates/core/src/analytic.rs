//! Closed-form delta-pulse model of the CP-driven spin in a resonant AC field.
//!
//! In the toggling frame set up by ideal π pulses the AC field only enters
//! through its overlap with the square-wave modulation function `h(t)`. For a
//! resonant sinusoid the readout probability is `(1 + sin φ)/2` with
//! `φ = 2Nγb/ω · cos φ_ac`, and sweeping `φ_ac` expands it over odd
//! harmonics weighted by `J_k(2Nγb/ω)`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{bessel_j, NV_GYROMAGNETIC_RATIO};

/// Relative tolerance on `ω_ac τ = π` for the resonant formulas.
pub const RESONANCE_TOLERANCE: f64 = 1e-9;

/// Relative distance from a lock-in filter pole inside which τ is rejected.
pub const SINGULARITY_TOLERANCE: f64 = 1e-6;

/// π-pulse phase pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseCycle {
    /// Alternating phases `φ₁, φ₂, φ₁, φ₂, ...`.
    Fixed { phi1: f64, phi2: f64 },
    /// X-Y-X-Y-Y-X-Y-X, repeated.
    Xy8,
}

const XY8_PHASES: [f64; 8] = [0.0, FRAC_PI_2, 0.0, FRAC_PI_2, FRAC_PI_2, 0.0, FRAC_PI_2, 0.0];

impl PhaseCycle {
    /// Phase of the `index`-th π pulse (zero-based).
    pub fn phase_of(&self, index: usize) -> f64 {
        match *self {
            PhaseCycle::Fixed { phi1, phi2 } => {
                if index.is_multiple_of(2) {
                    phi1
                } else {
                    phi2
                }
            }
            PhaseCycle::Xy8 => XY8_PHASES[index % 8],
        }
    }
}

/// Pulse-sequence parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpConfig {
    /// Number of π pulses `N`.
    pub n_pulses: u32,
    /// Interpulse delay, s.
    pub tau: f64,
    /// Nominal π-pulse duration, s; `0` selects ideal delta pulses.
    pub t_pi: f64,
    pub phase_cycle: PhaseCycle,
    /// Relative error of every π-pulse duration (e.g. `-0.04`).
    pub pi_duration_error_fraction: f64,
    /// ε of the readout π/2 pulse, rad.
    pub readout_tilt_error: f64,
    /// Rabi frequency during pulses, rad/s. `None` means `π / t_pi`.
    pub rabi_frequency: Option<f64>,
}

impl CpConfig {
    /// XY8 sequence with ideal pulses and no errors.
    pub fn new(n_pulses: u32, tau: f64, t_pi: f64) -> Result<Self> {
        let cfg = Self {
            n_pulses,
            tau,
            t_pi,
            phase_cycle: PhaseCycle::Xy8,
            pi_duration_error_fraction: 0.0,
            readout_tilt_error: 0.0,
            rabi_frequency: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sequence whose `τ = 1/(2 f_ac)` puts the filter on resonance with `f_ac`.
    pub fn resonant(n_pulses: u32, ac_frequency_hz: f64, t_pi: f64) -> Result<Self> {
        Self::new(n_pulses, 0.5 / ac_frequency_hz, t_pi)
    }

    pub fn with_phase_cycle(mut self, cycle: PhaseCycle) -> Result<Self> {
        self.phase_cycle = cycle;
        self.validate()?;
        Ok(self)
    }

    pub fn with_duration_error(mut self, fraction: f64) -> Result<Self> {
        self.pi_duration_error_fraction = fraction;
        self.validate()?;
        Ok(self)
    }

    pub fn with_readout_error(mut self, epsilon: f64) -> Result<Self> {
        self.readout_tilt_error = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn with_rabi_frequency(mut self, rabi: f64) -> Result<Self> {
        self.rabi_frequency = Some(rabi);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses < 2 || !self.n_pulses.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_pulses must be even and >= 2, got {}",
                self.n_pulses
            )));
        }
        if matches!(self.phase_cycle, PhaseCycle::Xy8) && !self.n_pulses.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "XY8 requires n_pulses divisible by 8, got {}",
                self.n_pulses
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.t_pi >= 0.0 && self.t_pi < self.tau) {
            return Err(Error::Config(format!(
                "t_pi must satisfy 0 <= t_pi < tau, got {} (tau {})",
                self.t_pi, self.tau
            )));
        }
        if !(self.pi_duration_error_fraction > -1.0 && self.pi_duration_error_fraction.is_finite())
        {
            return Err(Error::Config("pi_duration_error_fraction must exceed -1".into()));
        }
        if self.actual_pulse_duration() >= self.tau {
            return Err(Error::Config("erroneous pulse duration exceeds tau".into()));
        }
        if !self.readout_tilt_error.is_finite() {
            return Err(Error::Config("readout_tilt_error must be finite".into()));
        }
        if let Some(r) = self.rabi_frequency {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config("rabi_frequency must be positive".into()));
            }
        }
        Ok(())
    }

    /// Delta-pulse limit.
    pub fn is_ideal_pulse(&self) -> bool {
        self.t_pi == 0.0
    }

    /// Duration including the duration error, s.
    pub fn actual_pulse_duration(&self) -> f64 {
        self.t_pi * (1.0 + self.pi_duration_error_fraction)
    }

    /// Rabi frequency during a pulse, rad/s (`None` for delta pulses
    /// without an explicit override).
    pub fn rabi(&self) -> Option<f64> {
        self.rabi_frequency
            .or_else(|| (self.t_pi > 0.0).then(|| PI / self.t_pi))
    }

    /// Total sensing time `N τ`, s.
    pub fn total_duration(&self) -> f64 {
        f64::from(self.n_pulses) * self.tau
    }

    /// Frequency selected by the filter, `ω = π/τ`.
    pub fn filter_omega(&self) -> f64 {
        PI / self.tau
    }
}

/// Sinusoidal AC field `b_ac cos(ω_ac t + φ_ac)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcField {
    /// Amplitude, T.
    pub b_ac: f64,
    /// Angular frequency, rad/s.
    pub omega_ac: f64,
    /// Phase at the start of the sequence, rad.
    pub phi_ac: f64,
}

impl AcField {
    pub fn new(b_ac: f64, omega_ac: f64, phi_ac: f64) -> Result<Self> {
        let f = Self {
            b_ac,
            omega_ac,
            phi_ac,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn from_hz(b_ac: f64, frequency_hz: f64, phi_ac: f64) -> Result<Self> {
        Self::new(b_ac, 2.0 * PI * frequency_hz, phi_ac)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_ac >= 0.0 && self.b_ac.is_finite()) {
            return Err(Error::Config(format!("b_ac must be >= 0, got {}", self.b_ac)));
        }
        if !(self.omega_ac > 0.0 && self.omega_ac.is_finite()) {
            return Err(Error::Config(format!(
                "omega_ac must be positive, got {}",
                self.omega_ac
            )));
        }
        if !self.phi_ac.is_finite() {
            return Err(Error::Config("phi_ac must be finite".into()));
        }
        Ok(())
    }

    pub fn with_amplitude(self, b_ac: f64) -> Self {
        Self { b_ac, ..self }
    }

    pub fn with_phase(self, phi_ac: f64) -> Self {
        Self { phi_ac, ..self }
    }

    pub fn frequency_hz(&self) -> f64 {
        self.omega_ac / (2.0 * PI)
    }

    /// Energy shift of `|1⟩`, `f(t) = γ b_ac cos(ω_ac t + φ_ac)`, rad/s.
    #[inline]
    pub fn detuning(&self, t: f64) -> f64 {
        NV_GYROMAGNETIC_RATIO * self.b_ac * (self.omega_ac * t + self.phi_ac).cos()
    }
}

/// Periodic field `a0 + Σ (a_k cos kωt + b_k sin kωt)` in rad/s.
/// `cos_coeffs[0]` is `a_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierField {
    pub a0: f64,
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
    pub base_omega: f64,
}

impl FourierField {
    pub fn new(a0: f64, cos_coeffs: Vec<f64>, sin_coeffs: Vec<f64>, base_omega: f64) -> Result<Self> {
        let all_finite = a0.is_finite()
            && cos_coeffs.iter().chain(&sin_coeffs).all(|c| c.is_finite());
        if !all_finite {
            return Err(Error::Config("Fourier coefficients must be finite".into()));
        }
        if !(base_omega > 0.0 && base_omega.is_finite()) {
            return Err(Error::Config("base_omega must be positive".into()));
        }
        Ok(Self {
            a0,
            cos_coeffs,
            sin_coeffs,
            base_omega,
        })
    }

    /// Fourier representation of `γ b cos(ωt + φ)` on the fundamental `ω`.
    pub fn from_ac(ac: &AcField) -> Self {
        let amp = NV_GYROMAGNETIC_RATIO * ac.b_ac;
        Self {
            a0: 0.0,
            cos_coeffs: vec![amp * ac.phi_ac.cos()],
            sin_coeffs: vec![-amp * ac.phi_ac.sin()],
            base_omega: ac.omega_ac,
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let w = self.base_omega;
        let c: f64 = self
            .cos_coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| a * ((i + 1) as f64 * w * t).cos())
            .sum();
        let s: f64 = self
            .sin_coeffs
            .iter()
            .enumerate()
            .map(|(i, b)| b * ((i + 1) as f64 * w * t).sin())
            .sum();
        self.a0 + c + s
    }
}

/// Square-wave toggling function: `-1` on `[0, τ/2) ∪ [3τ/2, 2τ)`, `+1` on
/// `[τ/2, 3τ/2)`. Time is reduced modulo `2τ`.
pub fn modulation_function(t: f64, tau: f64) -> f64 {
    let r = t.rem_euclid(2.0 * tau);
    if (0.5 * tau..1.5 * tau).contains(&r) {
        1.0
    } else {
        -1.0
    }
}

/// Phase `φ_u` acquired per `2τ` cycle: `Σ_j a_{2j+1} · 2(-1)^j / ((2j+1)ω)`.
///
/// With `h = -1` at the start of the cycle this equals `-½∫₀^{2τ} h f dt`;
/// the two toggling-frame modes separate by `2φ_u` per cycle.
pub fn phase_per_cycle(field: &FourierField) -> f64 {
    field
        .cos_coeffs
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 2 == 0)
        .map(|(i, a)| {
            let order = (i + 1) as f64;
            let j = i / 2;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            a * 2.0 * sign / (order * field.base_omega)
        })
        .sum()
}

fn check_resonance(cp: &CpConfig, ac: &AcField) -> Result<()> {
    let product = ac.omega_ac * cp.tau;
    if ((product - PI) / PI).abs() > RESONANCE_TOLERANCE {
        return Err(Error::OffResonance { product });
    }
    Ok(())
}

/// `2Nγb_ac/ω_ac`, the Bessel argument of the harmonic amplitudes.
pub fn bessel_argument(cp: &CpConfig, ac: &AcField) -> Result<f64> {
    check_resonance(cp, ac)?;
    Ok(2.0 * f64::from(cp.n_pulses) * NV_GYROMAGNETIC_RATIO * ac.b_ac / ac.omega_ac)
}

/// Net phase `φ_acq = 2N(γb_ac/ω_ac) cos φ_ac` of one sensing sequence.
pub fn acquired_phase(cp: &CpConfig, ac: &AcField) -> Result<f64> {
    Ok(bessel_argument(cp, ac)? * ac.phi_ac.cos())
}

/// Readout probability `(1 + sin φ − ε cos φ)/2`.
///
/// Excursions outside `[0, 1]` smaller than `1e-12` are clamped; larger ones
/// mean ε is too big for the first-order error model.
pub fn return_probability(phi_acq: f64, readout_tilt_error: f64) -> Result<f64> {
    let p = 0.5 * (1.0 + phi_acq.sin() - readout_tilt_error * phi_acq.cos());
    if !(-1e-12..=1.0 + 1e-12).contains(&p) {
        return Err(Error::InvalidErrorModel { value: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Amplitude of harmonic `k` for Bessel argument `a`: `J_k(a)` for odd `k`,
/// `ε J_k(a)` for even `k`. `k = 0` is not a harmonic and is rejected.
pub fn harmonic_amplitude_for_argument(k: u32, a: f64, readout_tilt_error: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("harmonic order must be >= 1".into()));
    }
    let j = bessel_j(k, a)?;
    Ok(if k % 2 == 1 { j } else { readout_tilt_error * j })
}

/// DFT amplitude `A_k` of the sequential-readout series for a resonant field.
pub fn harmonic_amplitude(k: u32, cp: &CpConfig, ac: &AcField) -> Result<f64> {
    let a = bessel_argument(cp, ac)?;
    harmonic_amplitude_for_argument(k, a, cp.readout_tilt_error)
}

/// Phase of harmonic `k` in `P₀(θ) = ½ + Σ A_k cos(kθ + φ_k)` where
/// `θ = ω_ac t_m` is the field phase advance since the first readout and
/// the amplitude is taken with its sign from [`harmonic_amplitude`].
///
/// Odd: `k(φ_ac + π/2) − π/2`. Even (readout error): `kφ_ac + π(1 + k/2)`.
pub fn harmonic_phase(k: u32, phi_ac: f64) -> f64 {
    let kf = f64::from(k);
    if k % 2 == 1 {
        kf * (phi_ac + FRAC_PI_2) - FRAC_PI_2
    } else {
        kf * phi_ac + PI * (1.0 + 0.5 * kf)
    }
}

/// Field amplitude at which `φ_acq` reaches π/2: `(π/2)·ω/(2Nγ)` with `ω = π/τ`.
pub fn small_amplitude_threshold(cp: &CpConfig) -> f64 {
    FRAC_PI_2 * cp.filter_omega() / (2.0 * f64::from(cp.n_pulses) * NV_GYROMAGNETIC_RATIO)
}

/// Lock-in filter weight `W_a(τ)` of an N-pulse CP sequence for a field at `omega_ac`.
pub fn lock_in_filter(tau: f64, n_pulses: u32, omega_ac: f64) -> Result<f64> {
    let half = 0.5 * omega_ac * tau;
    // poles where cos(ωτ/2) = 0, i.e. ωτ/2 = π/2 + nπ
    let n = ((half - FRAC_PI_2) / PI).round();
    let pole = FRAC_PI_2 + n * PI;
    if n >= 0.0 && ((half - pole) / pole).abs() <= SINGULARITY_TOLERANCE {
        return Err(Error::Singularity { tau });
    }
    let x = f64::from(n_pulses) * half;
    let envelope = if x == 0.0 { 1.0 } else { x.sin() / x };
    Ok(envelope * (1.0 - 1.0 / half.cos()))
}

/// Phase-averaged τ-sweep transition probability `½(1 − J₀(|W_a| γ b N τ))`.
pub fn tau_sweep_probability(tau: f64, cp: &CpConfig, ac: &AcField) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let w = lock_in_filter(tau, cp.n_pulses, ac.omega_ac)?;
    let arg = w.abs() * NV_GYROMAGNETIC_RATIO * ac.b_ac * f64::from(cp.n_pulses) * tau;
    Ok(0.5 * (1.0 - bessel_j(0, arg)?))
}
