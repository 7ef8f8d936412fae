//! Time-domain Schrödinger integration of the pulsed two-level system.

mod integrator;
mod schedule;

pub use integrator::{integrate, IntegratorSettings, StepStats};
pub use schedule::{
    build_schedule, build_xy8_schedule, hamiltonian_at, PulseEvent, PulseKind, ReadoutPulse,
    Schedule, Segment,
};

use crate::analytic::{modulation_function, AcField, CpConfig};
use crate::error::{Error, Result};
use crate::math::{Mat2, SpinState, NV_GYROMAGNETIC_RATIO};
use num_complex::Complex64;

/// Amplitudes and step counts of one propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation {
    pub amplitudes: [Complex64; 2],
    pub stats: StepStats,
}

impl Propagation {
    /// Deviation of `‖ψ‖²` from one, plus the corrections removed by the
    /// integrator's norm projection.
    pub fn norm_drift(&self) -> f64 {
        (self.amplitudes[0].norm_sqr() + self.amplitudes[1].norm_sqr() - 1.0).abs()
            + self.stats.norm_correction
    }
}

/// `Θ(t) = ∫₀ᵗ f(s) ds` for `f = γ b cos(ωs + φ)`, rad.
pub fn accumulated_detuning_phase(t: f64, field: &AcField) -> f64 {
    let scale = NV_GYROMAGNETIC_RATIO * field.b_ac;
    if field.omega_ac == 0.0 {
        return scale * field.phi_ac.cos() * t;
    }
    scale / field.omega_ac * ((field.omega_ac * t + field.phi_ac).sin() - field.phi_ac.sin())
}

/// `D(t) = exp(−iΘ(t)|1⟩⟨1|)`, the exact evolution under the AC term alone.
fn frame(t: f64, field: &AcField) -> Complex64 {
    Complex64::from_polar(1.0, -accumulated_detuning_phase(t, field))
}

/// Integrates over every segment of `schedule` without renormalising.
///
/// Works in the interaction picture of `f(t)|1⟩⟨1|`: between pulses the
/// state is frozen and during a pulse the drive becomes `Ω_R Ŝ(φ + Θ(t))`.
/// The lab-frame state is restored at the end.
pub fn propagate_raw(
    initial: &SpinState,
    schedule: &Schedule,
    field: &AcField,
    settings: &IntegratorSettings,
) -> Result<Propagation> {
    let mut stats = StepStats::default();
    let mut y = initial.as_array();
    for seg in schedule.segments() {
        match seg {
            Segment::Kick { time, unitary } => {
                let d = frame(time, field);
                y[1] *= d;
                y = unitary.matrix().mul_vec(y);
                y[1] *= d.conj();
            }
            Segment::Smooth {
                t0,
                t1,
                drive: Some(pulse),
            } => {
                let PulseKind::Rectangular { rabi_freq, .. } = pulse.kind else {
                    unreachable!("smooth segments only carry rectangular pulses")
                };
                let half = Complex64::from(0.5 * rabi_freq);
                y = integrate(
                    y,
                    t0,
                    t1,
                    |t| {
                        let e = Complex64::from_polar(1.0, pulse.phase + accumulated_detuning_phase(t, field));
                        Mat2([[Complex64::ZERO, half * e.conj()], [half * e, Complex64::ZERO]])
                    },
                    settings,
                    &mut stats,
                )?;
            }
            Segment::Smooth { drive: None, .. } => {}
        }
    }
    y[1] *= frame(schedule.total_duration(), field);
    Ok(Propagation {
        amplitudes: y,
        stats,
    })
}

/// Lab-frame integration of `hamiltonian_at`, segment by segment.
///
/// Slower than [`propagate_raw`]; kept as an independent check of the frame change.
pub fn propagate_lab_frame(
    initial: &SpinState,
    schedule: &Schedule,
    field: &AcField,
    settings: &IntegratorSettings,
) -> Result<Propagation> {
    let mut stats = StepStats::default();
    let mut y = initial.as_array();
    for seg in schedule.segments() {
        match seg {
            Segment::Kick { unitary, .. } => y = unitary.matrix().mul_vec(y),
            Segment::Smooth { t0, t1, drive } => {
                let pulse = drive.map_or(Mat2::ZERO, |e| e.drive());
                y = integrate(
                    y,
                    t0,
                    t1,
                    |t| pulse + Mat2::diagonal(0.0, field.detuning(t)),
                    settings,
                    &mut stats,
                )?;
            }
        }
    }
    Ok(Propagation {
        amplitudes: y,
        stats,
    })
}

/// State at the end of `schedule`, before the readout pulse.
///
/// Fails if the norm drifts by more than `10·rel_tol`.
pub fn propagate(
    initial: &SpinState,
    schedule: &Schedule,
    field: &AcField,
    settings: &IntegratorSettings,
) -> Result<SpinState> {
    let p = propagate_raw(initial, schedule, field, settings)?;
    let drift = p.norm_drift();
    if drift > 10.0 * settings.rel_tol {
        return Err(Error::Integration {
            time: schedule.total_duration(),
            reason: format!("norm drift {drift:e} exceeds tolerance"),
        });
    }
    SpinState::new(p.amplitudes[0], p.amplitudes[1])
}

/// Propagator over the whole schedule, assembled from the images of `|0⟩` and `|1⟩`.
pub fn propagator(
    schedule: &Schedule,
    field: &AcField,
    settings: &IntegratorSettings,
) -> Result<Mat2> {
    let c0 = propagate_raw(&SpinState::zero(), schedule, field, settings)?.amplitudes;
    let c1 = propagate_raw(&SpinState::one(), schedule, field, settings)?.amplitudes;
    Ok(Mat2([[c0[0], c1[0]], [c0[1], c1[1]]]))
}

/// Probability of reading `|0⟩` after a full sensing sequence.
///
/// Starts in `(|0⟩ − i|1⟩)/√2`, runs the pulse train of `cp` in `field`, then
/// applies the π/2 readout pulse (whose axis is offset by the readout error).
pub fn run_measurement(cp: &CpConfig, field: &AcField, settings: &IntegratorSettings) -> Result<f64> {
    field.validate()?;
    settings.validate(cp.tau)?;
    let schedule = build_schedule(cp)?;
    let psi = propagate(&SpinState::sensing_superposition(), &schedule, field, settings)?;
    Ok(schedule.readout().unitary().apply(&psi).population0())
}

/// Delta-pulse Floquet modes at time `t` of a sequence with delay `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetModes {
    pub phi0: SpinState,
    pub phi1: SpinState,
    /// Both quasienergies vanish for the ideal sequence, rad/s.
    pub quasienergies: [f64; 2],
}

/// `Φ₀ = ((1−h)/2)|0⟩ + ((1+h)/2)|1⟩` and its swap `Φ₁`.
pub fn floquet_mode_at(t: f64, tau: f64) -> FloquetModes {
    let (phi0, phi1) = if modulation_function(t, tau) < 0.0 {
        (SpinState::zero(), SpinState::one())
    } else {
        (SpinState::one(), SpinState::zero())
    };
    FloquetModes {
        phi0,
        phi1,
        quasienergies: [0.0, 0.0],
    }
}

/// Precession rates `(ξ₀, ξ₁) = (f(1+h)/2, f(1−h)/2)` of the two modes, rad/s.
///
/// Over one `2τ` cycle `∫ξ₀ = ½∫(1+h)f`; for a field without a static part
/// this is `−φ_u` in the sign used by [`crate::analytic::phase_per_cycle`].
pub fn precession_frequencies(t: f64, tau: f64, field: &AcField) -> (f64, f64) {
    let h = modulation_function(t, tau);
    let f = field.detuning(t);
    (0.5 * f * (1.0 + h), 0.5 * f * (1.0 - h))
}

/// Unitarity residual `max|U†U − 1|` of a raw propagator.
pub fn unitarity_residual(u: &Mat2) -> f64 {
    (u.adjoint() * *u).max_abs_diff(&Mat2::IDENTITY)
}
