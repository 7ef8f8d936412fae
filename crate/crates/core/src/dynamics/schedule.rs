use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::analytic::{AcField, CpConfig, PhaseCycle};
use crate::error::{Error, Result};
use crate::math::{flip_operator, Mat2, Unitary2};

/// Shape of a single microwave pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PulseKind {
    /// Constant Rabi drive held for `duration` seconds.
    Rectangular { duration: f64, rabi_freq: f64 },
    /// Instantaneous rotation by `angle` (delta-pulse limit).
    Instant { angle: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    /// Start time, s (equal to the pulse time for instantaneous pulses).
    pub start: f64,
    /// Drive phase φ_i, rad.
    pub phase: f64,
    pub kind: PulseKind,
}

impl PulseEvent {
    pub fn duration(&self) -> f64 {
        match self.kind {
            PulseKind::Rectangular { duration, .. } => duration,
            PulseKind::Instant { .. } => 0.0,
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration()
    }

    pub fn center(&self) -> f64 {
        self.start + 0.5 * self.duration()
    }

    /// Nominal rotation angle, ignoring any field applied during the pulse.
    pub fn angle(&self) -> f64 {
        match self.kind {
            PulseKind::Rectangular {
                duration,
                rabi_freq,
            } => duration * rabi_freq,
            PulseKind::Instant { angle } => angle,
        }
    }

    /// `Ω_R Ŝ(φ)` while the pulse is on.
    pub fn drive(&self) -> Mat2 {
        match self.kind {
            PulseKind::Rectangular { rabi_freq, .. } => {
                flip_operator(self.phase).scale(rabi_freq.into())
            }
            PulseKind::Instant { .. } => Mat2::ZERO,
        }
    }
}

/// Final π/2 pulse that maps the accumulated phase onto a population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutPulse {
    pub phase: f64,
    pub angle: f64,
}

impl ReadoutPulse {
    /// π/2 about the axis at phase `π/2 − ε`. The axis offset yields
    /// `P₀ = ½(1 + sin(φ − ε)) ≈ ½(1 + sin φ − ε cos φ)`.
    pub fn with_error(epsilon: f64) -> Self {
        Self {
            phase: FRAC_PI_2 - epsilon,
            angle: FRAC_PI_2,
        }
    }

    pub fn unitary(&self) -> Unitary2 {
        Unitary2::rotation(self.phase, self.angle)
    }
}

/// Time-ordered pulse train over `[0, total_duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    events: Vec<PulseEvent>,
    total_duration: f64,
    readout: ReadoutPulse,
}

/// Piece of a schedule over which the Hamiltonian is smooth, or an instantaneous kick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Smooth {
        t0: f64,
        t1: f64,
        drive: Option<PulseEvent>,
    },
    Kick { time: f64, unitary: Unitary2 },
}

impl Schedule {
    pub fn new(events: Vec<PulseEvent>, total_duration: f64, readout: ReadoutPulse) -> Result<Self> {
        if !(total_duration > 0.0 && total_duration.is_finite()) {
            return Err(Error::Config("schedule duration must be positive".into()));
        }
        let mut cursor = 0.0;
        for (i, e) in events.iter().enumerate() {
            if let PulseKind::Rectangular { duration, rabi_freq } = e.kind {
                if !(duration > 0.0) || !rabi_freq.is_finite() {
                    return Err(Error::Config(format!("pulse {i} has non-positive duration")));
                }
            }
            if e.start < cursor {
                return Err(Error::Config(format!("pulse {i} overlaps its predecessor")));
            }
            cursor = e.end();
        }
        if cursor > total_duration {
            return Err(Error::Config("last pulse ends after the sequence".into()));
        }
        Ok(Self {
            events,
            total_duration,
            readout,
        })
    }

    pub fn events(&self) -> &[PulseEvent] {
        &self.events
    }

    pub fn total_duration(&self) -> f64 {
        self.total_duration
    }

    pub fn readout(&self) -> ReadoutPulse {
        self.readout
    }

    /// Pulse active at `t`, if any (`[start, end)` convention).
    pub fn active_pulse(&self, t: f64) -> Option<&PulseEvent> {
        let idx = self.events.partition_point(|e| e.start <= t);
        let e = self.events.get(idx.checked_sub(1)?)?;
        (t < e.end()).then_some(e)
    }

    /// Smooth stretches and kicks in time order; pulse edges are segment boundaries.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::with_capacity(2 * self.events.len() + 1);
        let mut cursor = 0.0;
        for e in &self.events {
            if e.start > cursor {
                out.push(Segment::Smooth {
                    t0: cursor,
                    t1: e.start,
                    drive: None,
                });
            }
            match e.kind {
                PulseKind::Rectangular { .. } => out.push(Segment::Smooth {
                    t0: e.start,
                    t1: e.end(),
                    drive: Some(*e),
                }),
                PulseKind::Instant { angle } => out.push(Segment::Kick {
                    time: e.start,
                    unitary: Unitary2::rotation(e.phase, angle),
                }),
            }
            cursor = e.end();
        }
        if self.total_duration > cursor {
            out.push(Segment::Smooth {
                t0: cursor,
                t1: self.total_duration,
                drive: None,
            });
        }
        out
    }
}

/// Pulse train for `cp` using its own phase cycle.
///
/// Pulses are centred at `τ/2 + mτ`; the duration is `t_π(1 + error)` while
/// the Rabi frequency stays at its nominal value, so duration errors show up
/// as over- or under-rotation.
pub fn build_schedule(cp: &CpConfig) -> Result<Schedule> {
    cp.validate()?;
    let duration = cp.actual_pulse_duration();
    let events = (0..cp.n_pulses as usize)
        .map(|m| {
            let center = cp.tau * (0.5 + m as f64);
            let phase = cp.phase_cycle.phase_of(m);
            if cp.is_ideal_pulse() {
                PulseEvent {
                    start: center,
                    phase,
                    kind: PulseKind::Instant {
                        angle: PI * (1.0 + cp.pi_duration_error_fraction),
                    },
                }
            } else {
                PulseEvent {
                    start: center - 0.5 * duration,
                    phase,
                    kind: PulseKind::Rectangular {
                        duration,
                        rabi_freq: cp.rabi().expect("finite pulses have a Rabi frequency"),
                    },
                }
            }
        })
        .collect();
    Schedule::new(
        events,
        cp.total_duration(),
        ReadoutPulse::with_error(cp.readout_tilt_error),
    )
}

/// XY8 pulse train regardless of the phase cycle recorded in `cp`.
pub fn build_xy8_schedule(cp: &CpConfig) -> Result<Schedule> {
    let xy8 = CpConfig {
        phase_cycle: PhaseCycle::Xy8,
        ..*cp
    };
    build_schedule(&xy8)
}

/// `H(t) = Ω_R Ŝ(φ)` during a pulse plus `f(t)|1⟩⟨1|`, in rad/s.
pub fn hamiltonian_at(t: f64, schedule: &Schedule, field: &AcField) -> Mat2 {
    let ac = Mat2::diagonal(0.0, field.detuning(t));
    match schedule.active_pulse(t) {
        Some(p) => p.drive() + ac,
        None => ac,
    }
}
