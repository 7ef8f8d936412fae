use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::math::Mat2;

type State = [Complex64; 2];

/// Adaptive Dormand–Prince 5(4) settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on any step, s.
    pub max_step: f64,
    /// First trial step, s.
    pub initial_step: f64,
}

impl IntegratorSettings {
    /// Defaults for a sequence with interpulse delay `tau`.
    pub fn for_tau(tau: f64) -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: tau / 20.0,
            initial_step: tau / 2000.0,
        }
    }

    pub fn with_tolerance(self, rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..self
        }
    }

    pub fn validate(&self, tau: f64) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.rel_tol) && positive(self.abs_tol)) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        if !positive(self.max_step) || self.max_step > tau / 20.0 * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "max_step must lie in (0, tau/20], got {:e}",
                self.max_step
            )));
        }
        if !positive(self.initial_step) {
            return Err(Error::Config("initial_step must be positive".into()));
        }
        Ok(())
    }
}

/// Step bookkeeping accumulated over one or more integrations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Last accepted step size, reused as the next trial step.
    pub last_step: f64,
    /// Sum over accepted steps of `|‖ψ‖²/‖ψ₀‖² − 1|` removed by projection.
    pub norm_correction: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn norm_sqr(y: &State) -> f64 {
    y[0].norm_sqr() + y[1].norm_sqr()
}

#[inline]
fn rhs(h: &Mat2, y: &State) -> State {
    let [a, b] = h.mul_vec(*y);
    let mi = Complex64::new(0.0, -1.0);
    [mi * a, mi * b]
}

#[inline]
fn comb(y: &State, terms: &[(f64, &State)], dt: f64) -> State {
    let mut out = *y;
    for (w, k) in terms {
        out[0] += k[0] * (w * dt);
        out[1] += k[1] * (w * dt);
    }
    out
}

/// Solves `i dψ/dt = H(t) ψ` from `t0` to `t1`, assuming `H` is smooth on the interval.
///
/// `H` must be Hermitian. After every accepted step the state is rescaled to
/// the norm of `y0`; the size of each correction is added to
/// [`StepStats::norm_correction`].
pub fn integrate<F>(
    y0: State,
    t0: f64,
    t1: f64,
    hamiltonian: F,
    settings: &IntegratorSettings,
    stats: &mut StepStats,
) -> Result<State>
where
    F: Fn(f64) -> Mat2,
{
    let span = t1 - t0;
    if span < 0.0 || !span.is_finite() {
        return Err(Error::Integration {
            time: t0,
            reason: format!("invalid interval [{t0:e}, {t1:e}]"),
        });
    }
    if span == 0.0 {
        return Ok(y0);
    }
    let min_step = 1e-14 * t1.abs().max(span);
    let mut dt = if stats.last_step > 0.0 {
        stats.last_step
    } else {
        settings.initial_step
    }
    .min(settings.max_step);
    let mut t = t0;
    let mut y = y0;
    let norm0 = norm_sqr(&y0);
    let mut k1 = rhs(&hamiltonian(t), &y);
    while t < t1 {
        let remaining = t1 - t;
        let last = dt >= remaining;
        let h = if last { remaining } else { dt };

        let k2 = rhs(&hamiltonian(t + C2 * h), &comb(&y, &[(A21, &k1)], h));
        let k3 = rhs(
            &hamiltonian(t + C3 * h),
            &comb(&y, &[(A31, &k1), (A32, &k2)], h),
        );
        let k4 = rhs(
            &hamiltonian(t + C4 * h),
            &comb(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h),
        );
        let k5 = rhs(
            &hamiltonian(t + C5 * h),
            &comb(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
        );
        let k6 = rhs(
            &hamiltonian(t + h),
            &comb(
                &y,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                h,
            ),
        );
        let y_new = comb(
            &y,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            h,
        );
        let t_new = if last { t1 } else { t + h };
        let k7 = rhs(&hamiltonian(t_new), &y_new);

        let mut err: f64 = 0.0;
        for i in 0..2 {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7)
                * h;
            let scale = settings.abs_tol + settings.rel_tol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Integration {
                time: t,
                reason: "non-finite error estimate".into(),
            });
        }

        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            t = t_new;
            let n = norm_sqr(&y_new);
            let (s, k7) = if norm0 > 0.0 && n > 0.0 {
                stats.norm_correction += (n / norm0 - 1.0).abs();
                let s = (norm0 / n).sqrt();
                (s, [k7[0] * s, k7[1] * s])
            } else {
                (1.0, k7)
            };
            y = [y_new[0] * s, y_new[1] * s];
            k1 = k7;
            stats.accepted += 1;
            if !last {
                stats.last_step = h;
            }
            dt = (h * factor).min(settings.max_step);
        } else {
            stats.rejected += 1;
            dt = h * factor.min(1.0);
            if dt < min_step {
                return Err(Error::Integration {
                    time: t,
                    reason: format!("step size underflow ({dt:e} s)"),
                });
            }
        }
    }
    Ok(y)
}
