use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Spectrum;
use crate::error::{Error, Result};

/// Iteration cap of the damped least-squares peak fit.
pub const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-10;

/// Result of fitting `A·|sinc(π(f − f₀)T)| + B` to a magnitude window.
///
/// `amplitude` and `baseline` are in the unit of the input series (the
/// magnitude is scaled by `2/T`, so a cosine of amplitude `A` fits to `A`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub center_hz: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub baseline: f64,
    /// RMS misfit over the window, same unit as `amplitude`.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[inline]
fn sinc_prime(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        -x / 3.0
    } else {
        (x * x.cos() - x.sin()) / (x * x)
    }
}

/// Fitted `(amplitude, offset in bins, baseline)` plus diagnostics.
pub(crate) struct WindowFit {
    pub amplitude: f64,
    pub offset: f64,
    pub baseline: f64,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Damped Gauss-Newton (Levenberg-Marquardt) fit of `A|sinc(π(u − δ))| + B`
/// to samples `y` at bin offsets `u`. The offset must stay within `±limit`.
pub(crate) fn fit_window(u: &[f64], y: &[f64], limit: f64) -> WindowFit {
    let (imax, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty window");
    let floor = y.iter().copied().fold(f64::INFINITY, f64::min);
    let lift = |i: usize| (y[i] - floor).max(0.0);
    let top = lift(imax);

    // Start at the tallest bin, nudged toward its taller neighbour by the
    // ratio rule that is exact for a pure sinc.
    let mut delta = u[imax];
    if top > 0.0 {
        let left = (imax > 0).then(|| lift(imax - 1)).unwrap_or(0.0);
        let right = (imax + 1 < y.len()).then(|| lift(imax + 1)).unwrap_or(0.0);
        let (side, r) = if right >= left { (1.0, right / top) } else { (-1.0, left / top) };
        delta += side * r / (1.0 + r);
    }
    let mut p = Vector3::new(top / sinc(PI * (u[imax] - delta)).abs().max(0.5), delta, floor);
    let scale = Vector3::new(ymax.abs().max(1e-300), 1.0, ymax.abs().max(1e-300));

    let eval = |p: &Vector3<f64>| -> (f64, Matrix3<f64>, Vector3<f64>) {
        let mut cost = 0.0;
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&ui, &yi) in u.iter().zip(y) {
            let x = PI * (ui - p[1]);
            let s = sinc(x);
            let r = p[0] * s.abs() + p[2] - yi;
            let j = Vector3::new(s.abs(), -PI * p[0] * s.signum() * sinc_prime(x), 1.0);
            cost += r * r;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        (cost, jtj, jtr)
    };

    let total: f64 = y.iter().map(|v| v * v).sum();
    let (mut cost, mut jtj, mut jtr) = eval(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if cost <= 1e-30 * total {
            converged = true;
            break;
        }
        let mut damped = jtj;
        for i in 0..3 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
        }
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = p + step;
        let (c, jj, jr) = eval(&trial);
        if c < cost {
            let rel = step.component_div(&(p.abs() + scale)).amax();
            p = trial;
            cost = c;
            jtj = jj;
            jtr = jr;
            lambda = (lambda * 0.1).max(1e-12);
            if rel < STEP_TOLERANCE {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // No descent direction left at working precision: accept
                // only if this is a stationary point.
                let grad = jtr.component_mul(&scale).amax();
                converged = grad <= 1e-8 * total.max(1e-300);
                break;
            }
        }
    }
    if p[1].abs() > limit || !p.iter().all(|v| v.is_finite()) {
        converged = false;
    }
    if p[0] < 0.0 {
        converged = false;
    }
    WindowFit {
        amplitude: p[0].abs(),
        offset: p[1],
        baseline: p[2],
        residual: (cost / u.len() as f64).sqrt(),
        converged,
        iterations,
    }
}

/// Bins `q` with `|f_q − center| ≤ halfwidth`, limited to `[0, n/2]`.
pub(crate) fn window_bins(spectrum: &Spectrum, center: f64, halfwidth: f64) -> std::ops::RangeInclusive<usize> {
    let w = spectrum.bin_width();
    let lo = ((center - halfwidth) / w).ceil().max(0.0) as usize;
    let hi = (((center + halfwidth) / w).floor().max(0.0) as usize).min(spectrum.len() / 2);
    lo..=hi
}

/// Fits the magnitude spectrum near `window_center` with a sinc line plus baseline.
///
/// The phase is read from the transform at the fitted centre. A fit that
/// fails to settle within [`MAX_ITERATIONS`] or drifts out of the window is
/// returned with `converged = false`.
pub fn sinc_peak_fit(spectrum: &Spectrum, window_center: f64, window_halfwidth: f64) -> Result<PeakFit> {
    let bins = window_bins(spectrum, window_center, window_halfwidth);
    if bins.clone().count() < 5 {
        return Err(Error::Config(format!(
            "fit window around {window_center} Hz holds fewer than 5 bins"
        )));
    }
    let t = spectrum.total_duration();
    let w = spectrum.bin_width();
    let u: Vec<f64> = bins.clone().map(|q| (q as f64 * w - window_center) * t).collect();
    let y: Vec<f64> = bins.map(|q| 2.0 * spectrum.magnitude(q) / t).collect();
    let fit = fit_window(&u, &y, window_halfwidth * t);
    let center_hz = window_center + fit.offset * w;
    Ok(PeakFit {
        center_hz,
        amplitude: fit.amplitude,
        phase: spectrum.dtft(center_hz).arg(),
        baseline: fit.baseline,
        residual: fit.residual,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}
