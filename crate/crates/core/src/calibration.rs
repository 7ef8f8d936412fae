//! Recovering the field amplitude and the drive-to-field conversion coefficient.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::analytic::{lock_in_filter, tau_sweep_probability, AcField, CpConfig};
use crate::error::{Error, Result};
use crate::math::{bessel_j, bessel_j_row, NV_GYROMAGNETIC_RATIO};
use crate::readout::{
    alias_frequency, normalize_counts, synthesize_series, to_photon_counts, ReadoutConfig,
    SignalModel,
};
use crate::spectral::{dft, extract_harmonics};

const GN_ITERATIONS: usize = 100;

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every point counts equally.
    #[default]
    Uniform,
    /// Use the per-point `weight` column.
    Provided,
}

/// One τ-sweep measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauPoint {
    pub tau: f64,
    pub p0: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

impl TauPoint {
    pub fn new(tau: f64, p0: f64) -> Self {
        Self { tau, p0, weight: 1.0 }
    }
}

/// One harmonic amplitude measured at a drive amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselPoint {
    /// Drive amplitude in input units (e.g. mVpp).
    pub drive: f64,
    pub k: u32,
    /// Measured `|A_k|`.
    pub amplitude: f64,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

impl BesselPoint {
    pub fn new(drive: f64, k: u32, amplitude: f64) -> Self {
        Self {
            drive,
            k,
            amplitude,
            weight: 1.0,
        }
    }
}

/// Half-open frequency interval `[lo, hi)` of the detection frequency `1/(2τ)`, Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionWindow {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl ExclusionWindow {
    pub fn contains_tau(&self, tau: f64) -> bool {
        let f = 0.5 / tau;
        f >= self.lo_hz && f < self.hi_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSweepFit {
    /// Fitted field amplitude, T.
    pub b_ac: f64,
    pub uncertainty: f64,
    pub points_used: usize,
    pub points_excluded: usize,
    /// Points dropped because the filter is singular there.
    pub points_singular: usize,
    pub residual_rms: f64,
}

/// Result of a conversion-coefficient fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Field per input unit, T/unit.
    pub conversion_coefficient: f64,
    pub uncertainty: f64,
    /// `(drive, c·drive)` for each distinct drive amplitude.
    pub field_estimates: Vec<(f64, f64)>,
    /// Coefficient of determination of the joint fit.
    pub r_squared: f64,
    pub residual_rms: f64,
    pub residuals: Vec<f64>,
    pub n_points: usize,
}

/// Search settings for the one-parameter fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Bracket scanned before refinement, in the fitted parameter's unit.
    pub lower: f64,
    pub upper: f64,
    pub scan_points: usize,
    #[serde(default)]
    pub weighting: Weighting,
}

impl FitOptions {
    /// Field bracket `[0, 50 µT]` for τ sweeps.
    pub fn tau_sweep() -> Self {
        Self {
            lower: 0.0,
            upper: 50e-6,
            scan_points: 2000,
            weighting: Weighting::Uniform,
        }
    }

    /// Coefficient bracket `[0.01, 2] µT` per input unit.
    pub fn bessel() -> Self {
        Self {
            lower: 0.01e-6,
            upper: 2e-6,
            scan_points: 4000,
            weighting: Weighting::Uniform,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower >= 0.0 && self.upper > self.lower && self.upper.is_finite()) || self.scan_points < 3 {
            return Err(Error::Config("fit bracket must satisfy 0 <= lower < upper, scan_points >= 3".into()));
        }
        Ok(())
    }
}

/// A model linear in nothing but depending on one scalar `p` through
/// `r_i(p)` and `∂r_i/∂p`. Weighted by `w_i`.
struct Scalar<'a> {
    weights: Vec<f64>,
    eval: Box<dyn Fn(f64, usize) -> (f64, f64) + 'a>,
}

impl Scalar<'_> {
    fn cost(&self, p: f64) -> f64 {
        (0..self.weights.len())
            .map(|i| self.weights[i] * (self.eval)(p, i).0.powi(2))
            .sum()
    }

    /// Coarse scan over the bracket, then damped Gauss–Newton from the best grid point.
    fn minimise(&self, opt: &FitOptions) -> Result<(f64, f64)> {
        let step = (opt.upper - opt.lower) / (opt.scan_points - 1) as f64;
        let (mut best, mut best_cost) = (opt.lower, f64::INFINITY);
        for i in 0..opt.scan_points {
            let p = opt.lower + step * i as f64;
            let c = self.cost(p);
            if c < best_cost {
                best = p;
                best_cost = c;
            }
        }
        let (lo, hi) = ((best - step).max(opt.lower), (best + step).min(opt.upper));
        let mut p = best;
        let mut cost = best_cost;
        let mut lambda = 1e-3;
        for _ in 0..GN_ITERATIONS {
            let (mut jtj, mut jtr) = (0.0, 0.0);
            for (i, &w) in self.weights.iter().enumerate() {
                let (r, d) = (self.eval)(p, i);
                jtj += w * d * d;
                jtr += w * d * r;
            }
            if jtj == 0.0 {
                break;
            }
            let mut improved = false;
            while lambda < 1e12 {
                let trial = (p - jtr / (jtj * (1.0 + lambda))).clamp(lo, hi);
                let c = self.cost(trial);
                if c <= cost {
                    let moved = (trial - p).abs();
                    p = trial;
                    cost = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    improved = moved > 1e-13 * p.abs().max(step);
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        if !cost.is_finite() {
            return Err(Error::FitFailed("non-finite cost".into()));
        }
        Ok((p, cost))
    }

    /// Standard error from the Gauss–Newton curvature and the residual variance.
    fn uncertainty(&self, p: f64, cost: f64) -> f64 {
        let n = self.weights.len();
        let jtj: f64 = (0..n).map(|i| self.weights[i] * (self.eval)(p, i).1.powi(2)).sum();
        if n < 2 || jtj == 0.0 {
            return f64::INFINITY;
        }
        (cost / (n - 1) as f64 / jtj).sqrt()
    }
}

fn weights_of(opt: &FitOptions, raw: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    raw.map(|w| match opt.weighting {
        Weighting::Uniform => Ok(1.0),
        Weighting::Provided if w >= 0.0 && w.is_finite() => Ok(w),
        Weighting::Provided => Err(Error::Config(format!("invalid weight {w}"))),
    })
    .collect()
}

/// Least-squares field amplitude from a τ sweep using the phase-averaged
/// model `½(1 − J₀(|W_a| γ b N τ))`.
///
/// Points whose detection frequency falls in an exclusion window are
/// ignored, as are points sitting on a pole of the filter function.
pub fn fit_tau_sweep(
    data: &[TauPoint],
    cp: &CpConfig,
    omega_ac: f64,
    exclusion_windows: &[ExclusionWindow],
    options: &FitOptions,
) -> Result<TauSweepFit> {
    options.validate()?;
    let mut kept = Vec::new();
    let (mut excluded, mut singular) = (0, 0);
    for p in data {
        if !(p.tau > 0.0 && p.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", p.tau)));
        }
        if exclusion_windows.iter().any(|w| w.contains_tau(p.tau)) {
            excluded += 1;
            continue;
        }
        match lock_in_filter(p.tau, cp.n_pulses, omega_ac) {
            Ok(w) => {
                let scale = w.abs() * NV_GYROMAGNETIC_RATIO * f64::from(cp.n_pulses) * p.tau;
                kept.push((scale, *p));
            }
            Err(Error::Singularity { .. }) => singular += 1,
            Err(e) => return Err(e),
        }
    }
    if kept.len() < 10 {
        return Err(Error::IllPosed(format!(
            "tau sweep needs at least 10 usable points, got {}",
            kept.len()
        )));
    }
    let model = Scalar {
        weights: weights_of(options, kept.iter().map(|(_, p)| p.weight))?,
        eval: Box::new(|b: f64, i: usize| {
            let (s, p) = kept[i];
            let x = s * b;
            let j0 = bessel_j(0, x).unwrap_or(f64::NAN);
            let j1 = bessel_j(1, x).unwrap_or(f64::NAN);
            (0.5 * (1.0 - j0) - p.p0, 0.5 * j1 * s)
        }),
    };
    let (b, cost) = model.minimise(options)?;
    if b < 0.0 {
        return Err(Error::FitFailed(format!("negative field amplitude {b}")));
    }
    Ok(TauSweepFit {
        b_ac: b,
        uncertainty: model.uncertainty(b, cost),
        points_used: kept.len(),
        points_excluded: excluded,
        points_singular: singular,
        residual_rms: (cost / model.weights.iter().sum::<f64>().max(1e-300)).sqrt(),
    })
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Joint fit of `|A_k| = |J_k(2Nγ c V/ω)|` over all points for the single coefficient `c`.
pub fn fit_bessel_conversion(
    data: &[BesselPoint],
    cp: &CpConfig,
    omega_ac: f64,
    options: &FitOptions,
) -> Result<CalibrationResult> {
    options.validate()?;
    let drives = distinct(data.iter().map(|p| p.drive));
    if drives.len() < 2 {
        return Err(Error::IllPosed(format!(
            "need at least two distinct drive amplitudes, got {}",
            drives.len()
        )));
    }
    if data.iter().any(|p| p.k == 0 || !p.drive.is_finite() || !p.amplitude.is_finite()) {
        return Err(Error::Config("bessel data need k >= 1 and finite values".into()));
    }
    let kappa = 2.0 * f64::from(cp.n_pulses) * NV_GYROMAGNETIC_RATIO / omega_ac;
    let model = Scalar {
        weights: weights_of(options, data.iter().map(|p| p.weight))?,
        eval: Box::new(|c: f64, i: usize| {
            let p = data[i];
            let x = kappa * c * p.drive;
            let row = bessel_j_row(p.k + 1, x.abs()).unwrap_or_default();
            let k = p.k as usize;
            let (jk, dj) = match row.len() {
                0 => (f64::NAN, f64::NAN),
                _ => (row[k], 0.5 * (row[k - 1] - row[k + 1])),
            };
            (jk.abs() - p.amplitude.abs(), jk.signum() * dj * kappa * p.drive)
        }),
    };
    let (c, cost) = model.minimise(options)?;
    if !(c > 0.0) {
        return Err(Error::FitFailed(format!("non-positive coefficient {c}")));
    }
    let residuals: Vec<f64> = (0..data.len()).map(|i| (model.eval)(c, i).0).collect();
    let mean = data.iter().map(|p| p.amplitude.abs()).sum::<f64>() / data.len() as f64;
    let ss_tot: f64 = data.iter().map(|p| (p.amplitude.abs() - mean).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(CalibrationResult {
        conversion_coefficient: c,
        uncertainty: model.uncertainty(c, cost),
        field_estimates: drives.iter().map(|&v| (v, c * v)).collect(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        residual_rms: (ss_res / data.len() as f64).sqrt(),
        residuals,
        n_points: data.len(),
    })
}

/// Slope of a line through the origin relating drive amplitude to field, `B = c V`.
pub fn fit_voltage_conversion(points: &[(f64, f64)]) -> Result<CalibrationResult> {
    let drives = distinct(points.iter().map(|p| p.0));
    if drives.len() < 2 {
        return Err(Error::IllPosed("need at least two distinct drive amplitudes".into()));
    }
    let sxx: f64 = points.iter().map(|(v, _)| v * v).sum();
    let sxy: f64 = points.iter().map(|(v, b)| v * b).sum();
    let c = sxy / sxx;
    if !(c > 0.0) {
        return Err(Error::FitFailed(format!("non-positive slope {c}")));
    }
    let residuals: Vec<f64> = points.iter().map(|(v, b)| c * v - b).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean).powi(2)).sum();
    Ok(CalibrationResult {
        conversion_coefficient: c,
        uncertainty: (ss_res / (n - 1.0) / sxx).sqrt(),
        field_estimates: drives.iter().map(|&v| (v, c * v)).collect(),
        r_squared: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
        residual_rms: (ss_res / n).sqrt(),
        residuals,
        n_points: points.len(),
    })
}

/// Noise-free τ-sweep samples of the phase-averaged model.
pub fn tau_sweep_dataset(taus: &[f64], cp: &CpConfig, field: &AcField) -> Result<Vec<TauPoint>> {
    taus.iter()
        .map(|&tau| Ok(TauPoint::new(tau, tau_sweep_probability(tau, cp, field)?)))
        .collect()
}

/// Runs the whole measurement chain for each drive amplitude: field `c·V`,
/// readout series, optional Poisson counts and normalisation, DFT and peak
/// fits at `orders`.
///
/// Drive `i` draws its noise with seed `rng_seed + i`.
pub fn synthesize_bessel_dataset(
    model: SignalModel,
    drives: &[f64],
    orders: &[u32],
    conversion: f64,
    cp: &CpConfig,
    field: &AcField,
    cfg: &ReadoutConfig,
    shot_noise: bool,
) -> Result<Vec<BesselPoint>> {
    let fa = alias_frequency(field.omega_ac / TAU, cfg.t_l);
    let mut out = Vec::with_capacity(drives.len() * orders.len());
    for (i, &v) in drives.iter().enumerate() {
        let f = field.with_amplitude(conversion * v);
        let mut series = synthesize_series(model, cp, &f, cfg)?;
        if shot_noise {
            let c = cfg.with_seed(cfg.rng_seed.wrapping_add(i as u64));
            series = normalize_counts(&to_photon_counts(&series, &c)?, &c)?;
        }
        let ex = extract_harmonics(&dft(&series)?, fa, orders)?;
        if !ex.skipped.is_empty() {
            return Err(Error::Config(ex.notices.join("; ")));
        }
        out.extend(ex.fits.iter().map(|h| BesselPoint::new(v, h.k, h.fit.amplitude)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const F_AC: f64 = 500.1e3;

    fn cp() -> CpConfig {
        CpConfig::resonant(16, F_AC, 0.0).unwrap()
    }

    fn omega() -> f64 {
        TAU * F_AC
    }

    fn sweep_taus() -> Vec<f64> {
        // detection frequencies 400..600 kHz
        (0..201).map(|i| 0.5 / (400e3 + 1e3 * i as f64)).collect()
    }

    fn bessel_data(c: f64, drives: &[f64], orders: &[u32]) -> Vec<BesselPoint> {
        let kappa = 2.0 * 16.0 * NV_GYROMAGNETIC_RATIO / omega();
        drives
            .iter()
            .flat_map(|&v| orders.iter().map(move |&k| BesselPoint::new(v, k, bessel_j(k, kappa * c * v).unwrap().abs())))
            .collect()
    }

    #[test]
    fn tau_sweep_round_trip() {
        let f = AcField::from_hz(2e-6, F_AC, 0.0).unwrap();
        let taus: Vec<f64> = sweep_taus().into_iter().filter(|t| (t * F_AC * 2.0 - 1.0).abs() > 1e-3).collect();
        let data = tau_sweep_dataset(&taus, &cp(), &f).unwrap();
        let fit = fit_tau_sweep(&data, &cp(), omega(), &[], &FitOptions::tau_sweep()).unwrap();
        assert!((fit.b_ac / 2e-6 - 1.0).abs() < 1e-6, "{}", fit.b_ac);
        assert_eq!(fit.points_used, taus.len());

        // the exact resonance is a removable pole of the filter and is dropped
        let mut with_pole = data.clone();
        with_pole.push(TauPoint::new(0.5 / F_AC, 0.3));
        let again = fit_tau_sweep(&with_pole, &cp(), omega(), &[], &FitOptions::tau_sweep()).unwrap();
        assert_eq!(again.points_singular, 1);
        assert_eq!(again.b_ac, fit.b_ac);
    }

    #[test]
    fn tau_sweep_zero_field() {
        let taus: Vec<f64> = sweep_taus().into_iter().filter(|t| (t * F_AC * 2.0 - 1.0).abs() > 1e-3).collect();
        let f = AcField::from_hz(0.0, F_AC, 0.0).unwrap();
        let data = tau_sweep_dataset(&taus, &cp(), &f).unwrap();
        let fit = fit_tau_sweep(&data, &cp(), omega(), &[], &FitOptions::tau_sweep()).unwrap();
        assert!(fit.b_ac < 1e-9);
    }

    #[test]
    fn excluded_points_are_ignored_exactly() {
        let taus: Vec<f64> = sweep_taus().into_iter().filter(|t| (t * F_AC * 2.0 - 1.0).abs() > 1e-3).collect();
        let f = AcField::from_hz(1.5e-6, F_AC, 0.0).unwrap();
        let mut data = tau_sweep_dataset(&taus, &cp(), &f).unwrap();
        let window = ExclusionWindow { lo_hz: 440e3, hi_hz: 460e3 };
        let base = fit_tau_sweep(&data, &cp(), omega(), &[window], &FitOptions::tau_sweep()).unwrap();
        data.push(TauPoint::new(0.5 / 450e3 * 1.00001, 0.9));
        data.push(TauPoint::new(0.5 / 445e3, 0.0));
        let with = fit_tau_sweep(&data, &cp(), omega(), &[window], &FitOptions::tau_sweep()).unwrap();
        assert_eq!(base.b_ac, with.b_ac);
        assert_eq!(with.points_excluded, base.points_excluded + 2);
    }

    #[test]
    fn too_few_tau_points() {
        let data: Vec<TauPoint> = (0..5).map(|i| TauPoint::new(1e-6 + i as f64 * 1e-8, 0.1)).collect();
        assert!(matches!(
            fit_tau_sweep(&data, &cp(), omega(), &[], &FitOptions::tau_sweep()),
            Err(Error::IllPosed(_))
        ));
    }

    #[test]
    fn voltage_slope() {
        let pts: Vec<(f64, f64)> = [2.0, 5.0, 7.0, 10.0, 15.0, 20.0].iter().map(|&v| (v, 0.381e-6 * v)).collect();
        let r = fit_voltage_conversion(&pts).unwrap();
        assert!((r.conversion_coefficient - 0.381e-6).abs() < 1e-15);
        assert!(fit_voltage_conversion(&[(2.0, 1.0), (2.0, 1.1)]).is_err());
    }

    #[test]
    fn bessel_round_trip_noise_free() {
        let drives: Vec<f64> = (1..=30).map(|i| 10.0 * i as f64).collect();
        let data = bessel_data(0.392e-6, &drives, &[1, 11, 51, 151, 201]);
        let r = fit_bessel_conversion(&data, &cp(), omega(), &FitOptions::bessel()).unwrap();
        assert!((r.conversion_coefficient / 0.392e-6 - 1.0).abs() < 1e-8);
        assert!(r.r_squared > 0.999_999);
        assert_eq!(r.field_estimates.len(), 30);
    }

    #[test]
    fn bessel_linear_regime_matches_small_argument_slope() {
        let drives = [0.01, 0.02, 0.03, 0.04];
        let data = bessel_data(0.392e-6, &drives, &[1]);
        let r = fit_bessel_conversion(&data, &cp(), omega(), &FitOptions::bessel()).unwrap();
        // J1(a) ≈ a/2 with a = 2Nγ c V/ω, so A1/V ≈ Nγc/ω
        let slope = data.iter().map(|p| p.amplitude / p.drive).sum::<f64>() / 4.0;
        let c_lin = slope * omega() / (16.0 * NV_GYROMAGNETIC_RATIO);
        assert!((r.conversion_coefficient / c_lin - 1.0).abs() < 1e-3);
    }

    #[test]
    fn single_drive_is_ill_posed() {
        let data = bessel_data(0.392e-6, &[100.0], &[1, 3, 5]);
        assert!(matches!(
            fit_bessel_conversion(&data, &cp(), omega(), &FitOptions::bessel()),
            Err(Error::IllPosed(_))
        ));
    }

    #[test]
    fn residual_has_unique_minimum_on_bracket() {
        let drives: Vec<f64> = (1..=30).map(|i| 10.0 * i as f64).collect();
        let orders = [1, 11, 51, 151, 201];
        let data = bessel_data(0.392e-6, &drives, &orders);
        let opts = FitOptions::bessel();
        let cost = |c: f64| -> f64 {
            bessel_data(c, &drives, &orders).iter().zip(&data).map(|(m, d)| (m.amplitude - d.amplitude).powi(2)).sum()
        };
        let grid: Vec<f64> = (0..200).map(|i| opts.lower + (opts.upper - opts.lower) * i as f64 / 199.0).collect();
        let costs: Vec<f64> = grid.iter().map(|&c| cost(c)).collect();
        let best = costs.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((grid[best] / 0.392e-6 - 1.0).abs() < 0.03);
        let second = costs
            .iter()
            .enumerate()
            .filter(|(i, _)| i.abs_diff(best) > 2)
            .map(|(_, c)| *c)
            .fold(f64::INFINITY, f64::min);
        assert!(second > 2.0 * costs[best] + 1e-3);
    }

    #[test]
    fn pipeline_dataset_without_noise() {
        let f = AcField::from_hz(0.0, F_AC, 0.0).unwrap();
        let cfg = ReadoutConfig::default().with_readouts(1 << 15);
        let data = synthesize_bessel_dataset(SignalModel::Analytic, &[50.0, 100.0, 200.0], &[1, 11, 51], 0.392e-6, &cp(), &f, &cfg, false).unwrap();
        let r = fit_bessel_conversion(&data, &cp(), omega(), &FitOptions::bessel()).unwrap();
        assert!((r.conversion_coefficient / 0.392e-6 - 1.0).abs() < 1e-4, "{}", r.conversion_coefficient);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn bessel_round_trip_any_coefficient(c_ut in 0.1f64..1.0) {
            let c = c_ut * 1e-6;
            let drives: Vec<f64> = (1..=12).map(|i| 25.0 * i as f64 / c_ut.max(0.3)).collect();
            let data = bessel_data(c, &drives, &[1, 11, 51]);
            let r = fit_bessel_conversion(&data, &cp(), omega(), &FitOptions::bessel()).unwrap();
            prop_assert!((r.conversion_coefficient / c - 1.0).abs() < 1e-8, "{} vs {}", r.conversion_coefficient, c);
        }
    }
}
