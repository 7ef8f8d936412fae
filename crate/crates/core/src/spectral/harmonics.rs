use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_window, window_bins, PeakFit};
use super::{dft, Spectrum};
use crate::analytic::{bessel_argument, AcField, CpConfig};
use crate::dynamics::IntegratorSettings;
use crate::error::{Error, Result};
use crate::io::{write_atomic, write_csv, write_json};
use crate::math::bessel_j_row;
use crate::readout::{alias_frequency, synthesize_series_with, ReadoutConfig, SignalModel};

/// Half-width of each harmonic's fit window, in bins.
pub const DEFAULT_WINDOW_BINS: f64 = 5.0;
/// Harmonic orders included in the leakage model unless more are requested.
pub const DEFAULT_COMB_ORDERS: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub window_bins: f64,
    /// Highest order of the harmonic comb fitted before the per-peak fits.
    pub comb_orders: u32,
    /// Remove the other harmonics' sinc tails from each window first.
    pub deflate: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            window_bins: DEFAULT_WINDOW_BINS,
            comb_orders: DEFAULT_COMB_ORDERS,
            deflate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    pub k: u32,
    /// Nominal position `k · f_alias`, Hz.
    pub frequency_hz: f64,
    pub fit: PeakFit,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HarmonicExtraction {
    pub fits: Vec<HarmonicFit>,
    /// Orders that could not be fitted (beyond Nyquist or clipped windows).
    pub skipped: Vec<u32>,
    pub notices: Vec<String>,
}

impl HarmonicExtraction {
    pub fn get(&self, k: u32) -> Option<&HarmonicFit> {
        self.fits.iter().find(|h| h.k == k)
    }
}

/// `Σ_{m<n} e^{iαm}`.
fn geometric(alpha: f64, n: usize) -> Complex64 {
    let a = alpha - TAU * (alpha / TAU).round();
    let half = 0.5 * a;
    if half.abs() < 1e-13 {
        return Complex64::new(n as f64, 0.0);
    }
    let ratio = (n as f64 * half).sin() / half.sin();
    Complex64::from_polar(ratio, half * (n as f64 - 1.0))
}

/// Least-squares fit of `c₀ + Σ_j (a_j cos θ_j m + b_j sin θ_j m)` at the
/// comb frequencies `j · f_alias`.
struct Comb {
    theta: Vec<f64>,
    dc: f64,
    /// `c_j = (a_j − i b_j)/2`, the weight of `e^{+iθ_j m}`.
    coeffs: Vec<Complex64>,
    n: usize,
    dt: f64,
}

impl Comb {
    fn fit(spectrum: &Spectrum, f_alias: f64, orders: u32) -> Result<Self> {
        let n = spectrum.len();
        let dt = spectrum.dt();
        let theta: Vec<f64> = (1..=orders).map(|j| TAU * f64::from(j) * f_alias * dt).collect();
        let dim = 1 + 2 * theta.len();
        let c = |a: f64| geometric(a, n).re;
        let s = |a: f64| geometric(a, n).im;
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        gram[(0, 0)] = n as f64;
        for (i, &ti) in theta.iter().enumerate() {
            let (ci, si) = (1 + 2 * i, 2 + 2 * i);
            gram[(0, ci)] = c(ti);
            gram[(0, si)] = s(ti);
            for (j, &tj) in theta.iter().enumerate().skip(i) {
                let (cj, sj) = (1 + 2 * j, 2 + 2 * j);
                let (d, p) = (ti - tj, ti + tj);
                gram[(ci, cj)] = 0.5 * (c(d) + c(p));
                gram[(si, sj)] = 0.5 * (c(d) - c(p));
                gram[(ci, sj)] = 0.5 * (s(p) + s(-d));
                gram[(si, cj)] = 0.5 * (s(p) + s(d));
            }
        }
        for i in 0..dim {
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        // Σ x_m e^{iθm} = conj(X(f))/dt for real samples
        let mut rhs = DVector::<f64>::zeros(dim);
        rhs[0] = spectrum.samples().iter().sum();
        let sums: Vec<Complex64> = theta
            .par_iter()
            .map(|&t| spectrum.dtft(t / (TAU * dt)).conj() / dt)
            .collect();
        for (i, z) in sums.iter().enumerate() {
            rhs[1 + 2 * i] = z.re;
            rhs[2 + 2 * i] = z.im;
        }
        let sol = gram
            .cholesky()
            .ok_or_else(|| Error::IllPosed("harmonic comb normal matrix is singular".into()))?
            .solve(&rhs);
        let coeffs = (0..theta.len())
            .map(|i| 0.5 * Complex64::new(sol[1 + 2 * i], -sol[2 + 2 * i]))
            .collect();
        Ok(Self {
            theta,
            dc: sol[0],
            coeffs,
            n,
            dt,
        })
    }

    /// Transform of the positive-frequency part of component `j` (1-based) at `f`.
    fn positive(&self, j: usize, f: f64) -> Complex64 {
        let phi = TAU * f * self.dt;
        self.coeffs[j - 1] * geometric(self.theta[j - 1] - phi, self.n) * self.dt
    }

    /// Transform of the whole fitted comb at `f`.
    fn total(&self, f: f64) -> Complex64 {
        let phi = TAU * f * self.dt;
        let mut acc = geometric(-phi, self.n) * self.dc;
        for (c, &t) in self.coeffs.iter().zip(&self.theta) {
            acc += c * geometric(t - phi, self.n) + c.conj() * geometric(-t - phi, self.n);
        }
        acc * self.dt
    }
}

/// Sinc fits at `k · alias_fundamental` for every `k` in `orders`, with default options.
pub fn extract_harmonics(spectrum: &Spectrum, alias_fundamental: f64, orders: &[u32]) -> Result<HarmonicExtraction> {
    extract_harmonics_with(spectrum, alias_fundamental, orders, &ExtractOptions::default())
}

/// Harmonic extraction with explicit options.
///
/// With `deflate`, the record is first fitted jointly by a comb of harmonics
/// of the alias fundamental; inside each window every other harmonic (and
/// the mirror image of the harmonic itself) is subtracted before the sinc
/// fit, so slowly decaying sinc tails of strong neighbours do not bias weak
/// peaks. Noise and content off the comb are left untouched.
pub fn extract_harmonics_with(
    spectrum: &Spectrum,
    alias_fundamental: f64,
    orders: &[u32],
    options: &ExtractOptions,
) -> Result<HarmonicExtraction> {
    if !(alias_fundamental > 0.0 && alias_fundamental.is_finite()) {
        return Err(Error::Config(format!(
            "alias fundamental must be positive, got {alias_fundamental}"
        )));
    }
    if orders.contains(&0) {
        return Err(Error::Config("harmonic order must be >= 1".into()));
    }
    let bin = spectrum.bin_width();
    let nyquist = spectrum.nyquist();
    let halfwidth = options.window_bins * bin;
    let mut out = HarmonicExtraction::default();

    let fittable: Vec<u32> = orders
        .iter()
        .copied()
        .filter(|&k| {
            let f = f64::from(k) * alias_fundamental;
            let ok = f < nyquist && window_bins(spectrum, f, halfwidth).count() >= 5;
            if !ok {
                out.skipped.push(k);
                out.notices.push(format!(
                    "k={k}: {f:.6} Hz is beyond the usable band (Nyquist {nyquist:.6} Hz), skipped"
                ));
            }
            ok
        })
        .collect();

    let comb = if options.deflate && !fittable.is_empty() {
        let wanted = options.comb_orders.max(*fittable.iter().max().unwrap());
        let band = ((nyquist - bin) / alias_fundamental).floor().max(0.0) as u32;
        let capacity = ((spectrum.len() / 2).saturating_sub(1) / 2) as u32;
        let orders = wanted.min(band).min(capacity);
        if alias_fundamental < 2.0 * bin {
            out.notices.push(format!(
                "alias fundamental spans {:.3} bins; harmonics overlap, leakage model disabled",
                alias_fundamental / bin
            ));
            None
        } else if orders == 0 {
            None
        } else {
            Some(Comb::fit(spectrum, alias_fundamental, orders)?)
        }
    } else {
        None
    };

    let t = spectrum.total_duration();
    let fits: Vec<HarmonicFit> = fittable
        .par_iter()
        .map(|&k| {
            let centre = f64::from(k) * alias_fundamental;
            let own = |f: f64| match &comb {
                Some(c) if (k as usize) <= c.coeffs.len() => c.positive(k as usize, f) - c.total(f),
                Some(c) => -c.total(f),
                None => Complex64::ZERO,
            };
            let bins = window_bins(spectrum, centre, halfwidth);
            let u: Vec<f64> = bins.clone().map(|q| (q as f64 * bin - centre) * t).collect();
            let y: Vec<f64> = bins
                .map(|q| {
                    let f = q as f64 * bin;
                    2.0 * (spectrum.bins()[q] + own(f)).norm() / t
                })
                .collect();
            let w = fit_window(&u, &y, options.window_bins);
            let center_hz = centre + w.offset * bin;
            HarmonicFit {
                k,
                frequency_hz: centre,
                fit: PeakFit {
                    center_hz,
                    amplitude: w.amplitude,
                    phase: (spectrum.dtft(center_hz) + own(center_hz)).arg(),
                    baseline: w.baseline,
                    residual: w.residual,
                    converged: w.converged,
                    iterations: w.iterations,
                },
            }
        })
        .collect();
    out.fits = fits;
    Ok(out)
}

#[derive(Serialize)]
struct HarmonicRow {
    k: u32,
    frequency_hz: f64,
    amplitude: f64,
    phase_rad: f64,
    baseline: f64,
    residual: f64,
    converged: bool,
}

impl HarmonicExtraction {
    /// Table `k,frequency_hz,amplitude,phase_rad,baseline,residual,converged`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(
            path,
            self.fits.iter().map(|h| HarmonicRow {
                k: h.k,
                frequency_hz: h.fit.center_hz,
                amplitude: h.fit.amplitude,
                phase_rad: h.fit.phase,
                baseline: h.fit.baseline,
                residual: h.fit.residual,
                converged: h.fit.converged,
            }),
        )
    }
}

/// Harmonic amplitude `|A_k|` over a sweep of field amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicMap {
    /// Field amplitudes, T (rows).
    pub amplitudes: Vec<f64>,
    /// Harmonic orders (columns).
    pub orders: Vec<u32>,
    pub grid: Vec<Vec<f64>>,
    pub converged: Vec<Vec<bool>>,
}

/// Serialised form: axes plus a row-major grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDocument {
    pub amplitudes_t: Vec<f64>,
    pub orders: Vec<u32>,
    pub shape: [usize; 2],
    pub grid: Vec<f64>,
    pub converged: Vec<bool>,
}

impl HarmonicMap {
    pub fn value(&self, amplitude_index: usize, k: u32) -> Option<f64> {
        let col = self.orders.iter().position(|&o| o == k)?;
        Some(self.grid.get(amplitude_index)?[col])
    }

    pub fn to_document(&self) -> MapDocument {
        MapDocument {
            amplitudes_t: self.amplitudes.clone(),
            orders: self.orders.clone(),
            shape: [self.amplitudes.len(), self.orders.len()],
            grid: self.grid.iter().flatten().copied().collect(),
            converged: self.converged.iter().flatten().copied().collect(),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, "harmonic_map", &self.to_document())
    }

    /// One row per amplitude: `amplitude_t,k1,k3,...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["amplitude_t".to_owned()];
        header.extend(self.orders.iter().map(|k| format!("k{k}")));
        w.write_record(&header)?;
        for (b, row) in self.amplitudes.iter().zip(&self.grid) {
            let mut rec = vec![b.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Format(format!("csv buffer: {e}")))?;
        write_atomic(path, &bytes)
    }
}

/// Map with default integrator settings.
pub fn build_harmonic_map(
    model: SignalModel,
    amplitudes: &[f64],
    max_order: u32,
    cp: &CpConfig,
    field: &AcField,
    cfg: &ReadoutConfig,
) -> Result<HarmonicMap> {
    build_harmonic_map_with(model, amplitudes, max_order, cp, field, cfg, &IntegratorSettings::for_tau(cp.tau))
}

/// `|A_k|` for odd `k ≤ max_order` at each amplitude.
///
/// The analytic model evaluates `|J_k(a)|` directly; the numeric model
/// synthesises a record per amplitude, transforms it and fits the peaks.
pub fn build_harmonic_map_with(
    model: SignalModel,
    amplitudes: &[f64],
    max_order: u32,
    cp: &CpConfig,
    field: &AcField,
    cfg: &ReadoutConfig,
    settings: &IntegratorSettings,
) -> Result<HarmonicMap> {
    if amplitudes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("map amplitudes must be sorted ascending".into()));
    }
    if max_order == 0 {
        return Err(Error::Config("max_order must be >= 1".into()));
    }
    let orders: Vec<u32> = (1..=max_order).step_by(2).collect();
    let mut grid = Vec::with_capacity(amplitudes.len());
    let mut converged = Vec::with_capacity(amplitudes.len());
    for &b in amplitudes {
        let f = field.with_amplitude(b);
        match model {
            SignalModel::Analytic => {
                let row = bessel_j_row(max_order, bessel_argument(cp, &f)?)?;
                grid.push(orders.iter().map(|&k| row[k as usize].abs()).collect());
                converged.push(vec![true; orders.len()]);
            }
            SignalModel::Numeric => {
                let series = synthesize_series_with(SignalModel::Numeric, cp, &f, cfg, settings)?;
                let spectrum = dft(&series)?;
                let fa = alias_frequency(f.frequency_hz(), cfg.t_l);
                let ex = extract_harmonics(&spectrum, fa, &orders)?;
                if !ex.skipped.is_empty() {
                    return Err(Error::Config(ex.notices.join("; ")));
                }
                grid.push(ex.fits.iter().map(|h| h.fit.amplitude).collect());
                converged.push(ex.fits.iter().map(|h| h.fit.converged).collect());
            }
        }
    }
    Ok(HarmonicMap {
        amplitudes: amplitudes.to_vec(),
        orders,
        grid,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{harmonic_amplitude, harmonic_phase};
    use crate::readout::{synthesize_series, to_photon_counts, TimeSeries, Unit};
    use crate::math::bessel_j;

    const F_AC: f64 = 500.1e3;

    fn cp() -> CpConfig {
        CpConfig::resonant(16, F_AC, 0.0).unwrap()
    }

    fn analytic_spectrum(b: f64, phi: f64, n: usize, eps: f64) -> Spectrum {
        let cp = cp().with_readout_error(eps).unwrap();
        let f = AcField::from_hz(b, F_AC, phi).unwrap();
        let s = synthesize_series(SignalModel::Analytic, &cp, &f, &ReadoutConfig::default().with_readouts(n)).unwrap();
        dft(&s).unwrap()
    }

    #[test]
    fn geometric_sum_matches_direct() {
        for &a in &[0.0, 1e-9, 0.3, -2.0, std::f64::consts::PI - 1e-5, std::f64::consts::TAU - 1e-7, 40.0] {
            let direct: Complex64 = (0..37).map(|m| Complex64::from_polar(1.0, a * m as f64)).sum();
            assert!((geometric(a, 37) - direct).norm() < 1e-10, "{a}");
        }
    }

    #[test]
    fn threshold_fundamental() {
        let s = analytic_spectrum(876.7e-9, 0.0, 1 << 14, 0.0);
        let ex = extract_harmonics(&s, 100.0, &[1]).unwrap();
        let a1 = ex.get(1).unwrap().fit.amplitude;
        assert!((a1 - 0.567).abs() < 1e-3, "{a1}");
    }

    #[test]
    fn recovers_bessel_amplitudes_and_phases() {
        let b = 20e-6;
        let phi = 0.7;
        let s = analytic_spectrum(b, phi, 1 << 14, 0.0);
        let orders: Vec<u32> = (1..=51).collect();
        let ex = extract_harmonics(&s, 100.0, &orders).unwrap();
        let field = AcField::from_hz(b, F_AC, phi).unwrap();
        for h in &ex.fits {
            let expect = harmonic_amplitude(h.k, &cp(), &field).unwrap();
            assert!((h.fit.amplitude - expect.abs()).abs() < 1e-4, "k={} {} vs {}", h.k, h.fit.amplitude, expect);
            if h.k % 2 == 0 {
                assert!(h.fit.amplitude < 1e-6, "k={} {}", h.k, h.fit.amplitude);
            } else if expect.abs() > 1e-3 {
                assert!(h.fit.converged, "k={}", h.k);
                let z = Complex64::from_polar(h.fit.amplitude, h.fit.phase);
                let w = Complex64::from_polar(expect, harmonic_phase(h.k, phi));
                assert!((z - w).norm() < 1e-3, "k={} {z} vs {w}", h.k);
            }
        }
    }

    #[test]
    fn even_harmonics_follow_readout_error() {
        let eps = 0.05;
        let b = 0.6e-6;
        let s = analytic_spectrum(b, 0.0, 1 << 14, eps);
        let a = bessel_argument(&cp(), &AcField::from_hz(b, F_AC, 0.0).unwrap()).unwrap();
        let ex = extract_harmonics(&s, 100.0, &[2, 4]).unwrap();
        for h in &ex.fits {
            let expect = eps * bessel_j(h.k, a).unwrap().abs();
            assert!((h.fit.amplitude / expect - 1.0).abs() < 0.1, "k={} {} {}", h.k, h.fit.amplitude, expect);
        }
    }

    #[test]
    fn deflation_removes_leakage() {
        let s = analytic_spectrum(30e-6, 0.3, 1 << 14, 0.0);
        let plain = extract_harmonics_with(&s, 100.0, &[2], &ExtractOptions { deflate: false, ..Default::default() }).unwrap();
        let clean = extract_harmonics(&s, 100.0, &[2]).unwrap();
        assert!(plain.fits[0].fit.amplitude > 1e-4);
        assert!(clean.fits[0].fit.amplitude < 1e-6);
    }

    #[test]
    fn beyond_nyquist_is_skipped_with_notice() {
        let s = analytic_spectrum(1e-6, 0.0, 1 << 10, 0.0);
        let ex = extract_harmonics(&s, 100.0, &[1, 3000]).unwrap();
        assert_eq!(ex.skipped, vec![3000]);
        assert_eq!(ex.fits.len(), 1);
        assert!(ex.notices[0].contains("k=3000"));
    }

    #[test]
    fn noise_floor_matches_rayleigh_statistics() {
        let n = 1 << 14;
        let cfg = ReadoutConfig::default().with_readouts(n).with_seed(11);
        let p = TimeSeries::new(vec![0.5; n], cfg.t_l, Unit::Probability).unwrap();
        let counts = to_photon_counts(&p, &cfg).unwrap();
        let spec = dft(&counts).unwrap();
        let sum_mu: f64 = cfg.n_seq as f64 * cfg.t_read * (cfg.i1 + 0.5 * (cfg.i0 - cfg.i1)) * n as f64;
        let mags: Vec<f64> = spec.one_sided()[1..n / 2].iter().map(|x| x.norm() / cfg.t_l).collect();
        let mean = mags.iter().sum::<f64>() / mags.len() as f64;
        let expect = (std::f64::consts::PI / 4.0).sqrt() * sum_mu.sqrt();
        assert!((mean / expect - 1.0).abs() < 0.05, "{} vs {}", mean, expect);
    }

    #[test]
    fn analytic_map_columns_equal_bessel_rows() {
        let amps = [0.0, 10e-6, 60e-6, 118e-6];
        let f = AcField::from_hz(0.0, F_AC, 0.0).unwrap();
        let m = build_harmonic_map(SignalModel::Analytic, &amps, 251, &cp(), &f, &ReadoutConfig::default()).unwrap();
        assert_eq!(m.orders.len(), 126);
        for (i, &b) in amps.iter().enumerate() {
            let a = bessel_argument(&cp(), &f.with_amplitude(b)).unwrap();
            let row = bessel_j_row(251, a).unwrap();
            for &k in &m.orders {
                assert_eq!(m.value(i, k).unwrap(), row[k as usize].abs());
            }
        }
        let doc = m.to_document();
        assert_eq!(doc.shape, [4, 126]);
        assert_eq!(doc.grid.len(), 4 * 126);
        assert!(build_harmonic_map(SignalModel::Analytic, &[2e-6, 1e-6], 5, &cp(), &f, &ReadoutConfig::default()).is_err());
    }

    #[test]
    fn small_numeric_map_tracks_analytic() {
        let cfg = ReadoutConfig { t_l: (1.0 + 1.0 / 64.0) / F_AC, ..ReadoutConfig::default().with_readouts(512) };
        let f = AcField::from_hz(0.0, F_AC, 0.0).unwrap();
        let amps = [1e-6, 3e-6];
        let num = build_harmonic_map(SignalModel::Numeric, &amps, 9, &cp(), &f, &cfg).unwrap();
        let ana = build_harmonic_map(SignalModel::Analytic, &amps, 9, &cp(), &f, &cfg).unwrap();
        for (rn, ra) in num.grid.iter().zip(&ana.grid) {
            for (x, y) in rn.iter().zip(ra) {
                assert!((x - y).abs() < 1e-6, "{x} {y}");
            }
        }
        let dir = tempfile::tempdir().unwrap();
        num.write_csv(&dir.path().join("m.csv")).unwrap();
        let text = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
        assert!(text.starts_with("amplitude_t,k1,k3,k5,k7,k9\n"));
    }
}
