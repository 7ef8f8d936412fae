//! DFT of readout records, sinc peak fitting and harmonic extraction.

mod fit;
mod harmonics;

pub use fit::{sinc_peak_fit, PeakFit, MAX_ITERATIONS};
pub use harmonics::{
    build_harmonic_map, build_harmonic_map_with, extract_harmonics, extract_harmonics_with,
    ExtractOptions, HarmonicExtraction, HarmonicFit, HarmonicMap, MapDocument,
    DEFAULT_COMB_ORDERS, DEFAULT_WINDOW_BINS,
};

use std::f64::consts::TAU;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::write_csv;
use crate::readout::TimeSeries;

/// Two-sided DFT `X(f_q) = Σ_m x_m e^{−2πi f_q m dt} · dt` with `f_q = q / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<Complex64>,
    samples: Vec<f64>,
    dt: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Record length `T_tot`, s.
    pub fn total_duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    /// Bin spacing `1/T_tot`, Hz.
    pub fn bin_width(&self) -> f64 {
        1.0 / self.total_duration()
    }

    pub fn nyquist(&self) -> f64 {
        0.5 / self.dt
    }

    /// Frequency of bin `q` in `[0, n)`, with bins above `n/2` negative.
    pub fn frequency(&self, q: usize) -> f64 {
        let n = self.len();
        let signed = if 2 * q > n { q as f64 - n as f64 } else { q as f64 };
        signed * self.bin_width()
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Bins `0..=n/2`.
    pub fn one_sided(&self) -> &[Complex64] {
        &self.bins[..=self.len() / 2]
    }

    pub fn magnitude(&self, q: usize) -> f64 {
        self.bins[q].norm()
    }

    /// Index of the bin nearest to `f` (non-negative frequencies only).
    pub fn nearest_bin(&self, f: f64) -> usize {
        ((f / self.bin_width()).round().max(0.0) as usize).min(self.len() / 2)
    }

    /// Amplitude estimate `2|X_q|/T` from the single bin nearest to `f`.
    pub fn nearest_bin_amplitude(&self, f: f64) -> f64 {
        2.0 * self.magnitude(self.nearest_bin(f)) / self.total_duration()
    }

    /// Transform evaluated at an arbitrary frequency `f`, Hz.
    pub fn dtft(&self, f: f64) -> Complex64 {
        dtft(&self.samples, self.dt, f)
    }
}

/// Direct evaluation of `Σ x_m e^{−2πi f m dt} · dt`.
pub(crate) fn dtft(samples: &[f64], dt: f64, f: f64) -> Complex64 {
    const RESYNC: usize = 256;
    let theta = -TAU * f * dt;
    let step = Complex64::from_polar(1.0, theta);
    let mut acc = Complex64::ZERO;
    for (block, chunk) in samples.chunks(RESYNC).enumerate() {
        let mut z = Complex64::from_polar(1.0, theta * (block * RESYNC) as f64);
        for &x in chunk {
            acc += z * x;
            z *= step;
        }
    }
    acc * dt
}

/// Forward transform of `series` (any length ≥ 2), scaled by `dt`.
pub fn dft(series: &TimeSeries) -> Result<Spectrum> {
    if series.len() < 2 {
        return Err(Error::Config("DFT needs at least two samples".into()));
    }
    let mut buf: Vec<Complex64> = series.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    for x in &mut buf {
        *x *= series.dt;
    }
    Ok(Spectrum {
        bins: buf,
        samples: series.values.clone(),
        dt: series.dt,
    })
}

#[derive(Serialize)]
struct SpectrumRow {
    bin: usize,
    frequency_hz: f64,
    re: f64,
    im: f64,
    magnitude: f64,
}

/// One-sided spectrum as `bin,frequency_hz,re,im,magnitude`.
pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum) -> Result<()> {
    write_csv(
        path,
        spectrum.one_sided().iter().enumerate().map(|(q, x)| SpectrumRow {
            bin: q,
            frequency_hz: spectrum.frequency(q),
            re: x.re,
            im: x.im,
            magnitude: x.norm(),
        }),
    )
}
