//! Sequential readout: stepped-phase P₀ series, photon counts and normalisation.

use std::f64::consts::TAU;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{acquired_phase, return_probability, AcField, CpConfig};
use crate::dynamics::{run_measurement, IntegratorSettings};
use crate::error::{Error, Result};
use crate::io::{read_csv, write_atomic, write_csv};

/// Which signal model produces `P₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalModel {
    /// Closed-form delta-pulse probability.
    Analytic,
    /// One Schrödinger integration per readout.
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Phase-stepping period `t_L`, s.
    pub t_l: f64,
    pub n_readouts: usize,
    /// Photoluminescence rate of `m_S = 0`, counts/s.
    pub i0: f64,
    /// Photoluminescence rate of `m_S = −1`, counts/s.
    pub i1: f64,
    /// Photon collection window per repetition, s.
    pub t_read: f64,
    /// Repetitions summed into each readout.
    pub n_seq: u64,
    pub rng_seed: u64,
}

impl Default for ReadoutConfig {
    /// `t_L = 2 µs`, `2²⁰` readouts. The count rates are placeholders, not
    /// measured values.
    fn default() -> Self {
        Self {
            t_l: 2.0e-6,
            n_readouts: 1 << 20,
            i0: 2.0e5,
            i1: 1.4e5,
            t_read: 3.0e-7,
            n_seq: 100_000,
            rng_seed: 0,
        }
    }
}

impl ReadoutConfig {
    pub fn with_readouts(self, n_readouts: usize) -> Self {
        Self { n_readouts, ..self }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_l > 0.0 && self.t_l.is_finite()) {
            return Err(Error::Config(format!("t_l must be positive, got {}", self.t_l)));
        }
        if self.n_readouts < 2 {
            return Err(Error::Config("n_readouts must be >= 2".into()));
        }
        if !(self.i1 >= 0.0 && self.i0 > self.i1 && self.i0.is_finite()) {
            return Err(Error::Config(format!(
                "count rates must satisfy i0 > i1 >= 0, got i0={} i1={}",
                self.i0, self.i1
            )));
        }
        if !(self.t_read > 0.0 && self.t_read.is_finite()) || self.n_seq == 0 {
            return Err(Error::Config("t_read and n_seq must be positive".into()));
        }
        Ok(())
    }

    /// Record length `n_readouts · t_L`, s.
    pub fn total_duration(&self) -> f64 {
        self.n_readouts as f64 * self.t_l
    }

    /// Counts per unit probability, `n_seq · t_read · (i0 − i1)`.
    pub fn contrast_counts(&self) -> f64 {
        self.n_seq as f64 * self.t_read * (self.i0 - self.i1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Probability,
    Counts,
}

impl Unit {
    fn code(self) -> u8 {
        match self {
            Unit::Probability => 0,
            Unit::Counts => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Unit::Probability),
            1 => Ok(Unit::Counts),
            _ => Err(Error::Format(format!("unknown unit code {c}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Unit::Probability => "probability",
            Unit::Counts => "counts",
        }
    }
}

/// Uniformly sampled readout record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    /// Sampling period, s.
    pub dt: f64,
    pub unit: Unit,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dt: f64, unit: Unit) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { values, dt, unit })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    fn expect_unit(&self, unit: Unit) -> Result<()> {
        if self.unit != unit {
            return Err(Error::Config(format!(
                "expected a {} series, got {}",
                unit.name(),
                self.unit.name()
            )));
        }
        Ok(())
    }
}

/// Aliased frequency `|f − round(f t_L)/t_L|` seen by stroboscopic sampling, Hz.
pub fn alias_frequency(frequency_hz: f64, t_l: f64) -> f64 {
    (frequency_hz - (frequency_hz * t_l).round() / t_l).abs()
}

/// AC phase at each readout, `α_j = φ_ac + j ω_ac t_L` reduced to `[0, 2π)`.
pub fn phase_step_sequence(cfg: &ReadoutConfig, field: &AcField) -> Vec<f64> {
    // Only the fractional cycle count per step matters; keeping it separate
    // avoids losing digits in j·ω·t_L for long records.
    let cycles = field.frequency_hz() * cfg.t_l;
    let step = cycles - cycles.floor();
    (0..cfg.n_readouts)
        .map(|j| {
            let frac = (j as f64 * step).fract();
            (field.phi_ac + TAU * frac).rem_euclid(TAU)
        })
        .collect()
}

/// `P₀(t_m)` for every readout, using default integrator settings for the numeric model.
pub fn synthesize_series(
    model: SignalModel,
    cp: &CpConfig,
    field: &AcField,
    cfg: &ReadoutConfig,
) -> Result<TimeSeries> {
    synthesize_series_with(model, cp, field, cfg, &IntegratorSettings::for_tau(cp.tau))
}

pub fn synthesize_series_with(
    model: SignalModel,
    cp: &CpConfig,
    field: &AcField,
    cfg: &ReadoutConfig,
    settings: &IntegratorSettings,
) -> Result<TimeSeries> {
    cfg.validate()?;
    cp.validate()?;
    field.validate()?;
    let phases = phase_step_sequence(cfg, field);
    let values: Vec<f64> = match model {
        SignalModel::Analytic => {
            let amplitude = acquired_phase(cp, &field.with_phase(0.0))?;
            phases
                .par_iter()
                .map(|&alpha| return_probability(amplitude * alpha.cos(), cp.readout_tilt_error))
                .collect::<Result<_>>()?
        }
        SignalModel::Numeric => {
            settings.validate(cp.tau)?;
            phases
                .par_iter()
                .map(|&alpha| run_measurement(cp, &field.with_phase(alpha), settings))
                .collect::<Result<_>>()?
        }
    };
    TimeSeries::new(values, cfg.t_l, Unit::Probability)
}

fn mean_counts(series: &TimeSeries, cfg: &ReadoutConfig) -> Result<Vec<f64>> {
    series.expect_unit(Unit::Probability)?;
    cfg.validate()?;
    let scale = cfg.n_seq as f64 * cfg.t_read;
    series
        .values
        .iter()
        .enumerate()
        .map(|(index, &p)| {
            let mean = scale * (cfg.i1 + (cfg.i0 - cfg.i1) * p);
            if mean < 0.0 || !mean.is_finite() {
                Err(Error::NegativeMean { index, mean })
            } else {
                Ok(mean)
            }
        })
        .collect()
}

/// Noise-free count series `µ_m = n_seq t_read (i1 + (i0 − i1) P₀)`.
pub fn expected_counts(series: &TimeSeries, cfg: &ReadoutConfig) -> Result<TimeSeries> {
    TimeSeries::new(mean_counts(series, cfg)?, series.dt, Unit::Counts)
}

/// Poisson-distributed counts around `µ_m`.
///
/// Sample `m` uses stream `m` of a ChaCha8 generator seeded with `rng_seed`,
/// so the draws do not depend on evaluation order.
pub fn to_photon_counts(series: &TimeSeries, cfg: &ReadoutConfig) -> Result<TimeSeries> {
    let means = mean_counts(series, cfg)?;
    let values = means
        .par_iter()
        .enumerate()
        .map(|(m, &mu)| {
            if mu == 0.0 {
                return Ok(0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(m as u64);
            let dist = Poisson::new(mu)
                .map_err(|e| Error::Config(format!("poisson mean {mu}: {e}")))?;
            Ok(dist.sample(&mut rng))
        })
        .collect::<Result<Vec<f64>>>()?;
    TimeSeries::new(values, series.dt, Unit::Counts)
}

/// Inverse of the count map: `P₀ = (c/(n_seq t_read) − i1)/(i0 − i1)`.
pub fn normalize_counts(series: &TimeSeries, cfg: &ReadoutConfig) -> Result<TimeSeries> {
    series.expect_unit(Unit::Counts)?;
    if cfg.i0 == cfg.i1 {
        return Err(Error::DegenerateContrast(cfg.i0));
    }
    let scale = cfg.n_seq as f64 * cfg.t_read;
    let values = series
        .values
        .iter()
        .map(|&c| (c / scale - cfg.i1) / (cfg.i0 - cfg.i1))
        .collect();
    TimeSeries::new(values, series.dt, Unit::Probability)
}

const MAGIC: &[u8; 4] = b"NVTS";
const BINARY_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 8 + 8;

/// Binary column file: `NVTS`, u16 version, u8 unit, u64 length, f64 dt,
/// then the samples as little-endian f64.
pub fn encode_series(series: &TimeSeries) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * series.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.push(series.unit.code());
    out.extend_from_slice(&(series.len() as u64).to_le_bytes());
    out.extend_from_slice(&series.dt.to_le_bytes());
    for v in &series.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_series(bytes: &[u8]) -> Result<TimeSeries> {
    let bad = |m: &str| Error::Format(format!("series file: {m}"));
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing NVTS header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BINARY_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let unit = Unit::from_code(bytes[6])?;
    let len = u64::from_le_bytes(bytes[7..15].try_into().unwrap()) as usize;
    let dt = f64::from_le_bytes(bytes[15..23].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    if body.len() != len.checked_mul(8).ok_or_else(|| bad("length overflow"))? {
        return Err(bad(&format!("expected {len} samples, found {} bytes", body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TimeSeries::new(values, dt, unit)
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    index: usize,
    time_s: f64,
    value: f64,
    unit: Unit,
}

pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    write_csv(
        path,
        series.values.iter().enumerate().map(|(index, &value)| SeriesRow {
            index,
            time_s: series.time(index),
            value,
            unit: series.unit,
        }),
    )
}

pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let rows: Vec<SeriesRow> = read_csv(path)?;
    let bad = |m: String| Error::Format(format!("{}: {m}", path.display()));
    if rows.len() < 2 {
        return Err(bad("need at least two samples".into()));
    }
    let unit = rows[0].unit;
    for (i, r) in rows.iter().enumerate() {
        if r.index != i || r.unit != unit {
            return Err(bad(format!("row {i} is out of order or changes unit")));
        }
    }
    let dt = rows[1].time_s - rows[0].time_s;
    TimeSeries::new(rows.into_iter().map(|r| r.value).collect(), dt, unit)
}

pub fn write_series_binary(path: &Path, series: &TimeSeries) -> Result<()> {
    write_atomic(path, &encode_series(series))
}

pub fn read_series_binary(path: &Path) -> Result<TimeSeries> {
    decode_series(&std::fs::read(path)?)
}

/// Reads either format, by extension (`.csv`, otherwise binary).
pub fn read_series(path: &Path) -> Result<TimeSeries> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => read_series_csv(path),
        _ => read_series_binary(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::bessel_argument;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const F_AC: f64 = 500.1e3;

    fn cp() -> CpConfig {
        CpConfig::resonant(16, F_AC, 0.0).unwrap()
    }

    fn cfg(n: usize) -> ReadoutConfig {
        ReadoutConfig::default().with_readouts(n)
    }

    #[test]
    fn stroboscopic_sampling_is_constant() {
        let f = AcField::from_hz(1e-6, F_AC, 0.4).unwrap();
        let c = ReadoutConfig {
            t_l: 10.0 / F_AC,
            ..cfg(50)
        };
        for a in phase_step_sequence(&c, &f) {
            assert!((a - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn default_stepping_aliases_to_100_hz() {
        let f = AcField::from_hz(1e-6, F_AC, 1.0).unwrap();
        let s = phase_step_sequence(&cfg(4), &f);
        assert_eq!(s[0], 1.0);
        let step = (s[1] - s[0]).rem_euclid(TAU);
        assert!((step - TAU * 2e-4).abs() < 1e-9, "{step}");
        assert!((alias_frequency(F_AC, 2e-6) - 100.0).abs() < 1e-6);
    }

    #[test]
    fn zero_field_series_is_flat() {
        let f = AcField::from_hz(0.0, F_AC, 0.0).unwrap();
        let s = synthesize_series(SignalModel::Analytic, &cp(), &f, &cfg(64)).unwrap();
        assert!(s.values.iter().all(|&p| p == 0.5));
        assert_eq!(s.unit, Unit::Probability);
        assert_eq!(s.len(), 64);
    }

    #[test]
    fn weak_field_is_a_sinusoid_with_half_argument() {
        let b = 5e-9;
        let f = AcField::from_hz(b, F_AC, 0.0).unwrap();
        let c = cfg(5000);
        let s = synthesize_series(SignalModel::Analytic, &cp(), &f, &c).unwrap();
        let a = bessel_argument(&cp(), &f).unwrap();
        let phases = phase_step_sequence(&c, &f);
        for (p, alpha) in s.values.iter().zip(&phases) {
            // sin x = x + O(x³)
            assert!((p - 0.5 - 0.5 * a * alpha.cos()).abs() <= a.powi(3) / 12.0);
        }
    }

    #[test]
    fn numeric_matches_analytic_for_delta_pulses() {
        let f = AcField::from_hz(1.3e-6, F_AC, 0.2).unwrap();
        let c = cfg(24);
        let a = synthesize_series(SignalModel::Analytic, &cp(), &f, &c).unwrap();
        let n = synthesize_series(SignalModel::Numeric, &cp(), &f, &c).unwrap();
        for (x, y) in a.values.iter().zip(&n.values) {
            assert!((x - y).abs() < 1e-8);
        }
        let short = CpConfig::resonant(16, F_AC, 0.1e-9).unwrap();
        let n = synthesize_series(SignalModel::Numeric, &short, &f, &c).unwrap();
        for (x, y) in a.values.iter().zip(&n.values) {
            assert!((x - y).abs() < 1e-3);
        }
    }

    #[test]
    fn count_mean_examples() {
        let c = ReadoutConfig { i1: 0.0, ..cfg(4) };
        let ones = TimeSeries::new(vec![1.0; 4], 1.0, Unit::Probability).unwrap();
        let m = expected_counts(&ones, &c).unwrap();
        assert!(m.values.iter().all(|&v| v == c.n_seq as f64 * c.t_read * c.i0));
        let neg = TimeSeries::new(vec![-2.0], 1.0, Unit::Probability).unwrap();
        assert!(matches!(expected_counts(&neg, &c), Err(Error::NegativeMean { .. })));
    }

    #[test]
    fn counts_are_deterministic_and_poissonian() {
        let c = cfg(10_000).with_seed(7);
        let half = TimeSeries::new(vec![0.5; 10_000], 2e-6, Unit::Probability).unwrap();
        let a = to_photon_counts(&half, &c).unwrap();
        let b = to_photon_counts(&half, &c).unwrap();
        assert_eq!(encode_series(&a), encode_series(&b));
        let other = to_photon_counts(&half, &c.with_seed(8)).unwrap();
        assert_ne!(a.values, other.values);

        let n = a.len() as f64;
        let mean = a.values.iter().sum::<f64>() / n;
        let var = a.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / mean - 1.0).abs() < 0.05, "{}", var / mean);
    }

    #[test]
    fn sample_draws_do_not_depend_on_series_length() {
        let c = cfg(100).with_seed(3);
        let p = TimeSeries::new((0..100).map(|i| i as f64 / 99.0).collect(), 1.0, Unit::Probability).unwrap();
        let full = to_photon_counts(&p, &c).unwrap();
        let head = TimeSeries::new(p.values[..10].to_vec(), 1.0, Unit::Probability).unwrap();
        let part = to_photon_counts(&head, &c).unwrap();
        assert_eq!(&full.values[..10], &part.values[..]);
    }

    #[test]
    fn normalize_examples() {
        let c = cfg(3);
        let floor = c.i1 * c.n_seq as f64 * c.t_read;
        let flat = TimeSeries::new(vec![floor; 3], 1.0, Unit::Counts).unwrap();
        assert!(normalize_counts(&flat, &c).unwrap().values.iter().all(|v| v.abs() < 1e-12));
        let degenerate = ReadoutConfig { i1: c.i0, ..c };
        assert!(matches!(
            normalize_counts(&flat, &degenerate),
            Err(Error::DegenerateContrast(_))
        ));
        let p = TimeSeries::new(vec![0.1], 1.0, Unit::Probability).unwrap();
        assert!(normalize_counts(&p, &c).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(2).validate().is_ok());
        assert!(cfg(1).validate().is_err());
        assert!(ReadoutConfig { i1: 3e5, ..cfg(4) }.validate().is_err());
        assert!(ReadoutConfig { t_l: 0.0, ..cfg(4) }.validate().is_err());
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let s = TimeSeries::new(vec![0.5, -1.25, PI], 2e-6, Unit::Counts).unwrap();
        let bytes = encode_series(&s);
        assert_eq!(&bytes[..4], b"NVTS");
        assert_eq!(decode_series(&bytes).unwrap(), s);
        assert!(decode_series(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_series(&wrong).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = TimeSeries::new(vec![0.5, 0.75, 0.125], 2e-6, Unit::Probability).unwrap();
        write_series_csv(&p, &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("index,time_s,value,unit\n0,0.0,0.5,probability\n"));
        let back = read_series(&p).unwrap();
        assert_eq!(back.values, s.values);
        assert!((back.dt - s.dt).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn normalization_inverts_counts(ps in proptest::collection::vec(0.0f64..1.0, 2..50)) {
            let c = cfg(ps.len());
            let s = TimeSeries::new(ps.clone(), 2e-6, Unit::Probability).unwrap();
            let back = normalize_counts(&expected_counts(&s, &c).unwrap(), &c).unwrap();
            for (a, b) in ps.iter().zip(&back.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
