use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytic::{AcField, CpConfig, PhaseCycle};
use crate::calibration::{ExclusionWindow, FitOptions, Weighting};
use crate::dynamics::IntegratorSettings;
use crate::error::{Error, Result};
use crate::readout::{ReadoutConfig, SignalModel};
use crate::spectral::{ExtractOptions, DEFAULT_COMB_ORDERS, DEFAULT_WINDOW_BINS};

/// Top-level run description, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: SignalModel,
    pub sequence: SequenceSection,
    pub field: FieldSection,
    #[serde(default)]
    pub readout: ReadoutSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub map: Option<MapSection>,
    #[serde(default)]
    pub calibration: Option<CalibrationSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_mode() -> SignalModel {
    SignalModel::Analytic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub n_pulses: u32,
    /// Interpulse delay, s. Omitted means on resonance with the field.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub t_pi: f64,
    #[serde(default = "default_cycle")]
    pub phase_cycle: PhaseCycle,
    #[serde(default)]
    pub pi_duration_error_fraction: f64,
    #[serde(default)]
    pub readout_tilt_error: f64,
    #[serde(default)]
    pub rabi_frequency: Option<f64>,
}

fn default_cycle() -> PhaseCycle {
    PhaseCycle::Xy8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    /// T
    #[serde(default)]
    pub b_ac: f64,
    pub frequency_hz: f64,
    #[serde(default)]
    pub phi_ac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    pub t_l: f64,
    pub n_readouts: usize,
    pub i0: f64,
    pub i1: f64,
    pub t_read: f64,
    pub n_seq: u64,
    /// Draw Poisson counts; otherwise counts are the expected values.
    pub shot_noise: bool,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        let r = ReadoutConfig::default();
        Self {
            t_l: r.t_l,
            n_readouts: 1 << 16,
            i0: r.i0,
            i1: r.i1,
            t_read: r.t_read,
            n_seq: r.n_seq,
            shot_noise: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSection {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_step: Option<f64>,
    pub initial_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub orders: Vec<u32>,
    pub window_bins: f64,
    pub comb_orders: u32,
    pub deflate: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            orders: (1..=15).collect(),
            window_bins: DEFAULT_WINDOW_BINS,
            comb_orders: DEFAULT_COMB_ORDERS,
            deflate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSection {
    /// T, ascending.
    pub amplitudes: Vec<f64>,
    pub max_order: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationKind {
    Bessel,
    TauSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub kind: CalibrationKind,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
    #[serde(default)]
    pub scan_points: Option<usize>,
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub exclusion_windows: Vec<ExclusionWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<SeriesFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![SeriesFormat::Csv, SeriesFormat::Binary],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Checks every sub-configuration.
    pub fn validate(&self) -> Result<()> {
        let cp = self.cp()?;
        self.field()?;
        self.readout_config().validate()?;
        self.integrator_settings(cp.tau).validate(cp.tau)?;
        if self.analysis.orders.is_empty() || self.analysis.orders.contains(&0) {
            return Err(Error::Config("analysis.orders must be non-empty and >= 1".into()));
        }
        if !(self.analysis.window_bins >= 2.0) {
            return Err(Error::Config("analysis.window_bins must be >= 2".into()));
        }
        if let Some(m) = &self.map {
            if m.amplitudes.is_empty() || m.amplitudes.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::Config("map.amplitudes must be non-empty and ascending".into()));
            }
            if m.max_order == 0 {
                return Err(Error::Config("map.max_order must be >= 1".into()));
            }
        }
        if self.output.formats.is_empty() {
            return Err(Error::Config("output.formats must not be empty".into()));
        }
        Ok(())
    }

    pub fn field(&self) -> Result<AcField> {
        AcField::from_hz(self.field.b_ac, self.field.frequency_hz, self.field.phi_ac)
    }

    pub fn cp(&self) -> Result<CpConfig> {
        let s = &self.sequence;
        let tau = match s.tau {
            Some(t) => t,
            None if self.field.frequency_hz > 0.0 => PI / (2.0 * PI * self.field.frequency_hz),
            None => return Err(Error::Config("sequence.tau needs a positive field frequency".into())),
        };
        let cfg = CpConfig {
            n_pulses: s.n_pulses,
            tau,
            t_pi: s.t_pi,
            phase_cycle: s.phase_cycle,
            pi_duration_error_fraction: s.pi_duration_error_fraction,
            readout_tilt_error: s.readout_tilt_error,
            rabi_frequency: s.rabi_frequency,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn readout_config(&self) -> ReadoutConfig {
        let r = &self.readout;
        ReadoutConfig {
            t_l: r.t_l,
            n_readouts: r.n_readouts,
            i0: r.i0,
            i1: r.i1,
            t_read: r.t_read,
            n_seq: r.n_seq,
            rng_seed: self.seed,
        }
    }

    pub fn integrator_settings(&self, tau: f64) -> IntegratorSettings {
        let d = IntegratorSettings::for_tau(tau);
        let i = &self.integrator;
        IntegratorSettings {
            rel_tol: i.rel_tol.unwrap_or(d.rel_tol),
            abs_tol: i.abs_tol.unwrap_or(d.abs_tol),
            max_step: i.max_step.unwrap_or(d.max_step),
            initial_step: i.initial_step.unwrap_or(d.initial_step),
        }
    }

    pub fn extract_options(&self) -> ExtractOptions {
        ExtractOptions {
            window_bins: self.analysis.window_bins,
            comb_orders: self.analysis.comb_orders,
            deflate: self.analysis.deflate,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        let c = self.calibration.as_ref();
        let base = match c.map(|c| c.kind) {
            Some(CalibrationKind::TauSweep) => FitOptions::tau_sweep(),
            _ => FitOptions::bessel(),
        };
        FitOptions {
            lower: c.and_then(|c| c.lower).unwrap_or(base.lower),
            upper: c.and_then(|c| c.upper).unwrap_or(base.upper),
            scan_points: c.and_then(|c| c.scan_points).unwrap_or(base.scan_points),
            weighting: c.map(|c| c.weighting).unwrap_or_default(),
        }
    }
}
