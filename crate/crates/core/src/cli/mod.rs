//! Command-line front end: `simulate`, `analyze`, `map` and `calibrate`.

mod config;

pub use config::{
    AnalysisSection, CalibrationKind, CalibrationSection, FieldSection, IntegratorSection,
    MapSection, OutputSection, ReadoutSection, RunConfig, SequenceSection, SeriesFormat,
};

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::calibration::{fit_bessel_conversion, fit_tau_sweep, BesselPoint, TauPoint};
use crate::error::{Error, Result};
use crate::io::{read_csv, write_json};
use crate::readout::{
    alias_frequency, expected_counts, normalize_counts, read_series, synthesize_series_with,
    to_photon_counts, write_series_binary, write_series_csv, SignalModel, TimeSeries, Unit,
};
use crate::spectral::{build_harmonic_map_with, dft, extract_harmonics_with, write_spectrum_csv};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "floquet-nv", version, about = "Pulsed NV magnetometry simulator and analysis pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the configured signal model.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Analytic,
    Numeric,
}

impl From<Mode> for SignalModel {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Analytic => SignalModel::Analytic,
            Mode::Numeric => SignalModel::Numeric,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize P0 and count series.
    Simulate,
    /// Transform a series file and fit its harmonics.
    Analyze {
        /// Series file (.csv or binary).
        series: PathBuf,
    },
    /// Harmonic amplitude map over the configured amplitude sweep.
    Map,
    /// Fit the conversion coefficient or field amplitude from a data CSV.
    Calibrate {
        /// `drive,k,amplitude[,weight]` or `tau,p0[,weight]` rows.
        data: PathBuf,
    },
}

/// Exit status for an error: 1 for configuration, usage and file problems, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Format(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_COMPUTATION,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    mode: SignalModel,
    seed: u64,
    config: &'a RunConfig,
    outputs: Vec<String>,
    notices: Vec<String>,
    /// Only field that differs between otherwise identical runs.
    generated_at_unix_s: u64,
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(m) = cli.mode {
            cfg.mode = m.into();
        }
        if let Some(o) = &cli.out {
            cfg.output.directory = o.clone();
        }
        let out = cfg.output.directory.clone();
        std::fs::create_dir_all(&out)?;
        Ok(Self { cfg, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_series(&self, stem: &str, s: &TimeSeries, outputs: &mut Vec<String>) -> Result<()> {
        for f in &self.cfg.output.formats {
            let name = match f {
                SeriesFormat::Csv => format!("{stem}.csv"),
                SeriesFormat::Binary => format!("{stem}.bin"),
            };
            match f {
                SeriesFormat::Csv => write_series_csv(&self.path(&name), s)?,
                SeriesFormat::Binary => write_series_binary(&self.path(&name), s)?,
            }
            outputs.push(name);
        }
        Ok(())
    }

    fn manifest(&self, command: &str, outputs: Vec<String>, notices: Vec<String>) -> Result<()> {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        write_json(
            &self.path(&format!("{command}_manifest.json")),
            "manifest",
            &Manifest {
                command,
                mode: self.cfg.mode,
                seed: self.cfg.seed,
                config: &self.cfg,
                outputs,
                notices,
                generated_at_unix_s: now,
            },
        )
    }
}

fn cmd_simulate(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let cp = cfg.cp()?;
    let field = cfg.field()?;
    let readout = cfg.readout_config();
    let p0 = synthesize_series_with(cfg.mode, &cp, &field, &readout, &cfg.integrator_settings(cp.tau))?;
    let counts = if cfg.readout.shot_noise {
        to_photon_counts(&p0, &readout)?
    } else {
        expected_counts(&p0, &readout)?
    };
    let mut outputs = Vec::new();
    ctx.write_series("series_probability", &p0, &mut outputs)?;
    ctx.write_series("series_counts", &counts, &mut outputs)?;
    ctx.manifest("simulate", outputs, Vec::new())
}

fn cmd_analyze(ctx: &Context, series_path: &Path) -> Result<()> {
    let cfg = &ctx.cfg;
    let raw = read_series(series_path)?;
    let series = match raw.unit {
        Unit::Counts => normalize_counts(&raw, &cfg.readout_config())?,
        Unit::Probability => raw,
    };
    let spectrum = dft(&series)?;
    let fa = alias_frequency(cfg.field.frequency_hz, series.dt);
    let ex = extract_harmonics_with(&spectrum, fa, &cfg.analysis.orders, &cfg.extract_options())?;
    write_spectrum_csv(&ctx.path("spectrum.csv"), &spectrum)?;
    ex.write_csv(&ctx.path("harmonics.csv"))?;
    let unconverged: Vec<String> = ex
        .fits
        .iter()
        .filter(|h| !h.fit.converged)
        .map(|h| format!("k={}: fit did not converge", h.k))
        .collect();
    let mut notices = ex.notices.clone();
    notices.extend(unconverged);
    for n in &notices {
        eprintln!("notice: {n}");
    }
    ctx.manifest("analyze", vec!["spectrum.csv".into(), "harmonics.csv".into()], notices)
}

fn cmd_map(ctx: &Context) -> Result<()> {
    let cfg = &ctx.cfg;
    let m = cfg
        .map
        .as_ref()
        .ok_or_else(|| Error::Config("map command needs a [map] section".into()))?;
    let cp = cfg.cp()?;
    let map = build_harmonic_map_with(
        cfg.mode,
        &m.amplitudes,
        m.max_order,
        &cp,
        &cfg.field()?,
        &cfg.readout_config(),
        &cfg.integrator_settings(cp.tau),
    )?;
    map.write_csv(&ctx.path("map.csv"))?;
    map.write_json(&ctx.path("map.json"))?;
    ctx.manifest("map", vec!["map.csv".into(), "map.json".into()], Vec::new())
}

fn cmd_calibrate(ctx: &Context, data: &Path) -> Result<()> {
    let cfg = &ctx.cfg;
    let section = cfg
        .calibration
        .as_ref()
        .ok_or_else(|| Error::Config("calibrate needs a [calibration] section".into()))?;
    let cp = cfg.cp()?;
    let omega = cfg.field()?.omega_ac;
    let opts = cfg.fit_options();
    match section.kind {
        CalibrationKind::Bessel => {
            let points: Vec<BesselPoint> = read_csv(data)?;
            let r = fit_bessel_conversion(&points, &cp, omega, &opts)?;
            write_json(&ctx.path("calibration.json"), "bessel_calibration", &r)?;
        }
        CalibrationKind::TauSweep => {
            let points: Vec<TauPoint> = read_csv(data)?;
            let r = fit_tau_sweep(&points, &cp, omega, &section.exclusion_windows, &opts)?;
            write_json(&ctx.path("calibration.json"), "tau_sweep_calibration", &r)?;
        }
    }
    ctx.manifest("calibrate", vec!["calibration.json".into()], Vec::new())
}

/// Parses `args` (including the program name) and runs the command; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    let result = Context::new(&cli).and_then(|ctx| match &cli.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::Analyze { series } => cmd_analyze(&ctx, series),
        Command::Map => cmd_map(&ctx),
        Command::Calibrate { data } => cmd_calibrate(&ctx, data),
    });
    match result {
        Ok(()) => EXIT_SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}
