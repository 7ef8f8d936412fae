//! Sequential readout record: phase steps of the AC field across repetitions,
//! Poisson photon counts and normalisation back to probability.
//!
//! Writes CSV and binary copies of the count series into the directory given
//! as the first argument (default `sequential_readout_out`).

use std::path::PathBuf;

use floquet_nv::analytic::{AcField, CpConfig};
use floquet_nv::readout::{
    alias_frequency, normalize_counts, synthesize_series, to_photon_counts, write_series_binary, write_series_csv,
    ReadoutConfig, SignalModel,
};

fn main() -> floquet_nv::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sequential_readout_out".into()));
    std::fs::create_dir_all(&dir)?;
    let cp = CpConfig::resonant(16, 500.1e3, 0.0)?;
    let field = AcField::from_hz(2e-6, 500.1e3, 0.0)?;
    let cfg = ReadoutConfig::default().with_readouts(1 << 16).with_seed(7);
    println!("alias frequency {:.3} Hz", alias_frequency(500.1e3, cfg.t_l));

    let p0 = synthesize_series(SignalModel::Analytic, &cp, &field, &cfg)?;
    let counts = to_photon_counts(&p0, &cfg)?;
    let back = normalize_counts(&counts, &cfg)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("mean P0 {:.5}, mean counts {:.1}, mean renormalised {:.5}", mean(&p0.values), mean(&counts.values), mean(&back.values));
    for m in (0..2500).step_by(250) {
        println!("  t = {:8.3} ms  P0 = {:.4}  counts = {:6}", p0.time(m) * 1e3, p0.values[m], counts.values[m]);
    }
    write_series_csv(&dir.join("series_counts.csv"), &counts)?;
    write_series_binary(&dir.join("series_counts.bin"), &counts)?;
    println!("wrote {}", dir.display());
    Ok(())
}
