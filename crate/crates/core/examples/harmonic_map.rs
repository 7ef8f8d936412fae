//! Harmonic map with 400 ns pulses next to the delta-pulse map: high orders
//! vanish once the field is strong enough to detune the pulses.
//!
//! Small record (2¹⁰ readouts) so it runs in seconds.

use floquet_nv::analytic::{AcField, CpConfig};
use floquet_nv::dynamics::IntegratorSettings;
use floquet_nv::readout::{ReadoutConfig, SignalModel};
use floquet_nv::spectral::{build_harmonic_map, build_harmonic_map_with};

fn main() -> floquet_nv::Result<()> {
    let f_ac = 500.1e3;
    let amps = [5e-6, 10e-6, 20e-6, 40e-6];
    let mut cfg = ReadoutConfig::default().with_readouts(1 << 10);
    cfg.t_l = (1.0 + 1.0 / 128.0) / f_ac;
    let field = AcField::from_hz(0.0, f_ac, 0.0)?;
    let finite = CpConfig::resonant(16, f_ac, 400e-9)?;
    let numeric = build_harmonic_map_with(
        SignalModel::Numeric,
        &amps,
        41,
        &finite,
        &field,
        &cfg,
        &IntegratorSettings::for_tau(finite.tau),
    )?;
    let ideal = build_harmonic_map(SignalModel::Analytic, &amps, 41, &CpConfig::resonant(16, f_ac, 0.0)?, &field, &cfg)?;
    for (i, b) in amps.iter().enumerate() {
        println!("b = {:4.0} µT", b * 1e6);
        for (j, k) in numeric.orders.iter().enumerate().step_by(4) {
            println!("  k = {k:2}  400 ns {:8.5}  ideal {:8.5}", numeric.grid[i][j], ideal.grid[i][j]);
        }
    }
    if let Some(path) = std::env::args().nth(1) {
        numeric.write_json(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
