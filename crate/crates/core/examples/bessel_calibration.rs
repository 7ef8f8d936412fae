//! Recovers a voltage-to-field conversion coefficient from harmonic amplitudes
//! measured over a drive sweep.

use floquet_nv::analytic::{AcField, CpConfig};
use floquet_nv::calibration::{fit_bessel_conversion, synthesize_bessel_dataset, FitOptions};
use floquet_nv::readout::{ReadoutConfig, SignalModel};

fn main() -> floquet_nv::Result<()> {
    let f_ac = 500.1e3;
    let truth = 0.392e-6; // T per mVpp
    let cp = CpConfig::resonant(16, f_ac, 0.0)?;
    let field = AcField::from_hz(0.0, f_ac, 0.0)?;
    let cfg = ReadoutConfig::default().with_readouts(1 << 16).with_seed(3);
    let drives: Vec<f64> = (1..=15).map(|i| 20.0 * i as f64).collect();
    let data = synthesize_bessel_dataset(SignalModel::Analytic, &drives, &[1, 11, 51, 151, 201], truth, &cp, &field, &cfg, true)?;
    let fit = fit_bessel_conversion(&data, &cp, 2.0 * std::f64::consts::PI * f_ac, &FitOptions::bessel())?;
    println!(
        "c = {:.5} ± {:.1e} µT/mVpp (generated with {:.3}), R² = {:.6}, {} points",
        fit.conversion_coefficient * 1e6,
        fit.uncertainty * 1e6,
        truth * 1e6,
        fit.r_squared,
        fit.n_points
    );
    for (v, b) in fit.field_estimates.iter().step_by(3) {
        println!("  {v:5.0} mVpp -> {:7.3} µT", b * 1e6);
    }
    Ok(())
}
