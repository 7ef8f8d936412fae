//! Field amplitude from a sweep of the interpulse delay, with the phase of the
//! field averaged out.

use std::f64::consts::PI;

use floquet_nv::analytic::{AcField, CpConfig};
use floquet_nv::calibration::{fit_tau_sweep, tau_sweep_dataset, ExclusionWindow, FitOptions};

fn main() -> floquet_nv::Result<()> {
    let f_ac = 500.1e3;
    let cp = CpConfig::resonant(16, f_ac, 0.0)?;
    let field = AcField::from_hz(1.5e-6, f_ac, 0.0)?;
    let taus: Vec<f64> = (0..300).map(|i| 0.5 / (350e3 + 1e3 * i as f64 + 0.37e3)).collect();
    let data = tau_sweep_dataset(&taus, &cp, &field)?;
    for p in data.iter().step_by(30) {
        println!("  1/(2τ) = {:7.1} kHz  P0 = {:.5}", 0.5 / p.tau / 1e3, p.p0);
    }
    // e.g. a spurious line near 600 kHz
    let windows = [ExclusionWindow { lo_hz: 595e3, hi_hz: 605e3 }];
    let fit = fit_tau_sweep(&data, &cp, 2.0 * PI * f_ac, &windows, &FitOptions::tau_sweep())?;
    println!(
        "b_ac = {:.4} µT ± {:.1e} (true 1.5), {} used, {} excluded, {} singular",
        fit.b_ac * 1e6,
        fit.uncertainty * 1e6,
        fit.points_used,
        fit.points_excluded,
        fit.points_singular
    );
    Ok(())
}
