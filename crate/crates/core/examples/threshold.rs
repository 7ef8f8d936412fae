//! Small-amplitude threshold: the field at which the acquired phase reaches π/2.

use std::f64::consts::PI;

use floquet_nv::analytic::{acquired_phase, lock_in_filter, return_probability, small_amplitude_threshold, AcField, CpConfig};

fn main() -> floquet_nv::Result<()> {
    let f_ac = 500.1e3;
    for n in [8, 16, 32, 64] {
        let cp = CpConfig::resonant(n, f_ac, 0.0)?;
        let b = small_amplitude_threshold(&cp);
        let phase = acquired_phase(&cp, &AcField::from_hz(b, f_ac, 0.0)?)?;
        println!(
            "N = {n:2}: threshold {:7.2} nT, phase there {:.6} (π/2 = {:.6}), P0 = {:.6}",
            b * 1e9,
            phase,
            PI / 2.0,
            return_probability(phase, 0.0)?
        );
    }
    let cp = CpConfig::resonant(16, f_ac, 0.0)?;
    println!("lock-in filter of the 16-pulse sequence, detuned from resonance:");
    for df in [-50e3, -10e3, -2e3, 2e3, 10e3, 50e3] {
        let w = 2.0 * PI * (f_ac + df);
        println!("  {:+7.0} Hz  {:.5}", df, lock_in_filter(cp.tau, 16, w)?);
    }
    Ok(())
}
