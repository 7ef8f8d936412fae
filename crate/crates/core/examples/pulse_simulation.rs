//! Time-dependent simulation of an XY8-16 sequence with finite pulses,
//! compared with the delta-pulse formula.

use floquet_nv::analytic::{acquired_phase, return_probability, AcField, CpConfig};
use floquet_nv::dynamics::{build_schedule, propagator, run_measurement, unitarity_residual, IntegratorSettings};

fn main() -> floquet_nv::Result<()> {
    let f_ac = 500.1e3;
    let field = AcField::from_hz(20e-6, f_ac, 0.3)?;
    let ideal = return_probability(acquired_phase(&CpConfig::resonant(16, f_ac, 0.0)?, &field)?, 0.0)?;
    println!("b = 20 µT, delta pulses: P0 = {ideal:.9}");
    for t_pi in [0.1e-9, 1e-9, 10e-9, 50e-9, 200e-9, 400e-9] {
        let cp = CpConfig::resonant(16, f_ac, t_pi)?;
        let settings = IntegratorSettings::for_tau(cp.tau);
        let p0 = run_measurement(&cp, &field, &settings)?;
        let u = propagator(&build_schedule(&cp)?, &field, &settings)?;
        println!(
            "t_pi = {:6.1} ns: P0 = {p0:.9}  |ΔP0| = {:.2e}  unitarity residual {:.1e}",
            t_pi * 1e9,
            (p0 - ideal).abs(),
            unitarity_residual(&u)
        );
    }
    // a 5% long pulse and a 0.05 rad readout axis error
    let cp = CpConfig::resonant(16, f_ac, 40e-9)?.with_duration_error(0.05)?.with_readout_error(0.05)?;
    let p0 = run_measurement(&cp, &field, &IntegratorSettings::for_tau(cp.tau))?;
    println!("with pulse errors: P0 = {p0:.6}");
    Ok(())
}
