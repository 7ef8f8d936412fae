//! `|A_k| = |J_k(a)|` against field amplitude for a 16-pulse sequence at 500.1 kHz.
//!
//! Pass a file name to also write the full curve set as CSV.

use floquet_nv::analytic::{bessel_argument, harmonic_amplitude, AcField, CpConfig};
use floquet_nv::readout::{ReadoutConfig, SignalModel};
use floquet_nv::spectral::build_harmonic_map;

fn main() -> floquet_nv::Result<()> {
    let cp = CpConfig::resonant(16, 500.1e3, 0.0)?;
    let field = AcField::from_hz(0.0, 500.1e3, 0.0)?;
    let orders = [1u32, 11, 51, 151, 201];

    print!("{:>8} {:>8}", "b (µT)", "a");
    for k in orders {
        print!(" {:>9}", format!("k={k}"));
    }
    println!();
    for i in 0..=12 {
        let b = 10e-6 * i as f64;
        let f = field.with_amplitude(b);
        print!("{:8.1} {:8.2}", b * 1e6, bessel_argument(&cp, &f)?);
        for k in orders {
            print!(" {:9.5}", harmonic_amplitude(k, &cp, &f)?.abs());
        }
        println!();
    }

    if let Some(path) = std::env::args().nth(1) {
        let amps: Vec<f64> = (0..500).map(|i| 120e-6 * i as f64 / 499.0).collect();
        let map = build_harmonic_map(SignalModel::Analytic, &amps, 201, &cp, &field, &ReadoutConfig::default())?;
        map.write_csv(path.as_ref())?;
        println!("wrote {path}");
    }
    Ok(())
}
