//! DFT of a noisy readout record and sinc fits at the alias harmonics.

use floquet_nv::analytic::{bessel_argument, AcField, CpConfig};
use floquet_nv::math::bessel_j;
use floquet_nv::readout::{alias_frequency, normalize_counts, synthesize_series, to_photon_counts, ReadoutConfig, SignalModel};
use floquet_nv::spectral::{dft, extract_harmonics, sinc_peak_fit};

fn main() -> floquet_nv::Result<()> {
    let f_ac = 500.1e3;
    let cp = CpConfig::resonant(16, f_ac, 0.0)?.with_readout_error(0.05)?;
    // keeps the first-order readout-error model inside [0, 1]
    let field = AcField::from_hz(0.8e-6, f_ac, 0.0)?;
    let cfg = ReadoutConfig::default().with_readouts(1 << 16).with_seed(1);
    let series = synthesize_series(SignalModel::Analytic, &cp, &field, &cfg)?;
    let series = normalize_counts(&to_photon_counts(&series, &cfg)?, &cfg)?;
    let spectrum = dft(&series)?;
    let fa = alias_frequency(f_ac, cfg.t_l);
    println!("{} samples, bin width {:.3} Hz, alias fundamental {fa:.3} Hz", spectrum.len(), spectrum.bin_width());

    let single = sinc_peak_fit(&spectrum, fa, 5.0 * spectrum.bin_width())?;
    println!("single window at {fa:.1} Hz: A = {:.5}, centre {:.3} Hz", single.amplitude, single.center_hz);

    let a = bessel_argument(&cp, &field)?;
    let orders: Vec<u32> = (1..=7).collect();
    let ex = extract_harmonics(&spectrum, fa, &orders)?;
    println!("  k   fitted     expected");
    for h in &ex.fits {
        let j = bessel_j(h.k, a)?.abs();
        // even orders carry the readout error as a factor ε
        let expected = if h.k % 2 == 0 { cp.readout_tilt_error * j } else { j };
        println!("{:3}  {:9.5}  {:9.5}{}", h.k, h.fit.amplitude, expected, if h.fit.converged { "" } else { "  (not converged)" });
    }
    for n in &ex.notices {
        println!("note: {n}");
    }
    Ok(())
}
