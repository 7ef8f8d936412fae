//! Bessel values against a frozen high-precision quadrature table.

use floquet_nv::math::{bessel_j, bessel_j_row};

fn table() -> Vec<(u32, f64, f64)> {
    let mut r = csv::Reader::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/bessel_reference.csv")).unwrap();
    r.deserialize::<(u32, f64, f64)>().map(|row| row.unwrap()).collect()
}

#[test]
fn matches_reference_table() {
    let rows = table();
    assert!(rows.len() > 1500);
    let mut worst: f64 = 0.0;
    for (k, x, expect) in rows {
        let got = bessel_j(k, x).unwrap();
        if expect.abs() > 1e-280 {
            let rel = ((got - expect) / expect).abs();
            worst = worst.max(rel);
            assert!(rel < 1e-10, "J_{k}({x}) = {got:e}, reference {expect:e}");
        } else {
            assert!(got.abs() < 1e-280, "J_{k}({x}) = {got:e} should underflow");
        }
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn rows_agree_with_scalar_values_on_table_arguments() {
    for x in [0.1, 1.0, 10.0, 50.0, 100.0, 211.4] {
        let row = bessel_j_row(250, x).unwrap();
        for (k, v) in row.iter().enumerate() {
            let s = bessel_j(k as u32, x).unwrap();
            // different recurrence start orders: equal up to rounding (absolute
            // near zeros of the oscillatory region)
            assert!((v - s).abs() <= 1e-13 * s.abs() + 1e-15, "k={k} x={x}");
        }
    }
}
