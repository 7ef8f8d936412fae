//! High-order Bessel values near the transition region `k ≈ x`.
//!
//! ```text
//! cargo run --example bessel_orders -- 211.4
//! ```

use floquet_nv::math::{bessel_j, bessel_j_row};

fn main() -> floquet_nv::Result<()> {
    let x: f64 = std::env::args().nth(1).map_or(211.4, |s| s.parse().expect("argument must be a number"));
    let row = bessel_j_row(300, x)?;
    println!("J_k({x}) for odd k around the argument");
    let start = (x as u32).saturating_sub(20) | 1;
    for k in (start..=x as u32 + 20).step_by(2) {
        println!("  k = {k:3}  {:+.6e}", row[k as usize]);
    }
    let parseval = row[0] * row[0] + 2.0 * row[1..].iter().map(|j| j * j).sum::<f64>();
    println!("J_0² + 2Σ J_k² - 1 = {:.2e}", parseval - 1.0);
    // scalar and row evaluation share no state
    println!("J_1 scalar {:+.15e}, row {:+.15e}", bessel_j(1, x)?, row[1]);
    Ok(())
}
