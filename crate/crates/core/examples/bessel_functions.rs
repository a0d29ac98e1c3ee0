//! Log-domain modified Bessel functions of the second kind: values far
//! outside the range of `f64`, order ratios, and the half-integer path.
//!
//! `cargo run --example bessel_functions`

use gsmnmf::priors::bessel::{bessel_k_ratio, is_half_integer, log_bessel_k, log_bessel_k_generic};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>8} {:>10} {:>22} {:>16}", "order", "x", "log K", "K_{v+1}/K_v");
    for &(v, x) in &[
        (0.5, 1.0),
        (0.0, 1e-6),
        (50.0, 1e-6),
        (-2.5, 15.0),
        (7.3, 100.0),
        (0.0, 1e4),
        (-45.0, 1e4),
    ] {
        println!(
            "{v:>8} {x:>10.1e} {:>22.12} {:>16.10}",
            log_bessel_k(v, x)?,
            bessel_k_ratio(v, x)?
        );
    }

    // K_{1/2}(x) = sqrt(pi / 2x) e^{-x}
    let x: f64 = 3.0;
    let closed = 0.5 * (std::f64::consts::PI / (2.0 * x)).ln() - x;
    println!("\nlog K_1/2(3): {:.15} (closed form {closed:.15})", log_bessel_k(0.5, x)?);

    let mut worst = 0.0f64;
    for k in -50..50 {
        let v = k as f64 + 0.5;
        assert!(is_half_integer(v));
        for x in [1e-3, 0.5, 2.0, 40.0, 3e3] {
            worst = worst.max((log_bessel_k(v, x)? - log_bessel_k_generic(v, x)?).abs());
        }
    }
    println!("half-integer recurrence vs generic path: max |difference| {worst:.2e}");
    Ok(())
}
