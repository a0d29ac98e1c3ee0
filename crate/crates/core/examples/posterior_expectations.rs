//! Posterior mean of the inverse impulse variable for every prior, as a
//! function of the normalized bin energy `s`, checked against numerical
//! integration where the prior has a closed form.
//!
//! `cargo run --example posterior_expectations`

use gsmnmf::priors::{posterior_inv_phi, quadrature_posterior_inv_phi, BinStatistic, GsmVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = 2;
    let variants = [
        GsmVariant::Gaussian,
        GsmVariant::StudentT { nu: 40.0 },
        GsmVariant::LeptokurticGg { beta: 1.6 },
        GsmVariant::Gh { gamma: -2.0, rho: 1.0, eta: 5.0 },
        GsmVariant::Nig { rho: 15.0, eta: 1.0 },
    ];
    let grid = [0.0, 0.1, 1.0, 2.0, 10.0, 100.0];
    print!("{:>10}", "s");
    for v in &variants {
        print!("{:>12}", v.name());
    }
    println!();
    for &s in &grid {
        print!("{s:>10}");
        for &v in &variants {
            print!("{:>12.6}", posterior_inv_phi(BinStatistic::new(s, m)?, v)?);
        }
        println!();
    }

    println!("\nclosed form vs quadrature (M = {m}, s split evenly over channels):");
    for v in variants.into_iter().filter(|v| !matches!(v, GsmVariant::Gaussian | GsmVariant::LeptokurticGg { .. })) {
        let mut worst = 0.0f64;
        for &s in &grid {
            let z = vec![s / m as f64; m];
            let y = vec![1.0; m];
            let closed = posterior_inv_phi(BinStatistic::from_pairs(&z, &y)?, v)?;
            let quad = quadrature_posterior_inv_phi(&z, &y, v)?;
            worst = worst.max((closed - quad).abs() / quad);
        }
        println!("  {:<4} max relative difference {worst:.2e}", v.name());
    }
    Ok(())
}
