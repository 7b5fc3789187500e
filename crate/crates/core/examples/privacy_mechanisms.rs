//! The noise mechanisms and the budget accountant.
//!
//! `cargo run --example privacy_mechanisms`

use dpcredit::data::{generate_synthetic, SyntheticConfig, LOSS_BOUNDS};
use dpcredit::credit_risk::actual_loss;
use dpcredit::privacy::{dp_count, dp_median, dp_sum, gaussian, gaussian_sigma, laplace, ClippingBounds, PrivacyAccountant, PrivacyParams};
use dpcredit::rng::seeded;
use dpcredit::Error;

fn main() -> dpcredit::Result<()> {
    let mut rng = seeded(42);

    let draws: Vec<f64> = (0..100_000).map(|_| laplace(0.0, 1.0, 0.5, &mut rng)).collect::<Result<_, _>>()?;
    let var = draws.iter().map(|x| x * x).sum::<f64>() / draws.len() as f64;
    println!("Laplace b=2:      empirical variance {var:.3}, expected {:.3}", 2.0 * 2.0 * 2.0);

    let params = PrivacyParams::new(1.0, 1e-5)?;
    let sigma = gaussian_sigma(1.0, params)?;
    let released = gaussian(100.0, 1.0, params, &mut rng)?;
    println!("Gaussian:         σ={sigma:.4}, one release of 100 -> {released:.3}");

    let portfolio = generate_synthetic(39_000, 7, &SyntheticConfig::default())?;
    let losses: Vec<f64> = portfolio.records().iter().map(|r| actual_loss(r).dollars()).collect();
    let exact: f64 = losses.iter().sum();
    let noisy = dp_sum(&losses, LOSS_BOUNDS, 1.0, &mut rng)?;
    println!("dp_sum ε=1:       exact {exact:.2}, released {noisy:.2} ({:+.4}%)", 100.0 * (noisy - exact) / exact);
    println!("dp_count ε=1:     {} -> {:.1}", losses.len(), dp_count(losses.len(), 1.0, &mut rng)?);

    let rates: Vec<f64> = portfolio.records().iter().map(|r| r.interest_rate).collect();
    let bounds = ClippingBounds::new(0.0, 35.0)?;
    for eps in [0.01, 0.1, 1.0, 1e9] {
        println!("dp_median ε={eps:<6} interest rate {:.3}", dp_median(&rates, bounds, eps, &mut rng)?);
    }

    let accountant = PrivacyAccountant::new(PrivacyParams::pure(1.0)?);
    accountant.consume("query/a", PrivacyParams::pure(0.6)?)?;
    accountant.consume("query/b", PrivacyParams::pure(0.4)?)?;
    match accountant.consume("query/c", PrivacyParams::pure(0.01)?) {
        Err(Error::BudgetExhausted { query_id, .. }) => println!("\nrefused `{query_id}`: budget exhausted"),
        other => println!("\nunexpected: {other:?}"),
    }
    print!("{}", accountant.report());
    println!("{}", accountant.ledger_json());
    Ok(())
}
