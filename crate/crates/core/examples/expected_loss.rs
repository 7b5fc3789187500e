//! Trains the four-model expected-loss model and breaks down its predictions.
//!
//! `cargo run --release --example expected_loss`

use dpcredit::credit_risk::{total_expected_loss, write_losses_csv, BudgetPlan, CreditRiskModel, ModelConfigs, Training};
use dpcredit::data::{generate_synthetic, SplitSpec, SyntheticConfig};
use dpcredit::evaluation::{actual_total, relative_difference};
use dpcredit::privacy::{PrivacyAccountant, PrivacyParams};

fn main() -> dpcredit::Result<()> {
    let portfolio = generate_synthetic(20_000, 5, &SyntheticConfig::default())?;
    let (train, test) = portfolio.split(SplitSpec {
        train_fraction: 0.8,
        seed: 5,
    })?;
    let actual = actual_total(&test);

    let exact = CreditRiskModel::train(&train, &ModelConfigs::exact_default(), 5, Training::Exact)?;
    let budget = PrivacyParams::new(8.0, 1e-5)?;
    let accountant = PrivacyAccountant::new(budget);
    let private = CreditRiskModel::train(
        &train,
        &ModelConfigs::private_default(),
        5,
        Training::Private {
            accountant: &accountant,
            budget,
            plan: BudgetPlan::default(),
        },
    )?;

    println!("held-out realized loss: {actual}");
    for (name, model) in [("exact", &exact), ("private ε=8", &private)] {
        let losses = model.predict_losses(&test)?;
        let total = total_expected_loss(&losses);
        let mean_pd = losses.iter().map(|l| l.pd).sum::<f64>() / losses.len() as f64;
        let mean_lgd = losses.iter().map(|l| l.lgd).sum::<f64>() / losses.len() as f64;
        println!(
            "{name:<12} predicted {total}  rel diff {:+.2}%  mean PD {mean_pd:.4}  mean LGD {mean_lgd:.4}",
            relative_difference(actual, total)?
        );
    }

    println!("\nfirst rows of the private breakdown:");
    let losses = private.predict_losses(&test)?;
    let mut out = Vec::new();
    write_losses_csv(&mut out, &losses[..5])?;
    print!("{}", String::from_utf8_lossy(&out));
    print!("\n{}", accountant.report());
    Ok(())
}
