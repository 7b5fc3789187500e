//! Trains each learner exactly and privately on a toy problem.
//!
//! `cargo run --release --example learners`

use dpcredit::learners::{
    log_loss, train_gbt, train_linear, train_logistic, train_random_forest, ForestHyper, GbtHyper, LinearHyper,
    Predict, PrivacyConfig, SplitRule, TrainConfig,
};
use dpcredit::matrix::Matrix;
use dpcredit::privacy::{ClippingBounds, PrivacyAccountant, PrivacyParams};
use dpcredit::rng::seeded;
use rand::Rng;

fn private<H: Default>(seed: u64, epsilon: f64, query_id: &str, label_bounds: ClippingBounds) -> dpcredit::Result<TrainConfig<H>> {
    Ok(TrainConfig::private(
        seed,
        PrivacyConfig {
            share: PrivacyParams::new(epsilon, 1e-6)?,
            label_bounds,
            query_id: query_id.into(),
        },
    ))
}

fn accuracy(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).filter(|(p, y)| (**p > 0.5) == (**y > 0.5)).count() as f64 / y.len() as f64
}

fn main() -> dpcredit::Result<()> {
    let mut rng = seeded(1);
    let n = 5_000;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let x = Matrix::from_rows(&rows)?.with_bounds(vec![ClippingBounds::unit(); 2])?;
    let y_lin: Vec<f64> = rows.iter().map(|r| (0.2 + 0.5 * r[0] - 0.3 * r[1]).clamp(0.0, 1.0)).collect();
    let y_bin: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r[0] + 0.5 * r[1] > 0.75))).collect();
    let accountant = PrivacyAccountant::new(PrivacyParams::new(40.0, 1e-5)?);
    let unit = ClippingBounds::unit();

    let exact = train_linear(&x, &y_lin, &TrainConfig::exact(1), None)?;
    let noisy = train_linear(&x, &y_lin, &private::<LinearHyper>(1, 10.0, "linear", unit)?, Some(&accountant))?;
    println!("linear    exact w={:?} b={:.3}", exact.weights, exact.intercept);
    println!("linear    ε=10  w={:?} b={:.3}", noisy.weights, noisy.intercept);

    let exact = train_logistic(&x, &y_bin, &TrainConfig::exact(1), None)?;
    let noisy = train_logistic(&x, &y_bin, &private::<LinearHyper>(1, 10.0, "logistic", unit)?, Some(&accountant))?;
    println!("logistic  accuracy exact {:.3}, ε=10 {:.3}", accuracy(&exact.predict(&x)?, &y_bin), accuracy(&noisy.predict(&x)?, &y_bin));

    let hyper = ForestHyper {
        n_trees: 20,
        max_depth: 4,
        ..ForestHyper::default()
    };
    let exact = train_random_forest(&x, &y_bin, &TrainConfig::exact(2).with_hyper(hyper.clone()), None)?;
    let noisy = train_random_forest(&x, &y_bin, &private(2, 10.0, "forest", unit)?.with_hyper(ForestHyper { bootstrap: false, splits: SplitRule::Random, ..hyper }), Some(&accountant))?;
    println!("forest    accuracy exact {:.3}, ε=10 {:.3} ({} nodes)", accuracy(&exact.predict(&x)?, &y_bin), accuracy(&noisy.predict(&x)?, &y_bin), noisy.n_nodes());

    let hyper = GbtHyper {
        n_rounds: 30,
        learning_rate: 0.3,
        ..GbtHyper::default()
    };
    let exact = train_gbt(&x, &y_bin, &TrainConfig::exact(3).with_hyper(hyper.clone()), None)?;
    let noisy = train_gbt(&x, &y_bin, &private(3, 10.0, "gbt", unit)?.with_hyper(GbtHyper { max_leaf: Some(2.0), ..hyper }), Some(&accountant))?;
    println!("gbt       log-loss exact {:.4}, ε=10 {:.4}", log_loss(&exact, &x, &y_bin), log_loss(&noisy, &x, &y_bin));

    print!("\n{}", accountant.report());
    Ok(())
}
