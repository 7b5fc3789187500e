//! Generates a synthetic loan portfolio, summarizes it, and round-trips it through CSV.
//!
//! `cargo run --example synthetic_portfolio -- [n] [seed]`

use dpcredit::credit_risk::actual_loss;
use dpcredit::data::{generate_synthetic, Dataset, SplitSpec, SyntheticConfig};
use dpcredit::Cents;

fn main() -> dpcredit::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(39_000);
    let seed: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(7);

    let portfolio = generate_synthetic(n, seed, &SyntheticConfig::default())?;
    let funded: Cents = portfolio.records().iter().map(|r| r.total_funded_amount).sum();
    let realized: Cents = portfolio.records().iter().map(actual_loss).sum();
    let missing_income = portfolio.records().iter().filter(|r| r.annual_income.is_none()).count();
    println!("records:          {}", portfolio.len());
    println!("defaulted:        {:.2}%", 100.0 * portfolio.defaulted_fraction());
    println!("funded:           {funded}");
    println!("realized loss:    {realized}");
    println!("missing income:   {missing_income}");

    for record in portfolio.records().iter().take(3) {
        println!(
            "  {} {} {:>10} {:>5.2}% {:?}",
            record.member_id, record.state, record.total_funded_amount, record.interest_rate, record.loan_status
        );
    }

    let mut csv = Vec::new();
    portfolio.write_csv(&mut csv)?;
    let reloaded = Dataset::read_csv(csv.as_slice(), true)?.dataset;
    assert_eq!(reloaded.records(), portfolio.records());
    println!("CSV round trip:   {} bytes, identical records", csv.len());

    let (train, test) = portfolio.split(SplitSpec {
        train_fraction: 0.8,
        seed,
    })?;
    println!("split:            {} train / {} test", train.len(), test.len());
    Ok(())
}
