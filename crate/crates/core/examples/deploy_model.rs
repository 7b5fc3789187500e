//! Trains a private model, exports it, and scores new data from the document alone.
//!
//! `cargo run --release --example deploy_model -- [output dir]`

use std::path::PathBuf;

use dpcredit::credit_risk::{total_expected_loss, BudgetPlan, CreditRiskModel, ModelConfigs, Training};
use dpcredit::data::{generate_synthetic, SyntheticConfig};
use dpcredit::portable::{export_model, import_model, standalone_predict, PortableModel, PortableModelDocument};
use dpcredit::privacy::{PrivacyAccountant, PrivacyParams};

fn main() -> dpcredit::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dpcredit-deploy"));
    let portfolio = generate_synthetic(10_000, 9, &SyntheticConfig::default())?;
    let budget = PrivacyParams::new(8.0, 1e-5)?;
    let accountant = PrivacyAccountant::new(budget);
    let model = CreditRiskModel::train(
        &portfolio,
        &ModelConfigs::private_default(),
        9,
        Training::Private {
            accountant: &accountant,
            budget,
            plan: BudgetPlan::default(),
        },
    )?;

    let document = PortableModelDocument::from_credit_risk(&model, &accountant.ledger(), Some(9))?;
    let model_path = out.join("model.dpcm.json");
    export_model(&document, &model_path)?;
    let pd_path = out.join("pd.dpcm.json");
    let pd_only = PortableModelDocument::with_pipeline(PortableModel::Gbt(model.pd_model.clone()), model.pipeline.clone(), document.metadata.clone())?;
    export_model(&pd_only, &pd_path)?;
    println!("exported {} and {}", model_path.display(), pd_path.display());

    // New applications, scored with nothing but the document.
    let applications = generate_synthetic(1_000, 10, &SyntheticConfig::default())?;
    let input = out.join("applications.csv");
    applications.save_csv(&input)?;
    let imported = import_model(&model_path)?;
    let scored = out.join("expected_losses.csv");
    standalone_predict(&imported, &input, &scored)?;

    let in_engine = total_expected_loss(&model.predict_losses(&applications)?);
    let text = std::fs::read_to_string(&scored).map_err(|e| dpcredit::Error::Io { path: scored.clone(), source: e })?;
    let lines: Vec<&str> = text.lines().collect();
    println!("scored {} applications into {}", lines.len() - 1, scored.display());
    for line in &lines[..4] {
        println!("  {line}");
    }
    println!("in-engine predicted total: {in_engine}");
    println!("document ledger:           ε={} over {} queries", imported.metadata.privacy.epsilon_spent, imported.metadata.privacy.queries.len());
    Ok(())
}
