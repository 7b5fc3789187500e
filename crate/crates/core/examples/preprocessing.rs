//! Fits the preprocessing pipeline exactly and privately and compares the constants.
//!
//! `cargo run --example preprocessing`

use dpcredit::data::{generate_synthetic, SyntheticConfig};
use dpcredit::preprocess::{Pipeline, PipelineConfig, PipelineFit, TransformStep};
use dpcredit::privacy::{PrivacyAccountant, PrivacyParams};

fn describe(pipeline: &Pipeline) {
    for step in pipeline.steps() {
        match step {
            TransformStep::MedianImpute { values } => {
                for (column, value) in values {
                    println!("    median {column:<22} {value:.3}");
                }
            }
            TransformStep::CorrelationFilter { dropped, .. } => println!("    correlation filter drops {dropped:?}"),
            TransformStep::DropColumns { columns } => println!("    drop {columns:?}"),
            TransformStep::BinCategorical { column, vocabulary, .. } => println!("    bin {column} into {vocabulary:?}"),
            TransformStep::OneHot { columns } => println!("    one-hot {} column(s)", columns.len()),
        }
    }
}

fn main() -> dpcredit::Result<()> {
    let portfolio = generate_synthetic(20_000, 3, &SyntheticConfig::default())?;

    let mut exact = Pipeline::new(PipelineConfig::default());
    exact.fit(&portfolio, PipelineFit::Exact)?;
    println!("exact pipeline:");
    describe(&exact);

    let accountant = PrivacyAccountant::new(PrivacyParams::pure(2.0)?);
    let mut private = Pipeline::new(PipelineConfig::default());
    private.fit(
        &portfolio,
        PipelineFit::Private {
            accountant: &accountant,
            epsilon: 2.0,
            seed: 3,
        },
    )?;
    println!("private pipeline (ε=2):");
    describe(&private);
    print!("{}", accountant.report());

    let features = private.apply(&portfolio)?;
    println!("\nfeature matrix: {} rows x {} columns", features.n_rows(), features.column_names.len());
    println!("columns: {}", features.column_names.join(", "));
    println!("first row: {:?}", features.matrix.row(0));
    Ok(())
}
