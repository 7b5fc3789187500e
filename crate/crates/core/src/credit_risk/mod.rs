//! Credit-risk arithmetic and the four-model expected-loss composition.
//!
//! Expected loss per record is `PD · EAD · LGD` with
//! `EAD = funded × CCF`, `CCF = (funded − recovered principal) / funded`,
//! `LGD = 1 − recovery rate` and `recovery rate = recoveries / EAD`.

mod formulas;
mod model;

pub use formulas::{actual_ead, actual_loss, ccf, expected_loss, lgd, predicted_ead, recovery_rate};
pub use model::{
    funded_amounts, total_expected_loss, write_losses_csv, BudgetPlan, CreditRiskModel, LossBreakdown,
    ModelConfigs, Training, LOSS_CSV_HEADER,
};
