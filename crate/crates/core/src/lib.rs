//! Differentially private credit-risk modeling.
//!
//! The crate covers the full workflow of building an expected-loss model on loan data
//! when the analyst only has differentially private access to it:
//!
//! - [`privacy`]: Laplace, Gaussian and exponential-mechanism primitives plus a
//!   [`PrivacyAccountant`](privacy::PrivacyAccountant) that records every debit.
//! - [`data`]: the loan schema, CSV ingestion, a synthetic portfolio generator and
//!   seeded splits.
//! - [`preprocess`]: a fitted, replayable pipeline (binning, column removal, median
//!   imputation, correlation filtering, one-hot encoding). In private mode every
//!   data-dependent statistic is a DP query; applying a fitted pipeline is exact.
//! - [`learners`]: linear and logistic regression, random forests and gradient
//!   boosted trees, each trainable exactly or privately.
//! - [`credit_risk`]: CCF, EAD, recovery rate, LGD and expected loss, and the
//!   four-model [`CreditRiskModel`](credit_risk::CreditRiskModel).
//! - [`evaluation`]: repeated-subsample comparison of private and non-private models.
//! - [`portable`]: a self-contained JSON model document for deployment.
//!
//! - [`cli`]: the `dpcredit` command-line tool.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod error;
pub mod io;
pub mod money;
pub mod rng;

pub mod matrix;

pub mod cli;
pub mod credit_risk;
pub mod data;
pub mod evaluation;
pub mod learners;
pub mod portable;
pub mod preprocess;
pub mod privacy;

pub use error::{Error, Result};
pub use money::Cents;
