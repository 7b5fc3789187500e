use std::io::Write;

use serde::{Deserialize, Serialize};

use super::formulas::{expected_loss, lgd, predicted_ead};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{
    train_gbt, train_random_forest, ForestHyper, ForestModel, GbtHyper, GbtModel, Predict, PrivacyConfig,
    SplitRule, TrainConfig,
};
use crate::matrix::Matrix;
use crate::money::Cents;
use crate::preprocess::{ColumnData, FeatureMatrix, Frame, Pipeline, PipelineConfig, PipelineFit};
use crate::privacy::{ClippingBounds, Mode, PrivacyAccountant, PrivacyParams};
use crate::rng::named_seed;

/// Fractions of a run budget given to each stage. LGD's share is split evenly between
/// its two models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetPlan {
    pub preprocess: f64,
    pub pd: f64,
    pub ccf: f64,
    pub lgd: f64,
}

impl Default for BudgetPlan {
    fn default() -> Self {
        BudgetPlan {
            preprocess: 0.25,
            pd: 0.25,
            ccf: 0.25,
            lgd: 0.25,
        }
    }
}

impl BudgetPlan {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.preprocess, self.pd, self.ccf, self.lgd];
        if parts.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidConfig(format!("budget plan fractions must lie in (0, 1]: {self:?}")));
        }
        if parts.iter().sum::<f64>() > 1.0 + 1e-9 {
            return Err(Error::InvalidConfig(format!("budget plan fractions sum above 1: {self:?}")));
        }
        Ok(())
    }
}

/// Hyperparameters for the pipeline and the four component models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfigs {
    pub pipeline: PipelineConfig,
    pub pd: GbtHyper,
    pub ccf: ForestHyper,
    pub lgd_nonzero: GbtHyper,
    pub lgd_rate: ForestHyper,
}

impl Default for ModelConfigs {
    fn default() -> Self {
        ModelConfigs::exact_default()
    }
}

impl ModelConfigs {
    /// Library defaults: 100 boosting rounds of depth 3, 100 trees of depth 6.
    pub fn exact_default() -> ModelConfigs {
        ModelConfigs {
            pipeline: PipelineConfig::default(),
            pd: GbtHyper::default(),
            ccf: ForestHyper::default(),
            lgd_nonzero: GbtHyper::default(),
            lgd_rate: ForestHyper::default(),
        }
    }

    /// Smaller ensembles for private training, where every extra tree or round thins
    /// the budget each one receives.
    pub fn private_default() -> ModelConfigs {
        let boosted = GbtHyper {
            n_rounds: 10,
            max_depth: 2,
            learning_rate: 0.3,
            splits: SplitRule::Random,
            max_leaf: Some(2.0),
            ..GbtHyper::default()
        };
        let forest = ForestHyper {
            n_trees: 5,
            max_depth: 2,
            bootstrap: false,
            splits: SplitRule::Random,
            ..ForestHyper::default()
        };
        ModelConfigs {
            pipeline: PipelineConfig::default(),
            pd: boosted.clone(),
            ccf: forest.clone(),
            lgd_nonzero: boosted,
            lgd_rate: forest,
        }
    }
}

/// How [`CreditRiskModel::train`] sees the data.
#[derive(Clone, Copy)]
pub enum Training<'a> {
    Exact,
    Private {
        accountant: &'a PrivacyAccountant,
        budget: PrivacyParams,
        plan: BudgetPlan,
    },
}

impl Training<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            Training::Exact => Mode::Exact,
            Training::Private { .. } => Mode::Private,
        }
    }
}

/// Per-record loss estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub member_id: String,
    pub pd: f64,
    pub ead: Cents,
    pub lgd: f64,
    pub expected_loss: Cents,
}

pub fn total_expected_loss(breakdowns: &[LossBreakdown]) -> Cents {
    breakdowns.iter().map(|b| b.expected_loss).sum()
}

pub const LOSS_CSV_HEADER: [&str; 5] = ["member_id", "pd", "ead", "lgd", "expected_loss"];

/// Writes `member_id,pd,ead,lgd,expected_loss`; currency in dollars with cents.
pub fn write_losses_csv<W: Write>(writer: W, breakdowns: &[LossBreakdown]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LOSS_CSV_HEADER)?;
    for b in breakdowns {
        w.write_record([
            b.member_id.clone(),
            b.pd.to_string(),
            b.ead.to_decimal_string(),
            b.lgd.to_string(),
            b.expected_loss.to_decimal_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// PD, CCF and two-stage LGD models trained on one fitted pipeline.
///
/// Predicted recovery rate is `P(recovery > 0) · rate`, with the rate regressor's
/// output clipped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditRiskModel {
    pub pd_model: GbtModel,
    pub ccf_model: ForestModel,
    pub lgd_nonzero: GbtModel,
    pub lgd_rate: ForestModel,
    pub pipeline: Pipeline,
    pub mode: Mode,
}

fn private_config<H>(seed: u64, query_id: &str, share: PrivacyParams, hyper: H) -> TrainConfig<H> {
    TrainConfig {
        seed,
        mode: Mode::Private,
        privacy: Some(PrivacyConfig {
            share,
            label_bounds: ClippingBounds::unit(),
            query_id: query_id.to_string(),
        }),
        hyper,
    }
}

impl CreditRiskModel {
    /// Fits the preprocessing pipeline; in private mode it spends the plan's
    /// preprocessing share.
    pub fn fit_pipeline(
        dataset: &Dataset,
        configs: &ModelConfigs,
        seed: u64,
        training: Training<'_>,
    ) -> Result<Pipeline> {
        let mut pipeline = Pipeline::new(configs.pipeline.clone());
        let how = match training {
            Training::Exact => PipelineFit::Exact,
            Training::Private {
                accountant,
                budget,
                plan,
            } => {
                plan.validate()?;
                PipelineFit::Private {
                    accountant,
                    epsilon: budget.epsilon() * plan.preprocess,
                    seed: named_seed(seed, "preprocess"),
                }
            }
        };
        pipeline.fit(dataset, how)?;
        Ok(pipeline)
    }

    /// Trains the four component models on `features`, produced by `pipeline`.
    pub fn train_models(
        pipeline: Pipeline,
        features: &FeatureMatrix,
        configs: &ModelConfigs,
        seed: u64,
        training: Training<'_>,
    ) -> Result<CreditRiskModel> {
        let x = &features.matrix;
        let targets = &features.targets;
        let defaulted = features.defaulted_rows();
        if defaulted.is_empty() {
            return Err(Error::EmptyInput("no defaulted records to fit exposure and loss models".into()));
        }
        let x_default = x.select_rows(&defaulted);
        let ccf_y: Vec<f64> = defaulted
            .iter()
            .map(|&i| targets.ccf[i].expect("defaulted rows carry a ccf"))
            .collect();
        let rr: Vec<f64> = defaulted
            .iter()
            .map(|&i| targets.recovery_rate[i].expect("defaulted rows carry a recovery rate"))
            .collect();
        let nonzero_y: Vec<f64> = rr.iter().map(|&r| f64::from(u8::from(r > 0.0))).collect();
        let positive: Vec<usize> = (0..rr.len()).filter(|&k| rr[k] > 0.0).collect();
        if positive.is_empty() {
            return Err(Error::EmptyInput("no defaulted record has a positive recovery".into()));
        }
        let x_positive = x_default.select_rows(&positive);
        let rate_y: Vec<f64> = positive.iter().map(|&k| rr[k]).collect();

        let seeds = [
            named_seed(seed, "pd"),
            named_seed(seed, "ccf"),
            named_seed(seed, "lgd_nonzero"),
            named_seed(seed, "lgd_rate"),
        ];
        let (pd_model, ccf_model, lgd_nonzero, lgd_rate) = match training {
            Training::Exact => (
                train_gbt(x, &targets.default_label, &TrainConfig::exact(seeds[0]).with_hyper(configs.pd.clone()), None)?,
                train_random_forest(
                    &x_default,
                    &ccf_y,
                    &TrainConfig::exact(seeds[1]).with_hyper(configs.ccf.clone()),
                    None,
                )?,
                train_gbt(
                    &x_default,
                    &nonzero_y,
                    &TrainConfig::exact(seeds[2]).with_hyper(configs.lgd_nonzero.clone()),
                    None,
                )?,
                train_random_forest(
                    &x_positive,
                    &rate_y,
                    &TrainConfig::exact(seeds[3]).with_hyper(configs.lgd_rate.clone()),
                    None,
                )?,
            ),
            Training::Private {
                accountant,
                budget,
                plan,
            } => {
                plan.validate()?;
                let acc = Some(accountant);
                let lgd_share = budget.fraction(plan.lgd / 2.0)?;
                (
                    train_gbt(
                        x,
                        &targets.default_label,
                        &private_config(seeds[0], "pd", budget.fraction(plan.pd)?, configs.pd.clone()),
                        acc,
                    )?,
                    train_random_forest(
                        &x_default,
                        &ccf_y,
                        &private_config(seeds[1], "ccf", budget.fraction(plan.ccf)?, configs.ccf.clone()),
                        acc,
                    )?,
                    train_gbt(
                        &x_default,
                        &nonzero_y,
                        &private_config(seeds[2], "lgd/nonzero", lgd_share, configs.lgd_nonzero.clone()),
                        acc,
                    )?,
                    train_random_forest(
                        &x_positive,
                        &rate_y,
                        &private_config(seeds[3], "lgd/rate", lgd_share, configs.lgd_rate.clone()),
                        acc,
                    )?,
                )
            }
        };
        CreditRiskModel::from_parts(pd_model, ccf_model, lgd_nonzero, lgd_rate, pipeline, training.mode())
    }

    pub fn train(dataset: &Dataset, configs: &ModelConfigs, seed: u64, training: Training<'_>) -> Result<CreditRiskModel> {
        let pipeline = CreditRiskModel::fit_pipeline(dataset, configs, seed, training)?;
        let features = pipeline.apply(dataset)?;
        CreditRiskModel::train_models(pipeline, &features, configs, seed, training)
    }

    /// Assembles a model, checking every component against the pipeline's output width.
    pub fn from_parts(
        pd_model: GbtModel,
        ccf_model: ForestModel,
        lgd_nonzero: GbtModel,
        lgd_rate: ForestModel,
        pipeline: Pipeline,
        mode: Mode,
    ) -> Result<CreditRiskModel> {
        let width = pipeline.output_columns()?.len();
        for actual in [
            pd_model.n_features(),
            ccf_model.n_features(),
            lgd_nonzero.n_features(),
            lgd_rate.n_features(),
        ] {
            if actual != width {
                return Err(Error::WidthMismatch { expected: width, actual });
            }
        }
        Ok(CreditRiskModel {
            pd_model,
            ccf_model,
            lgd_nonzero,
            lgd_rate,
            pipeline,
            mode,
        })
    }

    pub fn predict_losses(&self, dataset: &Dataset) -> Result<Vec<LossBreakdown>> {
        let ids: Vec<String> = dataset.records().iter().map(|r| r.member_id.clone()).collect();
        self.predict_frame(&Frame::from_dataset(dataset), &ids)
    }

    /// Scores a raw frame. `member_ids` label the rows of the output.
    pub fn predict_frame(&self, frame: &Frame, member_ids: &[String]) -> Result<Vec<LossBreakdown>> {
        let funded = funded_amounts(frame)?;
        let (_, x) = self.pipeline.transform(frame)?;
        self.predict_matrix(&x, &funded, member_ids)
    }

    pub fn predict_matrix(&self, x: &Matrix, funded: &[Cents], member_ids: &[String]) -> Result<Vec<LossBreakdown>> {
        if funded.len() != x.n_rows() || member_ids.len() != x.n_rows() {
            return Err(Error::params("one funded amount and member id per row required"));
        }
        let pd = self.pd_model.predict(x)?;
        let ccf = self.ccf_model.predict(x)?;
        let nonzero = self.lgd_nonzero.predict(x)?;
        let rate = self.lgd_rate.predict(x)?;
        (0..x.n_rows())
            .map(|i| {
                let ead = predicted_ead(funded[i], ccf[i]);
                let recovery = nonzero[i] * rate[i].clamp(0.0, 1.0);
                let lgd = lgd(recovery.clamp(0.0, 1.0))?;
                Ok(LossBreakdown {
                    member_id: member_ids[i].clone(),
                    pd: pd[i],
                    ead,
                    lgd,
                    expected_loss: expected_loss(pd[i], ead, lgd),
                })
            })
            .collect()
    }
}

/// `total_funded_amount` of every frame row, in cents.
pub fn funded_amounts(frame: &Frame) -> Result<Vec<Cents>> {
    let column = frame.column("total_funded_amount").ok_or_else(|| Error::SchemaMismatch {
        column: "total_funded_amount".into(),
    })?;
    let ColumnData::Numeric(values) = &column.data else {
        return Err(Error::params("total_funded_amount must be numeric"));
    };
    values
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Some(d) if *d > 0.0 => Ok(Cents::from_dollars(*d)),
            _ => Err(Error::Parse {
                row: i + 1,
                column: "total_funded_amount".into(),
                message: "a positive funded amount is required".into(),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::learners::Tree;

    fn constant_model(pipeline: Pipeline, pd: f64, ccf: f64, nonzero: f64, rate: f64) -> CreditRiskModel {
        let width = pipeline.output_columns().unwrap().len();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let gbt = |p: f64| GbtModel {
            base_score: logit(p),
            learning_rate: 0.1,
            trees: vec![],
            n_features: width,
        };
        let forest = |v: f64| ForestModel::new(vec![Tree::leaf(v)], width).unwrap();
        CreditRiskModel::from_parts(gbt(pd), forest(ccf), gbt(nonzero), forest(rate), pipeline, Mode::Exact).unwrap()
    }

    #[test]
    fn stub_models_match_hand_arithmetic() {
        let ds = generate_synthetic(3, 1, &SyntheticConfig::default()).unwrap();
        let mut pipeline = Pipeline::new(PipelineConfig {
            correlation_threshold: None,
            ..PipelineConfig::default()
        });
        pipeline.fit(&ds, PipelineFit::Exact).unwrap();
        let model = constant_model(pipeline, 0.5, 0.8, 0.5, 0.4);
        let losses = model.predict_losses(&ds).unwrap();
        let mut expected_total = Cents::ZERO;
        for (b, r) in losses.iter().zip(ds.records()) {
            let ead = (r.total_funded_amount.0 as f64 * 0.8).round();
            let lgd = 1.0 - 0.5 * 0.4;
            let el = Cents((0.5 * ead * lgd).round() as i64);
            assert_eq!(b.ead, Cents(ead as i64));
            assert!((b.lgd - lgd).abs() < 1e-9 && (b.pd - 0.5).abs() < 1e-9);
            assert_eq!(b.expected_loss, el);
            expected_total += el;
        }
        assert_eq!(total_expected_loss(&losses), expected_total);
    }

    #[test]
    fn totals() {
        assert_eq!(total_expected_loss(&[]), Cents::ZERO);
        let b = |c: i64| LossBreakdown {
            member_id: String::new(),
            pd: 0.0,
            ead: Cents::ZERO,
            lgd: 0.0,
            expected_loss: Cents::from_whole_dollars(c),
        };
        assert_eq!(total_expected_loss(&[b(200), b(300), b(0)]), Cents::from_whole_dollars(500));
    }

    #[test]
    fn trains_end_to_end_in_both_modes() {
        let ds = generate_synthetic(3_000, 2, &SyntheticConfig::default()).unwrap();
        let exact = CreditRiskModel::train(&ds, &ModelConfigs::private_default(), 4, Training::Exact).unwrap();
        let acc = PrivacyAccountant::new(PrivacyParams::new(8.0, 1e-5).unwrap());
        let private = CreditRiskModel::train(
            &ds,
            &ModelConfigs::private_default(),
            4,
            Training::Private {
                accountant: &acc,
                budget: acc.budget(),
                plan: BudgetPlan::default(),
            },
        )
        .unwrap();
        assert!(acc.spent().epsilon <= 8.0 + 1e-9);
        assert!(acc.ledger_len() >= 4);
        for model in [&exact, &private] {
            let losses = model.predict_losses(&ds).unwrap();
            for (b, r) in losses.iter().zip(ds.records()) {
                assert!((0.0..=1.0).contains(&b.pd) && (0.0..=1.0).contains(&b.lgd));
                assert!(b.ead <= r.total_funded_amount);
                assert!(b.expected_loss >= Cents::ZERO && b.expected_loss <= r.total_funded_amount);
            }
        }
    }

    #[test]
    fn loss_csv_layout() {
        let mut out = Vec::new();
        let b = LossBreakdown {
            member_id: "LC1".into(),
            pd: 0.5,
            ead: Cents(100_050),
            lgd: 0.25,
            expected_loss: Cents(12_506),
        };
        write_losses_csv(&mut out, &[b]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "member_id,pd,ead,lgd,expected_loss\nLC1,0.5,1000.50,0.25,125.06\n");
    }

    #[test]
    fn plan_validation() {
        assert!(BudgetPlan::default().validate().is_ok());
        let bad = BudgetPlan {
            pd: 0.5,
            ..BudgetPlan::default()
        };
        assert!(bad.validate().is_err());
    }
}
