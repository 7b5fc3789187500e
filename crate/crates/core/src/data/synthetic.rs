//! Schema-compatible synthetic loan portfolios.
//!
//! A latent credit-quality score drives interest rate, term, debt-to-income and, through
//! a logistic link, default. The link intercept is solved per portfolio so that the
//! expected default fraction equals the configured rate exactly; outcomes are then
//! Bernoulli draws, so observed rates concentrate around it.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, LoanRecord, LoanStatus, Provenance};
use crate::error::{Error, Result};
use crate::money::Cents;
use crate::rng::{stream, DpRng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Expected fraction of CHARGED_OFF/DEFAULT loans.
    pub default_rate: f64,
    /// Expected fraction of defaulted loans with nonzero post-default recoveries.
    pub recovery_probability: f64,
    /// Per-field probability that `annual_income` or `dti` is missing.
    pub missing_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            default_rate: 0.12,
            recovery_probability: 0.6,
            missing_rate: 0.02,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("default_rate", self.default_rate),
            ("recovery_probability", self.recovery_probability),
            ("missing_rate", self.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

// Rough population weights; the tail is lumped into equal small weights.
const STATES: [(&str, f64); 51] = [
    ("CA", 12.0), ("TX", 8.5), ("FL", 6.5), ("NY", 6.0), ("PA", 3.9), ("IL", 3.9),
    ("OH", 3.5), ("GA", 3.2), ("NC", 3.1), ("MI", 3.0), ("NJ", 2.8), ("VA", 2.6),
    ("WA", 2.3), ("AZ", 2.2), ("MA", 2.1), ("TN", 2.1), ("IN", 2.0), ("MO", 1.8),
    ("MD", 1.8), ("WI", 1.8), ("CO", 1.7), ("MN", 1.7), ("SC", 1.5), ("AL", 1.5),
    ("LA", 1.4), ("KY", 1.3), ("OR", 1.3), ("OK", 1.2), ("CT", 1.1), ("UT", 1.0),
    ("IA", 0.9), ("NV", 0.9), ("AR", 0.9), ("MS", 0.9), ("KS", 0.9), ("NM", 0.6),
    ("NE", 0.6), ("WV", 0.5), ("ID", 0.5), ("HI", 0.4), ("NH", 0.4), ("ME", 0.4),
    ("MT", 0.3), ("RI", 0.3), ("DE", 0.3), ("SD", 0.3), ("ND", 0.2), ("AK", 0.2),
    ("DC", 0.2), ("VT", 0.2), ("WY", 0.2),
];

const HOME: [(&str, f64); 4] = [("MORTGAGE", 0.45), ("RENT", 0.40), ("OWN", 0.14), ("OTHER", 0.01)];

const PURPOSES: [(&str, f64, f64); 14] = [
    // (label, weight, risk shift)
    ("debt_consolidation", 0.55, 0.05),
    ("credit_card", 0.22, -0.15),
    ("home_improvement", 0.06, -0.1),
    ("major_purchase", 0.02, 0.0),
    ("small_business", 0.01, 0.6),
    ("car", 0.01, -0.1),
    ("medical", 0.015, 0.2),
    ("moving", 0.01, 0.25),
    ("vacation", 0.01, 0.1),
    ("house", 0.005, 0.1),
    ("wedding", 0.003, -0.1),
    ("renewable_energy", 0.002, 0.1),
    ("educational", 0.005, 0.2),
    ("other", 0.06, 0.2),
];

fn pick<'a, T>(rng: &mut DpRng, items: &'a [T], weight: impl Fn(&T) -> f64) -> &'a T {
    let total: f64 = items.iter().map(&weight).sum();
    let mut target = rng.random::<f64>() * total;
    for item in items {
        target -= weight(item);
        if target < 0.0 {
            return item;
        }
    }
    items.last().expect("non-empty table")
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intercept `a` such that mean(sigmoid(a + s)) = target.
fn calibrate_intercept(scores: &[f64], target: f64) -> f64 {
    let mean_at = |a: f64| scores.iter().map(|&s| sigmoid(a + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn probability(base: f64, intercept: f64, score: f64) -> f64 {
    if base <= 0.0 {
        0.0
    } else if base >= 1.0 {
        1.0
    } else {
        sigmoid(intercept + score)
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

struct Draft {
    record: LoanRecord,
    risk: f64,
    u_default: f64,
    u_status: f64,
    paid_fraction: f64,
    recovery_score: f64,
    u_recovery: f64,
    recovery_rate: f64,
}

/// Generates `n` records, deterministic in `seed`.
pub fn generate_synthetic(n: usize, seed: u64, config: &SyntheticConfig) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    config.validate()?;
    let mut rng = stream(seed, Stream::Main);
    let beta = Beta::new(2.0, 6.0).expect("valid beta parameters");

    let mut drafts: Vec<Draft> = (0..n).map(|i| draft(i, &mut rng, &beta, config)).collect();

    let scores: Vec<f64> = drafts.iter().map(|d| d.risk).collect();
    let intercept = if (0.0..1.0).contains(&config.default_rate) && config.default_rate > 0.0 {
        calibrate_intercept(&scores, config.default_rate)
    } else {
        0.0
    };
    let defaulted: Vec<bool> = drafts
        .iter()
        .map(|d| d.u_default < probability(config.default_rate, intercept, d.risk))
        .collect();

    let recovery_scores: Vec<f64> = drafts
        .iter()
        .zip(&defaulted)
        .filter(|(_, &def)| def)
        .map(|(d, _)| d.recovery_score)
        .collect();
    let p_rec = config.recovery_probability;
    let recovery_intercept = if !recovery_scores.is_empty() && p_rec > 0.0 && p_rec < 1.0 {
        calibrate_intercept(&recovery_scores, p_rec)
    } else {
        0.0
    };

    for (d, &def) in drafts.iter_mut().zip(&defaulted) {
        let funded = d.record.total_funded_amount;
        let r = &mut d.record;
        if def {
            r.loan_status = if d.u_status < 0.9 {
                LoanStatus::ChargedOff
            } else {
                LoanStatus::Default
            };
            r.total_recovered_principal = Cents((funded.0 as f64 * d.paid_fraction).round() as i64);
            let outstanding = funded - r.total_recovered_principal;
            let recovers = d.u_recovery < probability(p_rec, recovery_intercept, d.recovery_score);
            r.recoveries = if recovers && outstanding > Cents::ZERO {
                let amount = (outstanding.0 as f64 * d.recovery_rate).round() as i64;
                Cents(amount.clamp(1, outstanding.0))
            } else {
                Cents::ZERO
            };
        } else {
            let status = if d.u_status < 0.50 {
                LoanStatus::FullyPaid
            } else if d.u_status < 0.94 {
                LoanStatus::Current
            } else if d.u_status < 0.98 {
                LoanStatus::Late
            } else {
                LoanStatus::InGrace
            };
            r.loan_status = status;
            r.total_recovered_principal = if status == LoanStatus::FullyPaid {
                funded
            } else {
                Cents((funded.0 as f64 * (0.05 + 0.9 * d.paid_fraction)).round() as i64)
            };
            r.recoveries = Cents::ZERO;
        }
    }

    Dataset::new(drafts.into_iter().map(|d| d.record).collect(), Provenance::Synthetic)
}

fn draft(index: usize, rng: &mut DpRng, beta: &Beta<f64>, config: &SyntheticConfig) -> Draft {
    let normal = |rng: &mut DpRng| -> f64 { rng.sample(StandardNormal) };
    let z = normal(rng);
    let long_term = rng.random::<f64>() < sigmoid(-1.0 + 0.8 * z);
    let term_months = if long_term { 60 } else { 36 };
    let interest_rate =
        round2((12.5 + 4.5 * z + if long_term { 1.5 } else { 0.0 } + 1.5 * normal(rng)).clamp(5.31, 30.99));
    let income = (11.1 - 0.15 * z + 0.5 * normal(rng)).exp().clamp(8_000.0, 500_000.0).round();
    let dti = round2((18.0 + 5.0 * z + 7.0 * normal(rng)).clamp(0.0, 60.0));
    let log_income_ratio = (income / 65_000.0).ln();
    let funded_dollars = ((9.4 + 0.1 * log_income_ratio + 0.55 * normal(rng)).exp() / 25.0).round() * 25.0;
    let funded_dollars = funded_dollars.clamp(1_000.0, 40_000.0);
    let loan_dollars = if rng.random::<f64>() < 0.95 {
        funded_dollars
    } else {
        (funded_dollars + (rng.random_range(1..=80) * 25) as f64).min(40_000.0)
    };
    let state = pick(rng, &STATES, |s| s.1).0;
    let zip_code = format!("{:03}xx", rng.random_range(10..1000));
    let home = pick(rng, &HOME, |h| h.1).0;
    let (purpose, _, purpose_shift) = *pick(rng, &PURPOSES, |p| p.1);

    let home_shift = match home {
        "MORTGAGE" => -0.15,
        "RENT" => 0.1,
        _ => 0.0,
    };
    let risk = 1.1 * z
        + if long_term { 0.35 } else { 0.0 }
        + 0.01 * (dti - 18.0)
        - 0.25 * log_income_ratio
        + purpose_shift
        + home_shift;

    let u_default = rng.random::<f64>();
    let u_status = rng.random::<f64>();
    let paid_fraction = if long_term {
        rng.random_range(0.02..0.55)
    } else {
        rng.random_range(0.02..0.7)
    };
    let secured = matches!(home, "MORTGAGE" | "OWN");
    let recovery_score = if secured { 0.6 } else { 0.0 } - 0.3 * z;
    let u_recovery = rng.random::<f64>();
    let recovery_rate = (beta.sample(rng) * (1.0 + 0.2 * log_income_ratio)).clamp(0.005, 0.95);
    let income_missing = rng.random::<f64>() < config.missing_rate;
    let dti_missing = rng.random::<f64>() < config.missing_rate;

    Draft {
        record: LoanRecord {
            member_id: format!("LC{:07}", index + 1),
            loan_amount: Cents::from_dollars(loan_dollars),
            total_funded_amount: Cents::from_dollars(funded_dollars),
            term_months,
            interest_rate,
            annual_income: (!income_missing).then(|| Cents::from_dollars(income)),
            dti: (!dti_missing).then_some(dti),
            state: state.to_string(),
            zip_code,
            home_ownership: home.to_string(),
            purpose: purpose.to_string(),
            loan_status: LoanStatus::Current,
            total_recovered_principal: Cents::ZERO,
            recoveries: Cents::ZERO,
        },
        risk,
        u_default,
        u_status,
        paid_fraction,
        recovery_score,
        u_recovery,
        recovery_rate,
    }
}
