use crate::data::LoanRecord;
use crate::error::{Error, Result};
use crate::money::Cents;

/// Credit conversion factor: the share of the funded amount still outstanding at
/// default, `(funded − recovered) / funded`.
pub fn ccf(total_funded_amount: Cents, total_recovered_principal: Cents) -> Result<f64> {
    if total_funded_amount <= Cents::ZERO {
        return Err(Error::InvalidAmounts(format!(
            "funded amount must be positive, got {}",
            total_funded_amount.to_decimal_string()
        )));
    }
    if total_recovered_principal < Cents::ZERO || total_recovered_principal > total_funded_amount {
        return Err(Error::InvalidAmounts(format!(
            "recovered principal {} outside [0, {}]",
            total_recovered_principal.to_decimal_string(),
            total_funded_amount.to_decimal_string()
        )));
    }
    let outstanding = total_funded_amount - total_recovered_principal;
    Ok(outstanding.0 as f64 / total_funded_amount.0 as f64)
}

fn unit_clip(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// `funded × ccf`, with the model's ccf clipped to [0, 1] first.
pub fn predicted_ead(total_funded_amount: Cents, predicted_ccf: f64) -> Cents {
    let product = total_funded_amount.0 as f64 * unit_clip(predicted_ccf);
    Cents((product.round() as i64).min(total_funded_amount.0))
}

/// Exposure actually observed at default: funded minus recovered principal.
pub fn actual_ead(record: &LoanRecord) -> Cents {
    (record.total_funded_amount - record.total_recovered_principal).max(Cents::ZERO)
}

/// `recoveries / ead` clipped to [0, 1]; zero when there is no exposure.
pub fn recovery_rate(recoveries: Cents, ead: Cents) -> f64 {
    if ead <= Cents::ZERO {
        return 0.0;
    }
    unit_clip(recoveries.0 as f64 / ead.0 as f64)
}

pub fn lgd(recovery_rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&recovery_rate) {
        return Err(Error::OutOfRange(recovery_rate));
    }
    Ok(1.0 - recovery_rate)
}

/// `pd · ead · lgd`, rounded to the cent.
pub fn expected_loss(pd: f64, ead: Cents, lgd: f64) -> Cents {
    Cents((unit_clip(pd) * ead.0 as f64 * unit_clip(lgd)).round() as i64)
}

/// Realized loss: zero unless defaulted, otherwise what neither principal repayment
/// nor post-default recoveries covered.
pub fn actual_loss(record: &LoanRecord) -> Cents {
    if !record.defaulted() {
        return Cents::ZERO;
    }
    (record.total_funded_amount - record.total_recovered_principal - record.recoveries).max(Cents::ZERO)
}
