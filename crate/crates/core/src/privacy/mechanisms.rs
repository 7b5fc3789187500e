use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{ClippingBounds, PrivacyParams};
use crate::error::{Error, Result};

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::params(format!("{name} must be positive, got {value}")))
    }
}

/// Adds Laplace noise with scale `sensitivity / epsilon`.
pub fn laplace<R: Rng + ?Sized>(
    true_value: f64,
    sensitivity: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<f64> {
    check_positive("sensitivity", sensitivity)?;
    check_positive("epsilon", epsilon)?;
    let scale = sensitivity / epsilon;
    // Inverse CDF on an open interval so the logarithm stays finite.
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    let noise = -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
    Ok(true_value + noise)
}

/// Classical Gaussian calibration σ = Δ·√(2 ln(1.25/δ))/ε.
pub fn gaussian_sigma(sensitivity: f64, params: PrivacyParams) -> Result<f64> {
    check_positive("sensitivity", sensitivity)?;
    if params.delta() <= 0.0 {
        return Err(Error::params("the Gaussian mechanism requires delta > 0"));
    }
    Ok(sensitivity * (2.0 * (1.25 / params.delta()).ln()).sqrt() / params.epsilon())
}

pub fn gaussian<R: Rng + ?Sized>(
    true_value: f64,
    sensitivity: f64,
    params: PrivacyParams,
    rng: &mut R,
) -> Result<f64> {
    let sigma = gaussian_sigma(sensitivity, params)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(true_value + sigma * z)
}

/// Clipped sum released through the Laplace mechanism.
pub fn dp_sum<R: Rng + ?Sized>(
    values: &[f64],
    bounds: ClippingBounds,
    epsilon: f64,
    rng: &mut R,
) -> Result<f64> {
    let sum: f64 = values.iter().map(|&v| bounds.clip(v)).sum();
    laplace(sum, bounds.sum_sensitivity(), epsilon, rng)
}

/// Record count released through the Laplace mechanism (sensitivity 1).
pub fn dp_count<R: Rng + ?Sized>(count: usize, epsilon: f64, rng: &mut R) -> Result<f64> {
    laplace(count as f64, 1.0, epsilon, rng)
}

/// Exponential-mechanism median over the fixed candidate grid of `bounds`.
///
/// Candidate `c` has utility `-|#{x < c} - #{x > c}| / 2`, i.e. `-|rank(c) - n/2|`
/// with ties counted at half weight. The utility changes by at most one when a record
/// is replaced, so candidates are weighted by `exp(ε·u/2)`. Selection uses the
/// Gumbel-max trick; equal perturbed scores resolve to the lowest candidate index.
/// The output always lies on the grid, so it never reveals a data value directly.
pub fn dp_median<R: Rng + ?Sized>(
    values: &[f64],
    bounds: ClippingBounds,
    epsilon: f64,
    rng: &mut R,
) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("dp_median needs at least one value".into()));
    }
    check_positive("epsilon", epsilon)?;
    let mut sorted: Vec<f64> = values.iter().map(|&v| bounds.clip(v)).collect();
    sorted.sort_by(f64::total_cmp);

    let mut best_index = 0;
    let mut best_score = f64::NEG_INFINITY;
    let grid = bounds.grid();
    for (index, &candidate) in grid.iter().enumerate() {
        let less = sorted.partition_point(|&x| x < candidate) as f64;
        let not_greater = sorted.partition_point(|&x| x <= candidate) as f64;
        let greater = sorted.len() as f64 - not_greater;
        let utility = -(less - greater).abs() / 2.0;
        let u: f64 = rng.sample(Open01);
        let score = epsilon * utility / 2.0 - (-u.ln()).ln();
        if score > best_score {
            best_score = score;
            best_index = index;
        }
    }
    Ok(grid[best_index])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn b(lo: f64, hi: f64) -> ClippingBounds {
        ClippingBounds::new(lo, hi).unwrap()
    }

    #[test]
    fn laplace_converges_as_epsilon_grows() {
        let mut rng = seeded(3);
        let v = laplace(100.0, 1.0, 1e12, &mut rng).unwrap();
        assert!((v - 100.0).abs() < 1e-6);
    }

    #[test]
    fn laplace_rejects_bad_params() {
        let mut rng = seeded(3);
        assert!(laplace(0.0, 0.0, 1.0, &mut rng).is_err());
        assert!(laplace(0.0, 1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn laplace_is_deterministic() {
        let a = laplace(5.0, 2.0, 0.5, &mut seeded(11)).unwrap();
        let b = laplace(5.0, 2.0, 0.5, &mut seeded(11)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn laplace_variance_matches_closed_form() {
        // Var = 2b² with b = 1/0.5.
        let mut rng = seeded(21);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| laplace(0.0, 1.0, 0.5, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 8.0).abs() / 8.0 < 0.10, "variance {var}");
    }

    #[test]
    fn gaussian_requires_delta() {
        let mut rng = seeded(1);
        let p = PrivacyParams::pure(1.0).unwrap();
        assert!(gaussian(0.0, 1.0, p, &mut rng).is_err());
    }

    #[test]
    fn gaussian_converges_and_is_deterministic() {
        let p = PrivacyParams::new(1e12, 1e-5).unwrap();
        let v = gaussian(0.0, 1.0, p, &mut seeded(2)).unwrap();
        assert!(v.abs() < 1e-5);
        let p = PrivacyParams::new(1.0, 1e-5).unwrap();
        let a = gaussian(0.0, 1.0, p, &mut seeded(4)).unwrap();
        let b = gaussian(0.0, 1.0, p, &mut seeded(4)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn gaussian_sigma_formula() {
        let p = PrivacyParams::new(1.0, 1e-5).unwrap();
        let sigma = gaussian_sigma(1.0, p).unwrap();
        assert!((sigma - (2.0 * 125_000f64.ln()).sqrt()).abs() < 1e-12);
        assert!((sigma - 4.844).abs() < 1e-3);
    }

    #[test]
    fn median_of_constant_data() {
        // Four records cannot outweigh a 100,001-point grid at small ε, so concentration
        // on the data value is only checked once utility dominates.
        let bounds = b(0.0, 10.0);
        for eps in [50.0, 1e3, 1e9] {
            let m = dp_median(&[5.0; 4], bounds, eps, &mut seeded(9)).unwrap();
            assert!((m - 5.0).abs() <= bounds.granule() + 1e-12, "ε={eps}: {m}");
        }
        let m = dp_median(&[5.0; 4], bounds, 1.0, &mut seeded(9)).unwrap();
        assert!((0.0..=10.0).contains(&m));
    }

    #[test]
    fn median_recovers_exact_value_at_huge_epsilon() {
        let values: Vec<f64> = (1..=1001).map(f64::from).collect();
        let m = dp_median(&values, b(0.0, 1002.0), 1e9, &mut seeded(9)).unwrap();
        assert_eq!(m, 501.0);
    }

    #[test]
    fn median_empty_input() {
        assert!(matches!(
            dp_median(&[], b(0.0, 1.0), 1.0, &mut seeded(0)),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn median_stays_in_bounds() {
        let values = [-50.0, 1e9, 3.0];
        let m = dp_median(&values, b(0.0, 10.0), 0.1, &mut seeded(5)).unwrap();
        assert!((0.0..=10.0).contains(&m));
    }

    #[test]
    fn sum_of_empty_is_noise_around_zero() {
        let v = dp_sum(&[], b(0.0, 1.0), 1e9, &mut seeded(1)).unwrap();
        assert!(v.abs() < 1e-6);
    }

    #[test]
    fn sum_converges() {
        let values = vec![1000.0; 100];
        let v = dp_sum(&values, b(0.0, 1000.0), 1e9, &mut seeded(1)).unwrap();
        assert!((v - 100_000.0).abs() < 1e-3);
    }

    #[test]
    fn sum_ignores_magnitude_beyond_clip() {
        let mut values = vec![10.0; 50];
        let clipped = dp_sum(&values, b(0.0, 100.0), 0.5, &mut seeded(77)).unwrap();
        values[0] = 100.0;
        let at_bound = dp_sum(&values, b(0.0, 100.0), 0.5, &mut seeded(77)).unwrap();
        values[0] = 1e9;
        let huge = dp_sum(&values, b(0.0, 100.0), 0.5, &mut seeded(77)).unwrap();
        assert_eq!(at_bound.to_bits(), huge.to_bits());
        assert_ne!(clipped.to_bits(), huge.to_bits());
    }
}
