//! Error measures and Welch's t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

fn check_pair(y: &[f64], x: &[f64], min_len: usize) -> Result<()> {
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: x.len(),
        });
    }
    if y.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_len} samples, got {}",
            y.len()
        )));
    }
    Ok(())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance (divisor N).
pub fn population_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// Sample variance (divisor N - 1).
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn sum_sq_err(y: &[f64], x: &[f64]) -> f64 {
    y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn mse(y: &[f64], x: &[f64]) -> Result<f64> {
    check_pair(y, x, 1)?;
    Ok(sum_sq_err(y, x) / y.len() as f64)
}

/// Squared error normalized by `N σ²`, with σ² the population variance of `y`.
///
/// The denominator is formed as `Σ (y - ȳ)²`, so predicting [`mean`] of `y`
/// gives exactly 1.
pub fn nmse(y: &[f64], x: &[f64]) -> Result<f64> {
    check_pair(y, x, 2)?;
    let m = mean(y);
    let spread: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    if spread == 0.0 {
        return Err(Error::InvalidArgument("target sequence is constant".into()));
    }
    Ok(sum_sq_err(y, x) / spread)
}

pub fn nrmse(y: &[f64], x: &[f64]) -> Result<f64> {
    nmse(y, x).map(f64::sqrt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// Two-sided Welch's t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("each sample needs at least 2 values".into()));
    }
    if !a.iter().chain(b).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("t-test sample"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = sample_variance(a) / na;
    let sb = sample_variance(b) / nb;
    if sa + sb == 0.0 {
        return Err(Error::InvalidArgument("both samples are constant".into()));
    }
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidArgument(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchTest { t, p, df })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mse_cases() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 5.0]).unwrap(), 4.0 / 3.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn nmse_of_mean_predictor_is_one() {
        let y = [0.3, -1.2, 4.0, 2.5, 0.0];
        let m = mean(&y);
        assert_eq!(nmse(&y, &[m; 5]).unwrap(), 1.0);
        assert_eq!(nrmse(&y, &[m; 5]).unwrap(), 1.0);
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        assert!(nmse(&[2.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn welch_reference_values() {
        // Reference values from scipy.stats.ttest_ind(..., equal_var=False).
        let r = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!((r.t + 1.0).abs() < 1e-12);
        assert!((r.p - 0.34659350708733416).abs() < 1e-6);

        let a = [0.1, 0.4, 0.35, 0.8, 0.22, 0.5];
        let b = [1.1, 0.9, 1.3, 0.7, 1.25, 1.0, 0.95, 1.4];
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.t + 5.276121142553578).abs() < 1e-9);
        assert!((r.p - 0.0002907677180212012).abs() < 1e-6);
        assert!((r.df - 10.659659285084125).abs() < 1e-9);
    }

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 4.0, 2.0, 8.0];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn mean_predictor_nmse_is_exactly_one(y in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            prop_assume!(population_variance(&y) > 0.0);
            let m = mean(&y);
            prop_assert_eq!(nmse(&y, &vec![m; y.len()]).unwrap(), 1.0);
        }

        #[test]
        fn nrmse_squared_is_nmse(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..60)) {
            let (y, x): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(population_variance(&y) > 1e-9);
            let a = nrmse(&y, &x).unwrap().powi(2);
            let b = nmse(&y, &x).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }

        #[test]
        fn metrics_ignore_pair_order(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..40), rot in 0usize..40) {
            let (y, x): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let (y2, x2): (Vec<f64>, Vec<f64>) = rotated.into_iter().unzip();
            prop_assert!((mse(&y, &x).unwrap() - mse(&y2, &x2).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn welch_swap_symmetry(a in prop::collection::vec(-5.0f64..5.0, 2..20), b in prop::collection::vec(-5.0f64..5.0, 2..20)) {
            prop_assume!(sample_variance(&a) + sample_variance(&b) > 1e-9);
            let ab = welch_t_test(&a, &b).unwrap();
            let ba = welch_t_test(&b, &a).unwrap();
            prop_assert_eq!(ab.t, -ba.t);
            prop_assert_eq!(ab.p, ba.p);
        }
    }
}
