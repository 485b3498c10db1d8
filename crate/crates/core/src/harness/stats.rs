//! Summary statistics and two-sample t-tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

fn two_sided(diff: f64, se: f64, df: f64) -> TTest {
    if se == 0.0 {
        // No spread: identical samples are indistinguishable, anything else is certain.
        return if diff == 0.0 {
            TTest { t: 0.0, df, p: 1.0 }
        } else {
            TTest { t: diff.signum() * f64::INFINITY, df, p: 0.0 }
        };
    }
    let t = diff / se;
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    TTest { t, df, p: p.clamp(0.0, 1.0) }
}

/// Welch's unequal-variance t-test of `mean(a) - mean(b)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return None;
    }
    let (va, vb) = (sample_std(a).powi(2), sample_std(b).powi(2));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (qa, qb) = (va / na, vb / nb);
    let se = (qa + qb).sqrt();
    let df = if qa + qb == 0.0 {
        na + nb - 2.0
    } else {
        (qa + qb).powi(2) / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
    };
    Some(two_sided(mean(a) - mean(b), se, df))
}

/// Paired t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Option<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    Some(two_sided(mean(&d), sample_std(&d) / n.sqrt(), n - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Per-user completion times (s), reference fixture.
    const BASELINE: [f64; 8] = [140.0, 212.0, 274.0, 198.0, 139.0, 182.0, 147.0, 137.0];
    const REPLAY: [f64; 8] = [75.0, 157.0, 217.0, 191.0, 136.0, 101.0, 103.0, 116.0];

    #[test]
    fn moments() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((sample_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]) - 2.138_089_935_299_395).abs() < 1e-12);
        assert!(sample_std(&[1.0]).is_nan());
    }

    #[test]
    fn welch_against_hand_computation() {
        // a: mean 2, var 1; b: mean 5, var 4; n = 3 each.
        let a = [1.0, 2.0, 3.0];
        let b = [3.0, 5.0, 7.0];
        let r = welch_t_test(&a, &b).unwrap();
        let se = (1.0f64 / 3.0 + 4.0 / 3.0).sqrt();
        assert!((r.t - (-3.0 / se)).abs() < 1e-12);
        let df = (5.0f64 / 3.0).powi(2) / ((1.0f64 / 3.0).powi(2) / 2.0 + (4.0f64 / 3.0).powi(2) / 2.0);
        assert!((r.df - df).abs() < 1e-12);
        assert!(r.p > 0.05 && r.p < 0.2, "{}", r.p);
    }

    #[test]
    fn identical_samples_give_p_one() {
        let r = welch_t_test(&[3.0, 3.0, 3.0], &[3.0, 3.0, 3.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = paired_t_test(&[1.0, 2.0, 5.0], &[1.0, 2.0, 5.0]).unwrap();
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn user_study_columns() {
        assert!((mean(&BASELINE) - 178.625).abs() < 1e-12);
        assert!((mean(&REPLAY) - 137.0).abs() < 1e-12);
        // Paired test reaches p < 0.005 on this fixture; Welch does not.
        let paired = paired_t_test(&BASELINE, &REPLAY).unwrap();
        assert!(paired.p < 0.005, "paired p = {}", paired.p);
        let welch = welch_t_test(&BASELINE, &REPLAY).unwrap();
        assert!(welch.p > 0.05, "welch p = {}", welch.p);
    }

    #[test]
    fn too_few_samples() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_none());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_none());
    }
}
