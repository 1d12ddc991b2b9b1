//! Normality check, two-sample t-test, Cohen's d and Bonferroni correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub degrees_of_freedom: Option<f64>,
    pub effect_size: Option<f64>,
    pub corrected_alpha: Option<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // Jacobi-transformed series converges fast for small lambda.
        let y = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| (((2 * k - 1) * (2 * k - 1)) as f64 * y).exp())
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    p.clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test against a normal fitted by the sample
/// mean and standard deviation. The p-value uses the asymptotic distribution
/// with Stephens' small-sample correction of the scaling factor.
pub fn ks_normality(sample: &[f64]) -> Result<StatResult> {
    if sample.len() < 3 {
        return Err(Error::Parameter(format!(
            "normality test needs at least 3 values, got {}",
            sample.len()
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("sample contains non-finite values".into()));
    }
    let m = mean(sample);
    let sd = variance(sample).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let normal = Normal::new(m, sd).map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sqrt_n = n.sqrt();
    let p = kolmogorov_survival((sqrt_n + 0.12 + 0.11 / sqrt_n) * d);
    Ok(StatResult {
        test: "ks_normality".into(),
        statistic: d,
        p_value: p,
        degrees_of_freedom: None,
        effect_size: None,
        corrected_alpha: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_a + n_b - 2` degrees of freedom.
    Student,
}

/// Cohen's d of `a - b` with the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled = (((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0)).sqrt();
    let diff = mean(a) - mean(b);
    if pooled > 0.0 {
        diff / pooled
    } else {
        0.0
    }
}

/// Two-sided two-sample t-test of `a` against `b`, with Cohen's d.
pub fn t_test(a: &[f64], b: &[f64], kind: TTestKind) -> Result<StatResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Parameter(format!(
            "t-test needs at least 2 values per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Data("sample contains non-finite values".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance(a), variance(b));
    let name = match kind {
        TTestKind::Welch => "welch_t_test",
        TTestKind::Student => "student_t_test",
    };
    let (se, df) = match kind {
        TTestKind::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
            (se2.sqrt(), df)
        }
        TTestKind::Student => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            ((pooled * (1.0 / na + 1.0 / nb)).sqrt(), df)
        }
    };
    if !(se > 0.0) {
        if ma == mb {
            return Ok(StatResult {
                test: name.into(),
                statistic: 0.0,
                p_value: 1.0,
                degrees_of_freedom: None,
                effect_size: Some(0.0),
                corrected_alpha: None,
            });
        }
        return Err(Error::Degenerate(
            "both samples have zero variance and different means".into(),
        ));
    }
    let t = (ma - mb) / se;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(StatResult {
        test: name.into(),
        statistic: t,
        p_value: p,
        degrees_of_freedom: Some(df),
        effect_size: Some(cohens_d(a, b)),
        corrected_alpha: None,
    })
}

/// Rejects hypothesis `i` iff `p_i < alpha / m`.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let threshold = alpha / p_values.len().max(1) as f64;
    Ok(p_values.iter().map(|&p| p < threshold).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let r = t_test(&a, &a, TTestKind::Welch).unwrap();
        assert_eq!((r.statistic, r.p_value, r.effect_size), (0.0, 1.0, Some(0.0)));
    }

    #[test]
    fn constant_samples() {
        let r = t_test(&[3.0, 3.0], &[3.0, 3.0, 3.0], TTestKind::Welch).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(matches!(
            t_test(&[3.0, 3.0], &[4.0, 4.0], TTestKind::Welch),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn swap_negates_statistic() {
        let a = [1.0, 2.5, 3.0, 9.0];
        let b = [2.0, 2.0, 6.0, 7.5, 8.0];
        for kind in [TTestKind::Welch, TTestKind::Student] {
            let ab = t_test(&a, &b, kind).unwrap();
            let ba = t_test(&b, &a, kind).unwrap();
            assert_eq!(ab.statistic, -ba.statistic);
            assert_eq!(ab.p_value, ba.p_value);
        }
    }

    #[test]
    fn equal_variance_welch_matches_student() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [3.0, 4.0, 5.0, 6.0, 7.0];
        let w = t_test(&a, &b, TTestKind::Welch).unwrap();
        let s = t_test(&a, &b, TTestKind::Student).unwrap();
        assert!((w.statistic - s.statistic).abs() < 1e-12);
        assert!((w.degrees_of_freedom.unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn bonferroni_examples() {
        assert_eq!(bonferroni(&[0.01, 0.04], 0.05).unwrap(), vec![true, false]);
        assert_eq!(bonferroni(&[0.049], 0.05).unwrap(), vec![true]);
        assert_eq!(bonferroni(&[1.0; 4], 0.05).unwrap(), vec![false; 4]);
        assert!(bonferroni(&[0.1], 1.0).is_err());
    }

    #[test]
    fn kolmogorov_survival_known_values() {
        // Reference quantiles of the Kolmogorov distribution.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.2238) - 0.10).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        // Both series agree where they meet.
        let y = 1.18;
        assert!((kolmogorov_survival(y - 1e-12) - kolmogorov_survival(y)).abs() < 1e-9);
    }

    #[test]
    fn ks_degenerate_and_bounds() {
        assert!(matches!(ks_normality(&[2.0; 5]), Err(Error::Degenerate(_))));
        assert!(ks_normality(&[1.0, 2.0]).is_err());
        let r = ks_normality(&[0.3, 1.2, -0.7, 2.2, 0.1, -1.5]).unwrap();
        assert!((0.0..=1.0).contains(&r.statistic));
        assert!((0.0..=1.0).contains(&r.p_value));
    }
}
