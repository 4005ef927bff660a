//! Aggregate statistics over per-sample scores.
//!
//! Confidence intervals are two-sided 95% normal-approximation intervals
//! (z = 1.96) for both means and proportions. Proportions use the Wald form
//! `p ± z·sqrt(p(1-p)/n)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("invalid count: {k} of {n}")]
    InvalidCount { k: u64, n: u64 },
    #[error("non-finite input")]
    NonFinite,
}

/// A point estimate with its 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiStat {
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub n: u64,
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n-1 denominator).
fn sample_sd(xs: &[f64], mean: f64) -> f64 {
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Mean with half-width `1.96 · sd / sqrt(n)`, sd the sample standard deviation.
pub fn mean_ci(xs: &[f64]) -> Result<CiStat, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    let m = mean(xs);
    let n = xs.len() as f64;
    Ok(CiStat {
        estimate: m,
        ci_halfwidth: Z_95 * sample_sd(xs, m) / n.sqrt(),
        n: xs.len() as u64,
    })
}

/// Wald interval for `k` successes out of `n`.
pub fn prop_ci(k: u64, n: u64) -> Result<CiStat, StatsError> {
    if n == 0 || k > n {
        return Err(StatsError::InvalidCount { k, n });
    }
    let p = k as f64 / n as f64;
    Ok(CiStat {
        estimate: p,
        ci_halfwidth: Z_95 * (p * (1.0 - p) / n as f64).sqrt(),
        n,
    })
}

/// Proportion of strictly positive values; zeros count as not positive.
pub fn percent_positive(xs: &[f64]) -> Result<CiStat, StatsError> {
    check_finite(xs)?;
    let k = xs.iter().filter(|&&x| x > 0.0).count() as u64;
    prop_ci(k, xs.len() as u64)
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    check_finite(ys)?;
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Paired false positive / false negative rates.
///
/// `None` marks an empty denominator, which is not the same as a rate of 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

/// Among originals scored positive, the fraction whose control scores even
/// higher (fpr); among originals scored negative, the fraction whose control
/// scores even lower (fnr).
pub fn fp_fn_rates(originals: &[f64], controls: &[f64]) -> Result<ErrorRates, StatsError> {
    if originals.len() != controls.len() {
        return Err(StatsError::LengthMismatch(originals.len(), controls.len()));
    }
    check_finite(originals)?;
    check_finite(controls)?;
    let (mut pos, mut fp, mut neg, mut fneg) = (0u64, 0u64, 0u64, 0u64);
    for (&o, &c) in originals.iter().zip(controls) {
        if o > 0.0 {
            pos += 1;
            fp += u64::from(c > o);
        } else if o < 0.0 {
            neg += 1;
            fneg += u64::from(c < o);
        }
    }
    let rate = |k: u64, n: u64| (n > 0).then(|| k as f64 / n as f64);
    Ok(ErrorRates {
        fpr: rate(fp, pos),
        fnr: rate(fneg, neg),
    })
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of positions whose signs match, zero being its own sign.
pub fn sign_agreement(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let agree = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| sign(**x) == sign(**y))
        .count();
    Ok(agree as f64 / xs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: u64,
}

/// One-sample two-sided t-test of the mean against zero.
pub fn t_test_zero(xs: &[f64]) -> Result<TTest, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: xs.len(),
        });
    }
    check_finite(xs)?;
    let m = mean(xs);
    let sd = sample_sd(xs, m);
    if sd == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let df = (xs.len() - 1) as f64;
    let t = m / (sd / (xs.len() as f64).sqrt());
    Ok(TTest {
        t,
        p: student_t_two_sided_p(t, df),
        df: xs.len() as u64 - 1,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos approximation).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via its continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        // Even step.
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::beta::beta_reg;
    use statrs::function::gamma::ln_gamma as ref_ln_gamma;

    #[test]
    fn mean_ci_one_to_five() {
        let ci = mean_ci(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(ci.estimate, 3.0);
        // sd = sqrt(2.5); 1.96 * sqrt(2.5) / sqrt(5) = 1.96 * sqrt(0.5)
        assert_abs_diff_eq!(ci.ci_halfwidth, 1.96 * 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(ci.ci_halfwidth, 1.385929291, epsilon = 1e-9);
    }

    #[test]
    fn mean_ci_constant_and_short() {
        assert_eq!(mean_ci(&[2.5; 7]).unwrap().ci_halfwidth, 0.0);
        assert_eq!(
            mean_ci(&[1.0]),
            Err(StatsError::TooFew { needed: 2, got: 1 })
        );
    }

    #[test]
    fn mean_ci_matches_definition_at_n_250() {
        let xs: Vec<f64> = (0..250).map(|i| ((i * 37) % 101) as f64 / 17.0).collect();
        let m = xs.iter().sum::<f64>() / 250.0;
        let s = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 249.0).sqrt();
        assert_abs_diff_eq!(
            mean_ci(&xs).unwrap().ci_halfwidth,
            1.96 * s / 250f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn wald_reproduces_table_value() {
        let ci = prop_ci(178, 250).unwrap();
        assert_abs_diff_eq!(ci.ci_halfwidth, 0.056, epsilon = 0.001);
        assert_eq!(prop_ci(0, 10).unwrap().ci_halfwidth, 0.0);
        assert_abs_diff_eq!(
            prop_ci(50, 100).unwrap().ci_halfwidth,
            0.098,
            epsilon = 1e-15
        );
        assert!(prop_ci(1, 0).is_err());
        assert!(prop_ci(3, 2).is_err());
    }

    #[test]
    fn pearson_known_values() {
        let xs = [1.0, 2.0, 3.0, 4.5];
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_eq!(pearson(&xs, &xs).unwrap(), 1.0);
        assert_eq!(pearson(&xs, &neg).unwrap(), -1.0);
        // Hand computation: dx = [-1,0,1], dy = [-4/3,-1/3,5/3];
        // sxy = 3, sxx = 2, syy = 42/9 -> 3 / sqrt(28/3).
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r, 3.0 / (28.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(r, 0.981980506, epsilon = 1e-9);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(StatsError::ZeroVariance)
        );
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(StatsError::LengthMismatch(2, 1))
        );
    }

    #[test]
    fn percent_positive_tie_rule() {
        assert_eq!(
            percent_positive(&[0.0, 0.0, 1.0]).unwrap().estimate,
            1.0 / 3.0
        );
        assert_eq!(percent_positive(&[0.1, 2.0]).unwrap().estimate, 1.0);
        assert!(percent_positive(&[]).is_err());
    }

    #[test]
    fn fp_fn_small_cases() {
        let r = fp_fn_rates(&[1.0, 1.0], &[2.0, 0.0]).unwrap();
        assert_eq!(r.fpr, Some(0.5));
        assert_eq!(r.fnr, None);
        let r = fp_fn_rates(&[-1.0, -2.0, 0.0], &[-3.0, -1.0, 5.0]).unwrap();
        assert_eq!((r.fpr, r.fnr), (None, Some(0.5)));
    }

    #[test]
    fn sign_agreement_cases() {
        assert_eq!(sign_agreement(&[1.0, -1.0], &[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(sign_agreement(&[0.0, -2.0], &[0.0, -1.0]).unwrap(), 1.0);
        assert_eq!(sign_agreement(&[0.0], &[1.0]).unwrap(), 0.0);
        assert!(sign_agreement(&[1.0], &[]).is_err());
    }

    #[test]
    fn t_test_symmetric_sample() {
        let r = t_test_zero(&[-1.0, 1.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn t_test_against_reference_cdf() {
        // [1,1,1,2]: mean 1.25, sd 0.5, t = 1.25 / 0.25 = 5, df = 3.
        let r = t_test_zero(&[1.0, 1.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(r.t, 5.0, epsilon = 1e-12);
        let dist = StudentsT::new(0.0, 1.0, 3.0).unwrap();
        let p_ref = 2.0 * (1.0 - dist.cdf(5.0));
        assert_abs_diff_eq!(r.p, p_ref, epsilon = 1e-10);
        assert_abs_diff_eq!(r.p, 0.015_393_3, epsilon = 1e-6);
    }

    #[test]
    fn t_test_direction() {
        let xs: Vec<f64> = (0..200).map(|i| 0.5 + (i % 7) as f64 * 0.1).collect();
        assert!(t_test_zero(&xs).unwrap().p < 0.05);
        assert_eq!(t_test_zero(&[3.0, 3.0]), Err(StatsError::ZeroVariance));
    }

    #[test]
    fn ln_gamma_against_reference() {
        for &x in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 10.0, 125.5, 1000.0] {
            assert_abs_diff_eq!(
                ln_gamma(x),
                ref_ln_gamma(x),
                epsilon = 1e-10 * (1.0 + ref_ln_gamma(x).abs())
            );
        }
    }

    proptest! {
        #[test]
        fn incomplete_beta_against_reference(a in 0.05f64..200.0, b in 0.05f64..50.0, x in 0.0f64..1.0) {
            prop_assert!((regularized_incomplete_beta(a, b, x) - beta_reg(a, b, x)).abs() < 1e-10);
        }

        #[test]
        fn t_p_value_against_reference(t in -40.0f64..40.0, df in 1u32..500) {
            let dist = StudentsT::new(0.0, 1.0, df as f64).unwrap();
            let p_ref = 2.0 * dist.cdf(-t.abs());
            prop_assert!((student_t_two_sided_p(t, df as f64) - p_ref).abs() < 1e-10);
        }

        #[test]
        fn pearson_affine_invariance(
            xs in prop::collection::vec(-100.0f64..100.0, 3..40),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x + i as f64).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                let xt: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let yn: Vec<f64> = ys.iter().map(|y| -y).collect();
                prop_assert!((pearson(&xt, &ys).unwrap() - r).abs() < 1e-9);
                prop_assert!((pearson(&xs, &yn).unwrap() + r).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn prop_ci_scales_exactly(k in 0u64..50, extra in 0u64..50, reps in 1u64..20) {
            let n = k + extra + 1;
            let base = prop_ci(k, n).unwrap();
            let rep = prop_ci(k * reps, n * reps).unwrap();
            prop_assert_eq!(base.estimate, rep.estimate);
            prop_assert!((base.ci_halfwidth / (reps as f64).sqrt() - rep.ci_halfwidth).abs() <= 1e-15);
        }

        #[test]
        fn statistics_permutation_invariant(xs in prop::collection::vec(-5i32..5, 2..30), rot in 0usize..30) {
            let a: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
            let mut b = a.clone();
            b.rotate_left(rot % a.len());
            prop_assert_eq!(percent_positive(&a).unwrap(), percent_positive(&b).unwrap());
            let (ma, mb) = (mean_ci(&a).unwrap(), mean_ci(&b).unwrap());
            prop_assert!((ma.estimate - mb.estimate).abs() < 1e-12);
            prop_assert!((ma.ci_halfwidth - mb.ci_halfwidth).abs() < 1e-12);
        }
    }
}
