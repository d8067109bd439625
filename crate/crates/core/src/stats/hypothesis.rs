//! Exact binomial, equal-proportion, Pearson and dependent-correlation tests,
//! plus Benjamini–Hochberg adjustment.

use nalgebra::Matrix4;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};
use statrs::function::factorial::ln_binomial;

use super::StatResult;
use crate::error::{Error, Result};

pub(crate) fn normal_two_sided(z: f64) -> f64 {
    if !z.is_finite() {
        return 0.0;
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * n.sf(z.abs())).min(1.0)
}

pub(crate) fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

fn binom_log_pmf(i: u64, n: u64, p0: f64) -> f64 {
    match (i, p0) {
        (_, p) if p <= 0.0 => {
            if i == 0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        (_, p) if p >= 1.0 => {
            if i == n {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        _ => ln_binomial(n, i) + i as f64 * p0.ln() + (n - i) as f64 * (1.0 - p0).ln(),
    }
}

/// Exact two-sided binomial test: total probability of outcomes no more
/// likely than the observed one.
pub fn binom_test(k: u64, n: u64, p0: f64) -> Result<StatResult> {
    if n == 0 || k > n {
        return Err(Error::InvalidInput(format!("binomial test needs 0 <= k <= n, n >= 1 (k={k}, n={n})")));
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::InvalidInput(format!("p0 = {p0} outside [0, 1]")));
    }
    let observed = binom_log_pmf(k, n, p0);
    // Relative slack as in the reference implementation, so outcomes that tie
    // the observed probability up to rounding are counted.
    let threshold = observed + (1.0f64 + 1e-7).ln();
    let p: f64 = (0..=n)
        .map(|i| binom_log_pmf(i, n, p0))
        .filter(|&lp| lp <= threshold)
        .map(f64::exp)
        .sum();
    Ok(StatResult::new("binomial", k as f64 / n as f64, p.min(1.0), n as usize))
}

/// Two-sample test of equal proportions (χ² with 1 df).
///
/// With `continuity` the Yates correction is applied, capped at
/// |p1 − p2| / (1/n1 + 1/n2).
pub fn equal_proportions_test(k1: u64, n1: u64, k2: u64, n2: u64, continuity: bool) -> Result<StatResult> {
    if n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2 {
        return Err(Error::InvalidInput(format!(
            "invalid counts for proportion test: {k1}/{n1} vs {k2}/{n2}"
        )));
    }
    let (x, n) = ([k1 as f64, k2 as f64], [n1 as f64, n2 as f64]);
    let pooled = (x[0] + x[1]) / (n[0] + n[1]);
    let est = [x[0] / n[0], x[1] / n[1]];
    let delta = est[0] - est[1];
    let mut res = StatResult::new("chi_squared", 0.0, 1.0, (n1 + n2) as usize).with_df(1.0);
    res.set("difference", delta);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Ok(res);
    }
    let yates = if continuity {
        0.5f64.min(delta.abs() / (1.0 / n[0] + 1.0 / n[1]))
    } else {
        0.0
    };
    let mut chi2 = 0.0;
    for g in 0..2 {
        for (obs, exp) in [(x[g], n[g] * pooled), (n[g] - x[g], n[g] * (1.0 - pooled))] {
            chi2 += ((obs - exp).abs() - yates).powi(2) / exp;
        }
    }
    let dist = ChiSquared::new(1.0).expect("1 df");
    res.statistic = chi2;
    res.p_value = dist.sf(chi2).clamp(0.0, 1.0);
    Ok(res)
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "correlation of {} and {} values",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::ZeroVariance("correlation with a constant variable".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation with a t test on n − 2 df.
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<StatResult> {
    if x.len() < 3 {
        return Err(Error::InvalidInput("correlation test needs at least 3 pairs".into()));
    }
    let r = pearson_r(x, y)?;
    let df = x.len() as f64 - 2.0;
    let t = if r.abs() >= 1.0 {
        f64::INFINITY.copysign(r)
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    let mut res = StatResult::new("pearson_r", r, t_two_sided(t, df), x.len()).with_df(df);
    res.set("t", t);
    Ok(res)
}

/// Compares two non-overlapping correlations r12 and r34 measured on the
/// same n cases (Raghunathan, Rosenthal & Rubin, 1996).
pub fn dependent_nonoverlapping_correlation_test(
    r12: f64,
    r34: f64,
    r13: f64,
    r14: f64,
    r23: f64,
    r24: f64,
    n: usize,
) -> Result<StatResult> {
    let rs = [r12, r34, r13, r14, r23, r24];
    if rs.iter().any(|r| !(-1.0..=1.0).contains(r)) {
        return Err(Error::InvalidInput("correlations must lie in [-1, 1]".into()));
    }
    if n < 4 {
        return Err(Error::InvalidInput("dependent correlation test needs n >= 4".into()));
    }
    #[rustfmt::skip]
    let m = Matrix4::new(
        1.0, r12, r13, r14,
        r12, 1.0, r23, r24,
        r13, r23, 1.0, r34,
        r14, r24, r34, 1.0,
    );
    if m.cholesky().is_none() {
        return Err(Error::InvalidInput("correlation matrix is not positive definite".into()));
    }
    let c = (0.5 * r12 * r34 * (r13 * r13 + r14 * r14 + r23 * r23 + r24 * r24) + r13 * r24 + r14 * r23
        - (r12 * r13 * r14 + r12 * r23 * r24 + r13 * r23 * r34 + r14 * r24 * r34))
        / ((1.0 - r12 * r12) * (1.0 - r34 * r34));
    let z = ((n as f64 - 3.0) / 2.0).sqrt() * (r12.atanh() - r34.atanh()) / (1.0 - c).sqrt();
    let mut res = StatResult::new("rrr_z", z, normal_two_sided(z), n);
    res.set("c", c);
    Ok(res)
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn bh_fdr(pvalues: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvalues.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(pvalues[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    Ok(adjusted)
}
