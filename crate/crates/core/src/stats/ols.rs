use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hypothesis::t_two_sided;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<Coefficient>,
    pub residual_variance: f64,
    /// Gaussian log-likelihood at the ML variance estimate (RSS / n).
    pub log_likelihood: f64,
}

impl OlsFit {
    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }
}

/// Names of columns that lie (numerically) in the span of earlier columns.
pub(crate) fn collinear_columns(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col;
        for q in &basis {
            let proj = q.dot(&r);
            r -= q * proj;
        }
        if norm == 0.0 || r.norm() <= 1e-9 * norm.max(1.0) {
            bad.push(name.clone());
        } else {
            let n = r.norm();
            basis.push(r / n);
        }
    }
    bad
}

/// Ordinary least squares with t-based p-values on n − p df.
pub fn ols(y: &DVector<f64>, x: &DMatrix<f64>, names: &[String]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n || names.len() != p {
        return Err(Error::InvalidInput("design, response and names disagree in size".into()));
    }
    if n <= p {
        return Err(Error::InvalidInput(format!("{n} observations for {p} coefficients")));
    }
    let bad = collinear_columns(x, names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad));
    }
    let xtx = x.tr_mul(x);
    let chol = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::RankDeficient(names.to_vec()))?;
    let beta = chol.solve(&x.tr_mul(y));
    let resid = y - x * &beta;
    let rss = resid.norm_squared();
    let df = (n - p) as f64;
    let s2 = rss / df;
    let inv = chol.inverse();
    let coefficients = (0..p)
        .map(|j| {
            let se = (s2 * inv[(j, j)]).sqrt();
            let t = beta[j] / se;
            Coefficient {
                name: names[j].clone(),
                estimate: beta[j],
                se,
                p_value: if se > 0.0 { t_two_sided(t, df) } else { f64::from(u8::from(beta[j] == 0.0)) },
            }
        })
        .collect();
    let ml_var = rss / n as f64;
    let log_likelihood = if ml_var > 0.0 {
        -0.5 * n as f64 * (1.0 + (2.0 * std::f64::consts::PI * ml_var).ln())
    } else {
        f64::INFINITY
    };
    Ok(OlsFit {
        coefficients,
        residual_variance: s2,
        log_likelihood,
    })
}
