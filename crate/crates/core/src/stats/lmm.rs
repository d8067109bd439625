//! Gaussian linear mixed model fitted by maximum likelihood.
//!
//! For random-effects covariance σ²ΛΛᵀ, the fixed effects and σ² are
//! profiled out, leaving the deviance as a function of the Cholesky factor
//! Λ only. Each group contributes V_g = I + Z_g Λ Λᵀ Z_gᵀ; groups are small,
//! so V_g is factored directly. The deviance is minimised with Nelder–Mead
//! over the entries of Λ, with its diagonal constrained to be non-negative.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hypothesis::normal_two_sided;
use super::ols::{collinear_columns, ols, Coefficient};
use crate::corpus::{ItemType, Plausibility, Voice};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceStructure {
    /// Unstructured q×q covariance (variances and covariances).
    #[default]
    Full,
    /// Independent random effects.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmOptions {
    pub covariance: CovarianceStructure,
    /// Refit as OLS when the variance estimate sits on the zero boundary.
    pub ols_fallback: bool,
    pub max_evaluations: usize,
    pub tolerance: f64,
}

impl Default for LmmOptions {
    fn default() -> Self {
        LmmOptions {
            covariance: CovarianceStructure::Full,
            ols_fallback: false,
            max_evaluations: 20_000,
            tolerance: 1e-10,
        }
    }
}

/// y = Xβ + Zb + ε with one random-effect vector per group.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedDesign {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub x_names: Vec<String>,
    pub z: DMatrix<f64>,
    pub z_names: Vec<String>,
    /// Group index of every row.
    pub groups: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    /// Random-effect variances in the order of `z_names`.
    pub random: Vec<(String, f64)>,
    /// Covariance of the first two random effects, when estimated.
    pub covariance: Option<f64>,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<Coefficient>,
    pub variances: VarianceComponents,
    pub log_likelihood: f64,
    pub converged: bool,
    /// A random-effect standard deviation was estimated at zero.
    pub singular: bool,
    pub used_ols_fallback: bool,
    pub evaluations: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

struct Group {
    x: DMatrix<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
}

struct Profile {
    deviance: f64,
    beta: DVector<f64>,
    xtvx: DMatrix<f64>,
    sigma2: f64,
}

struct Problem {
    groups: Vec<Group>,
    n: usize,
    p: usize,
    q: usize,
    structure: CovarianceStructure,
}

impl Problem {
    fn n_theta(&self) -> usize {
        match self.structure {
            CovarianceStructure::Full => self.q * (self.q + 1) / 2,
            CovarianceStructure::Diagonal => self.q,
        }
    }

    /// Column-major lower triangle of Λ; diagonal entries clamped at 0.
    fn lambda(&self, theta: &[f64]) -> DMatrix<f64> {
        let q = self.q;
        let mut l = DMatrix::zeros(q, q);
        match self.structure {
            CovarianceStructure::Diagonal => {
                for i in 0..q {
                    l[(i, i)] = theta[i].max(0.0);
                }
            }
            CovarianceStructure::Full => {
                let mut k = 0;
                for j in 0..q {
                    for i in j..q {
                        l[(i, j)] = if i == j { theta[k].max(0.0) } else { theta[k] };
                        k += 1;
                    }
                }
            }
        }
        l
    }

    fn initial_theta(&self) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.n_theta());
        match self.structure {
            CovarianceStructure::Diagonal => t.resize(self.q, 1.0),
            CovarianceStructure::Full => {
                for j in 0..self.q {
                    for i in j..self.q {
                        t.push(if i == j { 1.0 } else { 0.0 });
                    }
                }
            }
        }
        t
    }

    fn diagonal_indices(&self) -> Vec<usize> {
        match self.structure {
            CovarianceStructure::Diagonal => (0..self.q).collect(),
            CovarianceStructure::Full => {
                let mut out = Vec::new();
                let mut k = 0;
                for j in 0..self.q {
                    out.push(k);
                    k += self.q - j;
                }
                out
            }
        }
    }

    fn profile(&self, theta: &[f64]) -> Option<Profile> {
        let lambda = self.lambda(theta);
        let mut xtvx = DMatrix::zeros(self.p, self.p);
        let mut xtvy = DVector::zeros(self.p);
        let mut ytvy = 0.0;
        let mut logdet = 0.0;
        for g in &self.groups {
            let zl = &g.z * &lambda;
            let v = DMatrix::identity(g.y.len(), g.y.len()) + &zl * zl.transpose();
            let chol = v.cholesky()?;
            let l = chol.l();
            logdet += 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let wx = l.solve_lower_triangular(&g.x)?;
            let wy = l.solve_lower_triangular(&g.y)?;
            xtvx += wx.tr_mul(&wx);
            xtvy += wx.tr_mul(&wy);
            ytvy += wy.norm_squared();
        }
        let chol = xtvx.clone().cholesky()?;
        let beta = chol.solve(&xtvy);
        let rss = (ytvy - beta.dot(&xtvy)).max(f64::MIN_POSITIVE);
        let n = self.n as f64;
        let sigma2 = rss / n;
        let deviance = logdet + n * (1.0 + (2.0 * PI * sigma2).ln());
        Some(Profile {
            deviance,
            beta,
            xtvx,
            sigma2,
        })
    }

    fn deviance(&self, theta: &[f64]) -> f64 {
        self.profile(theta).map_or(f64::INFINITY, |p| p.deviance)
    }
}

struct Minimum {
    x: Vec<f64>,
    value: f64,
    evaluations: usize,
    converged: bool,
}

fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], step: f64, tol: f64, max_eval: usize) -> Minimum {
    let d = start.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..d {
        let mut x = start.to_vec();
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut converged = false;
    while evals.get() < max_eval {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (worst - best).abs() <= tol * (1.0 + best.abs()) && size <= 1e-7 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[d].1 {
                let xc = along(0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, bi) in x.iter_mut().zip(&x0) {
                        *xi = bi + 0.5 * (*xi - bi);
                    }
                    *v = eval(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        evaluations: evals.get(),
        converged,
    }
}

/// Maximum-likelihood fit of a mixed design.
pub fn fit_mixed(design: &MixedDesign, opts: &LmmOptions) -> Result<FitResult> {
    let n = design.y.len();
    let p = design.x.ncols();
    let q = design.z.ncols();
    if design.x.nrows() != n || design.z.nrows() != n || design.groups.len() != n {
        return Err(Error::InvalidInput("mixed design dimensions disagree".into()));
    }
    if design.x_names.len() != p || design.z_names.len() != q || q == 0 {
        return Err(Error::InvalidInput("mixed design term names disagree".into()));
    }
    if design.y.iter().chain(design.x.iter()).chain(design.z.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("design contains non-finite values".into()));
    }
    let bad = collinear_columns(&design.x, &design.x_names);
    if !bad.is_empty() {
        return Err(Error::RankDeficient(bad));
    }

    let mut rows: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &g) in design.groups.iter().enumerate() {
        rows.entry(g).or_default().push(i);
    }
    if let Some((g, r)) = rows.iter().find(|(_, r)| r.len() < 2) {
        return Err(Error::InvalidInput(format!(
            "group {g} has {} observation(s); at least 2 are required",
            r.len()
        )));
    }
    let groups = rows
        .values()
        .map(|r| Group {
            x: design.x.select_rows(r.iter()),
            y: DVector::from_iterator(r.len(), r.iter().map(|&i| design.y[i])),
            z: design.z.select_rows(r.iter()),
        })
        .collect();
    let problem = Problem {
        groups,
        n,
        p,
        q,
        structure: opts.covariance,
    };

    let f = |t: &[f64]| problem.deviance(t);
    let mut min = nelder_mead(f, &problem.initial_theta(), 0.5, opts.tolerance, opts.max_evaluations);
    let mut evaluations = min.evaluations;
    // Restart from the optimum to guard against a collapsed simplex.
    for _ in 0..3 {
        let again = nelder_mead(f, &min.x, 0.05, opts.tolerance, opts.max_evaluations);
        evaluations += again.evaluations;
        let improved = again.value < min.value - opts.tolerance * (1.0 + min.value.abs());
        let converged = again.converged;
        if again.value <= min.value {
            min = again;
        }
        min.converged = converged;
        if !improved {
            break;
        }
    }
    let theta: Vec<f64> = min.x.iter().enumerate().map(|(i, &t)| {
        if problem.diagonal_indices().contains(&i) { t.max(0.0) } else { t }
    }).collect();
    let prof = problem
        .profile(&theta)
        .ok_or_else(|| Error::InvalidInput("covariance factor is not positive definite at optimum".into()))?;

    let lambda = problem.lambda(&theta);
    let g = &lambda * lambda.transpose() * prof.sigma2;
    let singular = problem
        .diagonal_indices()
        .iter()
        .any(|&i| theta[i] < 1e-4);
    let mut warnings = Vec::new();
    if !min.converged {
        warnings.push(format!("optimizer stopped after {evaluations} evaluations without converging"));
    }

    if singular && opts.ols_fallback {
        warnings.push("random-effect variance at the zero boundary; refitted as OLS".into());
        let fit = ols(&design.y, &design.x, &design.x_names)?;
        return Ok(FitResult {
            coefficients: fit.coefficients,
            variances: VarianceComponents {
                random: design.z_names.iter().map(|n| (n.clone(), 0.0)).collect(),
                covariance: None,
                residual: fit.residual_variance,
            },
            log_likelihood: fit.log_likelihood,
            converged: min.converged,
            singular,
            used_ols_fallback: true,
            evaluations,
            warnings,
        });
    }

    let cov_beta = prof
        .xtvx
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient(design.x_names.clone()))?
        * prof.sigma2;
    let coefficients = (0..p)
        .map(|j| {
            let se = cov_beta[(j, j)].sqrt();
            Coefficient {
                name: design.x_names[j].clone(),
                estimate: prof.beta[j],
                se,
                p_value: normal_two_sided(prof.beta[j] / se),
            }
        })
        .collect();
    Ok(FitResult {
        coefficients,
        variances: VarianceComponents {
            random: design
                .z_names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), g[(i, i)]))
                .collect(),
            covariance: (q >= 2 && opts.covariance == CovarianceStructure::Full).then(|| g[(1, 0)]),
            residual: prof.sigma2,
        },
        log_likelihood: -0.5 * prof.deviance,
        converged: min.converged,
        singular,
        used_ols_fallback: false,
        evaluations,
        warnings,
    })
}

/// Continuous predictors, standardized before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    AgentFrequency,
    PatientFrequency,
    VerbFrequency,
    AverageFrequency,
    SentenceLength,
}

impl Covariate {
    pub const ALL: [Covariate; 5] = [
        Covariate::AgentFrequency,
        Covariate::PatientFrequency,
        Covariate::VerbFrequency,
        Covariate::AverageFrequency,
        Covariate::SentenceLength,
    ];

    pub fn term(self) -> &'static str {
        match self {
            Covariate::AgentFrequency => "agent_freq",
            Covariate::PatientFrequency => "patient_freq",
            Covariate::VerbFrequency => "verb_freq",
            Covariate::AverageFrequency => "avg_freq",
            Covariate::SentenceLength => "length",
        }
    }
}

/// One sentence-level observation for the regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmObservation {
    /// Item identifier; random effects are grouped by it.
    pub item: String,
    pub plausibility: Plausibility,
    pub item_type: ItemType,
    pub voice: Voice,
    pub covariates: BTreeMap<Covariate, f64>,
    pub response: f64,
}

/// Term structure of the plausibility regression.
///
/// Plausibility is dummy coded (reference plausible), item type is dummy
/// coded (reference AA) and voice is sum coded (active = +1, passive = −1).
/// Random effects: per-item intercept and per-item plausibility slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub item_type_terms: bool,
    pub voice_terms: bool,
    pub covariates: Vec<Covariate>,
    pub random_slope: bool,
    pub options: LmmOptions,
}

impl RegressionSpec {
    /// Full factorial plausibility × item type × voice with all covariates.
    pub fn full() -> Self {
        RegressionSpec {
            item_type_terms: true,
            voice_terms: true,
            covariates: Covariate::ALL.to_vec(),
            random_slope: true,
            options: LmmOptions::default(),
        }
    }

    /// Without item-type and voice predictors.
    pub fn simplified() -> Self {
        RegressionSpec {
            item_type_terms: false,
            voice_terms: false,
            ..Self::full()
        }
    }

    pub fn design(&self, data: &[LmmObservation]) -> Result<MixedDesign> {
        if data.is_empty() {
            return Err(Error::InvalidInput("no observations".into()));
        }
        let implausible = |o: &LmmObservation| f64::from(u8::from(o.plausibility == Plausibility::Implausible));
        let voice = |o: &LmmObservation| match o.voice {
            Voice::Active => Ok(1.0),
            Voice::Passive => Ok(-1.0),
            Voice::Na => Err(Error::InvalidInput(format!("item {} has no voice", o.item))),
        };

        let levels: BTreeSet<ItemType> = data.iter().map(|o| o.item_type).collect();
        if self.item_type_terms {
            if levels.contains(&ItemType::Na) {
                return Err(Error::InvalidInput("item-type terms need typed items".into()));
            }
            if !levels.contains(&ItemType::Aa) {
                return Err(Error::InvalidInput("reference item type AA is absent".into()));
            }
        }
        let types: Vec<ItemType> = levels.into_iter().filter(|t| self.item_type_terms && *t != ItemType::Aa).collect();
        let is = |o: &LmmObservation, t: ItemType| f64::from(u8::from(o.item_type == t));

        let mut names: Vec<String> = vec!["(Intercept)".into(), "implausible".into()];
        let mut cols: Vec<Vec<f64>> = vec![vec![1.0; data.len()], data.iter().map(implausible).collect()];
        let mut push = |name: String, col: Vec<f64>| {
            names.push(name);
            cols.push(col);
        };
        let voices: Vec<f64> = if self.voice_terms {
            data.iter().map(voice).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        for &t in &types {
            push(t.as_str().into(), data.iter().map(|o| is(o, t)).collect());
        }
        if self.voice_terms {
            push("voice".into(), voices.clone());
        }
        for &t in &types {
            push(format!("implausible:{t}"), data.iter().map(|o| implausible(o) * is(o, t)).collect());
        }
        if self.voice_terms {
            push("implausible:voice".into(), data.iter().zip(&voices).map(|(o, v)| implausible(o) * v).collect());
            for &t in &types {
                push(format!("{t}:voice"), data.iter().zip(&voices).map(|(o, v)| is(o, t) * v).collect());
            }
            for &t in &types {
                push(
                    format!("implausible:{t}:voice"),
                    data.iter().zip(&voices).map(|(o, v)| implausible(o) * is(o, t) * v).collect(),
                );
            }
        }
        for &c in &self.covariates {
            let raw = data
                .iter()
                .map(|o| {
                    o.covariates.get(&c).copied().ok_or_else(|| {
                        Error::InvalidInput(format!("item {} lacks covariate {}", o.item, c.term()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            push(c.term().into(), standardize(&raw).map_err(|_| Error::RankDeficient(vec![c.term().into()]))?);
        }

        let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
        let groups = data
            .iter()
            .map(|o| {
                let next = ids.len();
                *ids.entry(o.item.as_str()).or_insert(next)
            })
            .collect();

        let n = data.len();
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let (z, z_names) = if self.random_slope {
            (
                DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { implausible(&data[i]) }),
                vec!["(Intercept)".to_string(), "implausible".to_string()],
            )
        } else {
            (DMatrix::from_element(n, 1, 1.0), vec!["(Intercept)".to_string()])
        };
        Ok(MixedDesign {
            y: DVector::from_iterator(n, data.iter().map(|o| o.response)),
            x,
            x_names: names,
            z,
            z_names,
            groups,
        })
    }
}

/// z-scores with the sample standard deviation.
fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return Err(Error::ZeroVariance("constant covariate".into()));
    }
    let sd = var.sqrt();
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

pub fn fit_lmm(spec: &RegressionSpec, data: &[LmmObservation]) -> Result<FitResult> {
    let design = spec.design(data)?;
    fit_mixed(&design, &spec.options)
}

/// Display label for regression terms that have a conventional name.
pub fn term_label(term: &str) -> Option<&'static str> {
    Some(match term {
        "implausible" => "Implausible AA > Plausible AA",
        "implausible:AI" => "Implausible AI > Implausible AA",
        "voice" => "Voice",
        "agent_freq" => "Agent frequency",
        "patient_freq" => "Patient frequency",
        "verb_freq" => "Verb frequency",
        "avg_freq" => "Avg. word frequency",
        "length" => "Sentence length",
        "AA_control:voice" => "Voice x Sentence (AA>control)",
        "AI:voice" => "Voice x Sentence (AI>AA)",
        "implausible:AA_control:voice" => "Plausibility x Voice x Sentence (AA>control)",
        "implausible:AI:voice" => "Plausibility x Voice x Sentence (AI>AA)",
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn simple_design(
        items: usize,
        per_item: usize,
        beta: [f64; 2],
        sd_int: f64,
        sd_slope: f64,
        sd_res: f64,
        seed: u64,
    ) -> MixedDesign {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = Normal::new(0.0, 1.0).unwrap();
        let n = items * per_item;
        let mut y = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        for g in 0..items {
            let b0 = sd_int * std.sample(&mut rng);
            let b1 = sd_slope * std.sample(&mut rng);
            for j in 0..per_item {
                let imp = (j % 2) as f64;
                y.push(beta[0] + b0 + (beta[1] + b1) * imp + sd_res * std.sample(&mut rng));
                xs.push(imp);
                groups.push(g);
            }
        }
        MixedDesign {
            y: DVector::from_vec(y),
            x: DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] }),
            x_names: vec!["(Intercept)".into(), "implausible".into()],
            z: DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { xs[i] }),
            z_names: vec!["(Intercept)".into(), "implausible".into()],
            groups,
        }
    }

    #[test]
    fn recovers_simulated_parameters() {
        let d = simple_design(200, 4, [0.5, -0.3], 0.2, 0.1, 0.05, 7);
        let fit = fit_mixed(&d, &LmmOptions::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.warnings);
        assert!((fit.coefficients[0].estimate - 0.5).abs() < 0.05);
        assert!((fit.coefficients[1].estimate + 0.3).abs() < 0.05);
        let vi = fit.variances.random[0].1;
        let vs = fit.variances.random[1].1;
        assert!((vi / 0.04 - 1.0).abs() < 0.3, "intercept var {vi}");
        assert!((vs / 0.01 - 1.0).abs() < 0.3, "slope var {vs}");
    }

    #[test]
    fn likelihood_at_least_ols() {
        let d = simple_design(60, 4, [0.0, 1.0], 0.3, 0.2, 0.5, 3);
        let fit = fit_mixed(&d, &LmmOptions::default()).unwrap();
        let o = ols(&d.y, &d.x, &d.x_names).unwrap();
        assert!(fit.log_likelihood >= o.log_likelihood - 1e-9);
    }

    #[test]
    fn diagonal_structure_has_no_covariance() {
        let d = simple_design(80, 4, [0.0, 1.0], 0.3, 0.2, 0.3, 11);
        let opts = LmmOptions {
            covariance: CovarianceStructure::Diagonal,
            ..LmmOptions::default()
        };
        let fit = fit_mixed(&d, &opts).unwrap();
        assert!(fit.variances.covariance.is_none());
        assert!(fit.variances.random.iter().all(|(_, v)| *v >= 0.0));
    }

    #[test]
    fn rank_deficiency_names_terms() {
        let mut d = simple_design(10, 4, [0.0, 1.0], 0.3, 0.2, 0.3, 1);
        let dup = d.x.column(1).into_owned();
        d.x = d.x.insert_column(2, 0.0);
        d.x.set_column(2, &dup);
        d.x_names.push("copy".into());
        match fit_mixed(&d, &LmmOptions::default()) {
            Err(Error::RankDeficient(t)) => assert_eq!(t, vec!["copy".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn singleton_groups_rejected() {
        let mut d = simple_design(5, 2, [0.0, 1.0], 0.3, 0.2, 0.3, 1);
        d.groups[9] = 99;
        assert!(fit_mixed(&d, &LmmOptions::default()).is_err());
    }

    fn obs(item: &str, p: Plausibility, t: ItemType, v: Voice, len: f64, y: f64) -> LmmObservation {
        LmmObservation {
            item: item.into(),
            plausibility: p,
            item_type: t,
            voice: v,
            covariates: [(Covariate::SentenceLength, len)].into_iter().collect(),
            response: y,
        }
    }

    #[test]
    fn design_coding() {
        let data = vec![
            obs("1", Plausibility::Plausible, ItemType::Aa, Voice::Active, 5.0, 0.9),
            obs("1", Plausibility::Implausible, ItemType::Aa, Voice::Passive, 7.0, 0.4),
            obs("2", Plausibility::Plausible, ItemType::Ai, Voice::Active, 5.0, 0.95),
            obs("2", Plausibility::Implausible, ItemType::Ai, Voice::Passive, 7.0, 0.1),
        ];
        let spec = RegressionSpec {
            covariates: vec![Covariate::SentenceLength],
            ..RegressionSpec::full()
        };
        let d = spec.design(&data).unwrap();
        assert_eq!(
            d.x_names,
            [
                "(Intercept)",
                "implausible",
                "AI",
                "voice",
                "implausible:AI",
                "implausible:voice",
                "AI:voice",
                "implausible:AI:voice",
                "length"
            ]
        );
        let col = |name: &str| d.x.column(d.x_names.iter().position(|n| n == name).unwrap()).iter().copied().collect::<Vec<_>>();
        assert_eq!(col("voice"), vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(col("implausible:AI:voice"), vec![0.0, 0.0, 0.0, -1.0]);
        let len = col("length");
        assert!((len.iter().sum::<f64>()).abs() < 1e-12);
        assert_eq!(d.groups, vec![0, 0, 1, 1]);
        assert_eq!(term_label("implausible:AI"), Some("Implausible AI > Implausible AA"));

        let simple = RegressionSpec {
            covariates: vec![],
            ..RegressionSpec::simplified()
        };
        assert_eq!(simple.design(&data).unwrap().x_names, ["(Intercept)", "implausible"]);
    }
}
