//! Statistical procedures used by the evaluation: hypothesis tests, FDR,
//! least squares, the Gaussian linear mixed model and the derived analyses.

mod analyses;
mod hypothesis;
mod lmm;
mod ols;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use analyses::{
    error_profile, layer_group_trend, layer_groups, paired_correlation, ErrorProfile, ErrorProfileRow,
    LayerAccuracy, LayerGroup, LayerGroupResult, Pairing,
};
pub use hypothesis::{
    binom_test, bh_fdr, dependent_nonoverlapping_correlation_test, equal_proportions_test, pearson_r,
    pearson_test,
};
pub use lmm::{
    fit_lmm, fit_mixed, term_label, CovarianceStructure, Covariate, FitResult, LmmObservation, LmmOptions,
    MixedDesign, RegressionSpec, VarianceComponents,
};
pub use ols::{ols, Coefficient, OlsFit};

/// One test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub df: Option<f64>,
    pub n: usize,
    /// Auxiliary values (t, CI bounds, differences …).
    pub extra: BTreeMap<String, f64>,
}

impl StatResult {
    pub fn new(name: &str, statistic: f64, p_value: f64, n: usize) -> Self {
        StatResult {
            name: name.to_string(),
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            df: None,
            n,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_df(mut self, df: f64) -> Self {
        self.df = Some(df);
        self
    }

    pub fn set(&mut self, key: &str, value: f64) {
        self.extra.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.extra.get(key).copied()
    }
}
