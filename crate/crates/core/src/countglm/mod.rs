//! Count regressions with offsets and prior weights: Poisson, NB2 negative
//! binomial and zero-inflated Poisson, fitted by maximum likelihood.

mod irls;
pub mod likelihood;
pub mod linalg;
mod negbin;
mod poisson;
pub mod special;
mod wald;
mod zip;

pub use negbin::{fit_negbin, fit_negbin_with};
pub use poisson::{fit_poisson, fit_poisson_with};
pub use wald::{wald_report, wald_statistic, WaldRow};
pub use zip::{fit_zip, fit_zip_with, ZeroPart};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariates::DesignMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Poisson,
    NegBin,
    Zip,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Poisson, Family::NegBin, Family::Zip];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Poisson => "poisson",
            Family::NegBin => "negbin",
            Family::Zip => "zip",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = GlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" => Ok(Family::Poisson),
            "negbin" | "nb" | "nb2" | "negative_binomial" => Ok(Family::NegBin),
            "zip" | "zero_inflated_poisson" => Ok(Family::Zip),
            other => Err(GlmError::InvalidInput(format!("unknown family `{other}`"))),
        }
    }
}

/// Fits `design` with the given family.
pub fn fit(design: &DesignMatrix, family: Family) -> Result<FitResult, GlmError> {
    fit_with(design, family, &FitOptions::default())
}

pub fn fit_with(design: &DesignMatrix, family: Family, opts: &FitOptions) -> Result<FitResult, GlmError> {
    match family {
        Family::Poisson => fit_poisson_with(design, opts),
        Family::NegBin => fit_negbin_with(design, opts),
        Family::Zip => fit_zip_with(design, ZeroPart::SameAsCount, opts),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Converged when the largest coefficient change falls below this.
    pub beta_tol: f64,
    /// ... or when the relative log-likelihood change falls below this.
    pub loglik_rel_tol: f64,
    /// NB dispersion beyond which the fit is reported as its Poisson limit.
    pub theta_max: f64,
    /// Cap on EM sweeps for the zero-inflated model.
    pub em_max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            beta_tol: 1e-8,
            loglik_rel_tol: 1e-10,
            theta_max: 1e8,
            em_max_iter: 5000,
        }
    }
}

/// Everything reported about one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    #[serde(with = "crate::serde_float::vec")]
    pub std_errors: Vec<f64>,
    #[serde(with = "crate::serde_float::vec")]
    pub z_values: Vec<f64>,
    #[serde(with = "crate::serde_float::vec")]
    pub p_values: Vec<f64>,
    /// NB2 dispersion (variance μ + μ²/θ).
    pub theta: Option<f64>,
    pub theta_std_error: Option<f64>,
    /// θ ran off to infinity; the reported fit is the Poisson limit.
    #[serde(default)]
    pub theta_diverging: bool,
    #[serde(default)]
    pub zero_terms: Vec<String>,
    #[serde(default)]
    pub zero_model_coefficients: Vec<f64>,
    #[serde(default, with = "crate::serde_float::vec")]
    pub zero_std_errors: Vec<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
    pub df: usize,
    pub n_obs: usize,
    pub null_deviance: f64,
    pub residual_deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    #[serde(default)]
    pub singular_information: Vec<String>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|i| self.std_errors[i])
    }

    pub fn z_value(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|i| self.z_values[i])
    }

    /// Xβ + offset of the count part, row by row.
    pub fn linear_predictor(&self, design: &DesignMatrix) -> Result<Vec<f64>, GlmError> {
        self.check_columns(design)?;
        Ok((0..design.n_rows()).map(|i| design.eta(i, &self.coefficients)).collect())
    }

    /// Expected response E[y] for each row (for ZIP, (1 − π)μ).
    pub fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>, GlmError> {
        let eta = self.linear_predictor(design)?;
        let mut mu: Vec<f64> = eta.into_iter().map(f64::exp).collect();
        if self.family == Family::Zip {
            let zero = zip::zero_design(design, &self.zero_terms)?;
            for (i, m) in mu.iter_mut().enumerate() {
                let zeta: f64 = zero.row(i).iter().zip(&self.zero_model_coefficients).map(|(a, b)| a * b).sum();
                *m *= 1.0 - likelihood::logistic(zeta);
            }
        }
        Ok(mu)
    }

    /// ln E[y] for each row, computed without leaving log scale.
    pub fn log_mean(&self, design: &DesignMatrix) -> Result<Vec<f64>, GlmError> {
        let mut eta = self.linear_predictor(design)?;
        if self.family == Family::Zip {
            let zero = zip::zero_design(design, &self.zero_terms)?;
            for (i, e) in eta.iter_mut().enumerate() {
                let zeta: f64 = zero.row(i).iter().zip(&self.zero_model_coefficients).map(|(a, b)| a * b).sum();
                *e -= likelihood::softplus(zeta);
            }
        }
        Ok(eta)
    }

    fn check_columns(&self, design: &DesignMatrix) -> Result<(), GlmError> {
        if design.columns() != self.terms.as_slice() {
            return Err(GlmError::InvalidInput(format!(
                "design columns {:?} do not match fitted terms {:?}",
                design.columns(),
                self.terms
            )));
        }
        Ok(())
    }

    /// Share of the null deviance removed by the covariates, clamped to [0, 1].
    pub fn deviance_explained(&self) -> Result<DevianceExplained, GlmError> {
        if !(self.null_deviance.abs() > 0.0) {
            return Err(GlmError::NullModelOnly);
        }
        let value = 1.0 - self.residual_deviance / self.null_deviance;
        let clamped = value.clamp(0.0, 1.0);
        Ok(DevianceExplained {
            value: clamped,
            clamped: clamped != value,
        })
    }

    /// Mean of the Pearson variance for one expected count.
    pub fn variance(&self, mu: f64) -> f64 {
        match (self.family, self.theta) {
            (Family::NegBin, Some(theta)) => mu + mu * mu / theta,
            _ => mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevianceExplained {
    pub value: f64,
    pub clamped: bool,
}

/// 1 − residual / null deviance of a fit.
pub fn deviance_explained(fit: &FitResult) -> Result<DevianceExplained, GlmError> {
    fit.deviance_explained()
}

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize, fit: Box<FitResult> },
    #[error("weighted normal system is singular at column `{column}`")]
    SingularSystem { column: String },
    #[error("response has no zero cells")]
    NoZeros,
    #[error("null deviance is zero")]
    NullModelOnly,
    #[error("information matrix is not invertible (columns {columns:?})")]
    NonInvertibleInformation { columns: Vec<String> },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl GlmError {
    /// The best iterate carried by a non-converged fit.
    pub fn partial_fit(&self) -> Option<&FitResult> {
        match self {
            GlmError::NotConverged { fit, .. } => Some(fit),
            _ => None,
        }
    }
}

pub(crate) fn validate_design(design: &DesignMatrix) -> Result<(), GlmError> {
    if design.n_rows() < design.n_cols() {
        return Err(GlmError::InvalidInput(format!(
            "{} rows for {} parameters",
            design.n_rows(),
            design.n_cols()
        )));
    }
    if let Some(i) = design.y().iter().position(|y| *y < 0.0) {
        return Err(GlmError::InvalidInput(format!("negative response in row {i}")));
    }
    Ok(())
}

const CHUNK: usize = 8192;

/// Sums per-row vectors in fixed-size chunks, folded in chunk order so the
/// result does not depend on the thread count.
pub(crate) fn par_accumulate<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; dim];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; dim];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part) {
            *t += v;
        }
    }
    total
}

pub(crate) fn par_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    par_accumulate(n, 1, |i, acc| acc[0] += f(i))[0]
}

/// Adds `a · x xᵀ` (lower triangle) for one row.
#[inline]
pub(crate) fn add_outer(acc: &mut [f64], x: &[f64], a: f64) {
    let p = x.len();
    for r in 0..p {
        let ar = a * x[r];
        let row = &mut acc[r * p..r * p + r + 1];
        for (c, v) in row.iter_mut().enumerate() {
            *v += ar * x[c];
        }
    }
}

/// Standard errors and z/p values from a covariance matrix.
pub(crate) fn wald_columns(beta: &[f64], cov: Option<&[f64]>, dim: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let se: Vec<f64> = (0..beta.len())
        .map(|i| cov.map_or(f64::NAN, |c| c[i * dim + i].max(0.0).sqrt()))
        .collect();
    let z: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
    let p = z.iter().map(|z| special::two_sided_p(*z)).collect();
    (se, z, p)
}

pub(crate) fn rel_change(new: f64, old: f64) -> f64 {
    (new - old).abs() / new.abs().max(old.abs()).max(1e-300)
}
