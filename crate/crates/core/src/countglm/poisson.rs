use super::irls::{drifting, Irls};
use super::likelihood::{poisson_information, poisson_unit_deviance};
use super::{linalg, par_sum, validate_design, wald_columns, Family, FitOptions, FitResult, GlmError};
use crate::covariates::DesignMatrix;

/// Poisson regression with the design's offset and prior weights.
pub fn fit_poisson(design: &DesignMatrix) -> Result<FitResult, GlmError> {
    fit_poisson_with(design, &FitOptions::default())
}

pub fn fit_poisson_with(design: &DesignMatrix, opts: &FitOptions) -> Result<FitResult, GlmError> {
    validate_design(design)?;
    let out = Irls {
        design,
        prior: None,
        theta: None,
    }
    .run(None, opts)?;
    let p = design.n_cols();
    let info = poisson_information(design, &out.beta);
    let (cov, singular) = match linalg::spd_inverse(&info, p) {
        Ok(c) => (Some(c), Vec::new()),
        Err(j) => (None, vec![design.columns()[j].clone()]),
    };
    let (std_errors, z_values, p_values) = wald_columns(&out.beta, cov.as_deref(), p);
    let residual_deviance = deviance(design, &out.beta);
    let null_deviance = null_deviance(design, opts)?;
    let mut diagnostics = Vec::new();
    if !out.converged {
        let moving = drifting(design, &out.last_step, 1e-3);
        if !moving.is_empty() {
            diagnostics.push(format!("coefficients diverging: {}", moving.join(", ")));
        }
    }
    let fit = FitResult {
        family: Family::Poisson,
        terms: design.columns().to_vec(),
        coefficients: out.beta,
        std_errors,
        z_values,
        p_values,
        theta: None,
        theta_std_error: None,
        theta_diverging: false,
        zero_terms: Vec::new(),
        zero_model_coefficients: Vec::new(),
        zero_std_errors: Vec::new(),
        log_likelihood: out.loglik,
        aic: 2.0 * p as f64 - 2.0 * out.loglik,
        df: p,
        n_obs: design.n_rows(),
        null_deviance,
        residual_deviance,
        converged: out.converged,
        iterations: out.iterations,
        singular_information: singular,
        diagnostics,
    };
    if fit.converged {
        Ok(fit)
    } else {
        Err(GlmError::NotConverged {
            iterations: fit.iterations,
            fit: Box::new(fit),
        })
    }
}

pub(crate) fn deviance(design: &DesignMatrix, beta: &[f64]) -> f64 {
    let y = design.y();
    par_sum(design.n_rows(), |i| {
        design.weight(i) * poisson_unit_deviance(y[i], design.eta(i, beta).exp())
    })
}

/// Deviance of the intercept-only model (offset only without an intercept).
fn null_deviance(design: &DesignMatrix, opts: &FitOptions) -> Result<f64, GlmError> {
    if !design.has_intercept() {
        return Ok(deviance(design, &vec![0.0; design.n_cols()]));
    }
    let null = design.intercept_only();
    let out = Irls {
        design: &null,
        prior: None,
        theta: None,
    }
    .run(None, opts)?;
    Ok(deviance(&null, &out.beta))
}
