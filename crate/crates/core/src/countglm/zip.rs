use serde::{Deserialize, Serialize};

use super::irls::Irls;
use super::likelihood::{logistic, saturated_loglik, softplus, zip_gradient, zip_information, zip_loglik};
use super::{add_outer, fit_poisson_with, linalg, par_accumulate, rel_change, validate_design, wald_columns, Family, FitOptions, FitResult, GlmError};
use crate::covariates::DesignMatrix;

/// Covariates of the logistic zero-inflation part.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroPart {
    #[default]
    SameAsCount,
    InterceptOnly,
}

/// Zero-inflated Poisson with the count covariates in both parts.
pub fn fit_zip(design: &DesignMatrix) -> Result<FitResult, GlmError> {
    fit_zip_with(design, ZeroPart::SameAsCount, &FitOptions::default())
}

/// The zero-part design: named columns of the count design, no offset.
pub(crate) fn zero_design(design: &DesignMatrix, zero_terms: &[String]) -> Result<DesignMatrix, GlmError> {
    design
        .select_columns(zero_terms)
        .map(|d| d.without_offset())
        .map_err(|e| GlmError::InvalidInput(e.to_string()))
}

struct ZipFit {
    beta: Vec<f64>,
    gamma: Vec<f64>,
    loglik: f64,
    iterations: usize,
    converged: bool,
    boundary: bool,
}

pub fn fit_zip_with(design: &DesignMatrix, zero_part: ZeroPart, opts: &FitOptions) -> Result<FitResult, GlmError> {
    validate_design(design)?;
    let y = design.y();
    if !(0..design.n_rows()).any(|i| y[i] == 0.0 && design.weight(i) > 0.0) {
        return Err(GlmError::NoZeros);
    }
    let zero_terms = match zero_part {
        ZeroPart::SameAsCount => design.columns().to_vec(),
        ZeroPart::InterceptOnly => vec!["intercept".to_string()],
    };
    let zero = if zero_part == ZeroPart::InterceptOnly {
        design
            .intercept_only()
            .select_columns(&zero_terms)
            .map(|d| d.without_offset())
            .map_err(|e| GlmError::InvalidInput(e.to_string()))?
    } else {
        zero_design(design, &zero_terms)?
    };
    let fit = fit_core(design, &zero, opts)?;
    let (p, q) = (design.n_cols(), zero.n_cols());
    let k = p + q;
    let info = zip_information(design, &zero, &fit.beta, &fit.gamma);
    let (cov, singular) = match linalg::spd_inverse(&info, k) {
        Ok(c) => (Some(c), Vec::new()),
        Err(j) => {
            let name = if j < p { design.columns()[j].clone() } else { format!("zero_{}", zero_terms[j - p]) };
            (None, vec![name])
        }
    };
    let all: Vec<f64> = fit.beta.iter().chain(&fit.gamma).copied().collect();
    let (se, z, pv) = wald_columns(&all, cov.as_deref(), k);
    let ll_sat = saturated_loglik(design);
    let null_count = design.intercept_only();
    let null_zero = null_count.select_columns(&["intercept".to_string()]).map(|d| d.without_offset()).map_err(|e| GlmError::InvalidInput(e.to_string()))?;
    let null_ll = if design.has_intercept() {
        fit_core(&null_count, &null_zero, opts)?.loglik
    } else {
        f64::NAN
    };
    let mut diagnostics = Vec::new();
    if fit.boundary {
        diagnostics.push("zero-inflation probability at the boundary π → 0; Newton polish skipped".into());
    }
    let result = FitResult {
        family: Family::Zip,
        terms: design.columns().to_vec(),
        coefficients: fit.beta,
        std_errors: se[..p].to_vec(),
        z_values: z[..p].to_vec(),
        p_values: pv[..p].to_vec(),
        theta: None,
        theta_std_error: None,
        theta_diverging: false,
        zero_terms,
        zero_model_coefficients: fit.gamma,
        zero_std_errors: se[p..].to_vec(),
        log_likelihood: fit.loglik,
        aic: 2.0 * k as f64 - 2.0 * fit.loglik,
        df: k,
        n_obs: design.n_rows(),
        null_deviance: 2.0 * (ll_sat - null_ll),
        residual_deviance: 2.0 * (ll_sat - fit.loglik),
        converged: fit.converged,
        iterations: fit.iterations,
        singular_information: singular,
        diagnostics,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(GlmError::NotConverged {
            iterations: result.iterations,
            fit: Box::new(result),
        })
    }
}

/// EM to a loose tolerance, then Newton on the joint log-likelihood.
fn fit_core(count: &DesignMatrix, zero: &DesignMatrix, opts: &FitOptions) -> Result<ZipFit, GlmError> {
    let n = count.n_rows();
    let y = count.y();
    let mut beta = match fit_poisson_with(count, opts) {
        Ok(f) => f.coefficients,
        Err(GlmError::NotConverged { fit, .. }) => fit.coefficients,
        Err(e) => return Err(e),
    };
    let wsum: f64 = (0..n).map(|i| count.weight(i)).sum();
    let zeros: f64 = (0..n).filter(|&i| y[i] == 0.0).map(|i| count.weight(i)).sum();
    let mut gamma = vec![0.0; zero.n_cols()];
    if let Some(j) = zero.column_index("intercept") {
        let f = (0.5 * zeros / wsum).clamp(1e-3, 0.5);
        gamma[j] = (f / (1.0 - f)).ln();
    }
    let mut loglik = zip_loglik(count, zero, &beta, &gamma);
    let mut iterations = 0;
    let em_tol = 1e-8;
    let mut r = vec![0.0; n];
    while iterations < opts.em_max_iter {
        iterations += 1;
        for i in 0..n {
            r[i] = if y[i] == 0.0 {
                let zeta: f64 = zero.row(i).iter().zip(&gamma).map(|(a, b)| a * b).sum();
                logistic(zeta + count.eta(i, &beta).exp())
            } else {
                0.0
            };
        }
        let prior: Vec<f64> = r.iter().map(|v| 1.0 - v).collect();
        beta = Irls {
            design: count,
            prior: Some(&prior),
            theta: None,
        }
        .run(Some(&beta), opts)?
        .beta;
        gamma = logistic_fit(zero, &r, &gamma, opts)?;
        let ll = zip_loglik(count, zero, &beta, &gamma);
        let rel = rel_change(ll, loglik);
        loglik = ll;
        if rel < em_tol {
            break;
        }
    }
    let max_pi = (0..n)
        .map(|i| logistic(zero.row(i).iter().zip(&gamma).map(|(a, b)| a * b).sum()))
        .fold(0.0f64, f64::max);
    if max_pi < 1e-7 {
        return Ok(ZipFit {
            beta,
            gamma,
            loglik,
            iterations,
            converged: true,
            boundary: true,
        });
    }
    let (p, q) = (count.n_cols(), zero.n_cols());
    let k = p + q;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        iterations += 1;
        let (gb, gg) = zip_gradient(count, zero, &beta, &gamma);
        let grad: Vec<f64> = gb.into_iter().chain(gg).collect();
        let info = zip_information(count, zero, &beta, &gamma);
        let Ok(mut step) = linalg::spd_solve(&info, k, &grad) else {
            break;
        };
        let mut halvings = 0;
        let (nb, ng, ll) = loop {
            let nb: Vec<f64> = beta.iter().zip(&step[..p]).map(|(b, s)| b + s).collect();
            let ng: Vec<f64> = gamma.iter().zip(&step[p..]).map(|(b, s)| b + s).collect();
            let ll = zip_loglik(count, zero, &nb, &ng);
            if ll >= loglik - 1e-12 * loglik.abs() || halvings >= 40 {
                break (nb, ng, ll);
            }
            step.iter_mut().for_each(|s| *s *= 0.5);
            halvings += 1;
        };
        if !(ll >= loglik - 1e-12 * loglik.abs()) {
            break;
        }
        let max_step = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let rel = rel_change(ll, loglik);
        beta = nb;
        gamma = ng;
        loglik = ll;
        if max_step < opts.beta_tol || rel < opts.loglik_rel_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        // The EM iterate is a stationary point to the EM tolerance.
        let (gb, gg) = zip_gradient(count, zero, &beta, &gamma);
        let gmax = gb.iter().chain(&gg).fold(0.0f64, |m, g| m.max(g.abs()));
        converged = gmax < 1e-4 * (1.0 + loglik.abs());
    }
    Ok(ZipFit {
        beta,
        gamma,
        loglik,
        iterations,
        converged,
        boundary: false,
    })
}

/// Logistic regression of fractional targets `r` by Newton–Raphson.
fn logistic_fit(zero: &DesignMatrix, r: &[f64], start: &[f64], opts: &FitOptions) -> Result<Vec<f64>, GlmError> {
    let q = zero.n_cols();
    let mut gamma = start.to_vec();
    let ll = |g: &[f64]| {
        par_accumulate(zero.n_rows(), 1, |i, acc| {
            let zeta: f64 = zero.row(i).iter().zip(g).map(|(a, b)| a * b).sum();
            acc[0] += zero.weight(i) * (r[i] * zeta - softplus(zeta));
        })[0]
    };
    let mut current = ll(&gamma);
    for _ in 0..opts.max_iter {
        let mut acc = par_accumulate(zero.n_rows(), q * q + q, |i, acc| {
            let w = zero.weight(i);
            let x = zero.row(i);
            let zeta: f64 = x.iter().zip(&gamma).map(|(a, b)| a * b).sum();
            let pi = logistic(zeta);
            let (h, g) = acc.split_at_mut(q * q);
            add_outer(h, x, w * pi * (1.0 - pi));
            for (a, v) in g.iter_mut().zip(x) {
                *a += w * (r[i] - pi) * v;
            }
        });
        let grad = acc.split_off(q * q);
        linalg::symmetrize_from_lower(&mut acc, q);
        let Ok(mut step) = linalg::spd_solve(&acc, q, &grad) else {
            // Separation: push along the gradient and let the caller's
            // log-likelihood check decide.
            return Ok(gamma);
        };
        let mut halvings = 0;
        let (cand, value) = loop {
            let cand: Vec<f64> = gamma.iter().zip(&step).map(|(g, s)| g + s).collect();
            let value = ll(&cand);
            if value >= current - 1e-12 * current.abs() || halvings >= 40 {
                break (cand, value);
            }
            step.iter_mut().for_each(|s| *s *= 0.5);
            halvings += 1;
        };
        let max_step = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let rel = rel_change(value, current);
        gamma = cand;
        current = value;
        if max_step < opts.beta_tol || rel < opts.loglik_rel_tol || max_step.is_nan() {
            break;
        }
    }
    Ok(gamma)
}
