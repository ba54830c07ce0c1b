use super::irls::Irls;
use super::likelihood::{negbin_information, negbin_theta_curvature, negbin_theta_score, negbin_unit_deviance};
use super::{fit_poisson_with, linalg, par_accumulate, par_sum, rel_change, validate_design, wald_columns, Family, FitOptions, FitResult, GlmError};
use crate::covariates::DesignMatrix;

/// NB2 regression (variance μ + μ²/θ).
pub fn fit_negbin(design: &DesignMatrix) -> Result<FitResult, GlmError> {
    fit_negbin_with(design, &FitOptions::default())
}

/// Alternates IRLS for β at fixed θ with a safeguarded Newton search for θ
/// at fixed β, starting from the Poisson fit and a moment estimate of θ.
pub fn fit_negbin_with(design: &DesignMatrix, opts: &FitOptions) -> Result<FitResult, GlmError> {
    validate_design(design)?;
    let poisson = match fit_poisson_with(design, opts) {
        Ok(f) => f,
        Err(GlmError::NotConverged { fit, .. }) => *fit,
        Err(e) => return Err(e),
    };
    let y = design.y();
    let n = design.n_rows();
    let mut beta = poisson.coefficients.clone();
    let mut mu: Vec<f64> = (0..n).map(|i| design.eta(i, &beta).exp()).collect();
    let mut theta = moment_theta(design, &mu).clamp(1e-4, opts.theta_max / 10.0);
    let mut loglik = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut diagnostics = Vec::new();

    while iterations < opts.max_iter {
        iterations += 1;
        let inner = Irls {
            design,
            prior: None,
            theta: Some(theta),
        }
        .run(Some(&beta), opts)?;
        mu = (0..n).map(|i| design.eta(i, &inner.beta).exp()).collect();
        let search = theta_ml(design, &mu, theta, opts);
        if search.diverging {
            return Ok(poisson_limit(poisson, iterations));
        }
        let ll = super::likelihood::negbin_loglik(design, &inner.beta, search.theta);
        let max_step = inner.beta.iter().zip(&beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dphi = (search.theta.ln() - theta.ln()).abs();
        let rel = rel_change(ll, loglik);
        beta = inner.beta;
        theta = search.theta;
        loglik = ll;
        if !inner.converged {
            diagnostics.push(format!("inner IRLS stopped at iteration {}", inner.iterations));
        }
        if (max_step < opts.beta_tol && dphi < opts.beta_tol) || rel < opts.loglik_rel_tol {
            converged = true;
            break;
        }
    }

    let p = design.n_cols();
    let info = negbin_information(design, &beta, theta);
    let (cov, singular) = match linalg::spd_inverse(&info, p + 1) {
        Ok(c) => (Some(c), Vec::new()),
        Err(j) => {
            let name = design.columns().get(j).cloned().unwrap_or_else(|| "theta".into());
            (None, vec![name])
        }
    };
    let (std_errors, z_values, p_values) = wald_columns(&beta, cov.as_deref(), p + 1);
    let theta_std_error = cov.as_ref().map(|c| c[p * (p + 1) + p].max(0.0).sqrt());
    let residual_deviance = par_sum(n, |i| design.weight(i) * negbin_unit_deviance(y[i], mu[i], theta));
    let null_deviance = null_deviance(design, theta, opts)?;
    let df = p + 1;
    let fit = FitResult {
        family: Family::NegBin,
        terms: design.columns().to_vec(),
        coefficients: beta,
        std_errors,
        z_values,
        p_values,
        theta: Some(theta),
        theta_std_error,
        theta_diverging: false,
        zero_terms: Vec::new(),
        zero_model_coefficients: Vec::new(),
        zero_std_errors: Vec::new(),
        log_likelihood: loglik,
        aic: 2.0 * df as f64 - 2.0 * loglik,
        df,
        n_obs: n,
        null_deviance,
        residual_deviance,
        converged,
        iterations,
        singular_information: singular,
        diagnostics,
    };
    if converged {
        Ok(fit)
    } else {
        Err(GlmError::NotConverged {
            iterations,
            fit: Box::new(fit),
        })
    }
}

fn poisson_limit(poisson: FitResult, iterations: usize) -> FitResult {
    let df = poisson.df + 1;
    let mut diagnostics = poisson.diagnostics;
    diagnostics.push("theta diverged: no overdispersion, Poisson limit reported".into());
    FitResult {
        family: Family::NegBin,
        theta: None,
        theta_std_error: None,
        theta_diverging: true,
        aic: 2.0 * df as f64 - 2.0 * poisson.log_likelihood,
        df,
        iterations: poisson.iterations + iterations,
        diagnostics,
        ..poisson
    }
}

/// Σ w μ² / Σ w ((y − μ)² − μ); a large value when the data show no excess
/// variance.
fn moment_theta(design: &DesignMatrix, mu: &[f64]) -> f64 {
    let y = design.y();
    let acc = par_accumulate(design.n_rows(), 2, |i, acc| {
        let w = design.weight(i);
        acc[0] += w * mu[i] * mu[i];
        acc[1] += w * ((y[i] - mu[i]).powi(2) - mu[i]);
    });
    if acc[1] > 0.0 && acc[0] > 0.0 {
        acc[0] / acc[1]
    } else {
        1e6
    }
}

pub(crate) struct ThetaSearch {
    pub theta: f64,
    pub diverging: bool,
}

/// Score and curvature of the profile log-likelihood in φ = ln θ.
fn phi_derivatives(design: &DesignMatrix, mu: &[f64], phi: f64) -> (f64, f64) {
    let theta = phi.exp();
    let y = design.y();
    let acc = par_accumulate(design.n_rows(), 2, |i, acc| {
        let w = design.weight(i);
        acc[0] += w * negbin_theta_score(y[i], mu[i], theta);
        acc[1] += w * negbin_theta_curvature(y[i], mu[i], theta);
    });
    let (g, h) = (acc[0], acc[1]);
    (theta * g, theta * g + theta * theta * h)
}

/// Maximizes the NB log-likelihood over θ for fixed means: Newton steps in
/// ln θ, falling back to bisection whenever a step leaves the bracket on the
/// sign change of the score.
pub(crate) fn theta_ml(design: &DesignMatrix, mu: &[f64], start: f64, opts: &FitOptions) -> ThetaSearch {
    let phi_max = opts.theta_max.ln();
    let phi_min = (1e-8f64).ln();
    let mut phi = start.ln().clamp(phi_min, phi_max);
    let (mut lo, mut hi) = (phi_min, phi_max);
    let (s_max, _) = phi_derivatives(design, mu, phi_max);
    if s_max > 0.0 {
        return ThetaSearch {
            theta: opts.theta_max,
            diverging: true,
        };
    }
    for _ in 0..200 {
        let (s, h) = phi_derivatives(design, mu, phi);
        if s > 0.0 {
            lo = lo.max(phi);
        } else {
            hi = hi.min(phi);
        }
        let newton = if h < 0.0 { -s / h } else { s.signum() };
        let mut next = phi + newton.clamp(-3.0, 3.0);
        if next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        let step = next - phi;
        phi = next;
        if step.abs() < 1e-12 || hi - lo < 1e-12 {
            break;
        }
    }
    ThetaSearch {
        theta: phi.exp(),
        diverging: false,
    }
}

fn null_deviance(design: &DesignMatrix, theta: f64, opts: &FitOptions) -> Result<f64, GlmError> {
    let y = design.y();
    let dev = |d: &DesignMatrix, beta: &[f64]| {
        par_sum(d.n_rows(), |i| d.weight(i) * negbin_unit_deviance(y[i], d.eta(i, beta).exp(), theta))
    };
    if !design.has_intercept() {
        return Ok(dev(design, &vec![0.0; design.n_cols()]));
    }
    let null = design.intercept_only();
    let out = Irls {
        design: &null,
        prior: None,
        theta: Some(theta),
    }
    .run(None, opts)?;
    Ok(dev(&null, &out.beta))
}
