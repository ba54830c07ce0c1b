//! Log-likelihoods, score vectors and observed information of the three
//! families under the log link. Responses may be fractional: the count
//! densities are extended through ln Γ(y + 1).

use super::special::{digamma_ratio, lgamma, lgamma_ratio, trigamma_ratio};
use super::{add_outer, linalg, par_accumulate, par_sum, Family};
use crate::covariates::DesignMatrix;

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eˣ)
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[inline]
pub fn poisson_row_loglik(y: f64, eta: f64) -> f64 {
    let mu = eta.exp();
    if y == 0.0 {
        -mu
    } else {
        y * eta - mu - lgamma(y + 1.0)
    }
}

#[inline]
pub fn negbin_row_loglik(y: f64, eta: f64, theta: f64) -> f64 {
    let mu = eta.exp();
    let log_tm = (theta + mu).ln();
    let log_y_term = if y == 0.0 { 0.0 } else { y * (eta - log_tm) - lgamma(y + 1.0) };
    lgamma_ratio(y, theta) - theta * (mu / theta).ln_1p() + log_y_term
}

#[inline]
pub fn zip_row_loglik(y: f64, eta: f64, zeta: f64) -> f64 {
    let mu = eta.exp();
    if y == 0.0 {
        log_add_exp(zeta, -mu) - softplus(zeta)
    } else {
        -softplus(zeta) + y * eta - mu - lgamma(y + 1.0)
    }
}

pub fn poisson_unit_deviance(y: f64, mu: f64) -> f64 {
    let ylog = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
    2.0 * (ylog - (y - mu))
}

pub fn negbin_unit_deviance(y: f64, mu: f64, theta: f64) -> f64 {
    let ylog = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
    2.0 * (ylog - (y + theta) * ((y - mu) / (mu + theta)).ln_1p())
}

/// Unit deviance of one observation; ZIP uses the Poisson saturated model.
pub fn unit_deviance(family: Family, y: f64, mu: f64, theta: Option<f64>) -> f64 {
    match (family, theta) {
        (Family::NegBin, Some(theta)) => negbin_unit_deviance(y, mu, theta),
        _ => poisson_unit_deviance(y, mu),
    }
}

/// Σ w [y ln y − y − ln Γ(y + 1)], the Poisson saturated log-likelihood.
pub fn saturated_loglik(design: &DesignMatrix) -> f64 {
    let y = design.y();
    par_sum(design.n_rows(), |i| {
        let yi = y[i];
        if yi > 0.0 {
            design.weight(i) * (yi * yi.ln() - yi - lgamma(yi + 1.0))
        } else {
            0.0
        }
    })
}

pub fn poisson_loglik(design: &DesignMatrix, beta: &[f64]) -> f64 {
    let y = design.y();
    par_sum(design.n_rows(), |i| design.weight(i) * poisson_row_loglik(y[i], design.eta(i, beta)))
}

pub fn poisson_gradient(design: &DesignMatrix, beta: &[f64]) -> Vec<f64> {
    let y = design.y();
    par_accumulate(design.n_rows(), design.n_cols(), |i, acc| {
        let r = design.weight(i) * (y[i] - design.eta(i, beta).exp());
        for (a, x) in acc.iter_mut().zip(design.row(i)) {
            *a += r * x;
        }
    })
}

/// Σ w μ x xᵀ, which is both observed and expected information here.
pub fn poisson_information(design: &DesignMatrix, beta: &[f64]) -> Vec<f64> {
    let p = design.n_cols();
    let mut info = par_accumulate(design.n_rows(), p * p, |i, acc| {
        add_outer(acc, design.row(i), design.weight(i) * design.eta(i, beta).exp());
    });
    linalg::symmetrize_from_lower(&mut info, p);
    info
}

pub fn negbin_loglik(design: &DesignMatrix, beta: &[f64], theta: f64) -> f64 {
    let y = design.y();
    par_sum(design.n_rows(), |i| design.weight(i) * negbin_row_loglik(y[i], design.eta(i, beta), theta))
}

/// ∂ℓ/∂θ for one row at mean μ.
#[inline]
pub(crate) fn negbin_theta_score(y: f64, mu: f64, theta: f64) -> f64 {
    digamma_ratio(y, theta) - (mu / theta).ln_1p() + (mu - y) / (theta + mu)
}

/// ∂²ℓ/∂θ² for one row at mean μ.
#[inline]
pub(crate) fn negbin_theta_curvature(y: f64, mu: f64, theta: f64) -> f64 {
    let s = theta + mu;
    trigamma_ratio(y, theta) + mu / (theta * s) - (mu - y) / (s * s)
}

/// Score with respect to β and θ.
pub fn negbin_gradient(design: &DesignMatrix, beta: &[f64], theta: f64) -> (Vec<f64>, f64) {
    let y = design.y();
    let p = design.n_cols();
    let mut g = par_accumulate(design.n_rows(), p + 1, |i, acc| {
        let w = design.weight(i);
        let mu = design.eta(i, beta).exp();
        let r = w * theta * (y[i] - mu) / (theta + mu);
        for (a, x) in acc[..p].iter_mut().zip(design.row(i)) {
            *a += r * x;
        }
        acc[p] += w * negbin_theta_score(y[i], mu, theta);
    });
    let dtheta = g.pop().unwrap();
    (g, dtheta)
}

/// Observed information of (β, θ), `(p + 1)²` row-major with θ last.
pub fn negbin_information(design: &DesignMatrix, beta: &[f64], theta: f64) -> Vec<f64> {
    let y = design.y();
    let p = design.n_cols();
    let q = p + 1;
    let mut info = par_accumulate(design.n_rows(), q * q, |i, acc| {
        let w = design.weight(i);
        let x = design.row(i);
        let mu = design.eta(i, beta).exp();
        let s = theta + mu;
        let h_ee = theta * mu * (y[i] + theta) / (s * s);
        let h_et = mu * (y[i] - mu) / (s * s);
        for r in 0..p {
            let a = w * h_ee * x[r];
            for c in 0..=r {
                acc[r * q + c] += a * x[c];
            }
            acc[p * q + r] -= w * h_et * x[r];
        }
        acc[p * q + p] -= w * negbin_theta_curvature(y[i], mu, theta);
    });
    linalg::symmetrize_from_lower(&mut info, q);
    info
}

fn zeta(zero: &DesignMatrix, i: usize, gamma: &[f64]) -> f64 {
    zero.row(i).iter().zip(gamma).map(|(a, b)| a * b).sum()
}

/// `zero` supplies the logistic-part covariates for the same rows.
pub fn zip_loglik(count: &DesignMatrix, zero: &DesignMatrix, beta: &[f64], gamma: &[f64]) -> f64 {
    let y = count.y();
    par_sum(count.n_rows(), |i| {
        count.weight(i) * zip_row_loglik(y[i], count.eta(i, beta), zeta(zero, i, gamma))
    })
}

struct ZipDerivs {
    d_eta: f64,
    d_zeta: f64,
    h_ee: f64,
    h_zz: f64,
    h_ez: f64,
}

#[inline]
fn zip_derivs(y: f64, eta: f64, zeta: f64) -> ZipDerivs {
    let mu = eta.exp();
    let pi = logistic(zeta);
    if y == 0.0 {
        let r = logistic(zeta + mu);
        let rr = r * (1.0 - r);
        ZipDerivs {
            d_eta: -(1.0 - r) * mu,
            d_zeta: r - pi,
            h_ee: -(1.0 - r) * mu + mu * mu * rr,
            h_zz: rr - pi * (1.0 - pi),
            h_ez: mu * rr,
        }
    } else {
        ZipDerivs {
            d_eta: y - mu,
            d_zeta: -pi,
            h_ee: -mu,
            h_zz: -pi * (1.0 - pi),
            h_ez: 0.0,
        }
    }
}

/// Score with respect to the count and zero-part coefficients.
pub fn zip_gradient(count: &DesignMatrix, zero: &DesignMatrix, beta: &[f64], gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let y = count.y();
    let (p, q) = (count.n_cols(), zero.n_cols());
    let mut g = par_accumulate(count.n_rows(), p + q, |i, acc| {
        let w = count.weight(i);
        let d = zip_derivs(y[i], count.eta(i, beta), zeta(zero, i, gamma));
        for (a, x) in acc[..p].iter_mut().zip(count.row(i)) {
            *a += w * d.d_eta * x;
        }
        for (a, z) in acc[p..].iter_mut().zip(zero.row(i)) {
            *a += w * d.d_zeta * z;
        }
    });
    let gz = g.split_off(p);
    (g, gz)
}

/// Observed information of (β, γ), `(p + q)²` row-major, count block first.
pub fn zip_information(count: &DesignMatrix, zero: &DesignMatrix, beta: &[f64], gamma: &[f64]) -> Vec<f64> {
    let y = count.y();
    let (p, q) = (count.n_cols(), zero.n_cols());
    let k = p + q;
    let mut info = par_accumulate(count.n_rows(), k * k, |i, acc| {
        let w = count.weight(i);
        let d = zip_derivs(y[i], count.eta(i, beta), zeta(zero, i, gamma));
        let v: Vec<f64> = count.row(i).iter().chain(zero.row(i)).copied().collect();
        for r in 0..k {
            for c in 0..=r {
                let h = match (r < p, c < p) {
                    (true, true) => d.h_ee,
                    (false, false) => d.h_zz,
                    _ => d.h_ez,
                };
                acc[r * k + c] -= w * h * v[r] * v[c];
            }
        }
    });
    linalg::symmetrize_from_lower(&mut info, k);
    info
}
