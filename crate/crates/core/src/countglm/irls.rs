//! Iteratively reweighted least squares for log-link count models with a
//! known dispersion (θ = ∞ gives Poisson).

use super::likelihood::{negbin_row_loglik, poisson_row_loglik};
use super::{add_outer, linalg, par_accumulate, par_sum, rel_change, FitOptions, GlmError};
use crate::covariates::DesignMatrix;

pub(crate) struct IrlsOutcome {
    pub beta: Vec<f64>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub last_step: Vec<f64>,
}

pub(crate) struct Irls<'a> {
    pub design: &'a DesignMatrix,
    /// Extra per-row weights multiplying the design's own.
    pub prior: Option<&'a [f64]>,
    pub theta: Option<f64>,
}

impl Irls<'_> {
    #[inline]
    fn weight(&self, i: usize) -> f64 {
        self.design.weight(i) * self.prior.map_or(1.0, |p| p[i])
    }

    pub fn loglik(&self, beta: &[f64]) -> f64 {
        let y = self.design.y();
        par_sum(self.design.n_rows(), |i| {
            let w = self.weight(i);
            if w == 0.0 {
                return 0.0;
            }
            let eta = self.design.eta(i, beta);
            w * match self.theta {
                Some(theta) => negbin_row_loglik(y[i], eta, theta),
                None => poisson_row_loglik(y[i], eta),
            }
        })
    }

    /// Solves the weighted normal equations around the current means.
    fn step(&self, mu_eta: impl Fn(usize) -> (f64, f64) + Sync) -> Result<Vec<f64>, GlmError> {
        let d = self.design;
        let p = d.n_cols();
        let y = d.y();
        let mut acc = par_accumulate(d.n_rows(), p * p + p, |i, acc| {
            let w = self.weight(i);
            if w == 0.0 {
                return;
            }
            let (mu, eta) = mu_eta(i);
            let fisher = match self.theta {
                Some(theta) => mu / (1.0 + mu / theta),
                None => mu,
            };
            let z = eta - d.offset()[i] + (y[i] - mu) / mu;
            let x = d.row(i);
            let (xtwx, xtwz) = acc.split_at_mut(p * p);
            add_outer(xtwx, x, w * fisher);
            for (a, xv) in xtwz.iter_mut().zip(x) {
                *a += w * fisher * z * xv;
            }
        });
        let rhs = acc.split_off(p * p);
        linalg::symmetrize_from_lower(&mut acc, p);
        linalg::spd_solve(&acc, p, &rhs).map_err(|j| GlmError::SingularSystem {
            column: d.columns()[j].clone(),
        })
    }

    pub fn run(&self, start: Option<&[f64]>, opts: &FitOptions) -> Result<IrlsOutcome, GlmError> {
        let d = self.design;
        let p = d.n_cols();
        let (mut beta, mut iterations) = match start {
            Some(b) => (b.to_vec(), 0),
            None => {
                let y = d.y();
                let wsum = par_sum(d.n_rows(), |i| self.weight(i));
                let ybar = par_sum(d.n_rows(), |i| self.weight(i) * y[i]) / wsum.max(1e-300);
                let beta = self.step(|i| {
                    let mu = ((y[i] + ybar) / 2.0).max(1e-3);
                    (mu, mu.ln())
                })?;
                (beta, 1)
            }
        };
        let mut loglik = self.loglik(&beta);
        let mut last_step = vec![f64::INFINITY; p];
        let mut converged = false;
        while iterations < opts.max_iter {
            iterations += 1;
            let target = self.step(|i| {
                let eta = d.eta(i, &beta);
                (eta.exp(), eta)
            })?;
            let mut step: Vec<f64> = target.iter().zip(&beta).map(|(t, b)| t - b).collect();
            let mut candidate = target;
            let mut ll = self.loglik(&candidate);
            let mut halvings = 0;
            while !(ll >= loglik - 1e-12 * loglik.abs()) && halvings < 40 {
                step.iter_mut().for_each(|s| *s *= 0.5);
                candidate = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
                ll = self.loglik(&candidate);
                halvings += 1;
            }
            if !ll.is_finite() {
                break;
            }
            let max_step = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            let rel = rel_change(ll, loglik);
            beta = candidate;
            loglik = ll;
            last_step = step;
            if max_step < opts.beta_tol || rel < opts.loglik_rel_tol {
                converged = true;
                break;
            }
        }
        Ok(IrlsOutcome {
            beta,
            loglik,
            iterations,
            converged,
            last_step,
        })
    }
}

/// Names of coefficients still moving by more than `tol` per iteration.
pub(crate) fn drifting(design: &DesignMatrix, step: &[f64], tol: f64) -> Vec<String> {
    step.iter()
        .enumerate()
        .filter(|(_, s)| s.abs() > tol)
        .map(|(j, _)| design.columns()[j].clone())
        .collect()
}
