use serde::{Deserialize, Serialize};

use super::special::two_sided_p;
use super::{FitResult, GlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldRow {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p: f64,
}

/// z = estimate / se with its two-sided normal p-value.
pub fn wald_statistic(estimate: f64, std_error: f64) -> (f64, f64) {
    if estimate == 0.0 {
        return (0.0, 1.0);
    }
    let z = estimate / std_error;
    (z, two_sided_p(z))
}

/// One row per coefficient; zero-part rows are prefixed `zero_`.
pub fn wald_report(fit: &FitResult) -> Result<Vec<WaldRow>, GlmError> {
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    let count = fit.terms.iter().zip(fit.coefficients.iter().zip(&fit.std_errors));
    let zero = fit
        .zero_terms
        .iter()
        .map(|t| format!("zero_{t}"))
        .zip(fit.zero_model_coefficients.iter().zip(&fit.zero_std_errors));
    for (term, (est, se)) in count.map(|(t, v)| (t.clone(), v)).chain(zero) {
        if !(se.is_finite() && *se > 0.0) {
            bad.push(term.clone());
            continue;
        }
        let (z, p) = wald_statistic(*est, *se);
        rows.push(WaldRow {
            term,
            estimate: *est,
            std_error: *se,
            z,
            p,
        });
    }
    if bad.is_empty() {
        Ok(rows)
    } else {
        Err(GlmError::NonInvertibleInformation { columns: bad })
    }
}
