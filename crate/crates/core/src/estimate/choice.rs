use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EstimateError;
use crate::countglm::FitResult;
use crate::covariates::DesignMatrix;

/// Probability that an outlet picks each country in one week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRow {
    pub media: String,
    pub week: usize,
    pub country: String,
    /// μ̂ / Σ μ̂ over the week's countries.
    pub probability: f64,
    /// μ̂ divided by the outlet's weekly volume, before renormalization.
    pub unnormalized: f64,
}

fn label(design: &DesignMatrix, i: usize) -> (String, usize, String) {
    match design.keys().get(i) {
        Some(k) => (
            design.media()[k.media as usize].clone(),
            k.week as usize,
            design.countries()[k.country as usize].clone(),
        ),
        None => (String::new(), 0, i.to_string()),
    }
}

/// Choice probabilities over the rows of `design`, which should cover one
/// (media, week). Normalized on the log scale so equal predictors give
/// exactly 1/P.
pub fn choice_probabilities(fit: &FitResult, design: &DesignMatrix) -> Result<Vec<ChoiceRow>, EstimateError> {
    let log_mu = fit.log_mean(design)?;
    let top = log_mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (media, week, _) = label(design, 0);
    if !top.is_finite() {
        return Err(EstimateError::AllZeroPrediction { media, week });
    }
    let rel: Vec<f64> = log_mu.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = rel.iter().sum();
    Ok((0..design.n_rows())
        .map(|i| {
            let (media, week, country) = label(design, i);
            ChoiceRow {
                media,
                week,
                country,
                probability: rel[i] / total,
                unnormalized: (log_mu[i] - design.offset()[i]).exp(),
            }
        })
        .collect())
}

/// Choice probabilities for every (media, week) in `design`.
pub fn choice_table(fit: &FitResult, design: &DesignMatrix) -> Result<Vec<ChoiceRow>, EstimateError> {
    let mut groups: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, k) in design.keys().iter().enumerate() {
        groups.entry((k.media, k.week)).or_default().push(i);
    }
    let mut out = Vec::with_capacity(design.n_rows());
    for rows in groups.values() {
        out.extend(choice_probabilities(fit, &design.subset(rows))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::countglm::fit_poisson;

    fn toy() -> (FitResult, DesignMatrix) {
        let cols = vec!["intercept".to_string(), "x".to_string()];
        let x = vec![1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 0.5];
        let d = DesignMatrix::from_parts(cols, x, vec![1.0, 3.0, 5.0, 2.0], None, None).unwrap();
        let mut fit = fit_poisson(&d).unwrap();
        fit.coefficients = vec![-3.735, 0.505];
        (fit, d)
    }

    #[test]
    fn hand_computed_probabilities() {
        let (fit, d) = toy();
        let rows = choice_probabilities(&fit, &d).unwrap();
        let w: Vec<f64> = [0.0, 1.0, 2.0, 0.5].iter().map(|x: &f64| (-3.735 + 0.505 * x).exp()).collect();
        let s: f64 = w.iter().sum();
        for (r, wi) in rows.iter().zip(&w) {
            assert!((r.probability - wi / s).abs() < 1e-14);
            assert!((r.unnormalized - wi).abs() < 1e-14);
        }
        let total: f64 = rows.iter().map(|r| r.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_predictors_give_uniform_choice() {
        let (mut fit, d) = toy();
        fit.coefficients = vec![0.7, 0.0];
        for r in choice_probabilities(&fit, &d).unwrap() {
            assert_eq!(r.probability, 0.25);
        }
    }

    #[test]
    fn dominant_country_takes_all() {
        let (mut fit, d) = toy();
        fit.coefficients = vec![0.0, 800.0];
        let rows = choice_probabilities(&fit, &d).unwrap();
        assert_eq!(rows[2].probability, 1.0);
        assert_eq!(rows[0].probability, 0.0);
    }
}
