use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EstimateError, EstimationRun, ParamMatrix, Scope, ScopeKey, SliceFailure, SliceFit};
use crate::countglm::{self, Family, GlmError};
use crate::covariates::{build_design, Covariates, DesignMatrix, ModelSpec};
use crate::newscube::{Layer, NewsCube};

fn fit_slice(design: &DesignMatrix, family: Family, key: ScopeKey, drop_constant: bool) -> Result<SliceFit, SliceFailure> {
    let (d, dropped) = if drop_constant {
        design.without_constant_columns()
    } else {
        (design.clone(), Vec::new())
    };
    let outcome = countglm::fit(&d, family);
    match outcome {
        Ok(fit) => {
            log::info!("{key}: {family} fit converged in {} iterations", fit.iterations);
            Ok(SliceFit { key, fit, dropped })
        }
        Err(GlmError::NotConverged { fit, iterations }) => {
            log::warn!("{key}: {family} fit stopped after {iterations} iterations without converging");
            Ok(SliceFit {
                key,
                fit: *fit,
                dropped,
            })
        }
        Err(e) => {
            log::warn!("{key}: {family} fit failed: {e}");
            Err(SliceFailure {
                key,
                error: e.to_string(),
            })
        }
    }
}

fn assemble(scope: Scope, spec: &ModelSpec, design: &DesignMatrix, results: Vec<Result<SliceFit, SliceFailure>>) -> EstimationRun {
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => failures.push(e),
        }
    }
    fits.sort_by(|a, b| a.key.cmp(&b.key));
    failures.sort_by(|a, b| a.key.cmp(&b.key));
    EstimationRun {
        scope,
        spec: spec.clone(),
        columns: design.columns().to_vec(),
        fits,
        failures,
        design_digest: design.digest(),
    }
}

/// One fit pooling every (media, week, country) row.
pub fn fit_global(cube: &NewsCube, cov: &Covariates, spec: &ModelSpec) -> Result<countglm::FitResult, EstimateError> {
    let design = build_design(cube, cov, spec)?;
    Ok(countglm::fit(&design, spec.family)?)
}

/// The global fit wrapped as a run; a failed fit is recorded, not returned.
pub fn global_run(design: &DesignMatrix, spec: &ModelSpec) -> EstimationRun {
    let r = fit_slice(design, spec.family, ScopeKey::All, false);
    assemble(Scope::Global, spec, design, vec![r])
}

/// Per-week summary used for the z-value and deviance-explained series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekSummary {
    pub week: usize,
    pub converged: bool,
    /// One entry per run column; NaN for constant or failed terms.
    #[serde(with = "crate::serde_float::vec")]
    pub z: Vec<f64>,
    pub deviance_explained: Option<f64>,
    pub clamped: bool,
    pub null_deviance: Option<f64>,
    pub residual_deviance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ByWeek {
    pub run: EstimationRun,
    pub weeks: Vec<WeekSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ByMedia {
    pub run: EstimationRun,
    pub params: ParamMatrix,
}

fn distinct_weeks(design: &DesignMatrix) -> Vec<usize> {
    design.keys().iter().map(|k| k.week as usize).collect::<BTreeSet<_>>().into_iter().collect()
}

fn distinct_media(design: &DesignMatrix) -> Vec<usize> {
    design.keys().iter().map(|k| k.media as usize).collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn fit_by_week(cube: &NewsCube, cov: &Covariates, spec: &ModelSpec) -> Result<ByWeek, EstimateError> {
    let design = build_design(cube, cov, spec)?;
    fit_by_week_design(&design, spec)
}

/// An independent fit for every week present in `design`, pooling media.
pub fn fit_by_week_design(design: &DesignMatrix, spec: &ModelSpec) -> Result<ByWeek, EstimateError> {
    let weeks = distinct_weeks(design);
    if weeks.len() < 2 {
        return Err(EstimateError::TooFewUnits(format!("{} usable week(s); need at least 2", weeks.len())));
    }
    let results: Vec<_> = weeks
        .par_iter()
        .map(|&t| {
            let rows = design.rows_where(|k| k.week as usize == t);
            fit_slice(&design.subset(&rows), spec.family, ScopeKey::Week(t), true)
        })
        .collect();
    let run = assemble(Scope::ByWeek, spec, design, results);
    let weeks = weeks
        .into_iter()
        .map(|t| {
            let slice = run.fit(&ScopeKey::Week(t));
            let z = run
                .columns
                .iter()
                .map(|c| slice.and_then(|s| s.fit.z_value(c)).unwrap_or(f64::NAN))
                .collect();
            let de = slice.and_then(|s| s.fit.deviance_explained().ok());
            WeekSummary {
                week: t,
                converged: slice.is_some_and(|s| s.fit.converged),
                z,
                deviance_explained: de.map(|d| d.value),
                clamped: de.is_some_and(|d| d.clamped),
                null_deviance: slice.map(|s| s.fit.null_deviance),
                residual_deviance: slice.map(|s| s.fit.residual_deviance),
            }
        })
        .collect();
    Ok(ByWeek { run, weeks })
}

pub fn fit_by_media(cube: &NewsCube, cov: &Covariates, spec: &ModelSpec) -> Result<ByMedia, EstimateError> {
    let design = build_design(cube, cov, spec)?;
    fit_by_media_design(&design, spec)
}

/// An independent fit for every outlet present in `design`, pooling weeks.
pub fn fit_by_media_design(design: &DesignMatrix, spec: &ModelSpec) -> Result<ByMedia, EstimateError> {
    let media = distinct_media(design);
    if media.is_empty() {
        return Err(EstimateError::TooFewUnits("no media rows in the design".into()));
    }
    let results: Vec<_> = media
        .par_iter()
        .map(|&m| {
            let rows = design.rows_where(|k| k.media as usize == m);
            let key = ScopeKey::Media(design.media()[m].clone());
            fit_slice(&design.subset(&rows), spec.family, key, true)
        })
        .collect();
    let run = assemble(Scope::ByMedia, spec, design, results);
    let params = ParamMatrix::from_run(&run, None);
    Ok(ByMedia { run, params })
}

/// One cell of the family × layer comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub family: Family,
    pub layer: Layer,
    pub df: Option<usize>,
    pub aic: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub theta: Option<f64>,
    pub converged: bool,
    /// Smallest AIC among the cells sharing this layer.
    pub best_in_layer: bool,
    pub error: Option<String>,
}

/// Fits every family on both layers, sorted by AIC with failed cells last.
pub fn model_selection(cube: &NewsCube, cov: &Covariates, base: &ModelSpec) -> Result<Vec<SelectionRow>, EstimateError> {
    let cells: Vec<(Family, Layer)> = [Layer::Raw, Layer::Weighted]
        .into_iter()
        .flat_map(|l| Family::ALL.into_iter().map(move |f| (f, l)))
        .collect();
    let designs: Vec<(Layer, DesignMatrix)> = [Layer::Raw, Layer::Weighted]
        .into_iter()
        .map(|l| Ok((l, build_design(cube, cov, &base.with_layer(l))?)))
        .collect::<Result<_, EstimateError>>()?;
    let mut rows: Vec<SelectionRow> = cells
        .par_iter()
        .map(|&(family, layer)| {
            let design = &designs.iter().find(|(l, _)| *l == layer).expect("both layers built").1;
            let empty = SelectionRow {
                family,
                layer,
                df: None,
                aic: None,
                log_likelihood: None,
                theta: None,
                converged: false,
                best_in_layer: false,
                error: None,
            };
            let fit = match countglm::fit(design, family) {
                Ok(fit) => fit,
                Err(GlmError::NotConverged { fit, .. }) => *fit,
                Err(e) => {
                    return SelectionRow {
                        error: Some(e.to_string()),
                        ..empty
                    }
                }
            };
            SelectionRow {
                df: Some(fit.df),
                aic: Some(fit.aic),
                log_likelihood: Some(fit.log_likelihood),
                theta: fit.theta,
                converged: fit.converged,
                ..empty
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.aic, b.aic) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => (a.layer.as_str(), a.family).cmp(&(b.layer.as_str(), b.family)),
    });
    for layer in [Layer::Raw, Layer::Weighted] {
        if let Some(best) = rows.iter_mut().find(|r| r.layer == layer && r.converged && r.aic.is_some()) {
            best.best_in_layer = true;
        }
    }
    Ok(rows)
}
