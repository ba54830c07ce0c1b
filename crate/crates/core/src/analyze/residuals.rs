use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::AnalyzeError;
use crate::countglm::FitResult;
use crate::covariates::{build_design, Covariates, DesignMatrix};
use crate::estimate::{EstimationRun, Scope, ScopeKey};
use crate::newscube::NewsCube;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryResidual {
    pub country: String,
    pub observed: f64,
    pub predicted: f64,
    /// observed − predicted
    pub residual: f64,
    /// residual over the square root of the summed model variance
    pub pearson: f64,
    /// 1 for the largest positive residual.
    pub rank: usize,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    pub rows: Vec<CountryResidual>,
    /// Design rows whose slice had no converged fit.
    pub skipped_rows: usize,
}

impl ResidualTable {
    pub fn get(&self, country: &str) -> Option<&CountryResidual> {
        self.rows.iter().find(|r| r.country == country)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResidual {
    pub media: String,
    pub week: usize,
    pub country: String,
    pub observed: f64,
    pub predicted: f64,
    pub residual: f64,
    pub pearson: f64,
}

/// Looks up the converged fit responsible for each design row.
struct RowFits<'a> {
    scope: Scope,
    all: Option<&'a FitResult>,
    keyed: HashMap<ScopeKey, &'a FitResult>,
    media_keys: Vec<ScopeKey>,
}

impl<'a> RowFits<'a> {
    fn new(run: &'a EstimationRun, design: &DesignMatrix) -> Self {
        let keyed: HashMap<ScopeKey, &FitResult> = run
            .fits
            .iter()
            .filter(|s| s.fit.converged)
            .map(|s| (s.key.clone(), &s.fit))
            .collect();
        Self {
            scope: run.scope,
            all: keyed.get(&ScopeKey::All).copied(),
            media_keys: design.media().iter().map(|m| ScopeKey::Media(m.clone())).collect(),
            keyed,
        }
    }

    fn get(&self, design: &DesignMatrix, i: usize) -> Option<&'a FitResult> {
        let k = design.keys()[i];
        match self.scope {
            Scope::Global => self.all,
            Scope::ByWeek => self.keyed.get(&ScopeKey::Week(k.week as usize)).copied(),
            Scope::ByMedia => self.keyed.get(&self.media_keys[k.media as usize]).copied(),
        }
    }
}

fn predictions(design: &DesignMatrix, run: &EstimationRun) -> Result<(Vec<f64>, Vec<f64>), AnalyzeError> {
    let mu = run.predict(design)?;
    let fits = RowFits::new(run, design);
    let var = (0..design.n_rows())
        .map(|i| fits.get(design, i).map_or(f64::NAN, |f| f.variance(mu[i])))
        .collect();
    Ok((mu, var))
}

/// Observed and predicted totals per country over all media and weeks of
/// `design`, ranked by raw residual.
pub fn residuals_by_country_design(design: &DesignMatrix, run: &EstimationRun) -> Result<ResidualTable, AnalyzeError> {
    let (mu, var) = predictions(design, run)?;
    let n_p = design.countries().len();
    let mut obs = vec![0.0; n_p];
    let mut pred = vec![0.0; n_p];
    let mut v = vec![0.0; n_p];
    let mut cells = vec![0usize; n_p];
    let mut skipped = 0;
    for i in 0..design.n_rows() {
        if !mu[i].is_finite() {
            skipped += 1;
            continue;
        }
        let p = design.keys()[i].country as usize;
        obs[p] += design.y()[i];
        pred[p] += mu[i];
        v[p] += var[i];
        cells[p] += 1;
    }
    let mut rows: Vec<CountryResidual> = (0..n_p)
        .filter(|&p| cells[p] > 0)
        .map(|p| {
            let residual = obs[p] - pred[p];
            CountryResidual {
                country: design.countries()[p].clone(),
                observed: obs[p],
                predicted: pred[p],
                residual,
                pearson: if v[p] > 0.0 { residual / v[p].sqrt() } else { 0.0 },
                rank: 0,
                cells: cells[p],
            }
        })
        .collect();
    rows.sort_by(|a, b| b.residual.total_cmp(&a.residual).then_with(|| a.country.cmp(&b.country)));
    for (r, row) in rows.iter_mut().enumerate() {
        row.rank = r + 1;
    }
    Ok(ResidualTable {
        rows,
        skipped_rows: skipped,
    })
}

/// Builds the run's design from `cube` and aggregates residuals by country.
pub fn residuals_by_country(cube: &NewsCube, cov: &Covariates, run: &EstimationRun) -> Result<ResidualTable, AnalyzeError> {
    let design = build_design(cube, cov, &run.spec)?;
    residuals_by_country_design(&design, run)
}

/// Residuals of every (media, week, country) row with a converged fit.
pub fn cell_residuals(design: &DesignMatrix, run: &EstimationRun) -> Result<Vec<CellResidual>, AnalyzeError> {
    let (mu, var) = predictions(design, run)?;
    Ok((0..design.n_rows())
        .filter(|&i| mu[i].is_finite())
        .map(|i| {
            let k = design.keys()[i];
            let residual = design.y()[i] - mu[i];
            CellResidual {
                media: design.media()[k.media as usize].clone(),
                week: k.week as usize,
                country: design.countries()[k.country as usize].clone(),
                observed: design.y()[i],
                predicted: mu[i],
                residual,
                pearson: if var[i] > 0.0 { residual / var[i].sqrt() } else { 0.0 },
            }
        })
        .collect())
}

/// One (media, week) cell of a country's coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub media: String,
    pub week: usize,
    pub observed: f64,
    /// `None` for cells outside the design (home country, first week with
    /// kickoff, silent media-weeks) or without a converged fit.
    pub predicted: Option<f64>,
}

/// Media × weeks table of observed and predicted counts for one country.
pub fn coverage_series_design(
    cube: &NewsCube,
    design: &DesignMatrix,
    run: &EstimationRun,
    country: &str,
) -> Result<Vec<CoverageRow>, AnalyzeError> {
    let p = cube
        .country_index(country)
        .ok_or_else(|| AnalyzeError::UnknownCountry(country.to_string()))?;
    let layer = cube.layer(run.spec.response_layer)?;
    let rows = design.rows_where(|k| k.country as usize == p);
    let sub = design.subset(&rows);
    let mu = run.predict(&sub)?;
    let mut predicted: HashMap<(u32, u32), f64> = HashMap::new();
    for (i, k) in sub.keys().iter().enumerate() {
        if mu[i].is_finite() {
            predicted.insert((k.media, k.week), mu[i]);
        }
    }
    let mut out = Vec::with_capacity(cube.n_media() * cube.n_weeks());
    for m in 0..cube.n_media() {
        for t in 0..cube.n_weeks() {
            out.push(CoverageRow {
                media: cube.media()[m].clone(),
                week: t,
                observed: layer[cube.index(m, t, p)],
                predicted: predicted.get(&(m as u32, t as u32)).copied(),
            });
        }
    }
    Ok(out)
}

pub fn coverage_series(cube: &NewsCube, cov: &Covariates, run: &EstimationRun, country: &str) -> Result<Vec<CoverageRow>, AnalyzeError> {
    if cube.country_index(country).is_none() {
        return Err(AnalyzeError::UnknownCountry(country.to_string()));
    }
    let design = build_design(cube, cov, &run.spec)?;
    coverage_series_design(cube, &design, run, country)
}
