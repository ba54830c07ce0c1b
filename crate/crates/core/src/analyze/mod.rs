//! Post-estimation analytics: residual salience, coverage series, PCA of the
//! per-media parameters and Ward clustering of outlets.

mod output;
mod pca;
mod residuals;
mod ward;

pub use output::{
    write_assignments_csv, write_coverage_csv, write_dendrogram_json, write_pca_loadings_csv, write_pca_scores_csv,
    write_residuals_csv,
};
pub use pca::{pca, Pca};
pub use residuals::{
    cell_residuals, coverage_series, coverage_series_design, residuals_by_country, residuals_by_country_design,
    CellResidual, CountryResidual, CoverageRow, ResidualTable,
};
pub use ward::{ward_cluster, ClusterResult, Merge};

use thiserror::Error;

use crate::covariates::DesignError;
use crate::estimate::EstimateError;
use crate::newscube::CubeError;

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("column `{column}` has zero variance")]
    DegenerateMatrix { column: String },
    #[error("{0}")]
    TooSmall(String),
    #[error("cannot cut {n} rows into {k} clusters")]
    InvalidK { k: usize, n: usize },
    #[error("unknown country `{0}`")]
    UnknownCountry(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Column means and (when `standardize`) sample standard deviations;
/// `None` names the first zero-variance column.
pub(crate) fn column_moments(values: &[f64], n: usize, p: usize, standardize: bool) -> (Vec<f64>, Vec<f64>, Option<usize>) {
    let mut means = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            means[j] += values[i * p + j];
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut scales = vec![1.0; p];
    let mut degenerate = None;
    for j in 0..p {
        let ss: f64 = (0..n).map(|i| (values[i * p + j] - means[j]).powi(2)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if !(sd > 1e-300) {
            degenerate.get_or_insert(j);
            continue;
        }
        if standardize {
            scales[j] = sd;
        }
    }
    (means, scales, degenerate)
}
