//! Structural covariates and the log-linear design matrix.

mod attributes;
mod design;
mod geo;
mod spec;

pub use attributes::{
    read_countries_csv, read_dyads_csv, read_media_csv, write_countries_csv, write_dyads_csv,
    write_media_csv, CountryAttributes, CountryTable, Covariates, Dyad, DyadTable, MediaOutlet,
};
pub use design::{build_design, build_design_with_offsets, kickoff_indicator, CellKey, DesignMatrix, ExclusionReport, OffsetSource};
pub use geo::{great_circle_distance, EARTH_RADIUS_KM};
pub use spec::{ModelSpec, OffsetMode, Term};

use thiserror::Error;

use crate::newscube::CubeError;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("missing covariate: {0}")]
    MissingCovariate(String),
    #[error("country {iso3}: {field} must be strictly positive")]
    NonpositiveCovariate { iso3: String, field: &'static str },
    #[error("kick-off indicator is undefined for the first week")]
    FirstWeekUndefined,
    #[error("invalid attribute: {0}")]
    InvalidAttribute(String),
    #[error("dyad {a}-{b} is given twice with different values")]
    Asymmetric { a: String, b: String },
    #[error("unknown model term `{0}`")]
    UnknownTerm(String),
    #[error("model term `{0}` appears twice")]
    DuplicateTerm(String),
    #[error("design shape: {0}")]
    Shape(String),
    #[error("non-finite value in row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("no usable rows left after exclusions")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
