//! Global, per-week and per-media estimation, model selection, choice
//! probabilities and synthetic cubes drawn from a known model.

mod choice;
mod output;
mod runs;
mod simulate;

pub use choice::{choice_probabilities, choice_table, ChoiceRow};
pub use output::{
    read_params_csv, read_run_json, write_byweek_dev_csv, write_byweek_z_csv, write_bymedia_csv, write_choiceprobs_csv,
    write_run_json, write_table4_csv, write_table5_csv,
};
pub use runs::{
    fit_by_media, fit_by_media_design, fit_by_week, fit_by_week_design, fit_global, global_run, model_selection,
    ByMedia, ByWeek, SelectionRow, WeekSummary,
};
pub use simulate::{simulate_cube, synthetic_world, SimOffsets, SimParams, Simulated, SyntheticWorld};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::countglm::{FitResult, GlmError};
use crate::covariates::{DesignError, DesignMatrix, ModelSpec};
use crate::newscube::CubeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    ByWeek,
    ByMedia,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Global => "global",
            Scope::ByWeek => "by_week",
            Scope::ByMedia => "by_media",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which slice of the data one fit covers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKey {
    All,
    Week(usize),
    Media(String),
}

impl fmt::Display for ScopeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScopeKey::All => f.write_str("all"),
            ScopeKey::Week(t) => write!(f, "week {t}"),
            ScopeKey::Media(m) => write!(f, "media {m}"),
        }
    }
}

/// One fitted slice. `dropped` lists terms that were constant within the
/// slice and therefore left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceFit {
    pub key: ScopeKey,
    pub fit: FitResult,
    #[serde(default)]
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceFailure {
    pub key: ScopeKey,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRun {
    pub scope: Scope,
    pub spec: ModelSpec,
    /// Column names of the full design.
    pub columns: Vec<String>,
    /// Converged and non-converged fits in key order.
    pub fits: Vec<SliceFit>,
    pub failures: Vec<SliceFailure>,
    pub design_digest: String,
}

impl EstimationRun {
    pub fn fit(&self, key: &ScopeKey) -> Option<&SliceFit> {
        self.fits.iter().find(|f| &f.key == key)
    }

    pub fn by_key(&self) -> BTreeMap<&ScopeKey, &SliceFit> {
        self.fits.iter().map(|f| (&f.key, f)).collect()
    }

    pub fn n_converged(&self) -> usize {
        self.fits.iter().filter(|f| f.fit.converged).count()
    }

    /// Keys of slices without a usable (converged) fit.
    pub fn holes(&self) -> Vec<ScopeKey> {
        let mut out: Vec<ScopeKey> = self.failures.iter().map(|f| f.key.clone()).collect();
        out.extend(self.fits.iter().filter(|f| !f.fit.converged).map(|f| f.key.clone()));
        out.sort();
        out
    }

    /// SHA-256 over the serialized run.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("run serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// The slice key a design row belongs to under this run's scope.
    pub fn key_for_row(&self, design: &DesignMatrix, row: usize) -> ScopeKey {
        let k = design.keys()[row];
        match self.scope {
            Scope::Global => ScopeKey::All,
            Scope::ByWeek => ScopeKey::Week(k.week as usize),
            Scope::ByMedia => ScopeKey::Media(design.media()[k.media as usize].clone()),
        }
    }

    /// Expected response for every row of `design` (built with this run's
    /// spec) from the fit of the row's slice; NaN where the slice has no
    /// converged fit.
    pub fn predict(&self, design: &DesignMatrix) -> Result<Vec<f64>, EstimateError> {
        if design.columns() != self.columns.as_slice() {
            return Err(EstimateError::Mismatch(format!(
                "design columns {:?} differ from the run's {:?}",
                design.columns(),
                self.columns
            )));
        }
        let mut out = vec![f64::NAN; design.n_rows()];
        let mut groups: BTreeMap<ScopeKey, Vec<usize>> = BTreeMap::new();
        for i in 0..design.n_rows() {
            groups.entry(self.key_for_row(design, i)).or_default().push(i);
        }
        for (key, rows) in groups {
            let Some(slice) = self.fit(&key).filter(|s| s.fit.converged) else { continue };
            let sub = design.subset(&rows).select_columns(&slice.fit.terms)?;
            let mu = slice.fit.predict(&sub)?;
            for (r, m) in rows.into_iter().zip(mu) {
                out[r] = m;
            }
        }
        Ok(out)
    }
}

/// Per-media coefficients (rows) by term (columns), with z-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMatrix {
    pub media: Vec<String>,
    pub terms: Vec<String>,
    /// Row-major `media × terms`.
    pub values: Vec<f64>,
    pub z_values: Vec<f64>,
    /// Media left out, with the reason.
    pub excluded: Vec<(String, String)>,
}

impl ParamMatrix {
    pub fn n_rows(&self) -> usize {
        self.media.len()
    }

    pub fn n_cols(&self) -> usize {
        self.terms.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.terms.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let p = self.terms.len();
        &self.values[row * p..(row + 1) * p]
    }

    /// The same layout with z-values in place of coefficients.
    pub fn z_matrix(&self) -> ParamMatrix {
        ParamMatrix {
            values: self.z_values.clone(),
            ..self.clone()
        }
    }

    /// Builds the matrix from a by-media run. Terms default to the run's
    /// columns without the intercept; media missing any of them are excluded.
    pub fn from_run(run: &EstimationRun, terms: Option<&[String]>) -> ParamMatrix {
        let terms: Vec<String> = match terms {
            Some(t) => t.to_vec(),
            None => run.columns.iter().filter(|c| *c != "intercept").cloned().collect(),
        };
        let mut media = Vec::new();
        let mut values = Vec::new();
        let mut z_values = Vec::new();
        let mut excluded = Vec::new();
        for f in &run.failures {
            if let ScopeKey::Media(m) = &f.key {
                excluded.push((m.clone(), f.error.clone()));
            }
        }
        for slice in &run.fits {
            let ScopeKey::Media(m) = &slice.key else { continue };
            if !slice.fit.converged {
                excluded.push((m.clone(), "fit did not converge".into()));
                continue;
            }
            let missing: Vec<&String> = terms.iter().filter(|t| slice.fit.coefficient(t).is_none()).collect();
            if !missing.is_empty() {
                excluded.push((m.clone(), format!("terms not estimable: {missing:?}")));
                continue;
            }
            media.push(m.clone());
            for t in &terms {
                values.push(slice.fit.coefficient(t).unwrap());
                z_values.push(slice.fit.z_value(t).unwrap());
            }
        }
        excluded.sort();
        ParamMatrix {
            media,
            terms,
            values,
            z_values,
            excluded,
        }
    }
}

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("predicted intensities sum to zero for media {media}, week {week}")]
    AllZeroPrediction { media: String, week: usize },
    #[error("{0}")]
    TooFewUnits(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("every fit failed")]
    AllFailed,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
