//! News items, the media × week × country cube and salience tables.

mod calendar;
mod cube;
mod item;
mod salience;

pub use calendar::WeekCalendar;
pub use cube::{
    build_cube, build_cube_parallel, read_cube_csv, write_cube_csv, CubeBuilder, IngestReport,
    NewsCube, UnknownCountryPolicy, WeightingReport,
};
pub use item::{allocate_item, parse_timestamp, read_items_csv, read_items_jsonl, NewsItem, RawItem};
pub use salience::{salience_table, write_salience_csv, SalienceRow};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which layer of the cube a computation reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Raw,
    #[default]
    Weighted,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Raw => "raw",
            Layer::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for Layer {
    type Err = CubeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "raw" => Ok(Layer::Raw),
            "weighted" | "normalized" | "standardized" => Ok(Layer::Weighted),
            other => Err(CubeError::Parse {
                line: 0,
                message: format!("unknown layer `{other}` (expected raw or weighted)"),
            }),
        }
    }
}

impl std::fmt::Display for Layer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum CubeError {
    #[error("date {date} is outside the observation window")]
    OutOfWindow { date: NaiveDate },
    #[error("news item has an empty country set")]
    EmptyCountrySet,
    #[error("invalid calendar: {0}")]
    InvalidCalendar(String),
    #[error("duplicate {kind} code `{code}`")]
    DuplicateCode { kind: &'static str, code: String },
    #[error("unknown country `{0}`")]
    UnknownCountry(String),
    #[error("unknown media `{0}`")]
    UnknownMedia(String),
    #[error("{0} layer has not been filled")]
    LayerMissing(Layer),
    #[error("cube shape mismatch: {0}")]
    Shape(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An ISO 3166 alpha-3 code is three ASCII upper-case letters.
pub(crate) fn is_iso3(code: &str) -> bool {
    code.len() == 3 && code.bytes().all(|b| b.is_ascii_uppercase())
}
