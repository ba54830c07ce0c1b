//! Gravity-type spatial interaction models of international news flows.
//!
//! The crate is organised along the analysis pipeline:
//!
//! * [`newscube`] ingests pre-tagged news items into the media × week × country
//!   cube and its weighted companion.
//! * [`covariates`] holds structural country and dyad covariates and assembles
//!   the log-linear design matrix.
//! * [`countglm`] fits Poisson, negative binomial (NB2) and zero-inflated
//!   Poisson regressions by maximum likelihood.
//! * [`estimate`] runs the global, per-week and per-media estimations, model
//!   selection, choice probabilities and synthetic cube simulation.
//! * [`analyze`] derives residual salience, coverage series, PCA and Ward
//!   typologies of media.

pub mod analyze;
pub mod countglm;
pub mod covariates;
pub mod estimate;
pub mod newscube;
mod serde_float;

pub use analyze::{ClusterResult, Pca, ResidualTable};
pub use countglm::{Family, FitResult, GlmError};
pub use covariates::{CountryAttributes, DesignMatrix, Dyad, DyadTable, MediaOutlet, ModelSpec, Term};
pub use estimate::{EstimationRun, ParamMatrix, Scope, SimParams};
pub use newscube::{Layer, NewsCube, NewsItem, WeekCalendar};
