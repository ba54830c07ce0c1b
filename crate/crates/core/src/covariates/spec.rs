use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DesignError;
use crate::countglm::Family;
use crate::newscube::Layer;

/// Structural covariates available to the model, in their log-linear form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// ln(area)
    LogSup,
    /// ln(population / area)
    LogDensity,
    /// ln(GDP / population)
    LogGdpc,
    Pm5,
    G14,
    Vat,
    /// −ln(distance)
    LogInvdist,
    Lang,
    /// Outlet covered the country during the previous week.
    Kickoff,
}

impl Term {
    pub const ALL: [Term; 9] = [
        Term::LogSup,
        Term::LogDensity,
        Term::LogGdpc,
        Term::Pm5,
        Term::G14,
        Term::Vat,
        Term::LogInvdist,
        Term::Lang,
        Term::Kickoff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::LogSup => "log_sup",
            Term::LogDensity => "log_density",
            Term::LogGdpc => "log_gdpc",
            Term::Pm5 => "pm5",
            Term::G14 => "g14",
            Term::Vat => "vat",
            Term::LogInvdist => "log_invdist",
            Term::Lang => "lang",
            Term::Kickoff => "kickoff",
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Term {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Term::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| DesignError::UnknownTerm(s.to_string()))
    }
}

/// How the weekly output of an outlet enters the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    /// log F_mt with coefficient fixed at one.
    #[default]
    Fixed,
    /// log F_mt as a free `log_volume` column; dropped when it is constant,
    /// as on the weighted layer.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub terms: Vec<Term>,
    pub family: Family,
    pub response_layer: Layer,
    pub include_home: bool,
    #[serde(default)]
    pub offset_mode: OffsetMode,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            terms: Term::ALL.to_vec(),
            family: Family::NegBin,
            response_layer: Layer::Weighted,
            include_home: false,
            offset_mode: OffsetMode::Fixed,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), DesignError> {
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(DesignError::DuplicateTerm(t.name().to_string()));
            }
        }
        Ok(())
    }

    pub fn has_kickoff(&self) -> bool {
        self.terms.contains(&Term::Kickoff)
    }

    pub fn with_family(&self, family: Family) -> Self {
        Self { family, ..self.clone() }
    }

    pub fn with_layer(&self, response_layer: Layer) -> Self {
        Self {
            response_layer,
            ..self.clone()
        }
    }

    pub fn without(&self, term: Term) -> Self {
        Self {
            terms: self.terms.iter().copied().filter(|t| *t != term).collect(),
            ..self.clone()
        }
    }

    /// Parses a comma-separated term list.
    pub fn parse_terms(s: &str) -> Result<Vec<Term>, DesignError> {
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(Term::from_str).collect()
    }
}
