use thiserror::Error;

use crate::model::AdmissibilityReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at {context}: expected {expected}, got {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value evaluating {what} at {point}")]
    NonFinite { what: String, point: String },

    #[error("trajectory is not admissible ({} violations)", .0.violations.len())]
    Inadmissible(Box<AdmissibilityReport>),

    #[error("horizon {requested} exceeds the materialized horizon {available}")]
    Horizon { requested: usize, available: usize },

    #[error("singular state differential at t = {t} (condition estimate {condition:e})")]
    Singular { t: usize, condition: f64 },

    #[error("nonpositive diagonal bound gamma_t = {gamma} at t = {t}")]
    NonMonotone { t: usize, gamma: f64 },

    #[error("constraint {index} violated by {value:e} (tolerance {tol:e})")]
    ConstraintViolated { index: usize, value: f64, tol: f64 },

    #[error("{variant} requires {expected} controls, problem has {found}")]
    VariantMismatch {
        variant: String,
        expected: String,
        found: String,
    },

    #[error("hypothesis of {variant} fails at t = {t}: {detail}")]
    Hypothesis {
        variant: String,
        t: usize,
        detail: String,
    },

    #[error("rank-deficient basis: rank {rank} < {rows}")]
    RankDeficient { rank: usize, rows: usize },

    #[error("span and hull intersect; no disjointness witness")]
    NotDisjoint,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
