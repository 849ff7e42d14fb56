use thiserror::Error;

/// Errors surfaced by model construction, oracles, kernels and estimators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration is {got_rows}x{got_cols} but the model is {rows}x{cols}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("lattice has {sites} sites; exact enumeration is capped at {max} sites")]
    LatticeTooLarge { sites: usize, max: usize },

    #[error("spin vector has length {len}, expected {rows}x{cols} = {expected}")]
    SpinLength {
        len: usize,
        rows: usize,
        cols: usize,
        expected: usize,
    },

    #[error("spin value {value} at site {site} is not -1 or +1")]
    InvalidSpin { site: usize, value: i8 },

    #[error("lattice dimensions must be positive, got {rows}x{cols}")]
    EmptyLattice { rows: usize, cols: usize },

    #[error("invalid bridge schedule: {reason}")]
    InvalidSchedule { reason: String },

    #[error("schedule level {level} out of range 1..={levels}")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("site {site} out of range for a {sites}-site lattice")]
    SiteOutOfRange { site: usize, sites: usize },

    #[error("parameter {name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
