use thiserror::Error;

/// Errors raised by the localization library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time index {index} out of range for trajectory with {len} samples")]
    TimeIndexOutOfRange { index: usize, len: usize },

    #[error("base station index {index} out of range ({len} base stations)")]
    StationIndexOutOfRange { index: usize, len: usize },

    #[error("degenerate geometry: distance {distance:.6} m is below d_min = {d_min} m")]
    DegenerateGeometry { distance: f64, d_min: f64 },

    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(
        "objective slice `{0}` selects a single cell; the profiled objective is identically zero"
    )]
    SingleCellSlice(String),

    #[error("no feasible grid node: every node is closer than d_min to some base station")]
    EmptyFeasibleSet,

    #[error("Fisher matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularFisher { condition: f64 },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidField {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors caused by numerics or geometry rather than malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGeometry { .. }
                | Error::EmptyFeasibleSet
                | Error::SingularFisher { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
