use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} outcome values but {right} stratum labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("outcome value at index {index} is missing or not finite")]
    MissingOutcome { index: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("outcome has zero variance; q is undefined")]
    ZeroVariance,

    #[error("all values are equal; cannot build intervals")]
    DegenerateRange,

    #[error("invalid stratum count {l}: {reason}")]
    BadL { l: usize, reason: String },

    #[error("manual breaks must be strictly ascending and finite")]
    UnsortedBreaks,

    #[error("invalid stratum label {label} at index {index}; labels start at 1")]
    BadLabel { index: usize, label: usize },

    #[error("permutation count must be at least 1")]
    BadPermCount,

    #[error("degrees of freedom invalid: n = {n}, l = {l} (need n > l >= 2)")]
    BadDegreesOfFreedom { n: usize, l: usize },

    #[error("value {value} for {what} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    OutOfRangeCoordinate { lat: f64, lon: f64 },

    #[error("no station with a present value")]
    NoStations,

    #[error("invalid interpolation parameter: {0}")]
    BadInterpolation(String),

    #[error("daily records span more than one calendar month ({first} and {other})")]
    MixedMonths { first: String, other: String },

    #[error("date {0} appears more than once")]
    DuplicateDate(String),

    #[error("positive count {positive} exceeds tested count {tested}")]
    PositiveExceedsTested { tested: u64, positive: u64 },

    #[error("region {0} has no member city with a present value")]
    EmptyRegion(String),

    #[error("t test needs at least two observations per sample (got {a} and {b})")]
    TooFewObservations { a: usize, b: usize },

    #[error("invalid synthetic spec: {0}")]
    BadSpec(String),

    #[error("invalid strata strategy {input:?}: {reason}")]
    BadStrategy { input: String, reason: String },

    #[error("unknown {kind} {value:?}")]
    UnknownName { kind: &'static str, value: String },

    #[error("{path}:{line}: column {column}: {reason}")]
    Schema {
        path: String,
        line: u64,
        column: String,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed inputs or configuration rather
    /// than by the environment.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Csv(_))
    }
}
