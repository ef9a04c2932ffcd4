//! Crate-wide error type.

/// Errors surfaced by simulator operations.
///
/// Variants are deliberately specific so tests (and the CLI) can distinguish
/// a modeling bug (clock regression) from a bad configuration or a degenerate
/// calibration.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An invocation or power query was issued before the completion of the
    /// previous invocation on the same unit.
    #[error("clock regression: now = {now} precedes last use completion at {last_use}")]
    ClockRegression { now: u64, last_use: u64 },

    /// A stage table violated a structural invariant (thresholds not strictly
    /// increasing, first threshold nonzero, latencies decreasing, ...).
    #[error("invalid stage table: {0}")]
    InvalidTable(String),

    /// A stage index outside the table was requested.
    #[error("unknown stage {stage}: table has {stages} stages")]
    UnknownStage { stage: usize, stages: usize },

    /// A gadget, channel, or attack configuration violated an invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Calibration was attempted with an empty sample set.
    #[error("empty calibration set for the {0} class")]
    EmptyCalibration(&'static str),

    /// Calibration produced mean(low) > mean(high): the calibration sets are
    /// mislabeled or the observable is inverted.
    #[error("inverted calibration: mean_low = {mean_low} > mean_high = {mean_high}")]
    InvertedCalibration { mean_low: f64, mean_high: f64 },

    /// Calibration produced identical class means: no separation to threshold.
    #[error("degenerate calibration: both class means equal {mean}")]
    DegenerateCalibration { mean: f64 },

    /// ROC construction needs at least one observation of each class.
    #[error("single-class observation set: ROC/AUC undefined")]
    SingleClass,

    /// A probability parameter left [0, 1].
    #[error("{name} = {value} is not a probability in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },

    /// A magnifier alignment cannot be realized against the given table.
    #[error("invalid magnifier alignment: {0}")]
    InvalidAlignment(String),

    /// A negative context-switch rate was passed to an overhead query.
    #[error("invalid switch rate {0}: must be >= 0 per second")]
    InvalidSwitchRate(f64),

    /// A scenario or table config file failed to parse.
    #[error("config parse error at line {line}, key `{key}`: {msg}")]
    ConfigParse { line: usize, key: String, msg: String },

    /// Filesystem failure while running a scenario.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
