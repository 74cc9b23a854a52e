use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures surfaced by estimation, simulation and I/O.
///
/// Variants are grouped by the exit code the CLI maps them to; see
/// [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("thresholds must be finite and strictly increasing (got {0:?})")]
    InvalidPartition(Vec<f64>),

    #[error("data error: {0}")]
    Data(String),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("stratum {0} has no units")]
    EmptyStratum(i64),
    #[error("stratum {stratum} has {count} units, at least {needed} required")]
    TooFewUnits {
        stratum: i64,
        count: usize,
        needed: usize,
    },
    #[error("degenerate exposure: every unit has A = {0}")]
    DegenerateExposure(u8),
    #[error("design matrix is rank deficient; collinear columns: {0:?}")]
    SingularDesign(Vec<String>),
    #[error("design has {rows} rows but {columns} columns; need at least columns + 1 rows")]
    TooFewRows { rows: usize, columns: usize },
    #[error("margins are infeasible for a monotone cell matrix: {0}")]
    Infeasible(String),
    #[error("K = {0}: the monotone cell system is uniquely solvable")]
    UniquelySolvable(usize),
    #[error("monotone bounds need K >= 3 (got K = {0}); they collapse to point identification")]
    MonotoneNeedsThreeTiers(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("propensity {0} is outside (0, 1); positivity violated")]
    Positivity(f64),

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// 2 config, 3 data, 4 numerical; I/O problems count as data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidPartition(_) => 2,
            Error::Numerical(_) | Error::NotPsd(_) | Error::Positivity(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
