use thiserror::Error;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Precondition,
    Invariant,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate observation for {ticker} on {date}")]
    DuplicateObservation { ticker: String, date: String },

    #[error("non-positive price {price} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        price: f64,
    },

    #[error("need at least 2 series after coverage filtering, have {0}")]
    TooFewSeries(usize),

    #[error("need at least 2 trading days, have {0}")]
    TooFewDates(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("seed member {0} is masked")]
    SeedMasked(usize),

    #[error("history has {0} admissions, need at least 3")]
    HistoryTooShort(usize),

    #[error("matrix has no off-diagonal entries")]
    EmptyMatrix,

    #[error("atom {0} does not belong to this matrix")]
    AtomNotFromMatrix(usize),

    #[error("unknown atom id {0}")]
    UnknownAtom(usize),

    #[error("no strong atoms among molecule constituents")]
    NoStrongAtoms,

    #[error("bond thresholds require c2 < c1, got c1={c1} c2={c2}")]
    BadThresholds { c1: f64, c2: f64 },

    #[error("invalid planted spec: {0}")]
    InvalidSpec(String),

    #[error("invalid co-movement file: {0}")]
    Format(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. }
            | Error::DuplicateObservation { .. }
            | Error::NonPositivePrice { .. }
            | Error::Format(_)
            | Error::Json(_) => ErrorClass::Parse,
            Error::Invariant(_) => ErrorClass::Invariant,
            _ => ErrorClass::Precondition,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
