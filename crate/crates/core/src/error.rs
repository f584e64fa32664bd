use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parse,
    Validate,
    Estimate,
    Other,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Parse => 2,
            ErrorKind::Validate => 3,
            ErrorKind::Estimate => 4,
            ErrorKind::Other => 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // input parsing
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("JSON error: {0}")]
    Json(String),
    #[error("empty score table")]
    EmptyTable,
    #[error("duplicate model id {0:?}")]
    DuplicateModel(String),
    #[error("duplicate indicator {0:?}")]
    DuplicateIndicator(String),
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("non-numeric cell {value:?} at row {row}, column {col}")]
    NonNumericCell {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("duplicate construct id {0:?}")]
    DuplicateConstruct(String),
    #[error("unknown construct {0:?}")]
    UnknownConstruct(String),
    #[error("indicator {0:?} is assigned more than once")]
    DoubleAssignment(String),
    #[error("structural paths contain a cycle through {0:?}")]
    CyclicStructure(String),
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    // dataset validation
    #[error("indicator {0:?} is declared in the taxonomy but absent from the score matrix")]
    MissingIndicator(String),
    #[error("indicator {0:?} has zero variance")]
    ZeroVariance(String),
    #[error("{0} missing cells and the missing-data policy rejects them")]
    MissingCells(usize),
    #[error("only {0} complete rows remain; at least 3 are required")]
    TooFewRows(usize),

    // numerics
    #[error("correlation undefined: constant input")]
    DegenerateCorrelation,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("at least {needed} observations required, got {got}")]
    InsufficientObservations { needed: usize, got: usize },
    #[error("regressor matrix is rank deficient")]
    SingularDesign,
    #[error("value outside the function's domain: {0}")]
    DomainError(String),

    // estimation and diagnostics
    #[error("construct {0:?} is degenerate (zero-variance composite or all-zero weights)")]
    DegenerateConstruct(String),
    #[error("construct {0:?} has no structural neighbour")]
    StructureError(String),
    #[error("HTMT undefined for ({0:?}, {1:?}): {2}")]
    UndefinedHtmt(String, String, String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    // simulator
    #[error("invalid simulation spec: {0}")]
    SpecError(String),
    #[error("unknown identifier {0:?}")]
    UnknownId(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Io { .. } | Csv(_) | Json(_) | EmptyTable | DuplicateModel(_) | DuplicateIndicator(_)
            | RaggedRow { .. } | NonNumericCell { .. } | DuplicateConstruct(_)
            | UnknownConstruct(_) | DoubleAssignment(_) | CyclicStructure(_)
            | InvalidTaxonomy(_) | SpecError(_) | Config(_) => ErrorKind::Parse,
            MissingIndicator(_) | ZeroVariance(_) | MissingCells(_) | TooFewRows(_)
            | UnknownId(_) => ErrorKind::Validate,
            DegenerateCorrelation | LengthMismatch(..) | InsufficientObservations { .. }
            | SingularDesign | DomainError(_) | DegenerateConstruct(_) | StructureError(_)
            | UndefinedHtmt(..) | UndefinedMetric(_) => ErrorKind::Estimate,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
