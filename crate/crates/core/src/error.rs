use thiserror::Error;

/// Errors produced by the meshing, solver and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("grading failure: {0}")]
    GradingFailure(String),

    #[error("compatibility violation: divergence data integrates to {div_integral:.6e}, boundary flux is {flux:.6e} (mismatch {mismatch:.3e}, relative {relative:.3e})")]
    Compatibility {
        div_integral: f64,
        flux: f64,
        mismatch: f64,
        relative: f64,
    },

    #[error("unknown boundary tag `{0}`")]
    UnknownBoundaryTag(String),

    #[error("factorization failed at elimination step {step} ({dof}): pivot {pivot:.3e}, reference scale {scale:.3e}")]
    Factorization {
        step: usize,
        dof: String,
        pivot: f64,
        scale: f64,
    },

    #[error("linear solve did not reach tolerance: relative residual {0:.3e}")]
    SolveAccuracy(f64),

    #[error("point ({0}, {1}) lies outside the mesh")]
    OutsideMesh(f64, f64),

    #[error("field not evaluable here: {0}")]
    NotEvaluable(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("degenerate source: |v(0)| = {value:.3e} is not above 10x the error bar {error_bar:.3e}")]
    DegenerateSource { value: f64, error_bar: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("cell {cell}: {source}")]
    Cell {
        cell: usize,
        #[source]
        source: Box<LabError>,
    },

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl LabError {
    pub(crate) fn in_cell(self, cell: usize) -> Self {
        LabError::Cell {
            cell,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
