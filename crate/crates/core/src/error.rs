use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("gasket level {0} is too large: 3^level cells overflow the index space")]
    LevelTooLarge(usize),

    #[error("gasket corners must be pairwise distinct")]
    DegenerateCorners,

    #[error("cell address has length {got}, graph level is {expected}")]
    AddressLength { expected: usize, got: usize },

    #[error("invalid cell address symbol {0:?}; expected one of 1, 2, 3")]
    AddressSymbol(char),

    #[error("field has level {field} but graph has level {graph}")]
    LevelMismatch { graph: usize, field: usize },

    #[error("field has {got} values, expected {expected}")]
    FieldLength { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("coupling integral of h vanishes (||h||_1 = 0)")]
    ZeroCoupling,

    #[error("no admissible start: {0}")]
    NoAdmissibleStart(String),

    #[error("parameters ({lambda}, {gamma}) lie outside the admissible region {region}")]
    OutsideRegion {
        lambda: f64,
        gamma: f64,
        region: &'static str,
    },

    #[error("hypothesis {0} failed")]
    Hypothesis(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
