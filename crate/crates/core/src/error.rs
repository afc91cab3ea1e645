use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point is ill-conditioned in ambient chart {chart}: max affine modulus {modulus:.3e}")]
    ChartConditioning { chart: usize, modulus: f64 },

    #[error("parameter point {u:?} lies outside chart {chart}")]
    Domain { chart: usize, u: Vec<f64> },

    #[error("non-finite value while evaluating {0}")]
    Evaluation(String),

    #[error("degenerate immersion: condition number {condition:.3e} of dpsi exceeds 1e12")]
    DegenerateImmersion { condition: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported ambient: {0}")]
    UnsupportedAmbient(String),

    #[error("at chart {chart}, grid index {index:?}: {source}")]
    AtGridPoint {
        chart: usize,
        index: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("internal numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
