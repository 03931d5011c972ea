use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game definition: {0}")]
    InvalidGame(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("trajectory does not match game: {0}")]
    TrajectoryShape(String),

    #[error("rollout diverged at step {step}: non-finite state")]
    Divergence { step: usize },

    #[error("inconsistent feature equality oracle: {0}")]
    InconsistentOracle(String),

    #[error("unknown discretization method `{0}`")]
    UnknownMethod(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("missing feedback law for player {player}")]
    MissingLaw { player: usize },

    #[error("singular linear system in backward recursion at step {step}")]
    SingularStep { step: usize },

    #[error("coupled Riccati iteration did not converge after {iterations} steps (last gain change {last_change:e})")]
    RiccatiDivergence {
        iterations: usize,
        last_change: f64,
        residual_history: Vec<f64>,
    },

    #[error("closed loop is not stable (spectral radius {0})")]
    Unstable(f64),

    #[error("rank-deficient state data: {deficiency} of {dim} directions not excited")]
    RankDeficient { deficiency: usize, dim: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("zero reference channel `{0}`: normalization undefined")]
    ZeroReference(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
