//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error(
        "density {density} infeasible for {mode} mode on {n} nodes: \
         needs at least {minimum} directed edges, target is {target}"
    )]
    InfeasibleDensity {
        density: f64,
        mode: &'static str,
        n: usize,
        minimum: usize,
        target: usize,
    },

    #[error("graph is not connected")]
    Disconnected,

    #[error("degenerate orthogonal projection: singular value ratio {sigma_ratio:.3e}")]
    DegenerateProjection { sigma_ratio: f64 },

    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    #[error("asymmetric input to symmetric eigensolver: relative residual {residual:.3e}")]
    AsymmetricInput { residual: f64 },

    #[error("eigendecomposition did not converge")]
    EigenFailed,

    #[error("transform on edge ({i},{j}) is not orthogonal: residual {residual:.3e}")]
    NotOrthogonal { i: usize, j: usize, residual: f64 },

    #[error("edge transform set does not match graph: {0}")]
    TransformMismatch(String),

    #[error("gap is undefined: reference objective {denominator:.3e} is numerically zero")]
    UndefinedGap { denominator: f64 },

    #[error("expected the {expected} block Laplacian")]
    WrongLaplacianKind { expected: &'static str },

    #[error("no node with out-degree >= 2; the two-edge perturbation needs one")]
    NoBranchNode,

    #[error("perturbation magnitude must be positive")]
    ZeroPerturbation,

    #[error("agent {agent} is missing the message from neighbor {neighbor}")]
    MissingMessage { agent: usize, neighbor: usize },

    #[error("scaling overflow at iteration {iteration}: |eigenvalue|^-k exceeds f64 range")]
    ScalingOverflow { iteration: usize },

    #[error("round {round} failed: {source}")]
    RoundFailed {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("required convergence conditions failed: {0}")]
    ConditionsFailed(String),

    #[error("instance synthesis failed: {0}")]
    Synthesis(String),

    #[error("parse error in {what} (line {line}): {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
