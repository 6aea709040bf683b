use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported derivative order {0} (supported orders: 1, 2)")]
    UnsupportedOrder(u32),

    #[error("lookup at t = {t} lies beyond the recorded window ending at {end}")]
    OutOfWindow { t: f64, end: f64 },

    #[error("holes {i} and {j} overlap or touch (set distance {distance})")]
    Overlap { i: usize, j: usize, distance: f64 },

    #[error("capacitance of hole {0} has not been computed")]
    MissingCapacitance(usize),

    #[error("solvability margin {margin:.6} >= 1; the retarded system may be ill-posed (use force to override)")]
    ConditionRefused { margin: f64 },

    #[error(
        "fixed-point iteration stalled at step {step}: residual {residual:e} in equation {equation} after {iterations} iterations (margin {margin:.6})"
    )]
    NonConvergence {
        step: usize,
        equation: usize,
        residual: f64,
        iterations: usize,
        margin: f64,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("subharmonicity violated at node {node:?}: discrete laplacian {laplacian:e}")]
    NotSubharmonic { node: [usize; 3], laplacian: f64 },

    #[error("iteration stagnated after {iterations} iterations (relative residual {residual:e})")]
    Stagnation {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
