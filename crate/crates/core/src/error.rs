use thiserror::Error;

/// Errors raised anywhere in the reaching pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("target is unreachable: distance {distance:.6} m exceeds total reach {reach:.6} m")]
    Unreachable { distance: f64, reach: f64 },

    #[error("inverse kinematics did not converge after {iterations} iterations (residual {residual:.3e} m)")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("autoencoder training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("reduced feature {feature} never changes between consecutive samples")]
    DegenerateFeature { feature: usize },

    #[error("rank {rank} out of range for bundle width {phi}")]
    RankOutOfRange { rank: usize, phi: usize },

    #[error("neural map has no neurons")]
    EmptyMap,

    #[error("start not covered by babbling: nearest neuron is {cells} cells away")]
    StartNotCovered { cells: i64 },

    #[error("unknown neuron id {0}")]
    UnknownNeuron(usize),

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("cannot read {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
