use std::path::PathBuf;

use thiserror::Error;

use crate::mesh::BoundaryTag;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("target edge length {h} exceeds the smallest notch radius {radius}; the notch cannot be resolved")]
    MeshTooCoarse { h: f64, radius: f64 },

    #[error("invalid material: {0}")]
    Material(String),

    #[error("singular stiffness system: unconstrained rigid-body mode ({0})")]
    RigidBodyMode(&'static str),

    #[error("missing boundary segment {0}")]
    MissingBoundary(BoundaryTag),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point ({x}, {y}) lies outside the meshed domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("empty highly stressed volume: beta = {beta} is not below the largest unit effective stress {max}")]
    EmptyHighlyStressedVolume { beta: f64, max: f64 },

    #[error("infinite life: stress {stress} does not exceed the fatigue limit {limit}")]
    InfiniteLife { stress: f64, limit: f64 },

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("MCMC initialisation failed: no prior draw with finite log-likelihood after {0} attempts")]
    McmcInit(usize),

    #[error("posterior covariance is singular; run a longer chain")]
    SingularCovariance,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation failures map to CLI exit code 2; everything else is a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Solver(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
