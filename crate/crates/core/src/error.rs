use thiserror::Error;

use crate::geometry::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),

    #[error("point ({}, {}) lies inside the obstacle", .0.x, .0.y)]
    InsideObstacle(Point),

    #[error("point ({}, {}) is on or inside the obstacle boundary", .0.x, .0.y)]
    NotOutside(Point),

    #[error("point ({}, {}) is {distance:e} away from the obstacle boundary", .point.x, .point.y)]
    OffBoundary { point: Point, distance: f64 },

    #[error("arc-length {s} outside [0, {total}]")]
    OutOfRange { s: f64, total: f64 },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("negative weight {weight} at index {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("total masses differ: {mu} vs {nu}")]
    MassMismatch { mu: f64, nu: f64 },

    #[error("potential violates dual feasibility at ({i}, {j}) by {excess:e}")]
    DualInfeasible { i: usize, j: usize, excess: f64 },

    #[error("evolution of node {node} by {t} exceeds remaining ray length {remaining}")]
    EvolutionOverrun { node: usize, t: f64, remaining: f64 },

    #[error("class {class}: {reason}")]
    ClassGeometry { class: usize, reason: String },

    #[error("class {class}: source mass {source_mass} differs from target mass {target_mass}")]
    ClassMassMismatch {
        class: usize,
        source_mass: f64,
        target_mass: f64,
    },

    #[error("source atom {0} was not assigned by any class")]
    Unassigned(usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("problem file {path}: {message}")]
    Parse { path: String, message: String },

    #[error("problem validation: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by the user's input rather than a failed invariant.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::InvalidObstacle(_)
            | Error::InvalidMeasure(_)
            | Error::InsideObstacle(_)
            | Error::NegativeWeight { .. }
            | Error::MassMismatch { .. }
            | Error::Io(_)
            | Error::Json(_) => true,
            _ => false,
        }
    }
}
