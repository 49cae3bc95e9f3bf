//! Monge optimal transport in the plane around a convex obstacle.

pub mod error;
pub mod geometry;
pub mod io;
pub mod kantorovich;
pub mod measure;
pub mod monge;
pub mod par;
pub mod pipeline;
pub mod rays;
mod union_find;

pub use error::{Error, Result};
pub use geometry::{BoundaryCoordinate, ConvexObstacle, GeodesicPath, Point, Rotation};
pub use measure::DiscreteMeasure;
