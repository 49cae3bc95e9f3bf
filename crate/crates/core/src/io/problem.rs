//! Problem files.
//!
//! ```json
//! {"obstacle": {"type": "disk", "center": [0, 0], "radius": 1},
//!  "mu": {"atoms": [[-2, 0]]},
//!  "nu": {"density": {"region": {"type": "rectangle", "min": [1, -1], "max": [2, 1]},
//!                     "profile": "uniform", "n": 1, "seed": 3}},
//!  "options": {"tol": 1e-9, "samples_per_geodesic": 8, "seed": 0}}
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexObstacle, Point};
use crate::measure::{sample_density, DensitySpec, DiscreteMeasure};
use crate::pipeline::{Options, Scene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    Disk { center: Point, radius: f64 },
    Polygon { vertices: Vec<Point> },
}

impl ObstacleSpec {
    pub fn build(&self) -> Result<ConvexObstacle> {
        match self {
            ObstacleSpec::Disk { center, radius } => ConvexObstacle::disk(*center, *radius),
            ObstacleSpec::Polygon { vertices } => ConvexObstacle::polygon(vertices.clone()),
        }
    }
}

/// Either explicit atoms (uniform weights when omitted) or a density to sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensitySpec>,
}

impl MeasureSpec {
    pub fn from_measure(m: &DiscreteMeasure) -> MeasureSpec {
        MeasureSpec {
            atoms: Some(m.atoms().to_vec()),
            weights: Some(m.weights().to_vec()),
            density: None,
        }
    }

    fn resolve(&self, name: &str, obs: &ConvexObstacle) -> Result<DiscreteMeasure> {
        let invalid = |e: Error| Error::Validation(format!("{name}: {e}"));
        match (&self.atoms, &self.weights, &self.density) {
            (Some(atoms), weights, None) => {
                if let Some(i) = atoms.iter().position(|p| obs.check_admissible(*p).is_err()) {
                    let p = atoms[i];
                    return Err(Error::Validation(format!(
                        "{name} atom {i} at ({}, {}) lies inside the obstacle",
                        p.x, p.y
                    )));
                }
                match weights {
                    Some(w) => DiscreteMeasure::new(atoms.clone(), w.clone()),
                    None => DiscreteMeasure::uniform(atoms.clone()),
                }
                .map_err(invalid)
            }
            (None, None, Some(spec)) => sample_density(spec, obs).map_err(invalid),
            (None, Some(_), Some(_)) => Err(Error::Validation(format!(
                "{name}: weights are only allowed with explicit atoms"
            ))),
            (Some(_), _, Some(_)) => Err(Error::Validation(format!(
                "{name}: give either atoms or density, not both"
            ))),
            (None, _, None) => Err(Error::Validation(format!(
                "{name}: missing atoms or density"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub obstacle: ObstacleSpec,
    pub mu: MeasureSpec,
    pub nu: MeasureSpec,
    #[serde(default)]
    pub options: Options,
}

impl Problem {
    /// Build the obstacle and sample or validate both measures.
    pub fn resolve(&self) -> Result<Scene> {
        if !(self.options.tol > 0.0 && self.options.tol.is_finite()) {
            return Err(Error::Validation(format!(
                "options.tol must be positive, got {}",
                self.options.tol
            )));
        }
        let obs = self.obstacle.build()?;
        let mu = self.mu.resolve("mu", &obs)?;
        let nu = self.nu.resolve("nu", &obs)?;
        Ok(Scene::new(obs, mu, nu))
    }

    /// The same problem with both measures as explicit atoms.
    pub fn resolved(&self, scene: &Scene) -> Problem {
        Problem {
            obstacle: self.obstacle.clone(),
            mu: MeasureSpec::from_measure(&scene.mu),
            nu: MeasureSpec::from_measure(&scene.nu),
            options: self.options,
        }
    }
}

pub fn parse_problem_str(text: &str, path: &str) -> Result<Problem> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_string(),
        message: e.to_string(),
    })
}

/// Read and validate a problem file. Syntax and schema errors carry the
/// line and column; atoms inside the obstacle are named by index.
pub fn parse_problem(path: &Path) -> Result<(Problem, Scene)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let problem = parse_problem_str(&text, &path.display().to_string())?;
    let scene = problem.resolve()?;
    Ok((problem, scene))
}
