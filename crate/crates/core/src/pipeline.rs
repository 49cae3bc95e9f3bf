//! The full solve: costs, optimal plan, ray structure, Monge map, certificate.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{ConvexObstacle, Point};
use crate::kantorovich::{cost_matrix, solve_exact, CostMatrix, Potential, TransportPlan};
use crate::measure::DiscreteMeasure;
use crate::monge::{build_monge_map, verify_map, MongeBuild, VerificationReport, VerifyTolerances};
use crate::rays::{RayStructure, DEFAULT_SAMPLES_PER_GEODESIC};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    /// Tolerance of the ray relation and the boundary-arc checks.
    pub tol: f64,
    pub samples_per_geodesic: usize,
    pub seed: u64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            tol: DEFAULT_TOL,
            samples_per_geodesic: DEFAULT_SAMPLES_PER_GEODESIC,
            seed: 0,
        }
    }
}

/// An obstacle with two resolved measures.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub obstacle: ConvexObstacle,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
}

impl Scene {
    /// Scales the geometric tolerance to the extent of the scene.
    pub fn new(obstacle: ConvexObstacle, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Scene {
        let diameter = scene_diameter(&obstacle, mu.atoms().iter().chain(nu.atoms()));
        Scene {
            obstacle: obstacle.with_scene_diameter(diameter),
            mu,
            nu,
        }
    }
}

fn scene_diameter<'a>(obs: &ConvexObstacle, atoms: impl Iterator<Item = &'a Point>) -> f64 {
    let boundary = (0..64).map(|k| {
        obs.boundary_point(crate::geometry::BoundaryCoordinate(
            obs.perimeter() * k as f64 / 64.0,
        ))
    });
    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in atoms.copied().chain(boundary) {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    lo.dist(hi)
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub cost: CostMatrix,
    pub plan: TransportPlan,
    pub potential: Potential,
    pub rays: RayStructure,
    pub build: MongeBuild,
    pub report: VerificationReport,
}

/// Run every stage; errors carry the name of the stage that failed.
pub fn solve(scene: &Scene, opts: &Options) -> Result<Solution> {
    let Scene { obstacle: obs, mu, nu } = scene;
    let cost = cost_matrix(mu, nu, obs).map_err(|e| e.at_stage("cost matrix"))?;
    let (plan, potential) = solve_exact(mu, nu, &cost).map_err(|e| e.at_stage("transport plan"))?;
    let rays = RayStructure::build(obs, mu, nu, &plan, &potential, opts.samples_per_geodesic, opts.tol);
    let build = build_monge_map(obs, mu, nu, &plan, &potential, &rays, opts.tol)
        .map_err(|e| e.at_stage("monge map"))?;
    let report = verify_map(
        &build.map,
        &build.classes,
        mu,
        nu,
        &plan,
        &potential,
        &cost,
        &rays,
        obs,
        VerifyTolerances::with_graph(opts.tol),
        opts.seed,
    );
    Ok(Solution {
        cost,
        plan,
        potential,
        rays,
        build,
        report,
    })
}
