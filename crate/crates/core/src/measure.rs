//! Discrete measures, sampled densities and one-dimensional step CDFs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexObstacle, Point};

pub const MASS_TOL: f64 = 1e-12;

/// Weighted atoms with total mass one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        for (index, &weight) in weights.iter().enumerate() {
            if weight < 0.0 {
                return Err(Error::NegativeWeight { index, weight });
            }
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "weight {index} must be positive, got {weight}"
                )));
            }
        }
        if let Some(i) = atoms.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidMeasure(format!("atom {i} is not finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(DiscreteMeasure { atoms, weights })
    }

    /// Equal weights `1/n`.
    pub fn uniform(atoms: Vec<Point>) -> Result<Self> {
        let n = atoms.len();
        DiscreteMeasure::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// All weights equal to `1/n` within [`MASS_TOL`].
    pub fn is_equal_mass(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= MASS_TOL)
    }

    /// Index of the first atom lying inside the obstacle, if any.
    pub fn first_inadmissible(&self, obs: &ConvexObstacle) -> Option<usize> {
        self.atoms.iter().position(|p| obs.check_admissible(*p).is_err())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Rectangle { min: Point, max: Point },
    Annulus { center: Point, inner: f64, outer: f64 },
}

impl Region {
    fn contains(&self, p: Point) -> bool {
        match self {
            Region::Rectangle { min, max } => {
                p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y
            }
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = p.dist(*center);
                r >= *inner && r <= *outer
            }
        }
    }

    fn bounding_box(&self) -> (Point, Point) {
        match self {
            Region::Rectangle { min, max } => (*min, *max),
            Region::Annulus { center, outer, .. } => (
                Point::new(center.x - outer, center.y - outer),
                Point::new(center.x + outer, center.y + outer),
            ),
        }
    }

    fn center(&self) -> Point {
        match self {
            Region::Rectangle { min, max } => (*min + *max) * 0.5,
            Region::Annulus { center, .. } => *center,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Region::Rectangle { min, max } => min.x < max.x && min.y < max.y,
            Region::Annulus { inner, outer, .. } => *inner >= 0.0 && inner < outer,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidMeasure(format!("degenerate region {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Uniform,
    /// Density proportional to the distance from the region center.
    RadialLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub region: Region,
    pub profile: Profile,
    pub n: usize,
    pub seed: u64,
}

const MAX_DRAWS_PER_ATOM: usize = 100_000;

/// `n` i.i.d. equal-weight atoms from the profile restricted to the region
/// and to the complement of the obstacle.
pub fn sample_density(spec: &DensitySpec, obs: &ConvexObstacle) -> Result<DiscreteMeasure> {
    spec.region.validate()?;
    if spec.n == 0 {
        return Err(Error::InvalidMeasure("density needs n >= 1".into()));
    }
    let (lo, hi) = spec.region.bounding_box();
    let center = spec.region.center();
    let rho_max = [
        lo,
        hi,
        Point::new(lo.x, hi.y),
        Point::new(hi.x, lo.y),
    ]
    .iter()
    .map(|c| c.dist(center))
    .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut atoms = Vec::with_capacity(spec.n);
    let mut misses = 0usize;
    while atoms.len() < spec.n {
        let p = Point::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
        let accept_profile = match spec.profile {
            Profile::Uniform => true,
            Profile::RadialLinear => rng.gen::<f64>() * rho_max <= p.dist(center),
        };
        if spec.region.contains(p) && accept_profile && obs.signed_distance(p) > 0.0 {
            atoms.push(p);
            misses = 0;
        } else {
            misses += 1;
            if misses > MAX_DRAWS_PER_ATOM {
                return Err(Error::InvalidMeasure(
                    "density region has no admissible area outside the obstacle".into(),
                ));
            }
        }
    }
    DiscreteMeasure::uniform(atoms)
}

/// Image measure under `map`, merging coincident images.
pub fn pushforward<F>(m: &DiscreteMeasure, map: F) -> DiscreteMeasure
where
    F: Fn(usize) -> Point,
{
    let mut images: Vec<(Point, f64)> = (0..m.len()).map(|i| (map(i), m.weights[i])).collect();
    images.sort_by(|a, b| {
        a.0.x
            .total_cmp(&b.0.x)
            .then(a.0.y.total_cmp(&b.0.y))
    });
    let mut atoms: Vec<Point> = Vec::with_capacity(images.len());
    let mut weights: Vec<f64> = Vec::with_capacity(images.len());
    for (p, w) in images {
        match atoms.last() {
            Some(last) if *last == p => *weights.last_mut().unwrap() += w,
            _ => {
                atoms.push(p);
                weights.push(w);
            }
        }
    }
    DiscreteMeasure { atoms, weights }
}

/// Right-continuous step CDF over sorted breakpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCdf {
    breakpoints: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepCdf {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `CDF(v)`.
    pub fn eval(&self, v: f64) -> f64 {
        match self.breakpoints.partition_point(|&b| b <= v) {
            0 => 0.0,
            k => self.cumulative[k - 1],
        }
    }

    /// Left-continuous generalized inverse `inf { v : CDF(v) >= q }`.
    pub fn quantile(&self, q: f64) -> f64 {
        let k = self.cumulative.partition_point(|&c| c < q);
        self.breakpoints[k.min(self.breakpoints.len() - 1)]
    }
}

pub fn build_cdf(values: &[f64], weights: &[f64]) -> Result<StepCdf> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::InvalidMeasure(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if let Some((index, &weight)) = weights.iter().enumerate().find(|(_, w)| **w < 0.0) {
        return Err(Error::NegativeWeight { index, weight });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut breakpoints: Vec<f64> = Vec::with_capacity(values.len());
    let mut cumulative: Vec<f64> = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in order {
        acc += weights[i];
        if breakpoints.last() == Some(&values[i]) {
            *cumulative.last_mut().unwrap() = acc;
        } else {
            breakpoints.push(values[i]);
            cumulative.push(acc);
        }
    }
    Ok(StepCdf {
        breakpoints,
        cumulative,
    })
}

/// Order-free comparison of two measures after merging atoms closer than `tol`.
pub fn exact_equal(m1: &DiscreteMeasure, m2: &DiscreteMeasure, tol: f64) -> bool {
    let a = merge_close(m1, tol);
    let b = merge_close(m2, tol);
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    'outer: for (p, w) in &a {
        for (k, (q, v)) in b.iter().enumerate() {
            if !used[k] && p.dist(*q) <= tol {
                if (w - v).abs() > tol {
                    return false;
                }
                used[k] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

fn merge_close(m: &DiscreteMeasure, tol: f64) -> Vec<(Point, f64)> {
    let mut out: Vec<(Point, f64)> = Vec::new();
    for (p, w) in m.atoms.iter().zip(&m.weights) {
        match out.iter_mut().find(|(q, _)| q.dist(*p) <= tol) {
            Some(slot) => slot.1 += w,
            None => out.push((*p, *w)),
        }
    }
    out
}
