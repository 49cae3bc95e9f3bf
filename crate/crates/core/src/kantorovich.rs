//! Exact discrete Kantorovich problem: cost assembly, a successive shortest
//! path solver with dual potentials, and optimality diagnostics.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexObstacle, Point};
use crate::measure::{DiscreteMeasure, MASS_TOL};
use crate::par;

/// Dense `rows x cols` matrix of obstacle distances.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64,
    {
        let entries = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        CostMatrix {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }
}

/// `C[i][j] = d_M(mu_i, nu_j)`, assembled row-parallel when enabled.
pub fn cost_matrix(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    obs: &ConvexObstacle,
) -> Result<CostMatrix> {
    check_atoms(mu, nu, obs)?;
    let rows = par::map_range(mu.len(), |i| {
        let x = mu.atoms()[i];
        nu.atoms()
            .iter()
            .map(|&y| obs.distance_unchecked(x, y))
            .collect::<Vec<_>>()
    });
    Ok(CostMatrix {
        rows: mu.len(),
        cols: nu.len(),
        entries: rows.concat(),
    })
}

/// Single-threaded reference for [`cost_matrix`].
pub fn cost_matrix_seq(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    obs: &ConvexObstacle,
) -> Result<CostMatrix> {
    check_atoms(mu, nu, obs)?;
    Ok(CostMatrix::from_fn(mu.len(), nu.len(), |i, j| {
        obs.distance_unchecked(mu.atoms()[i], nu.atoms()[j])
    }))
}

/// Plain Euclidean costs.
pub fn euclidean_cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> CostMatrix {
    CostMatrix::from_fn(mu.len(), nu.len(), |i, j| mu.atoms()[i].dist(nu.atoms()[j]))
}

fn check_atoms(mu: &DiscreteMeasure, nu: &DiscreteMeasure, obs: &ConvexObstacle) -> Result<()> {
    for p in mu.atoms().iter().chain(nu.atoms()) {
        obs.check_admissible(*p)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TransportPlan {
    pub couplings: Vec<Coupling>,
}

impl TransportPlan {
    pub fn row_sums(&self, rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows];
        for c in &self.couplings {
            out[c.i] += c.mass;
        }
        out
    }

    pub fn col_sums(&self, cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; cols];
        for c in &self.couplings {
            out[c.j] += c.mass;
        }
        out
    }

    /// Largest marginal deviation from `(mu, nu)`.
    pub fn marginal_error(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let rows = self.row_sums(mu.len());
        let cols = self.col_sums(nu.len());
        rows.iter()
            .zip(mu.weights())
            .chain(cols.iter().zip(nu.weights()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Coupling carrying the most mass out of atom `i`, ties to the lowest `j`.
    pub fn primary_target(&self, i: usize) -> Option<usize> {
        best_coupling(self.couplings.iter().filter(|c| c.i == i).map(|c| (c.j, c.mass)))
    }

    /// Coupling carrying the most mass into atom `j`, ties to the lowest `i`.
    pub fn primary_source(&self, j: usize) -> Option<usize> {
        best_coupling(self.couplings.iter().filter(|c| c.j == j).map(|c| (c.i, c.mass)))
    }
}

fn best_coupling(it: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    it.fold(None, |best: Option<(usize, f64)>, (k, m)| match best {
        Some((bk, bm)) if bm > m || (bm == m && bk < k) => Some((bk, bm)),
        _ => Some((k, m)),
    })
    .map(|(k, _)| k)
}

/// Kantorovich duals on the atoms: `phi_i + psi_j <= C_ij`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl Potential {
    /// 1-Lipschitz extension `u(p) = min_j (d_M(p, nu_j) - psi_j)`.
    ///
    /// `u` agrees with `phi` on coupled source atoms and decreases at unit rate
    /// along every plan geodesic.
    pub fn extend(&self, obs: &ConvexObstacle, nu: &DiscreteMeasure, p: Point) -> f64 {
        nu.atoms()
            .iter()
            .zip(&self.psi)
            .map(|(&y, &psi)| obs.distance_unchecked(p, y) - psi)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Scale converting masses to integer units.
fn mass_units(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (f64, Vec<i64>, Vec<i64>) {
    let m = mu.len() as f64;
    let n = nu.len() as f64;
    let mut candidates = vec![m, n, m * n];
    candidates.extend((1..=9).map(|k| 10f64.powi(k)));
    for scale in candidates {
        if scale > 1e12 {
            continue;
        }
        let quantize = |w: &[f64]| -> Option<Vec<i64>> {
            w.iter()
                .map(|x| {
                    let v = x * scale;
                    let r = v.round();
                    ((v - r).abs() <= 1e-6 && r >= 1.0)
                        .then_some(r as i64)
                })
                .collect()
        };
        if let (Some(a), Some(b)) = (quantize(mu.weights()), quantize(nu.weights())) {
            if a.iter().sum::<i64>() == b.iter().sum::<i64>() {
                return (scale, a, b);
            }
        }
    }
    let scale = (1u64 << 40) as f64;
    let fix = |w: &[f64]| -> Vec<i64> {
        let mut units: Vec<i64> = w.iter().map(|x| ((x * scale).round() as i64).max(1)).collect();
        let total: i64 = units.iter().sum();
        let target = scale as i64;
        let k = (0..units.len()).max_by(|&a, &b| units[a].cmp(&units[b]).then(b.cmp(&a))).unwrap();
        units[k] += target - total;
        units
    };
    (scale, fix(mu.weights()), fix(nu.weights()))
}

/// Exact optimal plan and duals for the discrete transport problem.
///
/// Successive shortest paths on the bipartite residual network with reduced
/// costs; masses are converted to integer units first, so equal-mass
/// instances yield a permutation plan. Dijkstra ties resolve to the lowest
/// node index, which makes the output deterministic.
pub fn solve_exact(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostMatrix,
) -> Result<(TransportPlan, Potential)> {
    let (tm, tn) = (mu.total_mass(), nu.total_mass());
    if (tm - tn).abs() > MASS_TOL {
        return Err(Error::MassMismatch { mu: tm, nu: tn });
    }
    if cost.rows() != mu.len() || cost.cols() != nu.len() {
        return Err(Error::InvalidMeasure(format!(
            "cost matrix is {}x{}, measures have {} and {} atoms",
            cost.rows(),
            cost.cols(),
            mu.len(),
            nu.len()
        )));
    }
    let (scale, supply, demand) = mass_units(mu, nu);
    let mut ssp = Ssp::new(cost, supply, demand);
    ssp.run();
    let (m, n) = (mu.len(), nu.len());
    let mut couplings = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let f = ssp.flow[i * n + j];
            if f > 0 {
                couplings.push(Coupling {
                    i,
                    j,
                    mass: f as f64 / scale,
                });
            }
        }
    }
    let phi = (0..m).map(|i| -ssp.pot[1 + i]).collect::<Vec<_>>();
    let psi = (0..n).map(|j| ssp.pot[1 + m + j]).collect::<Vec<_>>();
    // shift so that min psi is zero; the pair (phi + c, psi - c) is equivalent
    let shift = psi.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        TransportPlan { couplings },
        Potential {
            phi: phi.iter().map(|p| p + shift).collect(),
            psi: psi.iter().map(|p| p - shift).collect(),
        },
    ))
}

/// Node layout: 0 = super source, 1..=m sources, m+1..=m+n sinks, m+n+1 = super sink.
struct Ssp<'a> {
    cost: &'a CostMatrix,
    m: usize,
    n: usize,
    supply: Vec<i64>,
    demand: Vec<i64>,
    flow: Vec<i64>,
    pot: Vec<f64>,
}

impl<'a> Ssp<'a> {
    fn new(cost: &'a CostMatrix, supply: Vec<i64>, demand: Vec<i64>) -> Self {
        let (m, n) = (cost.rows(), cost.cols());
        Ssp {
            cost,
            m,
            n,
            supply,
            demand,
            flow: vec![0; m * n],
            pot: vec![0.0; m + n + 2],
        }
    }

    fn run(&mut self) {
        let (m, n) = (self.m, self.n);
        let v = m + n + 2;
        let sink = v - 1;
        let mut dist = vec![f64::INFINITY; v];
        let mut prev = vec![usize::MAX; v];
        let mut done = vec![false; v];
        while self.supply.iter().any(|&s| s > 0) {
            dist.fill(f64::INFINITY);
            prev.fill(usize::MAX);
            done.fill(false);
            dist[0] = 0.0;
            loop {
                let mut u = usize::MAX;
                let mut best = f64::INFINITY;
                for k in 0..v {
                    if !done[k] && dist[k] < best {
                        best = dist[k];
                        u = k;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                let du = dist[u];
                let relax = |w: usize, c: f64, dist: &mut Vec<f64>, prev: &mut Vec<usize>| {
                    let nd = du + (c + self.pot[u] - self.pot[w]).max(0.0);
                    if nd < dist[w] {
                        dist[w] = nd;
                        prev[w] = u;
                    }
                };
                if u == 0 {
                    for i in 0..m {
                        if self.supply[i] > 0 && !done[1 + i] {
                            relax(1 + i, 0.0, &mut dist, &mut prev);
                        }
                    }
                } else if u <= m {
                    let i = u - 1;
                    let row = self.cost.row(i);
                    for j in 0..n {
                        if !done[1 + m + j] {
                            relax(1 + m + j, row[j], &mut dist, &mut prev);
                        }
                    }
                } else if u < sink {
                    let j = u - 1 - m;
                    for i in 0..m {
                        if self.flow[i * n + j] > 0 && !done[1 + i] {
                            relax(1 + i, -self.cost.get(i, j), &mut dist, &mut prev);
                        }
                    }
                    if self.demand[j] > 0 && !done[sink] {
                        relax(sink, 0.0, &mut dist, &mut prev);
                    }
                }
            }
            let dt = dist[sink];
            debug_assert!(dt.is_finite(), "balanced network always has a path");
            for k in 0..v {
                self.pot[k] += dist[k].min(dt);
            }
            // bottleneck along the path
            let mut bottleneck = i64::MAX;
            let mut w = sink;
            while w != 0 {
                let u = prev[w];
                bottleneck = bottleneck.min(if u == 0 {
                    self.supply[w - 1]
                } else if w == sink {
                    self.demand[u - 1 - m]
                } else if u <= m {
                    i64::MAX
                } else {
                    self.flow[(w - 1) * n + (u - 1 - m)]
                });
                w = u;
            }
            let mut w = sink;
            while w != 0 {
                let u = prev[w];
                if u == 0 {
                    self.supply[w - 1] -= bottleneck;
                } else if w == sink {
                    self.demand[u - 1 - m] -= bottleneck;
                } else if u <= m {
                    self.flow[(u - 1) * n + (w - 1 - m)] += bottleneck;
                } else {
                    self.flow[(w - 1) * n + (u - 1 - m)] -= bottleneck;
                }
                w = u;
            }
        }
    }
}

/// `sum mass * C`.
pub fn plan_cost(plan: &TransportPlan, cost: &CostMatrix) -> f64 {
    plan.couplings
        .iter()
        .map(|c| c.mass * cost.get(c.i, c.j))
        .sum()
}

/// `plan_cost - (sum phi mu + sum psi nu)`; errors if the duals are infeasible.
pub fn duality_gap(
    plan: &TransportPlan,
    pot: &Potential,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostMatrix,
) -> Result<f64> {
    for i in 0..cost.rows() {
        for j in 0..cost.cols() {
            let excess = pot.phi[i] + pot.psi[j] - cost.get(i, j);
            if excess > 1e-9 {
                return Err(Error::DualInfeasible { i, j, excess });
            }
        }
    }
    let dual: f64 = pot
        .phi
        .iter()
        .zip(mu.weights())
        .chain(pot.psi.iter().zip(nu.weights()))
        .map(|(p, w)| p * w)
        .sum();
    Ok(plan_cost(plan, cost) - dual)
}

/// A cycle `(x_0,y_0), ..., (x_k,y_k)` whose cyclic reassignment
/// `x_{i+1} -> y_i` is cheaper than the original pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleViolation {
    pub cycle: Vec<usize>,
    /// `sum d(x_{i+1}, y_i) - sum d(x_i, y_i)`, negative.
    pub saving: f64,
}

/// Monte Carlo check of `d_M`-cyclical monotonicity of a set of pairs.
///
/// Samples `n_samples` cycles of length `2..=k_max` of distinct pairs, and
/// additionally enumerates every such cycle when there are at most six pairs.
pub fn check_cyclical_monotonicity(
    pairs: &[(Point, Point)],
    obs: &ConvexObstacle,
    k_max: usize,
    n_samples: usize,
    tol: f64,
    seed: u64,
) -> Vec<CycleViolation> {
    let np = pairs.len();
    let k_max = k_max.max(2).min(np);
    if np < 2 {
        return Vec::new();
    }
    // cross[a * np + b] = d(x_a, y_b)
    let cross: Vec<f64> = par::map_range(np * np, |k| {
        obs.distance_unchecked(pairs[k / np].0, pairs[k % np].1)
    });
    let saving = |cycle: &[usize]| -> f64 {
        let len = cycle.len();
        (0..len)
            .map(|i| {
                let a = cycle[i];
                let next = cycle[(i + 1) % len];
                cross[next * np + a] - cross[a * np + a]
            })
            .sum()
    };
    let mut out = Vec::new();
    if np <= 6 {
        let mut stack = Vec::new();
        enumerate_cycles(np, k_max, &mut stack, &mut |c| {
            let s = saving(c);
            if s < -tol {
                out.push(CycleViolation {
                    cycle: c.to_vec(),
                    saving: s,
                });
            }
        });
    }
    let sampled = par::map_range(n_samples, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let len = rng.gen_range(2..=k_max);
        let cycle = sample(&mut rng, np, len).into_vec();
        let s = saving(&cycle);
        (s < -tol).then_some(CycleViolation { cycle, saving: s })
    });
    out.extend(sampled.into_iter().flatten());
    out
}

fn enumerate_cycles(n: usize, k_max: usize, stack: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if stack.len() >= 2 {
        f(stack);
    }
    if stack.len() == k_max {
        return;
    }
    for a in 0..n {
        // fix the smallest element first to skip rotations
        if stack.first().is_some_and(|&s| a <= s) || stack.contains(&a) {
            continue;
        }
        stack.push(a);
        enumerate_cycles(n, k_max, stack, f);
        stack.pop();
    }
}
