//! Transport rays of an optimal plan.
//!
//! The node universe is finite: source atoms, target atoms and interior
//! samples along every plan geodesic. On these nodes we build the ray
//! relation `G` (ordered pairs on a common transport ray), its symmetric
//! closure `R`, the transport sets `T` and `T_e`, the initial and final
//! points, and the partition of `T` into chains of rays.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{ConvexObstacle, GeodesicPath, Point};
use crate::kantorovich::{Coupling, Potential, TransportPlan};
use crate::measure::DiscreteMeasure;
use crate::par;
use crate::union_find::UnionFind;

pub const DEFAULT_SAMPLES_PER_GEODESIC: usize = 8;
pub const DEFAULT_CLOSURE_DEPTH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Source { atom: usize },
    Target { atom: usize },
    Sample { ray: usize, index: usize },
}

/// Position of a node on the plan geodesic it travels along.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RaySlot {
    pub ray: usize,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub point: Point,
    pub kind: NodeKind,
    /// Value of the extended potential at the node.
    pub potential: f64,
    pub slot: Option<RaySlot>,
}

/// A plan coupling with positive length and its geodesic.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanRay {
    pub coupling: Coupling,
    pub path: GeodesicPath,
}

/// Plan geodesics of positive length, in coupling order.
pub fn plan_rays(
    obs: &ConvexObstacle,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    plan: &TransportPlan,
) -> Vec<PlanRay> {
    let rays = par::map_slice(&plan.couplings, |c| {
        let path = obs.geodesic_unchecked(mu.atoms()[c.i], nu.atoms()[c.j]);
        (path.total_length() > obs.tolerance()).then_some(PlanRay {
            coupling: *c,
            path,
        })
    });
    rays.into_iter().flatten().collect()
}

/// Sources, then targets, then `k` interior samples per plan ray.
///
/// Atoms ride the ray of their highest-mass coupling (ties to the lowest
/// partner index); atoms coupled only to themselves carry no ray.
pub fn build_nodes(
    obs: &ConvexObstacle,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    plan: &TransportPlan,
    pot: &Potential,
    rays: &[PlanRay],
    samples_per_geodesic: usize,
) -> Vec<Node> {
    let ray_of = |i: usize, j: usize| {
        rays.iter()
            .position(|r| r.coupling.i == i && r.coupling.j == j)
    };
    let mut raw: Vec<(Point, NodeKind, Option<RaySlot>)> = Vec::new();
    for (i, &p) in mu.atoms().iter().enumerate() {
        let slot = plan
            .primary_target(i)
            .and_then(|j| ray_of(i, j))
            .map(|ray| RaySlot { ray, offset: 0.0 });
        raw.push((p, NodeKind::Source { atom: i }, slot));
    }
    for (j, &p) in nu.atoms().iter().enumerate() {
        let slot = plan.primary_source(j).and_then(|i| ray_of(i, j)).map(|ray| RaySlot {
            ray,
            offset: rays[ray].path.total_length(),
        });
        raw.push((p, NodeKind::Target { atom: j }, slot));
    }
    for (r, ray) in rays.iter().enumerate() {
        let len = ray.path.total_length();
        for m in 1..=samples_per_geodesic {
            let offset = len * m as f64 / (samples_per_geodesic + 1) as f64;
            let p = ray.path.point_at(offset).expect("offset within the path");
            raw.push((p, NodeKind::Sample { ray: r, index: m }, Some(RaySlot { ray: r, offset })));
        }
    }
    let potentials = par::map_slice(&raw, |(p, _, _)| pot.extend(obs, nu, *p));
    raw.into_iter()
        .zip(potentials)
        .map(|((point, kind, slot), potential)| Node {
            point,
            kind,
            potential,
            slot,
        })
        .collect()
}

/// The ray relation `G` on a finite node set, with `R = G ∪ G⁻¹`.
///
/// Strict pairs join nodes at distinct positions; pairs of coincident nodes
/// and the diagonal on `T_e` are implicit.
#[derive(Clone, Debug, Default)]
pub struct RayRelation {
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
    coincident: Vec<Vec<usize>>,
    tol: f64,
}

impl RayRelation {
    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Strict successors `G(x) \ {x}`, sorted.
    pub fn successors(&self, x: usize) -> &[usize] {
        &self.succ[x]
    }

    /// Strict predecessors `G⁻¹(x) \ {x}`, sorted.
    pub fn predecessors(&self, x: usize) -> &[usize] {
        &self.pred[x]
    }

    pub fn in_te(&self, x: usize) -> bool {
        !(self.succ[x].is_empty() && self.pred[x].is_empty())
    }

    /// `(x, y) ∈ G`.
    pub fn contains(&self, x: usize, y: usize) -> bool {
        if x == y {
            return self.in_te(x);
        }
        self.succ[x].binary_search(&y).is_ok() || self.coincident[x].binary_search(&y).is_ok()
    }

    /// `(x, y) ∈ R`.
    pub fn related(&self, x: usize, y: usize) -> bool {
        self.contains(x, y) || self.contains(y, x)
    }

    pub fn strict_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(x, s)| s.iter().map(move |&y| (x, y)))
    }

    pub fn strict_pair_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }
}

/// `G = {(x, y) : u(x) - u(y) = d_M(x, y)}` on the nodes, within `tol`.
pub fn build_relation(nodes: &[Node], obs: &ConvexObstacle, tol: f64) -> RayRelation {
    let n = nodes.len();
    let rows = par::map_range(n, |a| relation_row(nodes, obs, tol, a));
    assemble(n, rows, tol)
}

/// Single-threaded reference for [`build_relation`].
pub fn build_relation_seq(nodes: &[Node], obs: &ConvexObstacle, tol: f64) -> RayRelation {
    let n = nodes.len();
    let rows = par::map_range_seq(n, |a| relation_row(nodes, obs, tol, a));
    assemble(n, rows, tol)
}

enum Link {
    Forward(usize),
    Backward(usize),
    Coincident(usize),
}

fn relation_row(nodes: &[Node], obs: &ConvexObstacle, tol: f64, a: usize) -> Vec<Link> {
    let pa = nodes[a].point;
    let ua = nodes[a].potential;
    let mut out = Vec::new();
    for (b, nb) in nodes.iter().enumerate().skip(a + 1) {
        let du = ua - nb.potential;
        let euclid = pa.dist(nb.point);
        if du.abs() < euclid - tol {
            continue;
        }
        let d = obs.distance_unchecked(pa, nb.point);
        if d <= tol {
            if du.abs() <= tol {
                out.push(Link::Coincident(b));
            }
        } else if du >= d - tol {
            out.push(Link::Forward(b));
        } else if -du >= d - tol {
            out.push(Link::Backward(b));
        }
    }
    out
}

fn assemble(n: usize, rows: Vec<Vec<Link>>, tol: f64) -> RayRelation {
    let mut rel = RayRelation {
        succ: vec![Vec::new(); n],
        pred: vec![Vec::new(); n],
        coincident: vec![Vec::new(); n],
        tol,
    };
    for (a, row) in rows.into_iter().enumerate() {
        for link in row {
            match link {
                Link::Forward(b) => {
                    rel.succ[a].push(b);
                    rel.pred[b].push(a);
                }
                Link::Backward(b) => {
                    rel.succ[b].push(a);
                    rel.pred[a].push(b);
                }
                Link::Coincident(b) => {
                    rel.coincident[a].push(b);
                    rel.coincident[b].push(a);
                }
            }
        }
    }
    for v in rel
        .succ
        .iter_mut()
        .chain(rel.pred.iter_mut())
        .chain(rel.coincident.iter_mut())
    {
        v.sort_unstable();
    }
    rel
}

/// Build a relation from explicit strict pairs, e.g. for hand-made graphs.
pub fn relation_from_pairs(n: usize, pairs: &[(usize, usize)]) -> RayRelation {
    let rows = (0..n)
        .map(|a| {
            pairs
                .iter()
                .filter(|p| p.0 == a)
                .map(|p| Link::Forward(p.1))
                .collect()
        })
        .collect();
    let mut rel = assemble(n, rows, 0.0);
    for v in rel.succ.iter_mut().chain(rel.pred.iter_mut()) {
        v.dedup();
    }
    rel
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TransportSets {
    /// Nodes with a strict predecessor and a strict successor.
    pub t: Vec<bool>,
    /// Nodes with a strict predecessor or a strict successor.
    pub te: Vec<bool>,
    /// Initial points: in `T_e` without a strict predecessor.
    pub a: Vec<bool>,
    /// Final points: in `T_e` without a strict successor.
    pub b: Vec<bool>,
}

impl TransportSets {
    pub fn count(flags: &[bool]) -> usize {
        flags.iter().filter(|f| **f).count()
    }

    /// `T_e = T ∪ a ∪ b` with `T ∩ (a ∪ b) = ∅` and `a ∩ b = ∅`.
    pub fn is_consistent(&self) -> bool {
        (0..self.te.len()).all(|x| {
            self.te[x] == (self.t[x] || self.a[x] || self.b[x])
                && !(self.t[x] && (self.a[x] || self.b[x]))
                && !(self.a[x] && self.b[x])
        })
    }
}

pub fn transport_sets(rel: &RayRelation) -> TransportSets {
    let n = rel.len();
    let mut sets = TransportSets {
        t: vec![false; n],
        te: vec![false; n],
        a: vec![false; n],
        b: vec![false; n],
    };
    for x in 0..n {
        let has_pred = !rel.predecessors(x).is_empty();
        let has_succ = !rel.successors(x).is_empty();
        sets.t[x] = has_pred && has_succ;
        sets.te[x] = has_pred || has_succ;
        sets.a[x] = sets.te[x] && !has_pred;
        sets.b[x] = sets.te[x] && !has_succ;
    }
    sets
}

/// Partition of `T` into chains of transport rays.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ChainPartition {
    /// Class of every node of `T`.
    pub class_id: Vec<Option<usize>>,
    /// Members of each class, sorted.
    pub classes: Vec<Vec<usize>>,
    /// Class of endpoints (`a ∪ b`) through their lowest adjacent node of `T`.
    pub attached: Vec<Option<usize>>,
}

impl ChainPartition {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Connected components of `T` under `R`-edges with both ends in `T`.
pub fn chains(rel: &RayRelation, sets: &TransportSets) -> ChainPartition {
    let n = rel.len();
    let mut uf = UnionFind::new(n);
    for (x, y) in rel.strict_pairs() {
        if sets.t[x] && sets.t[y] {
            uf.union(x, y);
        }
    }
    for x in 0..n {
        if sets.t[x] {
            for &y in &rel.coincident[x] {
                if sets.t[y] {
                    uf.union(x, y);
                }
            }
        }
    }
    let mut label = vec![usize::MAX; n];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut class_id = vec![None; n];
    for x in 0..n {
        if !sets.t[x] {
            continue;
        }
        let root = uf.find(x);
        if label[root] == usize::MAX {
            label[root] = classes.len();
            classes.push(Vec::new());
        }
        class_id[x] = Some(label[root]);
        classes[label[root]].push(x);
    }
    let attached = (0..n)
        .map(|x| {
            if sets.t[x] {
                return class_id[x];
            }
            rel.predecessors(x)
                .iter()
                .chain(rel.successors(x))
                .filter_map(|&y| class_id[y].map(|c| (y, c)))
                .min()
                .map(|(_, c)| c)
        })
        .collect();
    ChainPartition {
        class_id,
        classes,
        attached,
    }
}

/// Components of `T` by breadth-first search; an independent check of [`chains`].
pub fn chains_bfs(rel: &RayRelation, sets: &TransportSets) -> Vec<Vec<usize>> {
    let n = rel.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if !sets.t[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(x) = queue.pop_front() {
            comp.push(x);
            for &y in rel.successors(x).iter().chain(rel.predecessors(x)).chain(&rel.coincident[x]) {
                if sets.t[y] && !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Partial-order diagnostics for `G` on `T_e`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct OrderCheck {
    pub reflexive_violations: usize,
    pub antisymmetry_violations: usize,
    pub transitivity_violations: usize,
    pub slope_violations: usize,
    pub max_slope_error: f64,
}

impl OrderCheck {
    pub fn passed(&self) -> bool {
        self.reflexive_violations == 0
            && self.antisymmetry_violations == 0
            && self.transitivity_violations == 0
            && self.slope_violations == 0
    }
}

/// Checks reflexivity on `T_e`, antisymmetry, transitivity (re-evaluating the
/// potential identity of `(x, z)` within `tol`) and the unit slope of the
/// potential along every strict pair.
pub fn check_partial_order(
    nodes: &[Node],
    rel: &RayRelation,
    sets: &TransportSets,
    obs: &ConvexObstacle,
    tol: f64,
) -> OrderCheck {
    let n = rel.len();
    let reflexive_violations = (0..n).filter(|&x| sets.te[x] && !rel.contains(x, x)).count();
    let antisymmetry_violations = rel
        .strict_pairs()
        .filter(|&(x, y)| rel.succ[y].binary_search(&x).is_ok())
        .filter(|&(x, y)| obs.distance_unchecked(nodes[x].point, nodes[y].point) > tol)
        .count();
    let slope = par::map_range(n, |x| {
        rel.successors(x)
            .iter()
            .map(|&y| {
                let d = obs.distance_unchecked(nodes[x].point, nodes[y].point);
                (nodes[x].potential - nodes[y].potential - d).abs()
            })
            .fold(0.0, f64::max)
    });
    let max_slope_error = slope.iter().copied().fold(0.0, f64::max);
    let slope_violations = slope.iter().filter(|e| **e > tol).count();
    let transitivity_violations: usize = par::map_range(n, |y| {
        let mut bad = 0;
        for &x in rel.predecessors(y) {
            for &z in rel.successors(y) {
                if x == z || rel.contains(x, z) {
                    continue;
                }
                let d = obs.distance_unchecked(nodes[x].point, nodes[z].point);
                if nodes[x].potential - nodes[z].potential < d - tol {
                    bad += 1;
                }
            }
        }
        bad
    })
    .into_iter()
    .sum();
    OrderCheck {
        reflexive_violations,
        antisymmetry_violations,
        transitivity_violations,
        slope_violations,
        max_slope_error,
    }
}

/// Zero-cost cycle closure of a pair set.
///
/// Adds `(w_0, z_I)` whenever pairs `(w_0, z_0), ..., (w_I, z_I)` of `gamma`
/// (distinct, `I <= i_max`) satisfy
/// `sum_i d(w_{i+1}, z_i) - d(w_i, z_i) = 0` within `tol`, with `w_{I+1} = w_0`.
pub fn gamma_prime_closure(
    gamma: &[(Point, Point)],
    obs: &ConvexObstacle,
    i_max: usize,
    tol: f64,
) -> Vec<(Point, Point)> {
    let np = gamma.len();
    let own: Vec<f64> = gamma.iter().map(|(w, z)| obs.distance_unchecked(*w, *z)).collect();
    let cross = |a: usize, b: usize| obs.distance_unchecked(gamma[a].0, gamma[b].1);
    let mut out: Vec<(Point, Point)> = gamma.to_vec();
    let mut seq = Vec::new();
    fn walk(
        np: usize,
        depth: usize,
        seq: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        if !seq.is_empty() {
            visit(seq);
        }
        if seq.len() == depth {
            return;
        }
        for a in 0..np {
            if !seq.contains(&a) {
                seq.push(a);
                walk(np, depth, seq, visit);
                seq.pop();
            }
        }
    }
    let mut found = Vec::new();
    walk(np, i_max + 1, &mut seq, &mut |s: &[usize]| {
        let len = s.len();
        let total: f64 = (0..len)
            .map(|i| cross(s[(i + 1) % len], s[i]) - own[s[i]])
            .sum();
        if total.abs() <= tol {
            found.push((gamma[s[0]].0, gamma[s[len - 1]].1));
        }
    });
    for pair in found {
        if !out.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

/// Ray relation straight from its definition: `(x, y)` lies on a geodesic
/// through some `(w, z)` of `gamma_prime` in that order. Exponential-free but
/// quadratic in the nodes times the pairs; for cross-validation only.
pub fn relation_from_closure(
    points: &[Point],
    gamma_prime: &[(Point, Point)],
    obs: &ConvexObstacle,
    tol: f64,
) -> Vec<(usize, usize)> {
    let d = |a: Point, b: Point| obs.distance_unchecked(a, b);
    let mut out = Vec::new();
    for (x, &px) in points.iter().enumerate() {
        for (y, &py) in points.iter().enumerate() {
            if x == y || d(px, py) <= tol {
                continue;
            }
            let on_ray = gamma_prime
                .iter()
                .any(|&(w, z)| (d(w, px) + d(px, py) + d(py, z) - d(w, z)).abs() <= tol);
            if on_ray {
                out.push((x, y));
            }
        }
    }
    out
}

/// Everything derived from one optimal plan.
#[derive(Clone, Debug)]
pub struct RayStructure {
    pub rays: Vec<PlanRay>,
    pub nodes: Vec<Node>,
    pub relation: RayRelation,
    pub sets: TransportSets,
    pub partition: ChainPartition,
    pub samples_per_geodesic: usize,
}

impl RayStructure {
    pub fn build(
        obs: &ConvexObstacle,
        mu: &DiscreteMeasure,
        nu: &DiscreteMeasure,
        plan: &TransportPlan,
        pot: &Potential,
        samples_per_geodesic: usize,
        tol: f64,
    ) -> RayStructure {
        let rays = plan_rays(obs, mu, nu, plan);
        let nodes = build_nodes(obs, mu, nu, plan, pot, &rays, samples_per_geodesic);
        let relation = build_relation(&nodes, obs, tol);
        let sets = transport_sets(&relation);
        let partition = chains(&relation, &sets);
        RayStructure {
            rays,
            nodes,
            relation,
            sets,
            partition,
            samples_per_geodesic,
        }
    }

    pub fn source_node(&self, i: usize) -> usize {
        i
    }

    pub fn target_node(&self, mu_len: usize, j: usize) -> usize {
        mu_len + j
    }

    /// Node indices of the interior samples of a plan ray.
    pub fn samples_of(&self, ray: usize) -> std::ops::Range<usize> {
        let k = self.samples_per_geodesic;
        let base = self.nodes.len() - self.rays.len() * k;
        base + ray * k..base + (ray + 1) * k
    }

    /// Class containing the interior samples of a plan ray.
    pub fn ray_class(&self, ray: usize) -> Option<usize> {
        self.samples_of(ray)
            .find_map(|k| self.partition.class_id[k])
    }

    /// Structure invariants of this run.
    pub fn verify(&self, obs: &ConvexObstacle, tol: f64) -> StructureReport {
        let order = check_partial_order(&self.nodes, &self.relation, &self.sets, obs, tol);
        let bfs = chains_bfs(&self.relation, &self.sets);
        let mu_len = self
            .nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Source { .. }))
            .count();
        let support_outside_g = self
            .rays
            .iter()
            .filter(|r| {
                !self
                    .relation
                    .contains(r.coupling.i, self.target_node(mu_len, r.coupling.j))
            })
            .count();
        StructureReport {
            nodes: self.nodes.len(),
            strict_pairs: self.relation.strict_pair_count(),
            t: TransportSets::count(&self.sets.t),
            te: TransportSets::count(&self.sets.te),
            a: TransportSets::count(&self.sets.a),
            b: TransportSets::count(&self.sets.b),
            classes: self.partition.len(),
            samples_per_geodesic: self.samples_per_geodesic,
            order,
            sets_consistent: self.sets.is_consistent(),
            chains_match_bfs: bfs == self.partition.classes,
            support_outside_g,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct StructureReport {
    pub nodes: usize,
    pub strict_pairs: usize,
    pub t: usize,
    pub te: usize,
    pub a: usize,
    pub b: usize,
    pub classes: usize,
    pub samples_per_geodesic: usize,
    pub order: OrderCheck,
    pub sets_consistent: bool,
    pub chains_match_bfs: bool,
    /// Plan couplings of positive length whose endpoints are not related by `G`.
    pub support_outside_g: usize,
}

impl StructureReport {
    pub fn passed(&self) -> bool {
        self.order.passed() && self.sets_consistent && self.chains_match_bfs && self.support_outside_g == 0
    }
}

/// Move every node by arc length `t` along its ray (backwards for `t < 0`).
pub fn evolve(nodes: &[Node], rays: &[PlanRay], members: &[usize], t: f64) -> Vec<Result<Point>> {
    members
        .iter()
        .map(|&k| {
            let node = &nodes[k];
            let Some(slot) = node.slot else {
                if t == 0.0 {
                    return Ok(node.point);
                }
                return Err(Error::EvolutionOverrun {
                    node: k,
                    t,
                    remaining: 0.0,
                });
            };
            if t == 0.0 {
                return Ok(node.point);
            }
            let path = &rays[slot.ray].path;
            let remaining = if t >= 0.0 {
                path.total_length() - slot.offset
            } else {
                slot.offset
            };
            if t.abs() > remaining {
                return Err(Error::EvolutionOverrun {
                    node: k,
                    t,
                    remaining,
                });
            }
            path.point_at((slot.offset + t).clamp(0.0, path.total_length()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct EvolutionStep {
    pub t: f64,
    pub evolvable_fraction: f64,
    pub offenders: Vec<usize>,
    pub injective: bool,
    pub max_distance_error: f64,
    pub betweenness_failures: usize,
}

/// Discrete non-degeneracy diagnostic: for each `t`, the evolvable fraction
/// of `members`, injectivity of the evolution, `d_M(x, x_t) = |t|`, and
/// betweenness of evolved points with their ray endpoints.
pub fn evolution_diagnostic(
    nodes: &[Node],
    rays: &[PlanRay],
    members: &[usize],
    t_list: &[f64],
    obs: &ConvexObstacle,
    tol: f64,
) -> Vec<EvolutionStep> {
    t_list
        .iter()
        .map(|&t| {
            let moved = evolve(nodes, rays, members, t);
            let mut offenders = Vec::new();
            let mut images: Vec<(usize, Point)> = Vec::new();
            for (&k, r) in members.iter().zip(&moved) {
                match r {
                    Ok(p) => images.push((k, *p)),
                    Err(_) => offenders.push(k),
                }
            }
            let checks = par::map_slice(&images, |&(k, p)| {
                let x = nodes[k].point;
                let err = (obs.distance_unchecked(x, p) - t.abs()).abs();
                let between = match nodes[k].slot {
                    Some(slot) => {
                        let path = &rays[slot.ray].path;
                        let (w, z) = (path.start(), path.end());
                        let (first, second) = if t >= 0.0 { (x, p) } else { (p, x) };
                        let d = |a, b| obs.distance_unchecked(a, b);
                        (d(w, first) + d(first, second) + d(second, z) - d(w, z)).abs() <= tol
                    }
                    None => true,
                };
                (err, between)
            });
            let max_distance_error = checks.iter().map(|c| c.0).fold(0.0, f64::max);
            let betweenness_failures = checks.iter().filter(|c| !c.1).count();
            EvolutionStep {
                t,
                evolvable_fraction: if members.is_empty() {
                    1.0
                } else {
                    images.len() as f64 / members.len() as f64
                },
                offenders,
                injective: is_injective(nodes, &images, obs.tolerance()),
                max_distance_error,
                betweenness_failures,
            }
        })
        .collect()
}

/// Distinct source positions map to distinct images.
fn is_injective(nodes: &[Node], images: &[(usize, Point)], tol: f64) -> bool {
    let mut sorted: Vec<&(usize, Point)> = images.iter().collect();
    sorted.sort_by(|a, b| a.1.x.total_cmp(&b.1.x));
    for (k, a) in sorted.iter().enumerate() {
        for b in &sorted[k + 1..] {
            if b.1.x - a.1.x > tol {
                break;
            }
            if a.1.dist(b.1) <= tol && nodes[a.0].point.dist(nodes[b.0].point) > tol {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kantorovich::{cost_matrix, solve_exact};

    fn unit() -> ConvexObstacle {
        ConvexObstacle::disk(Point::new(0.0, 0.0), 1.0).unwrap()
    }

    fn far() -> ConvexObstacle {
        ConvexObstacle::disk(Point::new(50.0, 50.0), 1.0).unwrap()
    }

    fn structure(
        obs: &ConvexObstacle,
        src: Vec<Point>,
        dst: Vec<Point>,
        k: usize,
    ) -> (DiscreteMeasure, DiscreteMeasure, RayStructure) {
        let mu = DiscreteMeasure::uniform(src).unwrap();
        let nu = DiscreteMeasure::uniform(dst).unwrap();
        let c = cost_matrix(&mu, &nu, obs).unwrap();
        let (plan, pot) = solve_exact(&mu, &nu, &c).unwrap();
        let rs = RayStructure::build(obs, &mu, &nu, &plan, &pot, k, 1e-9);
        (mu, nu, rs)
    }

    #[test]
    fn closure_of_single_pair_is_itself() {
        let p = (Point::new(2.0, 0.0), Point::new(3.0, 1.0));
        assert_eq!(gamma_prime_closure(&[p], &unit(), 2, 1e-12), vec![p]);
    }

    #[test]
    fn collinear_closure_adds_concatenation() {
        let g = [
            (Point::new(0.0, 0.0), Point::new(1.0, 0.0)),
            (Point::new(1.0, 0.0), Point::new(2.0, 0.0)),
        ];
        let closure = gamma_prime_closure(&g, &far(), 2, 1e-12);
        assert!(closure.contains(&(Point::new(0.0, 0.0), Point::new(2.0, 0.0))));
        assert!(closure.contains(&(Point::new(1.0, 0.0), Point::new(1.0, 0.0))));
        assert_eq!(closure.len(), 4);
    }

    #[test]
    fn opposite_sides_closure_adds_nothing() {
        let g = [
            (Point::new(-2.0, 0.5), Point::new(2.0, 0.6)),
            (Point::new(-2.0, -0.5), Point::new(2.0, -0.7)),
        ];
        let closure = gamma_prime_closure(&g, &unit(), 2, 1e-9);
        assert_eq!(closure, g.to_vec());
    }

    #[test]
    fn relation_along_one_geodesic() {
        let obs = unit();
        let (_, _, rs) = structure(&obs, vec![Point::new(-2.0, 0.0)], vec![Point::new(2.0, 0.0)], 3);
        // nodes: source 0, target 1, samples 2,3,4 in order along the ray
        let rel = &rs.relation;
        for (a, b) in [(2, 3), (3, 4), (2, 4), (0, 2), (4, 1), (0, 1)] {
            assert!(rel.contains(a, b), "({a},{b})");
            assert!(!rel.contains(b, a), "({b},{a})");
        }
        for x in 0..5 {
            assert!(rel.contains(x, x));
        }
        let sets = &rs.sets;
        assert_eq!(sets.t, vec![false, false, true, true, true]);
        assert!(sets.a[0] && sets.b[1]);
        assert!(sets.is_consistent());
        assert_eq!(rs.partition.len(), 1);
    }

    #[test]
    fn unrelated_rays_are_not_ordered() {
        let obs = far();
        let (_, _, rs) = structure(
            &obs,
            vec![Point::new(0.0, 0.0), Point::new(0.0, 5.0)],
            vec![Point::new(3.0, 0.5), Point::new(3.0, 5.5)],
            2,
        );
        // samples of ray 0 are nodes 4,5, of ray 1 are 6,7
        for a in [4, 5] {
            for b in [6, 7] {
                assert!(!rs.relation.related(a, b));
            }
        }
        assert_eq!(rs.partition.len(), 2);
    }

    #[test]
    fn three_chain_sets() {
        let rel = relation_from_pairs(3, &[(0, 1), (1, 2), (0, 2)]);
        let sets = transport_sets(&rel);
        assert_eq!(sets.t, vec![false, true, false]);
        assert_eq!(sets.te, vec![true, true, true]);
        assert_eq!(sets.a, vec![true, false, false]);
        assert_eq!(sets.b, vec![false, false, true]);
        let iso = relation_from_pairs(4, &[(0, 1)]);
        assert!(!transport_sets(&iso).te[3]);
    }

    #[test]
    fn y_shaped_merge_sets() {
        // two sources 0,1 merge at boundary node 2, continue through 3 to target 4
        let rel = relation_from_pairs(
            5,
            &[(0, 2), (1, 2), (2, 3), (3, 4), (0, 3), (1, 3), (0, 4), (1, 4), (2, 4)],
        );
        let sets = transport_sets(&rel);
        assert_eq!(sets.t, vec![false, false, true, true, false]);
        assert_eq!(TransportSets::count(&sets.a) + TransportSets::count(&sets.b), 3);
        assert!(sets.is_consistent());
    }

    #[test]
    fn chains_require_interior_links() {
        // two rays 0->1->2 and 3->4->5 sharing nothing
        let rel = relation_from_pairs(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let sets = transport_sets(&rel);
        assert_eq!(chains(&rel, &sets).len(), 2);
        // two rays sharing interior node 2: 0->2->1 and 3->2->4
        let rel = relation_from_pairs(5, &[(0, 2), (2, 1), (0, 1), (3, 2), (2, 4), (3, 4)]);
        let sets = transport_sets(&rel);
        assert_eq!(chains(&rel, &sets).len(), 1);
        // two rays meeting only at a common final point 2: 0->1->2 and 3->4->2
        let rel = relation_from_pairs(5, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 2), (3, 2)]);
        let sets = transport_sets(&rel);
        let part = chains(&rel, &sets);
        assert_eq!(part.len(), 2);
        assert_eq!(chains_bfs(&rel, &sets), part.classes);
        assert_eq!(part.attached[2], Some(part.class_id[1].unwrap()));
    }

    #[test]
    fn evolve_cases() {
        let obs = unit();
        let (_, _, rs) = structure(&obs, vec![Point::new(-2.0, 0.0)], vec![Point::new(2.0, 0.0)], 3);
        let moved = evolve(&rs.nodes, &rs.rays, &[0], 0.0);
        assert_eq!(moved[0].as_ref().unwrap(), &Point::new(-2.0, 0.0));
        let t = 3f64.sqrt() + 0.1;
        let p = *evolve(&rs.nodes, &rs.rays, &[0], t)[0].as_ref().unwrap();
        let theta = 2.0 * std::f64::consts::PI / 3.0 - 0.1;
        assert!(p.dist(Point::new(theta.cos(), theta.sin())) < 1e-12);
        assert!(evolve(&rs.nodes, &rs.rays, &[1], 0.1)[0].is_err());

        let far = far();
        let (_, _, rs) = structure(&far, vec![Point::new(2.0, 0.0)], vec![Point::new(3.0, 0.0)], 1);
        let p = *evolve(&rs.nodes, &rs.rays, &[0], 0.5)[0].as_ref().unwrap();
        assert_eq!(p, Point::new(2.5, 0.0));
    }

    #[test]
    fn evolution_diagnostic_reports_offenders() {
        let obs = far();
        let (_, _, rs) = structure(
            &obs,
            vec![Point::new(0.0, 0.0), Point::new(0.0, 2.0)],
            vec![Point::new(1.0, 0.0), Point::new(3.0, 2.0)],
            0,
        );
        let steps = evolution_diagnostic(&rs.nodes, &rs.rays, &[0, 1], &[0.1, 2.0], &obs, 1e-9);
        assert_eq!(steps[0].evolvable_fraction, 1.0);
        assert!(steps[0].injective);
        assert_eq!(steps[1].offenders, vec![0]);
        assert!(steps[1].evolvable_fraction < 1.0);
        let steps = evolution_diagnostic(&rs.nodes, &rs.rays, &[2], &[0.1], &obs, 1e-9);
        assert_eq!(steps[0].offenders, vec![2]);
    }

    #[test]
    fn closure_pairs_lie_in_potential_relation() {
        let obs = unit();
        let src = vec![Point::new(-2.0, 0.3), Point::new(-2.5, -0.4), Point::new(-1.8, 1.4)];
        let dst = vec![Point::new(2.2, 0.1), Point::new(2.0, -0.9), Point::new(1.9, 1.6)];
        let (mu, nu, rs) = structure(&obs, src, dst, 2);
        let gamma: Vec<(Point, Point)> = rs
            .rays
            .iter()
            .map(|r| (mu.atoms()[r.coupling.i], nu.atoms()[r.coupling.j]))
            .collect();
        let closure = gamma_prime_closure(&gamma, &obs, 2, 1e-9);
        let points: Vec<Point> = rs.nodes.iter().map(|n| n.point).collect();
        let direct = relation_from_closure(&points, &closure, &obs, 1e-9);
        for (x, y) in direct {
            assert!(rs.relation.contains(x, y), "({x},{y}) on a closure ray but not in G");
        }
    }
}
