//! Monge map from an optimal plan.
//!
//! Plan couplings are grouped by the chain class of their ray. A class whose
//! rays touch the obstacle is an hourglass around one boundary arc `[z, w]`:
//! members are keyed by where they enter (sources) or leave (targets) the
//! arc, then matched monotonically. Straight classes are matched by their
//! position along the common line. The per-class maps are glued and the
//! result is certified by [`verify_map`].

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{oriented_offset, ConvexObstacle, GeodesicPath, Rotation};
use crate::kantorovich::{
    check_cyclical_monotonicity, plan_cost, CostMatrix, Coupling, Potential, TransportPlan,
};
use crate::measure::{exact_equal, pushforward, DiscreteMeasure};
use crate::par;
use crate::rays::{RayStructure, StructureReport};
use crate::union_find::UnionFind;

/// Class masses on the two sides may differ by at most this much.
pub const CLASS_MASS_TOL: f64 = 1e-10;
pub const HOURGLASS_SLACK: f64 = 1e-12;

/// Mass below which a quantile coupling piece is treated as rounding dust.
const DUST: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Straight,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Source,
    Target,
}

/// Oriented boundary arc from `theta_z` to `theta_w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryInterval {
    pub theta_z: f64,
    pub theta_w: f64,
    pub rotation: Rotation,
    pub length: f64,
}

impl BoundaryInterval {
    /// Normalized position of boundary coordinate `theta` along the arc.
    pub fn position(&self, theta: f64, perimeter: f64) -> f64 {
        if self.length <= 0.0 {
            return 0.0;
        }
        let off = oriented_offset(self.theta_z, theta, self.rotation, perimeter);
        (off / self.length).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub atom: usize,
    pub side: Side,
    pub mass: f64,
    pub key: (f64, f64),
}

fn key_order(a: &Member, b: &Member) -> Ordering {
    a.key
        .0
        .total_cmp(&b.key.0)
        .then(a.key.1.total_cmp(&b.key.1))
        .then(a.atom.cmp(&b.atom))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDecomposition {
    pub label: usize,
    pub kind: ClassKind,
    pub interval: Option<BoundaryInterval>,
    /// Indices into the plan's couplings.
    pub couplings: Vec<usize>,
    pub members: Vec<Member>,
    /// Couplings of a boundary class whose geodesic never touches the boundary.
    pub rerouted: Vec<usize>,
    /// Members of the rerouted couplings, keyed by position along their line.
    pub rerouted_members: Vec<Member>,
}

impl ClassDecomposition {
    pub fn sources(&self) -> impl Iterator<Item = &Member> {
        self.members.iter().filter(|m| m.side == Side::Source)
    }

    pub fn targets(&self) -> impl Iterator<Item = &Member> {
        self.members.iter().filter(|m| m.side == Side::Target)
    }
}

/// Minimal oriented boundary arc containing every contact of `paths`, or
/// `None` when no path touches the boundary.
///
/// `u` is the extended potential; the arc must decrease it at unit rate,
/// otherwise the contacts are not ordered consistently with `G`.
pub fn class_boundary_curve(
    label: usize,
    paths: &[&GeodesicPath],
    obs: &ConvexObstacle,
    u: impl Fn(f64) -> f64,
    tol: f64,
) -> Result<Option<BoundaryInterval>> {
    let runs: Vec<_> = paths.iter().filter_map(|p| p.boundary_run()).collect();
    let Some(first) = runs.first() else {
        return Ok(None);
    };
    let rotation = first.rotation;
    if runs.iter().any(|r| r.rotation != rotation) {
        return Err(Error::ClassGeometry {
            class: label,
            reason: "boundary contacts travel in both directions".into(),
        });
    }
    let per = obs.perimeter();
    let (theta_z, length) = runs
        .iter()
        .map(|z| {
            let extent = runs
                .iter()
                .map(|r| oriented_offset(z.start, r.start, rotation, per) + r.length)
                .fold(0.0, f64::max);
            (z.start, extent)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one run");
    if length >= per - obs.tolerance() {
        return Err(Error::ClassGeometry {
            class: label,
            reason: "boundary contacts are not contained in a single arc".into(),
        });
    }
    let theta_w = (theta_z + rotation.sign() * length).rem_euclid(per);
    let drop = u(theta_z) - u(theta_w);
    if (drop - length).abs() > tol {
        return Err(Error::ClassGeometry {
            class: label,
            reason: format!(
                "potential drops by {drop} along a contact arc of length {length}"
            ),
        });
    }
    Ok(Some(BoundaryInterval {
        theta_z,
        theta_w,
        rotation,
        length,
    }))
}

/// Hourglass key `(t, s)` of an atom whose plan geodesic is `path`.
///
/// `t` is the normalized arc position where the geodesic enters (sources) or
/// leaves (targets) the boundary; `s` is the signed arc-length from that
/// contact to the atom, negative upstream.
pub fn contact_index(
    path: &GeodesicPath,
    side: Side,
    interval: &BoundaryInterval,
    obs: &ConvexObstacle,
) -> Option<(f64, f64)> {
    let run = path.boundary_run()?;
    let (enter, leave) = path.contact_offsets()?;
    let per = obs.perimeter();
    Some(match side {
        Side::Source => (interval.position(run.start, per), -enter),
        Side::Target => (
            interval.position(run.end, per),
            path.total_length() - leave,
        ),
    })
}

/// Quantile coupling of two key-sorted member lists.
fn quantile_match(sources: &[Member], targets: &[Member]) -> Vec<Coupling> {
    let mut out = Vec::new();
    let (mut a, mut b) = (0, 0);
    let mut ra = sources.first().map_or(0.0, |m| m.mass);
    let mut rb = targets.first().map_or(0.0, |m| m.mass);
    while a < sources.len() && b < targets.len() {
        let m = ra.min(rb);
        if m > DUST {
            out.push(Coupling {
                i: sources[a].atom,
                j: targets[b].atom,
                mass: m,
            });
        }
        ra -= m;
        rb -= m;
        if ra <= DUST {
            a += 1;
            ra = sources.get(a).map_or(0.0, |x| x.mass);
        }
        if rb <= DUST {
            b += 1;
            rb = targets.get(b).map_or(0.0, |x| x.mass);
        }
    }
    out
}

fn check_masses(label: usize, sources: &[Member], targets: &[Member]) -> Result<()> {
    let source_mass: f64 = sources.iter().map(|m| m.mass).sum();
    let target_mass: f64 = targets.iter().map(|m| m.mass).sum();
    if (source_mass - target_mass).abs() > CLASS_MASS_TOL {
        return Err(Error::ClassMassMismatch {
            class: label,
            source_mass,
            target_mass,
        });
    }
    Ok(())
}

/// Sort both sides by `(t, s, atom)` and pair them in order.
pub fn monotone_map_on_class(
    label: usize,
    sources: &[Member],
    targets: &[Member],
) -> Result<Vec<Coupling>> {
    check_masses(label, sources, targets)?;
    let mut src = sources.to_vec();
    let mut tgt = targets.to_vec();
    src.sort_by(key_order);
    tgt.sort_by(key_order);
    Ok(quantile_match(&src, &tgt))
}

/// 1D monotone rearrangement along a line; `position` is the arc-length
/// coordinate in the direction of transport.
pub fn straight_class_map(
    label: usize,
    sources: &[(usize, f64, f64)],
    targets: &[(usize, f64, f64)],
) -> Result<Vec<Coupling>> {
    let lift = |side, v: &[(usize, f64, f64)]| -> Vec<Member> {
        v.iter()
            .map(|&(atom, mass, position)| Member {
                atom,
                side,
                mass,
                key: (0.0, position),
            })
            .collect()
    };
    monotone_map_on_class(label, &lift(Side::Source, sources), &lift(Side::Target, targets))
}

/// Where a source atom's image came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "class", rename_all = "snake_case")]
pub enum Provenance {
    Class(usize),
    Rerouted(usize),
    Fixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HourglassPair {
    pub class: usize,
    pub source: usize,
    pub target: usize,
    pub t_source: f64,
    pub t_target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MongeMap {
    /// Target atom of every source atom.
    pub assignment: Vec<usize>,
    pub provenance: Vec<Provenance>,
    /// Source atoms whose class plan split their mass over several targets.
    pub split: Vec<usize>,
    pub hourglass: Vec<HourglassPair>,
}

impl MongeMap {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignment.iter().copied().enumerate()
    }
}

/// A class plan together with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialAssignment {
    pub provenance: Provenance,
    pub couplings: Vec<Coupling>,
}

/// Union of class plans; every source atom goes to the target receiving the
/// most of its mass (ties to the lowest index).
pub fn glue_maps(mu: &DiscreteMeasure, parts: &[PartialAssignment]) -> Result<MongeMap> {
    let n = mu.len();
    let mut best: Vec<Option<(usize, f64, Provenance)>> = vec![None; n];
    let mut spread = vec![0usize; n];
    for part in parts {
        for c in &part.couplings {
            spread[c.i] += 1;
            let replace = match best[c.i] {
                None => true,
                Some((j, m, _)) => c.mass > m || (c.mass == m && c.j < j),
            };
            if replace {
                best[c.i] = Some((c.j, c.mass, part.provenance));
            }
        }
    }
    let mut assignment = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for (i, b) in best.into_iter().enumerate() {
        let (j, _, p) = b.ok_or(Error::Unassigned(i))?;
        assignment.push(j);
        provenance.push(p);
    }
    let split = (0..n).filter(|&i| spread[i] > 1).collect();
    Ok(MongeMap {
        assignment,
        provenance,
        split,
        hourglass: Vec::new(),
    })
}

/// Class decompositions and the glued map of one pipeline run.
#[derive(Clone, Debug, PartialEq)]
pub struct MongeBuild {
    pub classes: Vec<ClassDecomposition>,
    pub map: MongeMap,
}

/// Members of one side: atoms with their mass inside `couplings`, keyed by
/// their heaviest coupling there (ties to the lowest partner index).
fn collect_members(
    plan: &TransportPlan,
    couplings: &[usize],
    side: Side,
    mut key: impl FnMut(usize) -> Result<(f64, f64)>,
) -> Result<Vec<Member>> {
    let mut by_atom: BTreeMap<usize, (f64, usize, f64)> = BTreeMap::new();
    for &ci in couplings {
        let c = plan.couplings[ci];
        let (atom, partner) = match side {
            Side::Source => (c.i, c.j),
            Side::Target => (c.j, c.i),
        };
        let entry = by_atom.entry(atom).or_insert((0.0, ci, f64::NEG_INFINITY));
        entry.0 += c.mass;
        let cur = plan.couplings[entry.1];
        let cur_partner = match side {
            Side::Source => cur.j,
            Side::Target => cur.i,
        };
        if c.mass > entry.2 || (c.mass == entry.2 && partner < cur_partner) {
            entry.1 = ci;
            entry.2 = c.mass;
        }
    }
    by_atom
        .into_iter()
        .map(|(atom, (mass, ci, _))| {
            Ok(Member {
                atom,
                side,
                mass,
                key: key(ci)?,
            })
        })
        .collect()
}

/// Decompose the plan into classes, build each class map and glue them.
pub fn build_monge_map(
    obs: &ConvexObstacle,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    plan: &TransportPlan,
    pot: &Potential,
    rs: &RayStructure,
    tol: f64,
) -> Result<MongeBuild> {
    let mut ray_of = vec![None; plan.couplings.len()];
    let mut lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (ci, c) in plan.couplings.iter().enumerate() {
        lookup.insert((c.i, c.j), ci);
    }
    for (r, ray) in rs.rays.iter().enumerate() {
        ray_of[lookup[&(ray.coupling.i, ray.coupling.j)]] = Some(r);
    }

    let mut fixed = Vec::new();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut next_label = rs.partition.len();
    for (ci, r) in ray_of.iter().enumerate() {
        match r {
            None => fixed.push(plan.couplings[ci]),
            Some(r) => {
                let label = rs.ray_class(*r).unwrap_or_else(|| {
                    next_label += 1;
                    next_label - 1
                });
                groups.entry(label).or_default().push(ci);
            }
        }
    }
    let groups: Vec<(usize, Vec<usize>)> = groups.into_iter().collect();

    let mu_len = mu.len();
    let potential_of = |side: Side, atom: usize| match side {
        Side::Source => rs.nodes[atom].potential,
        Side::Target => rs.nodes[mu_len + atom].potential,
    };
    let u_on_boundary = |theta: f64| {
        pot.extend(
            obs,
            nu,
            obs.boundary_point(crate::geometry::BoundaryCoordinate(theta)),
        )
    };

    type ClassOutput = (ClassDecomposition, Vec<PartialAssignment>);
    let built = par::map_slice(&groups, |(label, couplings)| -> Result<ClassOutput> {
        let label = *label;
        let path = |ci: usize| &rs.rays[ray_of[ci].expect("class couplings carry rays")].path;
        let paths: Vec<&GeodesicPath> = couplings.iter().map(|&ci| path(ci)).collect();
        let interval = class_boundary_curve(label, &paths, obs, u_on_boundary, tol)?;
        let straight_key = |side: Side| {
            move |ci: usize| -> Result<(f64, f64)> {
                let c = plan.couplings[ci];
                let atom = if side == Side::Source { c.i } else { c.j };
                Ok((0.0, -potential_of(side, atom)))
            }
        };
        let Some(interval) = interval else {
            let sources = collect_members(plan, couplings, Side::Source, straight_key(Side::Source))?;
            let targets = collect_members(plan, couplings, Side::Target, straight_key(Side::Target))?;
            let parts = vec![PartialAssignment {
                provenance: Provenance::Class(label),
                couplings: monotone_map_on_class(label, &sources, &targets)?,
            }];
            let members = sources.into_iter().chain(targets).collect();
            return Ok((
                ClassDecomposition {
                    label,
                    kind: ClassKind::Straight,
                    interval: None,
                    couplings: couplings.clone(),
                    members,
                    rerouted: Vec::new(),
                    rerouted_members: Vec::new(),
                },
                parts,
            ));
        };

        let (touching, rerouted): (Vec<usize>, Vec<usize>) = couplings
            .iter()
            .partition(|&&ci| path(ci).boundary_run().is_some());
        let hourglass_key = |side: Side| {
            move |ci: usize| {
                contact_index(path(ci), side, &interval, obs).ok_or(Error::ClassGeometry {
                    class: label,
                    reason: format!("coupling {ci} lost its boundary contact"),
                })
            }
        };
        let sources = collect_members(plan, &touching, Side::Source, hourglass_key(Side::Source))?;
        let targets = collect_members(plan, &touching, Side::Target, hourglass_key(Side::Target))?;
        let main = monotone_map_on_class(label, &sources, &targets)?;
        let mut parts = vec![PartialAssignment {
            provenance: Provenance::Class(label),
            couplings: main,
        }];
        let members: Vec<Member> = sources.into_iter().chain(targets).collect();
        let mut rerouted_members = Vec::new();
        for group in collinear_groups(rs, &ray_of, &rerouted) {
            let sources = collect_members(plan, &group, Side::Source, straight_key(Side::Source))?;
            let targets = collect_members(plan, &group, Side::Target, straight_key(Side::Target))?;
            parts.push(PartialAssignment {
                provenance: Provenance::Rerouted(label),
                couplings: monotone_map_on_class(label, &sources, &targets)?,
            });
            rerouted_members.extend(sources.into_iter().chain(targets));
        }
        Ok((
            ClassDecomposition {
                label,
                kind: ClassKind::Boundary,
                interval: Some(interval),
                couplings: couplings.clone(),
                members,
                rerouted,
                rerouted_members,
            },
            parts,
        ))
    });

    let mut classes = Vec::with_capacity(built.len());
    let mut parts = vec![PartialAssignment {
        provenance: Provenance::Fixed,
        couplings: fixed,
    }];
    for b in built {
        let (class, p) = b?;
        classes.push(class);
        parts.extend(p);
    }
    let mut map = glue_maps(mu, &parts)?;
    map.hourglass = hourglass_pairs(&classes, &map.assignment);
    Ok(MongeBuild { classes, map })
}

/// Entry and exit positions of every boundary-class source and its image.
/// An image outside the source's class gets `t_target = -inf`.
pub fn hourglass_pairs(classes: &[ClassDecomposition], assignment: &[usize]) -> Vec<HourglassPair> {
    let mut out = Vec::new();
    for class in classes.iter().filter(|c| c.kind == ClassKind::Boundary) {
        for src in class.sources() {
            let target = assignment[src.atom];
            let t_target = class
                .targets()
                .find(|m| m.atom == target)
                .map_or(f64::NEG_INFINITY, |m| m.key.0);
            out.push(HourglassPair {
                class: class.label,
                source: src.atom,
                target,
                t_source: src.key.0,
                t_target,
            });
        }
    }
    out
}

/// Split rerouted couplings into groups whose ray samples are `R`-related.
fn collinear_groups(rs: &RayStructure, ray_of: &[Option<usize>], couplings: &[usize]) -> Vec<Vec<usize>> {
    let n = couplings.len();
    let mut uf = UnionFind::new(n);
    for a in 0..n {
        let ra = ray_of[couplings[a]].expect("ray");
        for b in a + 1..n {
            let rb = ray_of[couplings[b]].expect("ray");
            let linked = rs
                .samples_of(ra)
                .any(|x| rs.samples_of(rb).any(|y| rs.relation.related(x, y)));
            if linked {
                uf.union(a, b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &ci) in couplings.iter().enumerate() {
        groups.entry(uf.find(k)).or_default().push(ci);
    }
    groups.into_values().collect()
}

/// Tolerances used by [`verify_map`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyTolerances {
    /// Ray relation tolerance.
    pub graph: f64,
    /// Relative cost tolerance: `|gap| <= cost * (1 + cost_plan)`.
    pub cost: f64,
    /// Potential identity on assigned pairs.
    pub identity: f64,
    pub monotonicity: f64,
    pub monotonicity_k_max: usize,
    pub monotonicity_samples: usize,
    pub hourglass: f64,
}

impl VerifyTolerances {
    pub fn with_graph(graph: f64) -> Self {
        VerifyTolerances {
            graph,
            cost: 1e-7,
            identity: 1e-7,
            monotonicity: 1e-7,
            monotonicity_k_max: 4,
            monotonicity_samples: 1000,
            hourglass: HOURGLASS_SLACK,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub label: usize,
    pub kind: ClassKind,
    pub interval: Option<BoundaryInterval>,
    pub sources: usize,
    pub targets: usize,
    pub couplings: usize,
    pub rerouted: usize,
    pub mass: f64,
    pub cost_plan: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub cost_map: f64,
    pub cost_plan: f64,
    /// `cost_map - cost_plan`, signed.
    pub cost_gap: f64,
    pub cost_ok: bool,
    pub pushforward_ok: bool,
    pub graph_in_g_violations: usize,
    pub max_identity_error: f64,
    pub monotonicity_violations: usize,
    pub hourglass_violations: usize,
    pub split_atoms: usize,
    pub structure: StructureReport,
    pub classes: Vec<ClassSummary>,
    pub tolerances: VerifyTolerances,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.cost_ok
            && self.pushforward_ok
            && self.graph_in_g_violations == 0
            && self.monotonicity_violations == 0
            && self.hourglass_violations == 0
            && self.structure.passed()
    }

    /// Names of the failed checks.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.cost_ok {
            out.push("cost");
        }
        if !self.pushforward_ok {
            out.push("pushforward");
        }
        if self.graph_in_g_violations > 0 {
            out.push("graph_in_g");
        }
        if self.monotonicity_violations > 0 {
            out.push("monotonicity");
        }
        if self.hourglass_violations > 0 {
            out.push("hourglass");
        }
        if !self.structure.passed() {
            out.push("structure");
        }
        out
    }
}

/// Certify a glued map against the plan it came from.
#[allow(clippy::too_many_arguments)]
pub fn verify_map(
    map: &MongeMap,
    classes: &[ClassDecomposition],
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    plan: &TransportPlan,
    pot: &Potential,
    cost: &CostMatrix,
    rs: &RayStructure,
    obs: &ConvexObstacle,
    tol: VerifyTolerances,
    seed: u64,
) -> VerificationReport {
    let cost_plan = plan_cost(plan, cost);
    let cost_map: f64 = map
        .pairs()
        .map(|(i, j)| mu.weights()[i] * cost.get(i, j))
        .sum();
    let cost_gap = cost_map - cost_plan;
    let image = pushforward(mu, |i| nu.atoms()[map.assignment[i]]);
    let identity_errors: Vec<f64> = map
        .pairs()
        .map(|(i, j)| (pot.phi[i] + pot.psi[j] - cost.get(i, j)).abs())
        .collect();
    let pairs: Vec<_> = map
        .pairs()
        .map(|(i, j)| (mu.atoms()[i], nu.atoms()[j]))
        .collect();
    let cycles = check_cyclical_monotonicity(
        &pairs,
        obs,
        tol.monotonicity_k_max,
        tol.monotonicity_samples,
        tol.monotonicity,
        seed,
    );
    let hourglass_violations = map
        .hourglass
        .iter()
        .filter(|h| h.t_source > h.t_target + tol.hourglass)
        .count();
    let classes = classes
        .iter()
        .map(|c| ClassSummary {
            label: c.label,
            kind: c.kind,
            interval: c.interval,
            sources: c.sources().count(),
            targets: c.targets().count(),
            couplings: c.couplings.len(),
            rerouted: c.rerouted.len(),
            mass: c.couplings.iter().map(|&k| plan.couplings[k].mass).sum(),
            cost_plan: c
                .couplings
                .iter()
                .map(|&k| {
                    let p = plan.couplings[k];
                    p.mass * cost.get(p.i, p.j)
                })
                .sum(),
        })
        .collect();
    VerificationReport {
        cost_map,
        cost_plan,
        cost_gap,
        cost_ok: cost_gap.abs() <= tol.cost * (1.0 + cost_plan),
        pushforward_ok: exact_equal(&image, nu, obs.tolerance()),
        graph_in_g_violations: identity_errors.iter().filter(|e| **e > tol.identity).count(),
        max_identity_error: identity_errors.iter().copied().fold(0.0, f64::max),
        monotonicity_violations: cycles.len(),
        hourglass_violations,
        split_atoms: map.split.len(),
        structure: rs.verify(obs, tol.identity),
        classes,
        tolerances: tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::kantorovich::{cost_matrix, solve_exact};

    fn member(atom: usize, side: Side, t: f64, s: f64) -> Member {
        Member {
            atom,
            side,
            mass: 0.5,
            key: (t, s),
        }
    }

    struct Run {
        obs: ConvexObstacle,
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        plan: TransportPlan,
        pot: Potential,
        cost: CostMatrix,
        rs: RayStructure,
        build: MongeBuild,
    }

    fn run(obs: ConvexObstacle, src: Vec<Point>, dst: Vec<Point>) -> Run {
        let mu = DiscreteMeasure::uniform(src).unwrap();
        let nu = DiscreteMeasure::uniform(dst).unwrap();
        let cost = cost_matrix(&mu, &nu, &obs).unwrap();
        let (plan, pot) = solve_exact(&mu, &nu, &cost).unwrap();
        let rs = RayStructure::build(&obs, &mu, &nu, &plan, &pot, 8, 1e-9);
        let build = build_monge_map(&obs, &mu, &nu, &plan, &pot, &rs, 1e-9).unwrap();
        Run {
            obs,
            mu,
            nu,
            plan,
            pot,
            cost,
            rs,
            build,
        }
    }

    impl Run {
        fn verify(&self, map: &MongeMap) -> VerificationReport {
            verify_map(
                map,
                &self.build.classes,
                &self.mu,
                &self.nu,
                &self.plan,
                &self.pot,
                &self.cost,
                &self.rs,
                &self.obs,
                VerifyTolerances::with_graph(1e-9),
                7,
            )
        }
    }

    fn unit() -> ConvexObstacle {
        ConvexObstacle::disk(Point::new(0.0, 0.0), 1.0).unwrap()
    }

    #[test]
    fn sorted_matching_on_keys() {
        let src = [member(0, Side::Source, 0.4, 0.0), member(1, Side::Source, 0.1, 0.0)];
        let tgt = [member(5, Side::Target, 0.9, 0.0), member(6, Side::Target, 0.5, 0.0)];
        let m = monotone_map_on_class(0, &src, &tgt).unwrap();
        let pairs: Vec<_> = m.iter().map(|c| (c.i, c.j)).collect();
        assert_eq!(pairs, vec![(1, 6), (0, 5)]);

        let mut light = member(4, Side::Target, 0.1, 0.0);
        light.mass = 0.25;
        let one = monotone_map_on_class(0, &[member(3, Side::Source, 0.9, 0.0)], &[light]).unwrap_err();
        assert!(matches!(one, Error::ClassMassMismatch { .. }));
    }

    #[test]
    fn one_to_one_ignores_keys() {
        let mut s = member(3, Side::Source, 0.9, 0.0);
        let mut t = member(4, Side::Target, 0.1, 0.0);
        s.mass = 1.0;
        t.mass = 1.0;
        let m = monotone_map_on_class(0, &[s], &[t]).unwrap();
        assert_eq!((m[0].i, m[0].j), (3, 4));
    }

    #[test]
    fn straight_monotone_cases() {
        let pairs = |s: &[(usize, f64, f64)], t: &[(usize, f64, f64)]| -> Vec<(usize, usize)> {
            straight_class_map(0, s, t).unwrap().iter().map(|c| (c.i, c.j)).collect()
        };
        assert_eq!(
            pairs(&[(0, 0.5, 0.0), (1, 0.5, 1.0)], &[(0, 0.5, 2.0), (1, 0.5, 3.0)]),
            vec![(0, 0), (1, 1)]
        );
        assert_eq!(
            pairs(&[(0, 0.5, 2.0), (1, 0.5, 0.0)], &[(0, 0.5, 3.0), (1, 0.5, 1.0)]),
            vec![(1, 1), (0, 0)]
        );
        assert_eq!(
            pairs(&[(0, 0.5, 1.0), (1, 0.5, 4.0)], &[(0, 0.5, 4.0), (1, 0.5, 1.0)]),
            vec![(0, 1), (1, 0)]
        );
    }

    #[test]
    fn quantile_splits_unequal_masses() {
        let src = [
            Member { atom: 0, side: Side::Source, mass: 0.25, key: (0.0, 0.0) },
            Member { atom: 1, side: Side::Source, mass: 0.75, key: (1.0, 0.0) },
        ];
        let tgt = [
            Member { atom: 0, side: Side::Target, mass: 0.5, key: (0.0, 0.0) },
            Member { atom: 1, side: Side::Target, mass: 0.5, key: (1.0, 0.0) },
        ];
        let m = monotone_map_on_class(0, &src, &tgt).unwrap();
        let got: Vec<_> = m.iter().map(|c| (c.i, c.j, c.mass)).collect();
        assert_eq!(got, vec![(0, 0, 0.25), (1, 0, 0.25), (1, 1, 0.5)]);
    }

    #[test]
    fn wrap_geodesic_interval_and_keys() {
        let r = run(unit(), vec![Point::new(-2.0, 0.0)], vec![Point::new(2.0, 0.0)]);
        let class = &r.build.classes[0];
        assert_eq!(class.kind, ClassKind::Boundary);
        let iv = class.interval.unwrap();
        let third = std::f64::consts::PI / 3.0;
        assert_eq!(iv.rotation, Rotation::Clockwise);
        assert!((iv.theta_z - 2.0 * third).abs() < 1e-12);
        assert!((iv.theta_w - third).abs() < 1e-12);
        assert!((iv.length - third).abs() < 1e-12);
        let src = class.sources().next().unwrap();
        let tgt = class.targets().next().unwrap();
        let r3 = 3f64.sqrt();
        assert!(src.key.0.abs() < 1e-12 && (src.key.1 + r3).abs() < 1e-12);
        assert!((tgt.key.0 - 1.0).abs() < 1e-12 && (tgt.key.1 - r3).abs() < 1e-12);
    }

    #[test]
    fn atom_on_arc_midpoint_key() {
        let obs = unit();
        let mid = Point::new(0.0, 1.0);
        let path = obs.geodesic(mid, Point::new(2.0, 0.0)).unwrap();
        let third = std::f64::consts::PI / 3.0;
        let iv = BoundaryInterval {
            theta_z: 2.0 * third,
            theta_w: third,
            rotation: Rotation::Clockwise,
            length: third,
        };
        let (t, s) = contact_index(&path, Side::Source, &iv, &obs).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn clear_segment_is_straight() {
        let r = run(unit(), vec![Point::new(2.0, 0.0)], vec![Point::new(3.0, 0.0)]);
        assert_eq!(r.build.classes[0].kind, ClassKind::Straight);
        assert!(r.verify(&r.build.map).passed());
    }

    #[test]
    fn shared_top_arc_gives_union_interval() {
        let obs = unit();
        let a = obs.geodesic(Point::new(-2.0, 0.0), Point::new(2.0, 0.0)).unwrap();
        let b = obs.geodesic(Point::new(-1.5, 0.6), Point::new(2.0, -0.5)).unwrap();
        let u = |_: f64| 0.0;
        let ra = a.boundary_run().unwrap();
        let rb = b.boundary_run().unwrap();
        assert_eq!(ra.rotation, Rotation::Clockwise);
        assert_eq!(rb.rotation, Rotation::Clockwise);
        let iv = class_boundary_curve(0, &[&b, &a], &obs, u, f64::INFINITY).unwrap().unwrap();
        let expect = oriented_offset(ra.start, rb.end, Rotation::Clockwise, obs.perimeter());
        assert_eq!(iv.theta_z, ra.start);
        assert!((iv.length - expect).abs() < 1e-12);
        assert!(iv.length > ra.length && iv.length > rb.length);
        assert!(iv.length < ra.length + rb.length);
    }

    #[test]
    fn opposite_rotations_are_rejected() {
        let obs = unit();
        let top = obs.geodesic(Point::new(-2.0, 0.0), Point::new(2.0, 0.0)).unwrap();
        let bottom = obs.geodesic(Point::new(-2.0, -0.3), Point::new(2.0, -0.3)).unwrap();
        let err = class_boundary_curve(4, &[&top, &bottom], &obs, |_| 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::ClassGeometry { class: 4, .. }));
    }

    #[test]
    fn identity_instance() {
        let pts = vec![Point::new(2.0, 0.0), Point::new(-3.0, 1.0), Point::new(0.0, 5.0)];
        let r = run(unit(), pts.clone(), pts);
        assert_eq!(r.build.map.assignment, vec![0, 1, 2]);
        assert!(r.build.map.provenance.iter().all(|p| *p == Provenance::Fixed));
        let report = r.verify(&r.build.map);
        assert_eq!(report.cost_map, 0.0);
        assert!(report.passed(), "{:?}", report.failures());
    }

    #[test]
    fn two_classes_and_swapped_map() {
        let r = run(
            unit(),
            vec![Point::new(-2.0, 0.2), Point::new(-2.0, -0.2)],
            vec![Point::new(2.0, 0.3), Point::new(2.0, -0.3)],
        );
        assert_eq!(r.build.classes.len(), 2);
        let report = r.verify(&r.build.map);
        assert!(report.passed(), "{:?}", report.failures());
        assert!(report.cost_gap.abs() < 1e-12);

        let mut swapped = r.build.map.clone();
        swapped.assignment.swap(0, 1);
        let bad = r.verify(&swapped);
        assert!(bad.cost_gap > 0.0);
        assert!(bad.graph_in_g_violations >= 1);
        assert!(!bad.passed());
    }

    #[test]
    fn nested_plan_is_rearranged_at_equal_cost() {
        let r = run(
            unit(),
            vec![Point::new(-2.0, 0.1), Point::new(-2.5, 0.6), Point::new(-1.6, 1.2)],
            vec![Point::new(2.1, 0.2), Point::new(1.7, 1.1), Point::new(2.6, 0.5)],
        );
        let report = r.verify(&r.build.map);
        assert!(report.passed(), "{:?}", report.failures());
        assert!(report.cost_gap.abs() <= 1e-12);
    }

    /// Boundary classes whose plan is already monotone in the keys are reproduced.
    #[test]
    fn plan_already_a_graph_is_reproduced() {
        use rand::{Rng, SeedableRng};
        let mut hits = 0;
        for seed in 0..40u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pick = |x0: f64| Point::new(x0 + rng.gen_range(-0.6..0.6), rng.gen_range(-0.3..1.2));
            let src = (0..3).map(|_| pick(-2.2)).collect();
            let dst = (0..3).map(|_| pick(2.2)).collect();
            let r = run(unit(), src, dst);
            for class in r.build.classes.iter().filter(|c| c.kind == ClassKind::Boundary) {
                let key = |side: Side, atom: usize| {
                    class.members.iter().find(|m| m.side == side && m.atom == atom).unwrap().key
                };
                let mut pairs: Vec<_> = class
                    .couplings
                    .iter()
                    .map(|&k| r.plan.couplings[k])
                    .map(|c| (key(Side::Source, c.i), key(Side::Target, c.j), c))
                    .collect();
                if pairs.len() < 2 {
                    continue;
                }
                pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                let monotone = pairs.windows(2).all(|w| w[0].1 < w[1].1);
                if monotone {
                    hits += 1;
                    for (_, _, c) in &pairs {
                        assert_eq!(r.build.map.assignment[c.i], c.j);
                    }
                }
            }
            let report = r.verify(&r.build.map);
            assert!(report.passed(), "seed {seed}: {:?}", report.failures());
        }
        assert!(hits > 0);
    }

    #[test]
    fn unassigned_atom_is_an_error() {
        let mu = DiscreteMeasure::uniform(vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)]).unwrap();
        let parts = [PartialAssignment {
            provenance: Provenance::Fixed,
            couplings: vec![Coupling { i: 0, j: 0, mass: 0.5 }],
        }];
        assert!(matches!(glue_maps(&mu, &parts), Err(Error::Unassigned(1))));
    }
}
