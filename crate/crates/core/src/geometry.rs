//! Planar geometry of the obstacle metric.
//!
//! The metric space is the closed complement of an open convex set `C`.
//! Shortest paths between two admissible points are either a straight
//! segment, or a segment to a tangent point, a run along the boundary and
//! a final segment. Boundary positions are measured by arc length,
//! counterclockwise from a fixed reference point.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative scale of the geometry tolerance.
pub const GEO_REL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    fn lex_le(self, o: Point) -> bool {
        (self.x, self.y) <= (o.x, o.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Direction of travel along the boundary, in terms of the boundary coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rotation {
    /// Boundary coordinate increasing.
    Counterclockwise,
    /// Boundary coordinate decreasing.
    Clockwise,
}

impl Rotation {
    pub fn reversed(self) -> Rotation {
        match self {
            Rotation::Counterclockwise => Rotation::Clockwise,
            Rotation::Clockwise => Rotation::Counterclockwise,
        }
    }

    pub(crate) fn sign(self) -> f64 {
        match self {
            Rotation::Counterclockwise => 1.0,
            Rotation::Clockwise => -1.0,
        }
    }
}

/// Arc-length position on the boundary, in `[0, perimeter)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct BoundaryCoordinate(pub f64);

#[derive(Debug, PartialEq)]
pub struct PolygonRing {
    vertices: Vec<Point>,
    /// `cum[k]` is the boundary coordinate of vertex `k`; `cum[n]` is the perimeter.
    cum: Vec<f64>,
}

impl PolygonRing {
    fn point_at(&self, theta: f64) -> Point {
        let n = self.vertices.len();
        let k = match self.cum.partition_point(|&c| c <= theta) {
            0 => 0,
            k => (k - 1).min(n - 1),
        };
        let a = self.vertices[k];
        let b = self.vertices[(k + 1) % n];
        let len = self.cum[k + 1] - self.cum[k];
        let f = ((theta - self.cum[k]) / len).clamp(0.0, 1.0);
        a + (b - a) * f
    }

    fn edge(&self, k: usize) -> (Point, Point) {
        let n = self.vertices.len();
        (self.vertices[k], self.vertices[(k + 1) % n])
    }
}

/// The boundary curve `M` of the obstacle.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCurve {
    Circle { center: Point, radius: f64 },
    Polygon(Arc<PolygonRing>),
}

impl BoundaryCurve {
    pub fn perimeter(&self) -> f64 {
        match self {
            BoundaryCurve::Circle { radius, .. } => TAU * radius,
            BoundaryCurve::Polygon(ring) => *ring.cum.last().unwrap(),
        }
    }

    /// Point at boundary coordinate `theta` (taken modulo the perimeter).
    pub fn point_at(&self, theta: f64) -> Point {
        let theta = wrap(theta, self.perimeter());
        match self {
            BoundaryCurve::Circle { center, radius } => {
                let a = theta / radius;
                Point::new(center.x + radius * a.cos(), center.y + radius * a.sin())
            }
            BoundaryCurve::Polygon(ring) => ring.point_at(theta),
        }
    }
}

fn wrap(theta: f64, perimeter: f64) -> f64 {
    let t = theta.rem_euclid(perimeter);
    if t >= perimeter {
        0.0
    } else {
        t
    }
}

/// Length travelled from `from` to `to` along the boundary in direction `rot`.
pub fn oriented_offset(from: f64, to: f64, rot: Rotation, perimeter: f64) -> f64 {
    let d = match rot {
        Rotation::Counterclockwise => to - from,
        Rotation::Clockwise => from - to,
    };
    wrap(d, perimeter)
}

/// An open convex obstacle `C`; admissible points lie in its closed complement.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexObstacle {
    curve: BoundaryCurve,
    tol: f64,
}

impl ConvexObstacle {
    pub fn disk(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidObstacle(format!(
                "disk radius must be positive, got {radius}"
            )));
        }
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(Error::InvalidObstacle("disk center is not finite".into()));
        }
        let curve = BoundaryCurve::Circle { center, radius };
        Ok(ConvexObstacle {
            tol: GEO_REL_TOL * (1.0 + 2.0 * radius),
            curve,
        })
    }

    /// Strictly convex polygon with counterclockwise vertices.
    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidObstacle(format!(
                "polygon needs at least 3 vertices, got {n}"
            )));
        }
        if vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(Error::InvalidObstacle("polygon vertex is not finite".into()));
        }
        for k in 0..n {
            let a = vertices[k];
            let b = vertices[(k + 1) % n];
            let c = vertices[(k + 2) % n];
            if a == b {
                return Err(Error::InvalidObstacle(format!("repeated vertex {k}")));
            }
            if (b - a).cross(c - b) <= 0.0 {
                return Err(Error::InvalidObstacle(format!(
                    "vertices must be counterclockwise and strictly convex (turn at vertex {})",
                    (k + 1) % n
                )));
            }
        }
        // A strictly convex turn sequence can still wind more than once.
        let winding: f64 = (0..n)
            .map(|k| {
                let a = vertices[k];
                let b = vertices[(k + 1) % n];
                let c = vertices[(k + 2) % n];
                (b - a).cross(c - b).atan2((b - a).dot(c - b))
            })
            .sum();
        if (winding - TAU).abs() > 1e-6 {
            return Err(Error::InvalidObstacle("polygon is not simple".into()));
        }
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for k in 0..n {
            let len = vertices[k].dist(vertices[(k + 1) % n]);
            cum.push(cum[k] + len);
        }
        let diameter = vertices
            .iter()
            .flat_map(|a| vertices.iter().map(move |b| a.dist(*b)))
            .fold(0.0, f64::max);
        Ok(ConvexObstacle {
            curve: BoundaryCurve::Polygon(Arc::new(PolygonRing { vertices, cum })),
            tol: GEO_REL_TOL * (1.0 + diameter),
        })
    }

    /// Rescale the geometry tolerance to a scene of the given diameter.
    pub fn with_scene_diameter(mut self, diameter: f64) -> Self {
        self.tol = GEO_REL_TOL * (1.0 + diameter.max(0.0));
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    pub fn perimeter(&self) -> f64 {
        self.curve.perimeter()
    }

    pub fn is_polygon(&self) -> bool {
        matches!(self.curve, BoundaryCurve::Polygon(_))
    }

    pub fn vertices(&self) -> Option<&[Point]> {
        match &self.curve {
            BoundaryCurve::Polygon(ring) => Some(&ring.vertices),
            BoundaryCurve::Circle { .. } => None,
        }
    }

    /// Euclidean signed distance to `M`: negative inside, positive outside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match &self.curve {
            BoundaryCurve::Circle { center, radius } => p.dist(*center) - radius,
            BoundaryCurve::Polygon(ring) => {
                let n = ring.vertices.len();
                let outward = (0..n)
                    .map(|k| {
                        let (a, b) = ring.edge(k);
                        let e = b - a;
                        -(e.cross(p - a)) / e.norm()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                if outward <= 0.0 {
                    outward
                } else {
                    (0..n)
                        .map(|k| {
                            let (a, b) = ring.edge(k);
                            point_segment_distance(p, a, b)
                        })
                        .fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    pub fn on_boundary(&self, p: Point) -> bool {
        self.signed_distance(p).abs() <= self.tol
    }

    /// Error unless `p` belongs to the closed complement of the obstacle.
    pub fn check_admissible(&self, p: Point) -> Result<()> {
        if self.signed_distance(p) < -self.tol || !(p.x.is_finite() && p.y.is_finite()) {
            Err(Error::InsideObstacle(p))
        } else {
            Ok(())
        }
    }

    pub fn boundary_point(&self, theta: BoundaryCoordinate) -> Point {
        self.curve.point_at(theta.0)
    }

    /// Boundary coordinate of a point on `M`.
    pub fn boundary_param(&self, q: Point) -> Result<BoundaryCoordinate> {
        let distance = self.signed_distance(q).abs();
        if distance > self.tol {
            return Err(Error::OffBoundary { point: q, distance });
        }
        Ok(BoundaryCoordinate(self.param_unchecked(q)))
    }

    fn param_unchecked(&self, q: Point) -> f64 {
        let perimeter = self.perimeter();
        match &self.curve {
            BoundaryCurve::Circle { center, radius } => {
                let d = q - *center;
                wrap(radius * d.y.atan2(d.x).rem_euclid(TAU), perimeter)
            }
            BoundaryCurve::Polygon(ring) => {
                let n = ring.vertices.len();
                let mut best = (f64::INFINITY, 0.0);
                for k in 0..n {
                    let (a, b) = ring.edge(k);
                    let e = b - a;
                    let f = ((q - a).dot(e) / e.dot(e)).clamp(0.0, 1.0);
                    let d = q.dist(a + e * f);
                    if d < best.0 {
                        best = (d, ring.cum[k] + f * (ring.cum[k + 1] - ring.cum[k]));
                    }
                }
                wrap(best.1, perimeter)
            }
        }
    }

    /// True iff the open segment `(x, y)` avoids the obstacle interior.
    pub fn segment_clear(&self, x: Point, y: Point) -> Result<bool> {
        self.check_admissible(x)?;
        self.check_admissible(y)?;
        Ok(!self.blocked(x, y))
    }

    fn blocked(&self, x: Point, y: Point) -> bool {
        match &self.curve {
            BoundaryCurve::Circle { center, radius } => {
                point_segment_distance(*center, x, y) < radius - self.tol
            }
            BoundaryCurve::Polygon(ring) => {
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                let dir = y - x;
                for k in 0..ring.vertices.len() {
                    let (a, b) = ring.edge(k);
                    let e = b - a;
                    let len = e.norm();
                    // inward signed distance along the segment: f(t) = c0 + c1 t
                    let c0 = e.cross(x - a) / len;
                    let c1 = e.cross(dir) / len;
                    let need = self.tol - c0;
                    if c1.abs() < f64::MIN_POSITIVE {
                        if need >= 0.0 {
                            return false;
                        }
                    } else if c1 > 0.0 {
                        lo = lo.max(need / c1);
                    } else {
                        hi = hi.min(need / c1);
                    }
                    if lo >= hi {
                        return false;
                    }
                }
                lo < hi
            }
        }
    }

    /// The two tangency points seen from `p`, the one lying counterclockwise
    /// of the obstacle (as seen from `p`) first.
    pub fn tangent_points(&self, p: Point) -> Result<(Point, Point)> {
        if self.signed_distance(p) <= self.tol {
            return Err(Error::NotOutside(p));
        }
        Ok(self.tangents_unchecked(p))
    }

    fn tangents_unchecked(&self, p: Point) -> (Point, Point) {
        match &self.curve {
            BoundaryCurve::Circle { center, radius } => {
                let d = p - *center;
                let beta = d.y.atan2(d.x);
                let alpha = (radius / d.norm()).min(1.0).acos();
                let at = |a: f64| Point::new(center.x + radius * a.cos(), center.y + radius * a.sin());
                (at(beta - alpha), at(beta + alpha))
            }
            BoundaryCurve::Polygon(ring) => {
                (polygon_tangent(ring, p, true), polygon_tangent(ring, p, false))
            }
        }
    }

    /// Point where a shortest path from `p` travelling in direction `rot`
    /// around the obstacle first meets `M`, together with its boundary coordinate.
    fn departure(&self, p: Point, rot: Rotation) -> (Point, f64) {
        if self.signed_distance(p) <= self.tol {
            return (p, self.param_unchecked(p));
        }
        let (ccw_seen, cw_seen) = self.tangents_unchecked(p);
        // Clockwise travel keeps the obstacle on the right, i.e. leaves
        // through the tangent seen counterclockwise of the obstacle.
        let q = match rot {
            Rotation::Clockwise => ccw_seen,
            Rotation::Counterclockwise => cw_seen,
        };
        (q, self.param_unchecked(q))
    }

    /// Length of the wrapping route from `a` to `b` travelling in direction `rot`,
    /// with its tangent points.
    fn wrap_route(&self, a: Point, b: Point, rot: Rotation) -> WrapRoute {
        let (q, tq) = self.departure(a, rot);
        let (r, tr) = self.departure(b, rot.reversed());
        let arc = oriented_offset(tq, tr, rot, self.perimeter());
        WrapRoute {
            q,
            tq,
            r,
            tr,
            arc,
            length: a.dist(q) + arc + r.dist(b),
        }
    }

    /// Lengths of both wrapping routes from `a` to `b` (clockwise, counterclockwise).
    fn route_lengths(&self, a: Point, b: Point) -> (WrapRoute, WrapRoute) {
        (
            self.wrap_route(a, b, Rotation::Clockwise),
            self.wrap_route(a, b, Rotation::Counterclockwise),
        )
    }

    /// Obstacle distance without admissibility checks.
    pub(crate) fn distance_unchecked(&self, x: Point, y: Point) -> f64 {
        if x == y {
            return 0.0;
        }
        let (a, b) = if x.lex_le(y) { (x, y) } else { (y, x) };
        if !self.blocked(a, b) {
            return a.dist(b);
        }
        let (cw, ccw) = self.route_lengths(a, b);
        cw.length.min(ccw.length)
    }

    pub fn geodesic_length(&self, x: Point, y: Point) -> Result<f64> {
        self.check_admissible(x)?;
        self.check_admissible(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    /// A shortest path from `x` to `y`.
    ///
    /// When both sides of the obstacle give the same length, the path leaving
    /// `x` through its counterclockwise-seen tangent point (clockwise travel
    /// around the obstacle) is returned.
    pub fn geodesic(&self, x: Point, y: Point) -> Result<GeodesicPath> {
        self.check_admissible(x)?;
        self.check_admissible(y)?;
        Ok(self.geodesic_unchecked(x, y))
    }

    pub(crate) fn geodesic_unchecked(&self, x: Point, y: Point) -> GeodesicPath {
        if x == y {
            return GeodesicPath::from_pieces(x, Vec::new());
        }
        let forward = x.lex_le(y);
        let (a, b) = if forward { (x, y) } else { (y, x) };
        if !self.blocked(a, b) {
            return GeodesicPath::from_pieces(x, vec![PathPiece::Segment { from: x, to: y }]);
        }
        let (cw, ccw) = self.route_lengths(a, b);
        // Preferred rotation as travelled from x; reversed when computing from b.
        let preferred = if forward {
            Rotation::Clockwise
        } else {
            Rotation::Counterclockwise
        };
        let (route, rot) = if (cw.length - ccw.length).abs() <= self.tol {
            match preferred {
                Rotation::Clockwise => (cw, Rotation::Clockwise),
                Rotation::Counterclockwise => (ccw, Rotation::Counterclockwise),
            }
        } else if cw.length < ccw.length {
            (cw, Rotation::Clockwise)
        } else {
            (ccw, Rotation::Counterclockwise)
        };
        let mut pieces = Vec::with_capacity(3);
        if a != route.q {
            pieces.push(PathPiece::Segment { from: a, to: route.q });
        }
        pieces.push(PathPiece::Boundary(BoundaryRun {
            from: route.q,
            to: route.r,
            start: route.tq,
            end: route.tr,
            rotation: rot,
            length: route.arc,
            curve: self.curve.clone(),
        }));
        if route.r != b {
            pieces.push(PathPiece::Segment { from: route.r, to: b });
        }
        let path = GeodesicPath::from_pieces(a, pieces);
        if forward {
            path
        } else {
            path.reversed()
        }
    }

    /// `|d(w,x) + d(x,y) + d(y,z) - d(w,z)| <= tol`.
    pub fn betweenness(&self, w: Point, x: Point, y: Point, z: Point, tol: f64) -> Result<bool> {
        for p in [w, x, y, z] {
            self.check_admissible(p)?;
        }
        let d = |a, b| self.distance_unchecked(a, b);
        Ok((d(w, x) + d(x, y) + d(y, z) - d(w, z)).abs() <= tol)
    }
}

struct WrapRoute {
    q: Point,
    tq: f64,
    r: Point,
    tr: f64,
    arc: f64,
    length: f64,
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let e = b - a;
    let ee = e.dot(e);
    if ee == 0.0 {
        return p.dist(a);
    }
    let f = ((p - a).dot(e) / ee).clamp(0.0, 1.0);
    p.dist(a + e * f)
}

/// Extreme visible vertex: with `ccw_seen` the whole polygon lies to the
/// right of the ray `p -> v`, otherwise to its left. Collinear ties go to
/// the nearer vertex.
fn polygon_tangent(ring: &PolygonRing, p: Point, ccw_seen: bool) -> Point {
    let mut best = ring.vertices[0];
    for &v in &ring.vertices[1..] {
        let c = (best - p).cross(v - p);
        let better = if ccw_seen { c > 0.0 } else { c < 0.0 };
        let scale = (best - p).norm() * (v - p).norm();
        let collinear = c.abs() <= 1e-14 * scale && (best - p).dot(v - p) > 0.0;
        if (better && !collinear) || (collinear && p.dist(v) < p.dist(best)) {
            best = v;
        }
    }
    best
}

/// One piece of a geodesic.
#[derive(Clone, Debug, PartialEq)]
pub enum PathPiece {
    Segment { from: Point, to: Point },
    Boundary(BoundaryRun),
}

/// A run along the boundary between two boundary coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRun {
    pub from: Point,
    pub to: Point,
    pub start: f64,
    pub end: f64,
    pub rotation: Rotation,
    pub length: f64,
    curve: BoundaryCurve,
}

impl BoundaryRun {
    pub fn point_at(&self, s: f64) -> Point {
        if s <= 0.0 {
            return self.from;
        }
        if s >= self.length {
            return self.to;
        }
        self.curve.point_at(self.start + self.rotation.sign() * s)
    }

    fn reversed(&self) -> BoundaryRun {
        BoundaryRun {
            from: self.to,
            to: self.from,
            start: self.end,
            end: self.start,
            rotation: self.rotation.reversed(),
            length: self.length,
            curve: self.curve.clone(),
        }
    }
}

impl PathPiece {
    pub fn length(&self) -> f64 {
        match self {
            PathPiece::Segment { from, to } => from.dist(*to),
            PathPiece::Boundary(run) => run.length,
        }
    }

    fn start(&self) -> Point {
        match self {
            PathPiece::Segment { from, .. } => *from,
            PathPiece::Boundary(run) => run.from,
        }
    }

    fn end(&self) -> Point {
        match self {
            PathPiece::Segment { to, .. } => *to,
            PathPiece::Boundary(run) => run.to,
        }
    }

    fn point_at(&self, s: f64) -> Point {
        match self {
            PathPiece::Segment { from, to } => {
                let len = from.dist(*to);
                if len == 0.0 {
                    *from
                } else {
                    *from + (*to - *from) * (s / len).clamp(0.0, 1.0)
                }
            }
            PathPiece::Boundary(run) => run.point_at(s),
        }
    }

    fn reversed(&self) -> PathPiece {
        match self {
            PathPiece::Segment { from, to } => PathPiece::Segment { from: *to, to: *from },
            PathPiece::Boundary(run) => PathPiece::Boundary(run.reversed()),
        }
    }
}

/// Arc-length parametrized shortest path: at most one boundary run, with at
/// most one segment before and after it.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPath {
    start: Point,
    pieces: Vec<PathPiece>,
    cumulative: Vec<f64>,
}

impl GeodesicPath {
    fn from_pieces(start: Point, pieces: Vec<PathPiece>) -> Self {
        let mut acc = 0.0;
        let cumulative = pieces
            .iter()
            .map(|p| {
                acc += p.length();
                acc
            })
            .collect();
        GeodesicPath {
            start,
            pieces,
            cumulative,
        }
    }

    /// Straight path between two points (no obstacle involved).
    pub fn straight(from: Point, to: Point) -> Self {
        if from == to {
            GeodesicPath::from_pieces(from, Vec::new())
        } else {
            GeodesicPath::from_pieces(from, vec![PathPiece::Segment { from, to }])
        }
    }

    pub fn pieces(&self) -> &[PathPiece] {
        &self.pieces
    }

    /// Cumulative length at the end of each piece.
    pub fn cumulative_lengths(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn start(&self) -> Point {
        self.start
    }

    pub fn end(&self) -> Point {
        self.pieces.last().map_or(self.start, PathPiece::end)
    }

    /// The boundary run, if the path touches `M` along an arc.
    pub fn boundary_run(&self) -> Option<&BoundaryRun> {
        self.pieces.iter().find_map(|p| match p {
            PathPiece::Boundary(run) => Some(run),
            PathPiece::Segment { .. } => None,
        })
    }

    /// Arc-length positions where the boundary run starts and ends.
    pub fn contact_offsets(&self) -> Option<(f64, f64)> {
        let mut before = 0.0;
        for (k, piece) in self.pieces.iter().enumerate() {
            if let PathPiece::Boundary(_) = piece {
                return Some((before, self.cumulative[k]));
            }
            before = self.cumulative[k];
        }
        None
    }

    /// Point at arc length `s` from the start.
    pub fn point_at(&self, s: f64) -> Result<Point> {
        let total = self.total_length();
        if !(s >= 0.0 && s <= total) {
            return Err(Error::OutOfRange { s, total });
        }
        if s == total {
            return Ok(self.end());
        }
        let k = self.cumulative.partition_point(|&c| c <= s);
        let Some(piece) = self.pieces.get(k) else {
            return Ok(self.end());
        };
        let before = if k == 0 { 0.0 } else { self.cumulative[k - 1] };
        Ok(piece.point_at(s - before))
    }

    pub fn reversed(&self) -> GeodesicPath {
        let pieces: Vec<PathPiece> = self.pieces.iter().rev().map(PathPiece::reversed).collect();
        GeodesicPath::from_pieces(self.end(), pieces)
    }

    /// Polyline approximation for drawing, with arcs split into `per_arc` chords.
    pub fn polyline(&self, per_arc: usize) -> Vec<Point> {
        let mut pts = vec![self.start];
        for piece in &self.pieces {
            match piece {
                PathPiece::Segment { to, .. } => pts.push(*to),
                PathPiece::Boundary(run) => {
                    let m = per_arc.max(1);
                    for k in 1..=m {
                        pts.push(run.point_at(run.length * k as f64 / m as f64));
                    }
                }
            }
        }
        pts
    }

    /// Consecutive pieces meet within `tol`.
    pub fn is_connected(&self, tol: f64) -> bool {
        let mut at = self.start;
        for piece in &self.pieces {
            if piece.start().dist(at) > tol {
                return false;
            }
            at = piece.end();
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit() -> ConvexObstacle {
        ConvexObstacle::disk(Point::new(0.0, 0.0), 1.0).unwrap()
    }

    fn square() -> ConvexObstacle {
        ConvexObstacle::polygon(vec![
            Point::new(-1.0, -1.0),
            Point::new(1.0, -1.0),
            Point::new(1.0, 1.0),
            Point::new(-1.0, 1.0),
        ])
        .unwrap()
    }

    fn close(a: Point, b: Point, tol: f64) -> bool {
        a.dist(b) <= tol
    }

    #[test]
    fn segment_clear_cases() {
        let obs = unit();
        assert!(obs.segment_clear(Point::new(0.0, 2.0), Point::new(3.0, 2.0)).unwrap());
        assert!(!obs.segment_clear(Point::new(-2.0, 0.0), Point::new(2.0, 0.0)).unwrap());
        assert!(obs.segment_clear(Point::new(-2.0, 0.0), Point::new(-1.0, 0.0)).unwrap());
        assert!(obs.segment_clear(Point::new(0.0, 0.0), Point::new(2.0, 0.0)).is_err());
    }

    #[test]
    fn polygon_segment_clear() {
        let sq = square();
        assert!(!sq.segment_clear(Point::new(-3.0, 0.0), Point::new(3.0, 0.0)).unwrap());
        // along the top edge: boundary contact only
        assert!(sq.segment_clear(Point::new(-3.0, 1.0), Point::new(3.0, 1.0)).unwrap());
        // through a corner only
        assert!(sq.segment_clear(Point::new(0.0, 2.0), Point::new(2.0, 0.0)).unwrap());
        assert!(!sq.segment_clear(Point::new(0.0, 2.0), Point::new(2.0, -0.5)).unwrap());
    }

    #[test]
    fn disk_tangents_satisfy_orthogonality() {
        let obs = unit();
        let h = 3f64.sqrt() / 2.0;
        let (a, b) = obs.tangent_points(Point::new(-2.0, 0.0)).unwrap();
        assert!(close(a, Point::new(-0.5, h), 1e-12));
        assert!(close(b, Point::new(-0.5, -h), 1e-12));
        let (a, b) = obs.tangent_points(Point::new(0.0, 2.0)).unwrap();
        assert!(close(a, Point::new(h, 0.5), 1e-12));
        assert!(close(b, Point::new(-h, 0.5), 1e-12));
        for p in [Point::new(-2.0, 0.0), Point::new(0.0, 2.0), Point::new(3.0, -1.5)] {
            let (a, b) = obs.tangent_points(p).unwrap();
            for q in [a, b] {
                assert!(q.dot(q - p).abs() < 1e-12);
                assert!(obs.segment_clear(p, q).unwrap());
            }
        }
        assert!(obs.tangent_points(Point::new(1.0, 0.0)).is_err());
        assert!(obs.tangent_points(Point::new(0.2, 0.0)).is_err());
    }

    #[test]
    fn square_tangents_match_brute_force() {
        let sq = square();
        let p = Point::new(-5.0, 0.3);
        // brute force: the vertices with extreme polar angle as seen from p
        let verts = sq.vertices().unwrap();
        let ang = |v: Point| (v - p).y.atan2((v - p).x);
        let max = verts.iter().copied().fold(verts[0], |m, v| if ang(v) > ang(m) { v } else { m });
        let min = verts.iter().copied().fold(verts[0], |m, v| if ang(v) < ang(m) { v } else { m });
        let (a, b) = sq.tangent_points(p).unwrap();
        assert_eq!(a, max);
        assert_eq!(b, min);
        assert_eq!(a, Point::new(-1.0, 1.0));
        assert_eq!(b, Point::new(-1.0, -1.0));
    }

    #[test]
    fn wrap_geodesic_over_the_top() {
        let obs = unit();
        let path = obs.geodesic(Point::new(-2.0, 0.0), Point::new(2.0, 0.0)).unwrap();
        let expected = 2.0 * 3f64.sqrt() + PI / 3.0;
        assert!((path.total_length() - expected).abs() < 1e-12);
        assert_eq!(path.pieces().len(), 3);
        let run = path.boundary_run().unwrap();
        let h = 3f64.sqrt() / 2.0;
        assert!(close(run.from, Point::new(-0.5, h), 1e-12));
        assert!(close(run.to, Point::new(0.5, h), 1e-12));
        assert_eq!(run.rotation, Rotation::Clockwise);
        assert!((path.total_length() - 4.511299).abs() < 1e-6);
        let mid = path.point_at(3f64.sqrt()).unwrap();
        assert!(close(mid, Point::new(-0.5, h), 1e-12));
        assert!(path.is_connected(1e-12));
    }

    #[test]
    fn degenerate_and_clear_paths() {
        let obs = unit();
        let p = Point::new(-2.0, 0.0);
        assert_eq!(obs.geodesic(p, p).unwrap().total_length(), 0.0);
        assert_eq!(obs.geodesic_length(p, p).unwrap(), 0.0);
        let path = obs.geodesic(Point::new(0.0, 2.0), Point::new(3.0, 2.0)).unwrap();
        assert_eq!(path.total_length(), 3.0);
        assert_eq!(obs.geodesic_length(Point::new(0.0, 2.0), Point::new(3.0, 2.0)).unwrap(), 3.0);
    }

    #[test]
    fn path_point_endpoints_and_range() {
        let path = GeodesicPath::straight(Point::new(0.0, 0.0), Point::new(2.0, 0.0));
        assert_eq!(path.point_at(1.0).unwrap(), Point::new(1.0, 0.0));
        assert_eq!(path.point_at(0.0).unwrap(), Point::new(0.0, 0.0));
        assert_eq!(path.point_at(2.0).unwrap(), Point::new(2.0, 0.0));
        assert!(path.point_at(2.5).is_err());
        assert!(path.point_at(-0.1).is_err());
    }

    #[test]
    fn betweenness_cases() {
        let obs = unit();
        let h = 3f64.sqrt() / 2.0;
        let w = Point::new(-2.0, 0.0);
        let z = Point::new(2.0, 0.0);
        assert!(obs.betweenness(w, Point::new(-0.5, h), Point::new(0.5, h), z, 1e-9).unwrap());
        assert!(obs.betweenness(w, w, w, w, 1e-9).unwrap());
        assert!(!obs.betweenness(w, Point::new(0.0, 2.0), Point::new(0.5, h), z, 1e-9).unwrap());
    }

    #[test]
    fn boundary_param_cases() {
        let obs = unit();
        assert_eq!(obs.boundary_param(Point::new(1.0, 0.0)).unwrap().0, 0.0);
        assert!((obs.boundary_param(Point::new(0.0, 1.0)).unwrap().0 - PI / 2.0).abs() < 1e-12);
        let h = 3f64.sqrt() / 2.0;
        assert!((obs.boundary_param(Point::new(-0.5, h)).unwrap().0 - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!(obs.boundary_param(Point::new(2.0, 0.0)).is_err());
        let sq = square();
        assert_eq!(sq.boundary_param(Point::new(-1.0, -1.0)).unwrap().0, 0.0);
        assert!((sq.boundary_param(Point::new(1.0, 0.0)).unwrap().0 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn square_wrap_follows_edges() {
        let sq = square();
        let x = Point::new(-3.0, 0.0);
        let y = Point::new(3.0, 0.0);
        let len = sq.geodesic_length(x, y).unwrap();
        let expected = 2.0 * (4.0f64 + 1.0).sqrt() + 2.0;
        assert!((len - expected).abs() < 1e-12);
        let path = sq.geodesic(x, y).unwrap();
        assert!((path.total_length() - expected).abs() < 1e-12);
        // runs along the top edge
        let mid = path.point_at(5f64.sqrt() + 1.0).unwrap();
        assert!(close(mid, Point::new(0.0, 1.0), 1e-12));
    }

    #[test]
    fn invalid_obstacles_rejected() {
        assert!(ConvexObstacle::disk(Point::new(0.0, 0.0), 0.0).is_err());
        assert!(ConvexObstacle::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(0.0, 1.0),
            Point::new(1.0, 0.0),
        ])
        .is_err());
        assert!(ConvexObstacle::polygon(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, 1.0),
        ])
        .is_err());
    }

    #[test]
    fn on_boundary_start_wraps_from_itself() {
        let obs = unit();
        let h = 3f64.sqrt() / 2.0;
        let q = Point::new(-0.5, h);
        let path = obs.geodesic(q, Point::new(2.0, 0.0)).unwrap();
        let expected = 3f64.sqrt() + PI / 3.0;
        assert!((path.total_length() - expected).abs() < 1e-12);
        assert_eq!(path.contact_offsets().unwrap().0, 0.0);
    }
}
