//! Static SVG figures of a solved instance.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundaryCurve, Point};
use crate::pipeline::{Scene, Solution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    Obstacle,
    Atoms,
    Geodesics,
    GEdges,
    Classes,
    Map,
}

impl Layer {
    pub const ALL: [Layer; 6] = [
        Layer::Obstacle,
        Layer::Atoms,
        Layer::Geodesics,
        Layer::GEdges,
        Layer::Classes,
        Layer::Map,
    ];

    /// Everything except the `G`-edge skeleton, which gets dense quickly.
    pub const DEFAULT: [Layer; 5] = [
        Layer::Obstacle,
        Layer::Atoms,
        Layer::Geodesics,
        Layer::Classes,
        Layer::Map,
    ];
}

const WIDTH: f64 = 800.0;
const PAD: f64 = 20.0;

struct Frame {
    lo: Point,
    hi: Point,
    scale: f64,
}

impl Frame {
    fn new(scene: &Scene) -> Frame {
        let obs = &scene.obstacle;
        let boundary = (0..256).map(|k| {
            obs.boundary_point(crate::geometry::BoundaryCoordinate(
                obs.perimeter() * k as f64 / 256.0,
            ))
        });
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in scene.mu.atoms().iter().chain(scene.nu.atoms()).copied().chain(boundary) {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
        Frame {
            lo,
            hi,
            scale: (WIDTH - 2.0 * PAD) / span,
        }
    }

    fn px(&self, p: Point) -> (f64, f64) {
        (
            PAD + (p.x - self.lo.x) * self.scale,
            PAD + (self.hi.y - p.y) * self.scale,
        )
    }

    fn size(&self) -> (f64, f64) {
        (
            2.0 * PAD + (self.hi.x - self.lo.x) * self.scale,
            2.0 * PAD + (self.hi.y - self.lo.y) * self.scale,
        )
    }

    fn points(&self, pts: &[Point]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.px(p);
                format!("{x:.3},{y:.3}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn class_color(label: usize) -> String {
    let hue = (label as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},70%,45%)")
}

/// Deterministic SVG 1.1 document with the selected layers, drawn in the
/// fixed order of [`Layer::ALL`].
pub fn render_svg(scene: &Scene, sol: &Solution, layers: &[Layer]) -> String {
    let on: BTreeSet<Layer> = layers.iter().copied().collect();
    let f = Frame::new(scene);
    let (w, h) = f.size();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">
<defs><marker id="head" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#333"/></marker></defs>"##
    );

    if on.contains(&Layer::Obstacle) {
        match scene.obstacle.curve() {
            BoundaryCurve::Circle { center, radius } => {
                let (cx, cy) = f.px(*center);
                let _ = writeln!(
                    out,
                    r##"<circle class="obstacle" cx="{cx:.3}" cy="{cy:.3}" r="{:.3}" fill="#bbb" stroke="#666"/>"##,
                    radius * f.scale
                );
            }
            BoundaryCurve::Polygon(_) => {
                let vs = scene.obstacle.vertices().unwrap_or(&[]);
                let _ = writeln!(
                    out,
                    r##"<polygon class="obstacle" points="{}" fill="#bbb" stroke="#666"/>"##,
                    f.points(vs)
                );
            }
        }
    }

    if on.contains(&Layer::Geodesics) {
        out.push_str("<g class=\"geodesics\" fill=\"none\" stroke=\"#999\" stroke-width=\"0.8\">\n");
        for ray in &sol.rays.rays {
            let _ = writeln!(out, r#"<polyline points="{}"/>"#, f.points(&ray.path.polyline(24)));
        }
        out.push_str("</g>\n");
    }

    if on.contains(&Layer::GEdges) {
        out.push_str("<g class=\"g-edges\" stroke=\"#2a2\" stroke-width=\"0.5\">\n");
        let nodes = &sol.rays.nodes;
        for x in 0..nodes.len() {
            let next = sol
                .rays
                .relation
                .successors(x)
                .iter()
                .copied()
                .min_by(|&a, &b| nodes[b].potential.total_cmp(&nodes[a].potential).then(a.cmp(&b)));
            if let Some(y) = next {
                let (x1, y1) = f.px(nodes[x].point);
                let (x2, y2) = f.px(nodes[y].point);
                let _ = writeln!(out, r#"<line x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}"/>"#);
            }
        }
        out.push_str("</g>\n");
    }

    if on.contains(&Layer::Classes) {
        out.push_str("<g class=\"classes\">\n");
        for (label, members) in sol.rays.partition.classes.iter().enumerate() {
            let color = class_color(label);
            for &k in members {
                let (cx, cy) = f.px(sol.rays.nodes[k].point);
                let _ = writeln!(out, r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="1.8" fill="{color}"/>"#);
            }
        }
        out.push_str("</g>\n");
    }

    if on.contains(&Layer::Atoms) {
        out.push_str("<g class=\"atoms\">\n");
        for &p in scene.mu.atoms() {
            let (cx, cy) = f.px(p);
            let _ = writeln!(out, r##"<circle class="source" cx="{cx:.3}" cy="{cy:.3}" r="3" fill="#1f5fbf"/>"##);
        }
        for &p in scene.nu.atoms() {
            let (cx, cy) = f.px(p);
            let _ = writeln!(
                out,
                r##"<rect class="target" x="{:.3}" y="{:.3}" width="6" height="6" fill="#c33"/>"##,
                cx - 3.0,
                cy - 3.0
            );
        }
        out.push_str("</g>\n");
    }

    if on.contains(&Layer::Map) {
        out.push_str("<g class=\"map\" stroke=\"#333\" stroke-width=\"0.8\">\n");
        for (i, j) in sol.build.map.pairs() {
            let a = scene.mu.atoms()[i];
            let b = scene.nu.atoms()[j];
            if a == b {
                continue;
            }
            let (x1, y1) = f.px(a);
            let (x2, y2) = f.px(b);
            let _ = writeln!(
                out,
                r#"<line class="arrow" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" marker-end="url(#head)"/>"#
            );
        }
        out.push_str("</g>\n");
    }

    out.push_str("</svg>\n");
    out
}
