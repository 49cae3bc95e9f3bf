//! Output directory of a solve: CSV dumps, the JSON report and an optional SVG.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::problem::Problem;
use super::svg::{render_svg, Layer};
use crate::error::{Error, Result};
use crate::kantorovich::{cost_matrix, Coupling, Potential, TransportPlan};
use crate::monge::{
    build_monge_map, hourglass_pairs, verify_map, MongeMap, VerificationReport, VerifyTolerances,
    CLASS_MASS_TOL,
};
use crate::pipeline::{solve, Scene, Solution};
use crate::rays::{NodeKind, RayStructure};

pub const PROBLEM_FILE: &str = "problem.json";
pub const PLAN_FILE: &str = "plan.csv";
pub const PHI_FILE: &str = "potentials_mu.csv";
pub const PSI_FILE: &str = "potentials_nu.csv";
pub const NODES_FILE: &str = "nodes.csv";
pub const RAYS_FILE: &str = "rays.csv";
pub const CLASSES_FILE: &str = "classes.csv";
pub const MAP_FILE: &str = "map.csv";
pub const SVG_FILE: &str = "map.svg";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub geometry: f64,
    pub graph: f64,
    pub cost: f64,
    pub identity: f64,
    pub monotonicity: f64,
    pub hourglass: f64,
    pub class_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub passed: bool,
    pub failures: Vec<String>,
    pub seed: u64,
    pub samples_per_geodesic: usize,
    pub n_mu: usize,
    pub n_nu: usize,
    pub tolerances: Tolerances,
    pub verification: VerificationReport,
    /// SHA-256 of every other emitted file.
    pub files: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; the only field that differs between
    /// identical runs.
    pub timestamp: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub report: RunReport,
    pub solution: Solution,
}

/// Pretty JSON with keys in declaration order.
pub fn emit_report(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_report(text: &str) -> Result<RunReport> {
    Ok(serde_json::from_str(text)?)
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(&row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn node_kind(kind: NodeKind) -> (&'static str, usize) {
    match kind {
        NodeKind::Source { atom } => ("source", atom),
        NodeKind::Target { atom } => ("target", atom),
        NodeKind::Sample { ray, .. } => ("sample", ray),
    }
}

fn dumps(problem: &Problem, scene: &Scene, sol: &Solution) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let rs = &sol.rays;
    let mut files = Vec::new();
    let mut problem_json = serde_json::to_string_pretty(&problem.resolved(scene))?;
    problem_json.push('\n');
    files.push((PROBLEM_FILE, problem_json.into_bytes()));
    files.push((
        PLAN_FILE,
        csv_bytes(
            &["i", "j", "mass"],
            sol.plan
                .couplings
                .iter()
                .map(|c| vec![c.i.to_string(), c.j.to_string(), c.mass.to_string()]),
        )?,
    ));
    let values = |v: &[f64]| -> Vec<Vec<String>> {
        v.iter()
            .enumerate()
            .map(|(k, x)| vec![k.to_string(), x.to_string()])
            .collect()
    };
    files.push((PHI_FILE, csv_bytes(&["index", "value"], values(&sol.potential.phi))?));
    files.push((PSI_FILE, csv_bytes(&["index", "value"], values(&sol.potential.psi))?));
    files.push((
        NODES_FILE,
        csv_bytes(
            &["node", "kind", "index", "x", "y", "potential"],
            rs.nodes.iter().enumerate().map(|(k, n)| {
                let (kind, index) = node_kind(n.kind);
                vec![
                    k.to_string(),
                    kind.to_string(),
                    index.to_string(),
                    n.point.x.to_string(),
                    n.point.y.to_string(),
                    n.potential.to_string(),
                ]
            }),
        )?,
    ));
    files.push((
        RAYS_FILE,
        csv_bytes(
            &["from", "to", "relation"],
            rs.relation.strict_pairs().flat_map(|(x, y)| {
                [
                    vec![x.to_string(), y.to_string(), "G".to_string()],
                    vec![y.to_string(), x.to_string(), "R".to_string()],
                ]
            }),
        )?,
    ));
    files.push((
        CLASSES_FILE,
        csv_bytes(
            &["node", "class", "role"],
            rs.partition.attached.iter().enumerate().filter_map(|(k, c)| {
                c.map(|c| {
                    let role = if rs.sets.t[k] { "member" } else { "endpoint" };
                    vec![k.to_string(), c.to_string(), role.to_string()]
                })
            }),
        )?,
    ));
    files.push((
        MAP_FILE,
        csv_bytes(
            &["mu", "nu"],
            sol.build.map.pairs().map(|(i, j)| vec![i.to_string(), j.to_string()]),
        )?,
    ));
    Ok(files)
}

fn tolerances(scene: &Scene, v: &VerifyTolerances) -> Tolerances {
    Tolerances {
        geometry: scene.obstacle.tolerance(),
        graph: v.graph,
        cost: v.cost,
        identity: v.identity,
        monotonicity: v.monotonicity,
        hourglass: v.hourglass,
        class_mass: CLASS_MASS_TOL,
    }
}

/// Solve, write every artifact into `out_dir` and return the report. The
/// caller decides the exit status from `report.passed`.
pub fn run_solve(problem: &Problem, scene: &Scene, out_dir: &Path, svg: Option<&[Layer]>) -> Result<RunArtifacts> {
    let solution = solve(scene, &problem.options)?;
    fs::create_dir_all(out_dir)?;
    let mut files = dumps(problem, scene, &solution)?;
    if let Some(layers) = svg {
        files.push((SVG_FILE, render_svg(scene, &solution, layers).into_bytes()));
    }
    let mut hashes = BTreeMap::new();
    for (name, bytes) in &files {
        fs::write(out_dir.join(name), bytes)?;
        hashes.insert(name.to_string(), sha256(bytes));
    }
    let v = &solution.report;
    let report = RunReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        passed: v.passed(),
        failures: v.failures().into_iter().map(String::from).collect(),
        seed: problem.options.seed,
        samples_per_geodesic: problem.options.samples_per_geodesic,
        n_mu: scene.mu.len(),
        n_nu: scene.nu.len(),
        tolerances: tolerances(scene, &v.tolerances),
        verification: v.clone(),
        files: hashes,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs()),
    };
    fs::write(out_dir.join(REPORT_FILE), emit_report(&report))?;
    Ok(RunArtifacts {
        dir: out_dir.to_path_buf(),
        report,
        solution,
    })
}

/// Outcome of re-verifying an output directory.
#[derive(Clone, Debug)]
pub struct DirVerification {
    pub report: VerificationReport,
    /// Files whose content no longer matches the hash in `report.json`.
    pub hash_mismatches: Vec<String>,
}

impl DirVerification {
    pub fn passed(&self) -> bool {
        self.hash_mismatches.is_empty() && self.report.passed()
    }
}

fn read_csv<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>> {
    let path = dir.join(name);
    let parse = |e: csv::Error| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut r = csv::Reader::from_path(&path).map_err(parse)?;
    r.deserialize().map(|row| row.map_err(parse)).collect()
}

fn read_values(dir: &Path, name: &str, len: usize) -> Result<Vec<f64>> {
    let rows: Vec<(usize, f64)> = read_csv(dir, name)?;
    let mut out = vec![f64::NAN; len];
    for (k, v) in rows {
        *out.get_mut(k).ok_or_else(|| Error::Validation(format!("{name}: index {k} out of range")))? = v;
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation(format!("{name}: missing entries")));
    }
    Ok(out)
}

/// Re-check a solve directory from its stored plan, potentials and map.
///
/// The ray structure and class keys are rebuilt from the stored plan and
/// potentials; the stored map is then certified as by `solve`.
pub fn verify_dir(dir: &Path) -> Result<DirVerification> {
    let report_path = dir.join(REPORT_FILE);
    let stored = parse_report(&fs::read_to_string(&report_path)?).map_err(|e| Error::Parse {
        path: report_path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut hash_mismatches = Vec::new();
    for (name, hash) in &stored.files {
        let ok = fs::read(dir.join(name)).map(|b| sha256(&b) == *hash).unwrap_or(false);
        if !ok {
            hash_mismatches.push(name.clone());
        }
    }
    let (problem, scene) = super::problem::parse_problem(&dir.join(PROBLEM_FILE))?;
    let (mu, nu, obs) = (&scene.mu, &scene.nu, &scene.obstacle);
    let couplings: Vec<(usize, usize, f64)> = read_csv(dir, PLAN_FILE)?;
    if let Some(c) = couplings.iter().find(|c| c.0 >= mu.len() || c.1 >= nu.len()) {
        return Err(Error::Validation(format!("{PLAN_FILE}: coupling ({}, {}) out of range", c.0, c.1)));
    }
    let plan = TransportPlan {
        couplings: couplings
            .into_iter()
            .map(|(i, j, mass)| Coupling { i, j, mass })
            .collect(),
    };
    let pot = Potential {
        phi: read_values(dir, PHI_FILE, mu.len())?,
        psi: read_values(dir, PSI_FILE, nu.len())?,
    };
    let pairs: Vec<(usize, usize)> = read_csv(dir, MAP_FILE)?;
    let mut assignment = vec![usize::MAX; mu.len()];
    for (i, j) in pairs {
        if i >= mu.len() || j >= nu.len() {
            return Err(Error::Validation(format!("{MAP_FILE}: pair ({i}, {j}) out of range")));
        }
        assignment[i] = j;
    }
    if let Some(i) = assignment.iter().position(|&j| j == usize::MAX) {
        return Err(Error::Unassigned(i));
    }

    let opts = problem.options;
    let cost = cost_matrix(mu, nu, obs)?;
    let rs = RayStructure::build(obs, mu, nu, &plan, &pot, opts.samples_per_geodesic, opts.tol);
    let build = build_monge_map(obs, mu, nu, &plan, &pot, &rs, opts.tol)?;
    let map = MongeMap {
        hourglass: hourglass_pairs(&build.classes, &assignment),
        provenance: build.map.provenance.clone(),
        split: build.map.split.clone(),
        assignment,
    };
    let report = verify_map(
        &map,
        &build.classes,
        mu,
        nu,
        &plan,
        &pot,
        &cost,
        &rs,
        obs,
        VerifyTolerances::with_graph(opts.tol),
        opts.seed,
    );
    Ok(DirVerification {
        report,
        hash_mismatches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::problem::parse_problem_str;

    fn wrap_problem() -> Problem {
        parse_problem_str(
            r#"{"obstacle": {"type": "disk", "center": [0, 0], "radius": 1},
                "mu": {"atoms": [[-2, 0.1], [-2.5, -0.4], [-1.8, 1.3]]},
                "nu": {"atoms": [[2, 0.2], [2.4, -0.5], [1.6, 1.4]]},
                "options": {"seed": 3}}"#,
            "wrap.json",
        )
        .unwrap()
    }

    #[test]
    fn report_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = wrap_problem();
        let art = run_solve(&p, &p.resolve().unwrap(), dir.path(), None).unwrap();
        let text = fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        assert!(text.contains("\"pushforward_ok\": true"));
        assert!(text.contains("\"cost_gap\""));
        assert_eq!(parse_report(&text).unwrap(), art.report);
        assert!(art.report.passed);
        assert_eq!(art.report.files.len(), 8);
    }

    #[test]
    fn failing_report_keeps_signed_gap() {
        let dir = tempfile::tempdir().unwrap();
        let p = wrap_problem();
        let art = run_solve(&p, &p.resolve().unwrap(), dir.path(), None).unwrap();
        let mut bad = art.report.clone();
        bad.verification.cost_gap = -0.25;
        bad.verification.cost_ok = false;
        let text = emit_report(&bad);
        assert!(text.contains("\"cost_gap\": -0.25"));
        assert_eq!(parse_report(&text).unwrap(), bad);
    }

    #[test]
    fn verify_dir_accepts_and_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let p = wrap_problem();
        run_solve(&p, &p.resolve().unwrap(), dir.path(), None).unwrap();
        assert!(verify_dir(dir.path()).unwrap().passed());

        let map_path = dir.path().join(MAP_FILE);
        let text = fs::read_to_string(&map_path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let j1 = lines[1].split(',').nth(1).unwrap().to_string();
        let j2 = lines[2].split(',').nth(1).unwrap().to_string();
        lines[1] = format!("0,{j2}");
        lines[2] = format!("1,{j1}");
        fs::write(&map_path, lines.join("\n") + "\n").unwrap();
        let v = verify_dir(dir.path()).unwrap();
        assert_eq!(v.hash_mismatches, vec![MAP_FILE.to_string()]);
        assert!(!v.report.passed());
    }
}
