use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use obstacle_monge::geometry::PathPiece;
use obstacle_monge::io::{parse_problem, run_solve, verify_dir, Layer};
use obstacle_monge::{Error, Point};

/// Monge optimal transport around a convex obstacle.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and write all artifacts into a directory.
    Solve {
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override `options.tol` of the problem file.
        #[arg(long)]
        tol: Option<f64>,
        /// Also write map.svg.
        #[arg(long)]
        svg: bool,
        /// Layers of map.svg (default: all but g-edges).
        #[arg(long, value_enum, value_delimiter = ',', requires = "svg")]
        layers: Vec<Layer>,
    },
    /// Re-verify a solve directory.
    Verify { dir: PathBuf },
    /// Shortest path around the obstacle of a problem file.
    Geodesic {
        problem: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        from: Point,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        to: Point,
    },
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok(Point::new(num(x)?, num(y)?))
}

enum Outcome {
    Ok,
    Failed,
}

fn run(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Solve {
            problem,
            out,
            tol,
            svg,
            layers,
        } => {
            let (mut problem, mut scene) = parse_problem(&problem)?;
            if let Some(t) = tol {
                problem.options.tol = t;
                scene = problem.resolve()?;
            }
            let layers = if layers.is_empty() {
                Layer::DEFAULT.to_vec()
            } else {
                layers
            };
            let art = run_solve(&problem, &scene, &out, svg.then_some(layers.as_slice()))?;
            let v = &art.report.verification;
            println!(
                "cost_plan {} cost_map {} gap {:e} classes {}",
                v.cost_plan,
                v.cost_map,
                v.cost_gap,
                v.classes.len()
            );
            if art.report.passed {
                println!("verification passed; artifacts in {}", out.display());
                Ok(Outcome::Ok)
            } else {
                eprintln!("verification failed: {}", art.report.failures.join(", "));
                Ok(Outcome::Failed)
            }
        }
        Command::Verify { dir } => {
            let v = verify_dir(&dir)?;
            for name in &v.hash_mismatches {
                eprintln!("hash mismatch: {name}");
            }
            if v.passed() {
                println!("verification passed");
                Ok(Outcome::Ok)
            } else {
                eprintln!("verification failed: {}", v.report.failures().join(", "));
                Ok(Outcome::Failed)
            }
        }
        Command::Geodesic { problem, from, to } => {
            let (_, scene) = parse_problem(&problem)?;
            let path = scene
                .obstacle
                .geodesic(from, to)
                .map_err(|e| Error::Validation(e.to_string()))?;
            let pieces: Vec<_> = path
                .pieces()
                .iter()
                .map(|p| match p {
                    PathPiece::Segment { from, to } => json!({"type": "segment", "from": from, "to": to}),
                    PathPiece::Boundary(run) => json!({
                        "type": "boundary",
                        "from": run.from,
                        "to": run.to,
                        "start": run.start,
                        "end": run.end,
                        "rotation": run.rotation,
                        "length": run.length,
                    }),
                })
                .collect();
            let doc = json!({"length": path.total_length(), "pieces": pieces});
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
