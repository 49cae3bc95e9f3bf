//! Problem files, run artifacts, reports and figures.

pub mod artifacts;
pub mod problem;
pub mod svg;

pub use artifacts::{emit_report, run_solve, verify_dir, RunArtifacts, RunReport};
pub use problem::{parse_problem, Problem};
pub use svg::{render_svg, Layer};
