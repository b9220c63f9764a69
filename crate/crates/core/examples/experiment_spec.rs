//! The spec-driven pipeline behind the `fdsqn` binary: tune, run, report.
//!
//! Run with `cargo run --release --example experiment_spec [spec.toml]`;
//! without an argument a reduced spec is used and outputs go to a temp dir.

use std::path::PathBuf;

use fdsqn::experiment::{cmd_report, cmd_run, cmd_tune, ExperimentSpec};

const SMALL_SPEC: &str = r#"
[problem]
name = "chebyquad"
d = 8
p = 12
noise_model = "rel"
sigma = 1e-3

[run]
seeds = [1, 2, 3]
budget = 300_000
start_scale = 1.0

[[method]]
method = "fd_norm"
s0 = 16

[[method]]
method = "fd_ipqn"
s0 = 16

[[method]]
method = "fd_sg"
s0 = 16
sg_alpha_from = "tune/manifest.json"
"#;

fn main() -> fdsqn::Result<()> {
    let scratch = tempfile::tempdir().expect("temp dir");
    let (spec, out) = match std::env::args().nth(1) {
        Some(path) => {
            let spec = ExperimentSpec::from_path(&PathBuf::from(path))?;
            let out = spec.run.output.clone().unwrap_or_else(|| scratch.path().to_path_buf());
            (spec, out)
        }
        None => {
            let spec_path = scratch.path().join("spec.toml");
            std::fs::write(&spec_path, SMALL_SPEC).expect("write spec");
            (ExperimentSpec::from_path(&spec_path)?, scratch.path().to_path_buf())
        }
    };

    let (tuned, _) = cmd_tune(&spec, &out.join("tune"))?;
    println!("tuned FD-SG alpha: {:e}", tuned.tuning.expect("tune manifest").best_alpha);

    let manifest = cmd_run(&spec, &out, Some(2))?;
    println!("F* = {:.10}", manifest.reference.f_star);
    for c in &manifest.cells {
        println!("  {:<8} seed {}: {:>5} iterations, err {:.3e}", c.label, c.seed, c.iterations, c.final_err);
    }

    let report = cmd_report(&[out.join("manifest.json")], &out)?;
    for s in &report.summary {
        println!("median {:<8} {:.3e}", s.method, s.median_final_err);
    }
    println!("{} report rows written under {}", report.rows.len(), out.display());
    Ok(())
}
