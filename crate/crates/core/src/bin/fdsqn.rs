use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdsqn::experiment::{cmd_report, cmd_run, cmd_tune, ExperimentSpec, Overrides};

#[derive(Parser)]
#[command(name = "fdsqn", version, about = "Adaptive-sampling finite-difference quasi-Newton experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) cell of a spec
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
        /// worker threads
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Tune the fd_sg steplength over 2^-20 .. 2^10
    Tune {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Merge run manifests into report.csv and summary.csv
    Report {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long, env = "FDSQN_OUT")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct Common {
    /// output directory (defaults to run.output, or run.output/tune for tune)
    #[arg(long, env = "FDSQN_OUT")]
    out: Option<PathBuf>,
    /// comma-separated seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// evaluation budget per cell
    #[arg(long)]
    budget: Option<u64>,
}

impl Common {
    fn load(&self, path: &Path, default_subdir: &str) -> fdsqn::Result<(ExperimentSpec, PathBuf)> {
        let mut spec = ExperimentSpec::from_path(path)?;
        Overrides {
            seeds: self.seeds.clone(),
            budget: self.budget,
        }
        .apply(&mut spec)?;
        let out = self
            .out
            .clone()
            .unwrap_or_else(|| spec.run.output.clone().unwrap_or_else(|| "fdsqn-out".into()).join(default_subdir));
        Ok((spec, out))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { spec, common, jobs } => common.load(&spec, "").and_then(|(spec, out)| {
            let manifest = cmd_run(&spec, &out, jobs)?;
            for c in &manifest.cells {
                match &c.error {
                    None => println!("{} seed {}: final err {:.3e}", c.label, c.seed, c.final_err),
                    Some(e) => eprintln!("{} seed {}: {e}", c.label, c.seed),
                }
            }
            Ok(manifest.all_cells_ok())
        }),
        Command::Tune { spec, common } => common.load(&spec, "tune").and_then(|(spec, out)| {
            let (_, result) = cmd_tune(&spec, &out)?;
            println!("best alpha = 2^{} = {:e}", result.best_j, result.best_alpha);
            Ok(true)
        }),
        Command::Report { manifests, out } => cmd_report(&manifests, &out).map(|report| {
            for s in &report.summary {
                println!("{}: median final err {:.3e} over {} runs", s.method, s.median_final_err, s.runs);
            }
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
