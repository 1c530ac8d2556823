use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use particle_enkf::harness::{self, ExperimentConfig, Preset, RunOutput, Testbed};
use particle_enkf::lagrangian_filters::FilterKind;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "PENKF_THREADS";

#[derive(Parser)]
#[command(name = "penkf", version, about = "Twin experiments with particle ensemble Kalman filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Periodic 1D advection-diffusion twin experiment.
    #[command(name = "run-1d")]
    Run1d(RunArgs),
    /// Wall-bounded 2D dipole twin experiment.
    #[command(name = "run-2d")]
    Run2d(RunArgs),
    /// Run the built-in numerical checks.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["paper", "desk"], default_value = "paper")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["remesh", "part", "grid"])]
    filter: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run1d(a) => experiment(&a, false),
        Command::Run2d(a) => experiment(&a, true),
        Command::Verify => {
            let checks = particle_enkf::verify::run_all();
            let mut failed = 0;
            for c in &checks {
                println!("{} {:<40} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                bail!("{failed} of {} checks failed", checks.len());
            }
            Ok(())
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("{THREADS_VAR}={v:?} is not a thread count"))?;
    if n == 0 {
        bail!("{THREADS_VAR} must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load_config(a: &RunArgs, two_d: bool) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => {
            let preset: Preset = a.preset.parse()?;
            if two_d {
                ExperimentConfig::vortex2d(preset)
            } else {
                ExperimentConfig::adv1d(preset)
            }
        }
    };
    match (&cfg.testbed, two_d) {
        (Testbed::Adv1d(_), true) => bail!("run-2d needs a vortex2d configuration"),
        (Testbed::Vortex2d(_), false) => bail!("run-1d needs an adv1d configuration"),
        _ => {}
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(f) = &a.filter {
        cfg.filter = f.parse::<FilterKind>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(a: &RunArgs, two_d: bool) -> Result<()> {
    let cfg = load_config(a, two_d)?;
    let out = if two_d { harness::run_2d(&cfg)? } else { harness::run_1d(&cfg)? };
    harness::write_outputs(&out, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    summarize(&out, &a.out);
    Ok(())
}

fn summarize(out: &RunOutput, dir: &Path) {
    let (first, last) = (out.first(), out.last());
    println!(
        "{} filter, {} members, {} steps: state error {:.4e} -> {:.4e}",
        out.config.filter,
        out.config.members,
        out.config.n_assim,
        first.state_analysis,
        last.state_analysis
    );
    for (k, name) in out.param_names.iter().enumerate() {
        println!(
            "  rrmse_{name}: {:.4e} -> {:.4e}",
            first.param_analysis[k], last.param_analysis[k]
        );
    }
    println!("outputs written to {}", dir.display());
}
