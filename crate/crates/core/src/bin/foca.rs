use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use foca::harness::{self, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "foca",
    version,
    about = "Feature-caching forecasters on toy diffusion and ODE trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the toy denoiser; writes weights and the loss trace.
    Train(Common),
    /// Run every (kind, N, seed) cell; writes steps.csv and summary.csv.
    Sweep(Common),
    /// Check the contraction bound on a linear system; writes prop1.json.
    Prop1(Common),
    /// Cached and uncached feature trajectories side by side; writes trajectory.csv.
    Dump(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply to everything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the configured seeds (and the training seed).
    #[arg(long)]
    seed: Option<u64>,
    /// `dotted.key=value`, applied after the file. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads for sweep cells; 0 picks the rayon default.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(c: &Common) -> foca::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(
        c.config.as_deref(),
        &Overrides {
            out: c.out.clone(),
            seed: c.seed,
            assignments: c.overrides.clone(),
        },
    )?;
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> foca::Result<i32> {
    match cli.command {
        Command::Train(c) => {
            let cfg = load(&c)?;
            let r = harness::cmd_train(&cfg)?;
            eprintln!(
                "held-out mse {:.5} (optimal {:.5}, threshold {:.5})",
                r.held_out_mse, r.bayes_floor, r.threshold
            );
        }
        Command::Sweep(c) => {
            let cfg = load(&c)?;
            let out = harness::cmd_sweep(&cfg)?;
            for f in &out.failures {
                eprintln!(
                    "cell {} N={} seed={} failed: {}",
                    f.kind, f.n, f.seed, f.error
                );
            }
            eprintln!(
                "{} cells written, {} failed",
                out.summary.len(),
                out.failures.len()
            );
            if out.is_partial() {
                return Ok(harness::EXIT_PARTIAL);
            }
        }
        Command::Prop1(c) => {
            let cfg = load(&c)?;
            let r = harness::cmd_prop1(&cfg)?;
            eprintln!(
                "{}: rho {:.4}, tau_max {:.3e}, bound {}, k-growth {}",
                r.kind,
                r.rho,
                r.tau_max,
                if r.verdict() { "holds" } else { "violated" },
                r.error_strictly_increasing
            );
        }
        Command::Dump(c) => {
            let cfg = load(&c)?;
            let d = harness::cmd_dump(&cfg)?;
            eprintln!("{} steps dumped", d.cached.len());
        }
    }
    Ok(harness::EXIT_OK)
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            harness::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
