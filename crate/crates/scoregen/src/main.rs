use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use scoregen::config::Command;
use scoregen::experiments::{run, Context};
use scoregen::output::write_run;
use scoregen::{ExperimentConfig, HarnessError};

/// Score estimation, reverse-SDE sampling and constructive ReLU networks:
/// experiment runner.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Added to every configured seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    /// Worker threads for independent cells.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Largest parameter count a constructed network may have.
    #[arg(long, global = true)]
    param_cap: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Weighted score error of the kernel estimator over n, t and t0.
    Rates,
    /// Reverse-SDE samples from the configured score.
    Sample,
    /// Build a constructive network and its certificate.
    BuildNet,
    /// Re-measure a network file against its reference function.
    VerifyNet,
    /// Train the MLP score model by denoising score matching.
    Train,
    /// Smoothed-empirical KL over sample sizes.
    SweepKl,
    /// Gaussian-smoothing L1 error over noise levels.
    SweepTruncation,
    /// TV of bias-perturbed sampling against the Pinsker bound.
    GirsanovCheck,
}

impl Cmd {
    fn command(self) -> Command {
        match self {
            Cmd::Rates => Command::Rates,
            Cmd::Sample => Command::Sample,
            Cmd::BuildNet => Command::BuildNet,
            Cmd::VerifyNet => Command::VerifyNet,
            Cmd::Train => Command::Train,
            Cmd::SweepKl => Command::SweepKl,
            Cmd::SweepTruncation => Command::SweepTruncation,
            Cmd::GirsanovCheck => Command::Girsanov,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Cmd::Rates => "rates",
            Cmd::Sample => "sample",
            Cmd::BuildNet => "build-net",
            Cmd::VerifyNet => "verify-net",
            Cmd::Train => "train",
            Cmd::SweepKl => "sweep-kl",
            Cmd::SweepTruncation => "sweep-truncation",
            Cmd::GirsanovCheck => "girsanov-check",
        }
    }
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    let start = Instant::now();
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = cli.threads {
        config.threads = t;
    }
    if let Some(c) = cli.param_cap {
        config.param_cap = c;
    }
    if let Some(o) = &cli.out {
        config.output = o.display().to_string();
    }
    let command = cli.command.command();
    let mut ctx = Context::new(&config, command)?;
    ctx.seed_offset = cli.seed_offset;
    if let Some(dir) = cli.config.as_ref().and_then(|p| p.parent()) {
        ctx.base_dir = dir.to_path_buf();
    }
    let artifacts = run(&ctx, command)?;
    let dir = PathBuf::from(&ctx.config.output);
    let written = write_run(&dir, cli.command.name(), &ctx.config, cli.seed_offset, &artifacts, start.elapsed())?;
    for p in &written {
        println!("{}", p.display());
    }
    for (k, v) in &artifacts.measurements {
        println!("{k} = {v}");
    }
    if let Some(v) = &artifacts.violation {
        return Err(scoregen_core::Error::Certificate(v.clone()).into());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
