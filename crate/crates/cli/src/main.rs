use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use danyra::cli::{parse_config_file, run, threads_from_env, Overrides, THREADS_ENV};
use danyra::problem::Mode;

#[derive(Parser)]
#[command(name = "danyra", version, about = "Anytime-feasible resource allocation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write trace.csv, bounds.json and report.json.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Fig2,
    Fig3,
    BufferSweep,
    Equality,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::BufferSweep => "buffer-sweep",
            Preset::Equality => "equality",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ineq,
    Eq,
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON config file. Optional when a preset is given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

fn run_command(args: RunArgs) -> anyhow::Result<()> {
    if args.config.is_none() && args.preset.is_none() {
        anyhow::bail!("either --config or --preset is required");
    }
    let overrides = Overrides {
        preset: args.preset.map(|p| p.name().to_owned()),
        seed: args.seed,
        iters: args.iters,
        out: args.out,
        mode: args.mode.map(|m| match m {
            ModeArg::Ineq => Mode::Inequality,
            ModeArg::Eq => Mode::Equality,
        }),
    };
    let experiments = parse_config_file(args.config.as_deref(), &overrides).context("config")?;
    let threads = threads_from_env().context(THREADS_ENV)?;
    for exp in &experiments {
        let out = run(exp, threads).with_context(|| format!("run {}", exp.name))?;
        let r = &out.report;
        let recovery = r
            .recovery_iteration
            .map_or_else(|| "none".to_owned(), |k| k.to_string());
        println!(
            "{}: final gap {:.3e}, recovery {recovery}, {:.2e} s/iter -> {}",
            exp.name,
            r.final_gap,
            r.seconds_per_iteration,
            exp.out_dir.display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
