use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mvlab_cli::{run, Command, RunOptions, JOBS_ENV};

#[derive(Parser)]
#[command(
    name = "mvlab",
    version,
    about = "Simulate Levy-driven McKean-Vlasov systems and check their convergence rates"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the seed from the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory; defaults to out/<subcommand>.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, value_name = "K", env = JOBS_ENV)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Interacting particle system on the time grid.
    Simulate,
    /// Picard iteration towards the limit flow.
    Picard,
    /// Weak propagation-of-chaos rate.
    Poc,
    /// Strong propagation-of-chaos rate.
    StrongPoc,
    /// Moment bounds across scaled initial laws.
    Moments,
    /// Conditional propagation of chaos under a common jump layer.
    CommonNoise,
    /// Invariant suite for the Wasserstein routines.
    WassersteinSelftest,
    /// Randomized checks of declared structural constants.
    CheckAssumptions,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Picard => Command::Picard,
            Cmd::Poc => Command::Poc,
            Cmd::StrongPoc => Command::StrongPoc,
            Cmd::Moments => Command::Moments,
            Cmd::CommonNoise => Command::CommonNoise,
            Cmd::WassersteinSelftest => Command::WassersteinSelftest,
            Cmd::CheckAssumptions => Command::CheckAssumptions,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let cmd = Command::from(cli.command);
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    mvlab::exec::set_worker_count(jobs);
    let opts = RunOptions {
        config_path: cli.config,
        seed: cli.seed,
        out: cli
            .out
            .unwrap_or_else(|| PathBuf::from("out").join(cmd.name())),
        jobs,
    };
    match run(cmd, &opts) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report.summary);
            println!(
                "{}: {} (artifacts in {})",
                cmd.name(),
                if report.passed { "PASS" } else { "FAIL" },
                opts.out.display()
            );
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprint!("error: {e}");
            if !e.to_string().ends_with('\n') {
                eprintln!();
            }
            ExitCode::from(2)
        }
    }
}
