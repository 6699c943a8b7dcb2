//! Orchestration behind the `mvlab` binary: config parsing, experiment
//! dispatch, artifact emission and the run manifest.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod output;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mvlab::Exec;

pub use config::{parse_config, parse_with_seed, ConfigError, ExperimentConfig};
pub use manifest::{JobSeed, RunManifest};

/// Environment variable holding the default worker count.
pub const JOBS_ENV: &str = "MVLAB_JOBS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Picard,
    Poc,
    StrongPoc,
    Moments,
    CommonNoise,
    WassersteinSelftest,
    CheckAssumptions,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Picard => "picard",
            Command::Poc => "poc",
            Command::StrongPoc => "strong-poc",
            Command::Moments => "moments",
            Command::CommonNoise => "common-noise",
            Command::WassersteinSelftest => "wasserstein-selftest",
            Command::CheckAssumptions => "check-assumptions",
        }
    }
}

/// One output file, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Result of one subcommand before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    /// Human-readable table for stdout.
    pub summary: String,
    pub artifacts: Vec<Artifact>,
    pub jobs: Vec<JobSeed>,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Library {
        context: String,
        source: mvlab::Error,
    },
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Output(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Library { context, source } => write!(f, "{context}: {source}"),
            RunError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            RunError::Output(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

pub(crate) trait Context<T> {
    fn context(self, what: &str) -> Result<T, RunError>;
}

impl<T> Context<T> for mvlab::Result<T> {
    fn context(self, what: &str) -> Result<T, RunError> {
        self.map_err(|source| RunError::Library {
            context: what.to_string(),
            source,
        })
    }
}

/// Everything a run needs besides the config.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub jobs: usize,
}

impl RunOptions {
    pub fn exec(&self) -> Exec {
        if self.jobs <= 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

/// What `run` reports back to the binary.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub passed: bool,
    pub summary: String,
    pub warnings: Vec<String>,
    pub manifest: RunManifest,
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Default number of random instances per self-test invariant.
pub const DEFAULT_SELFTEST_CASES: usize = 200;

/// Loads and validates the config (when the subcommand takes one), runs the
/// experiment and writes artifacts plus `manifest.json` into `opts.out`.
pub fn run(cmd: Command, opts: &RunOptions) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let (outcome, seed, hash, warnings) = if cmd == Command::WassersteinSelftest {
        let settings = match &opts.config_path {
            Some(path) => Some(config::selftest_settings(&read(path)?, opts.seed)?),
            None => None,
        };
        let seed = opts
            .seed
            .or(settings.as_ref().and_then(|s| s.seed))
            .unwrap_or(0);
        let cases = settings
            .as_ref()
            .and_then(|s| s.cases)
            .unwrap_or(DEFAULT_SELFTEST_CASES);
        let outcome = commands::wasserstein_selftest(seed, cases)?;
        (outcome, seed, settings.map(|s| s.hash), Vec::new())
    } else {
        let path = opts.config_path.as_ref().ok_or_else(|| {
            RunError::Config(ConfigError {
                violations: vec![format!("{} requires --config PATH", cmd.name())],
            })
        })?;
        let cfg = parse_with_seed(&read(path)?, opts.seed)?;
        config::check_for(&cfg, cmd)?;
        let outcome = commands::execute(cmd, &cfg, opts.exec())?;
        (outcome, cfg.seed, Some(cfg.hash()), cfg.warnings.clone())
    };
    let wall = started.elapsed().as_secs_f64();

    let manifest = RunManifest {
        tool: "mvlab".to_string(),
        version: mvlab::VERSION.to_string(),
        subcommand: cmd.name().to_string(),
        config_path: opts.config_path.as_ref().map(|p| p.display().to_string()),
        config_hash: hash,
        seed,
        jobs: opts.jobs,
        wall_time_secs: wall,
        verdict: if outcome.passed { "pass" } else { "fail" }.to_string(),
        warnings,
        artifacts: outcome.artifacts.iter().map(|a| a.name.clone()).collect(),
        job_seeds: outcome.jobs.clone(),
    };
    output::write_all(&opts.out, &outcome.artifacts, &manifest)?;
    Ok(RunReport {
        passed: outcome.passed,
        summary: outcome.summary,
        warnings: manifest.warnings.clone(),
        manifest,
    })
}
