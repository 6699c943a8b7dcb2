use serde::{Deserialize, Serialize};

/// Stream key of one job. Every random draw of the job comes from
/// counter-based streams keyed by `(seed, experiment, replica, particle, layer)`
/// with replicas `0..replicas` and particles `0..particles`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSeed {
    pub job: String,
    pub seed: u64,
    pub experiment: u64,
    pub replicas: u64,
    pub particles: u64,
}

impl JobSeed {
    pub fn new(job: &str, seed: u64, experiment: u64, replicas: usize, particles: usize) -> Self {
        Self {
            job: job.to_string(),
            seed,
            experiment,
            replicas: replicas as u64,
            particles: particles as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_path: Option<String>,
    /// SHA-256 of the canonical config with the seed actually used.
    pub config_hash: Option<String>,
    pub seed: u64,
    pub jobs: usize,
    pub wall_time_secs: f64,
    pub verdict: String,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
    pub job_seeds: Vec<JobSeed>,
}
