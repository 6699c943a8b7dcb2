//! Propagation-of-chaos and moment experiments, and the theoretical rate
//! they are compared against.

mod fit;

pub use fit::{fit_loglog_slope, SlopeFit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::levy::LevyModel;
use crate::model::coeffs::Coefficients;
use crate::model::initial::InitialLaw;
use crate::model::measure::{EmpiricalMeasure, MeasureFlow};
use crate::numeric::{mean_and_se, norm};
use crate::solver::{
    picard_fixed_point, simulate_coupled, simulate_decoupled, simulate_particle_system, Ensemble,
    ParticleRun, PicardOutcome, SolverConfig, TimeGrid,
};
use crate::stream::{tag, Layer, NoiseStream, StreamId};
use crate::wasserstein::{w_p_sliced, w_pp};

/// Exponent `e` with `φ_{p,β,d}(n) = n^e`.
pub fn phi_rate(p: f64, beta: f64, d: usize) -> Result<f64> {
    if !(p >= 1.0 && p < beta && beta <= 2.0) || d == 0 {
        return Err(Error::Domain(format!(
            "phi_rate needs 1 <= p < beta <= 2 and d >= 1, got p = {p}, beta = {beta}, d = {d}"
        )));
    }
    let first = -(1.0 - p / beta);
    let second = -p / d as f64;
    let df = d as f64;
    let e = match d {
        1 | 2 => first,
        3 if p >= 1.5 => first,
        3 if beta < 3.0 * p / (3.0 - p) => first,
        3 => second,
        _ if beta < df * p / (df - p) => first,
        _ => second,
    };
    Ok(e)
}

/// Where a weak estimate is evaluated along the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTime {
    #[default]
    Terminal,
    /// Supremum over the base grid times.
    Sup,
}

/// How `W_p^p` between clouds is computed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    Exact,
    Sliced {
        projections: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoCConfig {
    pub model: String,
    pub p: f64,
    pub q1: f64,
    pub q2: f64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    /// Picard paths for the reference flow; raised to `4 · max(n)` if smaller.
    pub reference_paths: usize,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub eval: EvalTime,
    pub distance: DistanceMode,
    pub slack: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl PoCConfig {
    pub fn new(model: &str, p: f64, n_grid: Vec<usize>, replications: usize, seed: u64) -> Self {
        Self {
            model: model.to_string(),
            p,
            q1: 0.5,
            q2: 0.9,
            n_grid,
            replications,
            horizon: 1.0,
            step: 0.01,
            seed,
            reference_paths: 0,
            gamma: 0.0,
            tolerance: 1e-3,
            max_iterations: 30,
            eval: EvalTime::Terminal,
            distance: DistanceMode::Exact,
            slack: 0.15,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self, beta: f64) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.p >= 1.0 && self.p < beta) {
            bad.push(format!(
                "need 1 <= p < beta, got p = {}, beta = {beta}",
                self.p
            ));
        }
        if !(self.q1 >= 0.0 && self.q1 < self.q2 && self.q2 < 1.0) {
            bad.push(format!(
                "need 0 <= q1 < q2 < 1, got q1 = {}, q2 = {}",
                self.q1, self.q2
            ));
        }
        if self.n_grid.len() < 3 {
            bad.push("n grid needs at least 3 values".to_string());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid.first() == Some(&0) {
            bad.push("n grid must be positive and strictly increasing".to_string());
        }
        if self.replications < 2 {
            bad.push("need at least 2 replications".to_string());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bad.push(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            bad.push(format!("step must be positive, got {}", self.step));
        }
        if let DistanceMode::Sliced { projections: 0 } = self.distance {
            bad.push("sliced distance needs at least one projection".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.step)
    }

    pub fn max_n(&self) -> usize {
        self.n_grid.iter().copied().max().unwrap_or(0)
    }

    /// Picard settings for the reference flow.
    pub fn reference_solver(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(
            self.step,
            self.reference_paths.max(4 * self.max_n()).max(2),
            self.seed,
        );
        cfg.gamma = self.gamma;
        cfg.tolerance = self.tolerance;
        cfg.max_iterations = self.max_iterations;
        cfg.experiment = tag("reference");
        cfg.exec = self.exec;
        cfg
    }
}

/// Sub-experiment id for a role at a given particle count.
pub(crate) fn experiment_id(role: &str, n: usize) -> u64 {
    tag(&format!("{role}/{n}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub mean: f64,
    pub se: f64,
}

impl Term {
    fn of(values: &[f64]) -> Self {
        let (mean, se) = mean_and_se(values);
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub estimate: f64,
    pub se: f64,
    /// Interacting cloud against its coupled limit copies.
    pub interaction: Option<Term>,
    /// Limit copies against an independent set of limit copies.
    pub sampling: Option<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub kind: String,
    pub model: String,
    pub p: f64,
    pub beta: f64,
    pub dim: usize,
    pub points: Vec<RatePoint>,
    /// `None` when every estimate is zero.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub theoretical: f64,
    pub slack: f64,
    pub verdict: Verdict,
    pub reference_trace: Vec<f64>,
}

impl RateReport {
    pub fn n_values(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.n).collect()
    }

    pub(crate) fn assemble(
        kind: &str,
        cfg: &PoCConfig,
        beta: f64,
        dim: usize,
        points: Vec<RatePoint>,
        theoretical: f64,
        reference_trace: Vec<f64>,
    ) -> Result<Self> {
        let all_zero = points.iter().all(|p| p.estimate == 0.0);
        let (slope, slope_se) = if all_zero {
            (None, None)
        } else {
            let pts: Vec<(f64, f64, f64)> = points
                .iter()
                .map(|p| (p.n as f64, p.estimate, p.se))
                .collect();
            let fit = fit_loglog_slope(&pts)?;
            (Some(fit.slope), Some(fit.slope_se))
        };
        // All-zero estimates are bounded by any rate.
        let verdict = match slope {
            Some(s) if s > theoretical + cfg.slack => Verdict::Fail,
            _ => Verdict::Pass,
        };
        Ok(Self {
            kind: kind.to_string(),
            model: cfg.model.clone(),
            p: cfg.p,
            beta,
            dim,
            points,
            slope,
            slope_se,
            theoretical,
            slack: cfg.slack,
            verdict,
            reference_trace,
        })
    }
}

pub(crate) fn cloud_wpp(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    p: f64,
    mode: DistanceMode,
    stream: &NoiseStream,
) -> Result<f64> {
    match mode {
        DistanceMode::Exact => w_pp(a, b, p),
        DistanceMode::Sliced { projections } => {
            Ok(w_p_sliced(a, b, p, projections, stream)?.value.powf(p))
        }
    }
}

/// Per-time `W_p^p` between two runs on the same grid, reduced by `eval`.
pub(crate) fn run_wpp(
    a: &ParticleRun,
    b: &ParticleRun,
    cfg: &PoCConfig,
    stream: &NoiseStream,
) -> Result<Vec<f64>> {
    let times: Vec<usize> = match cfg.eval {
        EvalTime::Terminal => vec![a.states.len() - 1],
        EvalTime::Sup => (0..a.states.len()).collect(),
    };
    times
        .into_iter()
        .map(|k| cloud_wpp(&a.cloud(k), &b.cloud(k), cfg.p, cfg.distance, stream))
        .collect()
}

fn sup_of_sum(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a + b).fold(0.0, f64::max)
}

fn sup(x: &[f64]) -> f64 {
    x.iter().copied().fold(0.0, f64::max)
}

/// Which terms of the weak estimate to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum WeakTerms {
    Both,
    SamplingOnly,
}

/// Replication driver shared by the weak estimators. `interacting(q, ens)`
/// and `limit(q, ens)` simulate replication `q`.
pub(crate) fn weak_points<I, L>(
    cfg: &PoCConfig,
    initial: &dyn InitialLaw,
    terms: WeakTerms,
    interacting: I,
    limit: L,
) -> Result<Vec<RatePoint>>
where
    I: Fn(usize, &Ensemble) -> Result<ParticleRun> + Sync,
    L: Fn(usize, &Ensemble) -> Result<ParticleRun> + Sync,
{
    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let coupled_id = experiment_id("coupled", n);
        let indep_id = experiment_id("independent", n);
        let reps = cfg
            .exec
            .try_map(cfg.replications, |q| -> Result<(f64, f64, f64)> {
                let ens = Ensemble::draw(initial, n, cfg.seed, coupled_id, q as u64);
                let other = Ensemble::draw(initial, n, cfg.seed, indep_id, q as u64);
                let aux = NoiseStream::new(
                    cfg.seed,
                    StreamId::new(coupled_id, q as u64, 0, Layer::Aux(0)),
                );
                let lim = limit(q, &ens)?;
                let lim2 = limit(q, &other)?;
                let samp = run_wpp(&lim, &lim2, cfg, &aux)?;
                if terms == WeakTerms::SamplingOnly {
                    return Ok((0.0, sup(&samp), sup(&samp)));
                }
                let inter = interacting(q, &ens)?;
                let int = run_wpp(&inter, &lim, cfg, &aux)?;
                // Components are reported at their own suprema.
                Ok((sup(&int), sup(&samp), sup_of_sum(&int, &samp)))
            })?;
        let ints: Vec<f64> = reps.iter().map(|r| r.0).collect();
        let samps: Vec<f64> = reps.iter().map(|r| r.1).collect();
        let totals: Vec<f64> = reps.iter().map(|r| r.2).collect();
        let total = Term::of(&totals);
        points.push(RatePoint {
            n,
            estimate: total.mean,
            se: total.se,
            interaction: (terms == WeakTerms::Both).then(|| Term::of(&ints)),
            sampling: Some(Term::of(&samps)),
        });
    }
    Ok(points)
}

fn reference(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    levy: &LevyModel,
    cfg: &PoCConfig,
    grid: &TimeGrid,
) -> Result<PicardOutcome> {
    picard_fixed_point(coeffs, initial, levy, grid, &cfg.reference_solver())
}

fn check_inputs(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    cfg: &PoCConfig,
) -> Result<()> {
    cfg.validate(coeffs.beta())?;
    if initial.dim() != coeffs.dim() {
        return Err(Error::DimensionMismatch {
            left: initial.dim(),
            right: coeffs.dim(),
        });
    }
    Ok(())
}

/// Weak propagation of chaos: `E W_p^p(μ̄ⁿ, μ̃ⁿ) + E W_p^p(μ̃ⁿ, μ̃′ⁿ)` against `n`.
pub fn run_weak_poc(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    levy: &LevyModel,
    cfg: &PoCConfig,
) -> Result<RateReport> {
    check_inputs(coeffs, initial, cfg)?;
    let grid = cfg.grid()?;
    let reference = reference(coeffs, initial, levy, cfg, &grid)?;
    let points = weak_points(
        cfg,
        initial,
        WeakTerms::Both,
        |_, ens| simulate_particle_system(coeffs, levy, ens, &grid, false, Exec::Sequential),
        |_, ens| {
            simulate_decoupled(
                coeffs,
                levy,
                &reference.flow,
                ens,
                &grid,
                false,
                Exec::Sequential,
            )
        },
    )?;
    let theoretical = phi_rate(cfg.p, coeffs.beta(), coeffs.dim())?;
    RateReport::assemble(
        "weak_poc",
        cfg,
        coeffs.beta(),
        coeffs.dim(),
        points,
        theoretical,
        reference.trace,
    )
}

/// Sampling term alone: `E W_p^p(μ̃ⁿ, μ̃′ⁿ)` between two independent samples of
/// limit copies.
pub fn run_sampling_rate(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    levy: &LevyModel,
    cfg: &PoCConfig,
) -> Result<RateReport> {
    check_inputs(coeffs, initial, cfg)?;
    let grid = cfg.grid()?;
    let reference = reference(coeffs, initial, levy, cfg, &grid)?;
    let points = weak_points(
        cfg,
        initial,
        WeakTerms::SamplingOnly,
        |_, _| unreachable!("sampling-only run"),
        |_, ens| {
            simulate_decoupled(
                coeffs,
                levy,
                &reference.flow,
                ens,
                &grid,
                false,
                Exec::Sequential,
            )
        },
    )?;
    let theoretical = phi_rate(cfg.p, coeffs.beta(), coeffs.dim())?;
    RateReport::assemble(
        "sampling",
        cfg,
        coeffs.beta(),
        coeffs.dim(),
        points,
        theoretical,
        reference.trace,
    )
}

/// Strong propagation of chaos: `E sup_t |X^{i,n}_t - X^i_t|^{p q1}` against `n`.
pub fn run_strong_poc(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    levy: &LevyModel,
    cfg: &PoCConfig,
) -> Result<RateReport> {
    check_inputs(coeffs, initial, cfg)?;
    let grid = cfg.grid()?;
    let reference = reference(coeffs, initial, levy, cfg, &grid)?;
    let power = cfg.p * cfg.q1;
    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let id = experiment_id("coupled", n);
        let reps = cfg.exec.try_map(cfg.replications, |q| -> Result<f64> {
            let ens = Ensemble::draw(initial, n, cfg.seed, id, q as u64);
            let run =
                simulate_coupled(coeffs, levy, &ens, &grid, &reference.flow, Exec::Sequential)?;
            let sups = run.sup_errors();
            Ok(sups.iter().map(|e| e.powf(power)).sum::<f64>() / n as f64)
        })?;
        let t = Term::of(&reps);
        points.push(RatePoint {
            n,
            estimate: t.mean,
            se: t.se,
            interaction: None,
            sampling: None,
        });
    }
    let theoretical = cfg.q1 * phi_rate(cfg.p, coeffs.beta(), coeffs.dim())?;
    RateReport::assemble(
        "strong_poc",
        cfg,
        coeffs.beta(),
        coeffs.dim(),
        points,
        theoretical,
        reference.trace,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    pub particles: usize,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    pub scalings: Vec<f64>,
    /// Largest allowed max/min ratio across scalings.
    pub max_spread: f64,
    #[serde(skip)]
    pub exec: Exec,
}

impl MomentConfig {
    pub fn new(particles: usize, horizon: f64, step: f64, seed: u64) -> Self {
        Self {
            particles,
            horizon,
            step,
            seed,
            scalings: vec![1.0, 2.0, 4.0, 8.0],
            max_spread: 3.0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub scale: f64,
    /// `Ê|X_0|^β`.
    pub initial: f64,
    /// `Ê|X_T|^β`.
    pub terminal: f64,
    /// `sup_t Ê|X_t|^β` over the base grid.
    pub sup_of_mean: f64,
    /// `Ê sup_t |X_t|^β` over the base grid.
    pub mean_of_sup: f64,
    /// `sup_of_mean / (1 + initial)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub beta: f64,
    pub rows: Vec<MomentRow>,
    /// max/min of the ratio column (0 when all ratios are 0).
    pub spread: f64,
    pub verdict: Verdict,
}

/// Moments of the particle system across scaled initial laws. The same
/// noise drives every scaling; divergence is returned as an error.
pub fn run_moment_experiment(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    levy: &LevyModel,
    cfg: &MomentConfig,
) -> Result<MomentReport> {
    if cfg.particles == 0 || cfg.scalings.is_empty() {
        return Err(Error::Config(
            "moment experiment needs particles and scalings".into(),
        ));
    }
    let grid = TimeGrid::new(cfg.horizon, cfg.step)?;
    let beta = coeffs.beta();
    let base = Ensemble::draw(initial, cfg.particles, cfg.seed, tag("moments"), 0);
    let mut rows = Vec::with_capacity(cfg.scalings.len());
    for &s in &cfg.scalings {
        let ens = Ensemble {
            x0: base
                .x0
                .iter()
                .map(|x| x.iter().map(|v| v * s).collect())
                .collect(),
            streams: base.streams.clone(),
        };
        let run = simulate_particle_system(coeffs, levy, &ens, &grid, false, cfg.exec)?;
        let n = run.particles();
        let moment = |k: usize| {
            (0..n)
                .map(|i| norm(run.state(k, i)).powf(beta))
                .sum::<f64>()
                / n as f64
        };
        let initial = moment(0);
        let last = run.states.len() - 1;
        let sup_of_mean = (0..=last).map(moment).fold(0.0, f64::max);
        let mean_of_sup = (0..n)
            .map(|i| {
                (0..=last)
                    .map(|k| norm(run.state(k, i)).powf(beta))
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / n as f64;
        rows.push(MomentRow {
            scale: s,
            initial,
            terminal: moment(last),
            sup_of_mean,
            mean_of_sup,
            ratio: sup_of_mean / (1.0 + initial),
        });
    }
    let max = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let spread = if max == 0.0 { 0.0 } else { max / min };
    let verdict = if spread < cfg.max_spread {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(MomentReport {
        beta,
        rows,
        spread,
        verdict,
    })
}

/// Picard reference flow as used by the PoC runs, exposed for reporting.
pub fn reference_flow(
    coeffs: &dyn Coefficients,
    initial: &dyn InitialLaw,
    levy: &LevyModel,
    cfg: &PoCConfig,
) -> Result<MeasureFlow> {
    let grid = cfg.grid()?;
    Ok(reference(coeffs, initial, levy, cfg, &grid)?.flow)
}
