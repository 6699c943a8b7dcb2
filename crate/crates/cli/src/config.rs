//! Versioned TOML experiment configuration.
//!
//! Parsing is two-staged: serde reads the raw tables (every field optional),
//! then [`parse_config`] resolves defaults and collects every violation it can
//! find before giving up.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use mvlab::levy::{Annulus, BigBand, LevyModel, MarkSampler, RadialExponential, SmallBand};
use mvlab::model::{Coefficients, CubicInteraction, FamilyRegistry, Initial, Kernel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Command;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<RawModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levy: Option<RawLevy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub common_levy: Option<RawLevy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<RawInitial>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<RawSolver>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<RawExperiment>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub family: Option<String>,
    pub beta: Option<f64>,
    pub dim: Option<usize>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLevy {
    pub split_radius: Option<f64>,
    pub small: Option<RawBand>,
    pub big: Option<RawBand>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBand {
    pub rate: Option<f64>,
    pub law: Option<String>,
    pub inner: Option<f64>,
    pub outer: Option<f64>,
    pub decay: Option<f64>,
    /// Small band only: drop jumps with `|z| < epsilon`.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    pub law: Option<String>,
    pub point: Option<Vec<f64>>,
    pub mean: Option<Vec<f64>>,
    pub sd: Option<f64>,
    pub low: Option<f64>,
    pub high: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSolver {
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub paths: Option<usize>,
    pub gamma: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub common_random_numbers: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    pub particles: Option<usize>,
    pub record: Option<usize>,
    pub p: Option<f64>,
    pub q1: Option<f64>,
    pub q2: Option<f64>,
    pub n_grid: Option<Vec<usize>>,
    pub replications: Option<usize>,
    pub reference_paths: Option<usize>,
    pub estimator: Option<String>,
    pub eval: Option<String>,
    pub distance: Option<String>,
    pub projections: Option<usize>,
    pub slack: Option<f64>,
    pub scalings: Option<Vec<f64>>,
    pub max_spread: Option<f64>,
    pub common_paths: Option<usize>,
    pub trials: Option<usize>,
    pub cases: Option<usize>,
    pub lipschitz: Option<f64>,
    pub lipschitz_form: Option<String>,
    pub coercivity: Option<f64>,
    pub coercivity_form: Option<String>,
    pub local_bound: Option<f64>,
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Weak,
    Sampling,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub family: String,
    pub beta: f64,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
    pub coeffs: Arc<dyn Coefficients>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub horizon: f64,
    pub step: f64,
    pub paths: usize,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub common_random_numbers: bool,
}

/// Experiment block with defaults filled in. `p` stays optional so that a
/// missing value can be checked against β only where a rate is computed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub particles: usize,
    pub record: Option<usize>,
    pub p: Option<f64>,
    pub q1: f64,
    pub q2: f64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub reference_paths: usize,
    pub estimator: Estimator,
    pub eval: mvlab::chaos::EvalTime,
    pub distance: mvlab::chaos::DistanceMode,
    pub slack: f64,
    pub scalings: Vec<f64>,
    pub max_spread: f64,
    pub common_paths: usize,
    pub trials: usize,
    pub cases: usize,
    pub lipschitz: Option<f64>,
    pub lipschitz_form: String,
    pub coercivity: Option<f64>,
    pub coercivity_form: String,
    pub local_bound: Option<f64>,
    pub radius: f64,
}

pub const DEFAULT_P: f64 = 1.0;

impl ExperimentSpec {
    pub fn p(&self) -> f64 {
        self.p.unwrap_or(DEFAULT_P)
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelSpec,
    pub levy: LevyModel,
    pub common_levy: Option<LevyModel>,
    pub initial: Initial,
    pub solver: SolverSpec,
    pub experiment: ExperimentSpec,
    pub warnings: Vec<String>,
    /// Canonical re-serialization; hashed into the run manifest.
    pub canonical: String,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        sha256_hex(&self.canonical)
    }
}

/// Every violation found in a config.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "invalid configuration ({} problem(s)):",
            self.violations.len()
        )?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Collects violations while resolving fields.
#[derive(Default)]
struct Checker {
    bad: Vec<String>,
}

impl Checker {
    fn push(&mut self, msg: impl Into<String>) {
        self.bad.push(msg.into());
    }

    fn require<T: Clone>(&mut self, v: &Option<T>, name: &str) -> Option<T> {
        if v.is_none() {
            self.push(format!("missing required field `{name}`"));
        }
        v.clone()
    }

    fn positive(&mut self, v: f64, name: &str) {
        if !positive(v) {
            self.push(format!("`{name}` must be positive, got {v}"));
        }
    }
}

fn marks(c: &mut Checker, band: &RawBand, name: &str) -> Option<Arc<dyn MarkSampler>> {
    let law = band.law.as_deref().unwrap_or("annulus");
    match law {
        "annulus" => {
            let inner = c.require(&band.inner, &format!("{name}.inner"))?;
            let outer = band.outer.unwrap_or(inner);
            if !(inner >= 0.0 && outer >= inner && outer.is_finite()) {
                c.push(format!(
                    "{name}: need 0 <= inner <= outer, got [{inner}, {outer}]"
                ));
                return None;
            }
            Some(Arc::new(Annulus::new(inner, outer)))
        }
        "radial_exponential" => {
            let inner = c.require(&band.inner, &format!("{name}.inner"));
            let decay = c.require(&band.decay, &format!("{name}.decay"));
            let (inner, decay) = (inner?, decay?);
            if !(inner >= 0.0 && positive(decay)) {
                c.push(format!("{name}: need inner >= 0 and decay > 0"));
                return None;
            }
            Some(Arc::new(match band.outer {
                Some(o) if o > inner => RadialExponential::truncated(inner, decay, o),
                Some(o) => {
                    c.push(format!("{name}: outer {o} must exceed inner {inner}"));
                    return None;
                }
                None => RadialExponential::new(inner, decay),
            }))
        }
        other => {
            c.push(format!(
                "{name}: unknown mark law `{other}` (expected annulus or radial_exponential)"
            ));
            None
        }
    }
}

fn levy(
    c: &mut Checker,
    raw: &RawLevy,
    dim: usize,
    name: &str,
    warnings: &mut Vec<String>,
) -> Option<LevyModel> {
    let split = raw.split_radius.unwrap_or(1.0);
    let before = c.bad.len();
    let small = match &raw.small {
        None => Some(SmallBand::FiniteActivity {
            rate: 0.0,
            marks: Arc::new(Annulus::sphere(0.5 * split)),
        }),
        Some(b) => {
            let rate = b.rate.unwrap_or(0.0);
            marks(c, b, &format!("{name}.small")).map(|m| match b.epsilon {
                Some(epsilon) => {
                    let note = format!("{name}: small jumps below |z| = {epsilon} are dropped");
                    warnings.push(note.clone());
                    SmallBand::Truncated {
                        epsilon,
                        rate,
                        marks: m,
                        bias_note: note,
                    }
                }
                None => SmallBand::FiniteActivity { rate, marks: m },
            })
        }
    };
    let big = match &raw.big {
        None => Some(BigBand {
            rate: 0.0,
            marks: Arc::new(Annulus::sphere(2.0 * split)),
        }),
        Some(b) => {
            if b.epsilon.is_some() {
                c.push(format!(
                    "{name}.big: `epsilon` applies to the small band only"
                ));
            }
            marks(c, b, &format!("{name}.big")).map(|m| BigBand {
                rate: b.rate.unwrap_or(0.0),
                marks: m,
            })
        }
    };
    if c.bad.len() > before {
        return None;
    }
    match LevyModel::new(dim, split, small?, big?) {
        Ok(l) => Some(l),
        Err(e) => {
            c.push(format!("{name}: {}", strip(&e)));
            None
        }
    }
}

fn strip(e: &mvlab::Error) -> String {
    match e {
        mvlab::Error::Config(s) => s.clone(),
        other => other.to_string(),
    }
}

fn initial(c: &mut Checker, raw: &RawInitial, dim: usize) -> Option<Initial> {
    let law = c.require(&raw.law, "initial.law")?;
    let init = match law.as_str() {
        "point" => Initial::Point(c.require(&raw.point, "initial.point")?),
        "normal" => {
            let mean = c.require(&raw.mean, "initial.mean");
            let sd = c.require(&raw.sd, "initial.sd");
            Initial::Normal {
                mean: mean?,
                sd: sd?,
            }
        }
        "uniform" => {
            let low = c.require(&raw.low, "initial.low");
            let high = c.require(&raw.high, "initial.high");
            Initial::Uniform {
                dim,
                low: low?,
                high: high?,
            }
        }
        other => {
            c.push(format!(
                "unknown initial law `{other}` (expected point, normal or uniform)"
            ));
            return None;
        }
    };
    if let Err(e) = init.validate() {
        c.push(strip(&e));
        return None;
    }
    let d = mvlab::model::InitialLaw::dim(&init);
    if d != dim {
        c.push(format!("initial law has dimension {d}, model has {dim}"));
        return None;
    }
    Some(init)
}

fn solver(c: &mut Checker, raw: &RawSolver) -> SolverSpec {
    let s = SolverSpec {
        horizon: raw.horizon.unwrap_or(1.0),
        step: raw.step.unwrap_or(0.01),
        paths: raw.paths.unwrap_or(1000),
        gamma: raw.gamma.unwrap_or(0.0),
        tolerance: raw.tolerance.unwrap_or(1e-3),
        max_iterations: raw.max_iterations.unwrap_or(30),
        common_random_numbers: raw.common_random_numbers.unwrap_or(true),
    };
    c.positive(s.horizon, "solver.horizon");
    c.positive(s.step, "solver.step");
    c.positive(s.tolerance, "solver.tolerance");
    if positive(s.step) && positive(s.horizon) && s.step > s.horizon {
        c.push(format!(
            "solver.step {} exceeds the horizon {}",
            s.step, s.horizon
        ));
    }
    if s.paths < 2 {
        c.push(format!("solver.paths must be at least 2, got {}", s.paths));
    }
    if !(s.gamma >= 0.0 && s.gamma.is_finite()) {
        c.push(format!("solver.gamma must be >= 0, got {}", s.gamma));
    }
    if s.max_iterations == 0 {
        c.push("solver.max_iterations must be positive");
    }
    s
}

fn experiment(c: &mut Checker, raw: &RawExperiment, beta: Option<f64>) -> ExperimentSpec {
    use mvlab::chaos::{DistanceMode, EvalTime};
    let estimator = match raw.estimator.as_deref().unwrap_or("weak") {
        "weak" => Estimator::Weak,
        "sampling" => Estimator::Sampling,
        other => {
            c.push(format!(
                "unknown estimator `{other}` (expected weak or sampling)"
            ));
            Estimator::Weak
        }
    };
    let eval = match raw.eval.as_deref().unwrap_or("terminal") {
        "terminal" => EvalTime::Terminal,
        "sup" => EvalTime::Sup,
        other => {
            c.push(format!("unknown eval `{other}` (expected terminal or sup)"));
            EvalTime::Terminal
        }
    };
    let projections = raw.projections.unwrap_or(32);
    let distance = match raw.distance.as_deref().unwrap_or("exact") {
        "exact" => DistanceMode::Exact,
        "sliced" => DistanceMode::Sliced { projections },
        other => {
            c.push(format!(
                "unknown distance `{other}` (expected exact or sliced)"
            ));
            DistanceMode::Exact
        }
    };
    let e = ExperimentSpec {
        particles: raw.particles.unwrap_or(1000),
        record: raw.record,
        p: raw.p,
        q1: raw.q1.unwrap_or(0.5),
        q2: raw.q2.unwrap_or(0.9),
        n_grid: raw
            .n_grid
            .clone()
            .unwrap_or_else(|| vec![64, 128, 256, 512, 1024]),
        replications: raw.replications.unwrap_or(50),
        reference_paths: raw.reference_paths.unwrap_or(0),
        estimator,
        eval,
        distance,
        slack: raw.slack.unwrap_or(0.15),
        scalings: raw
            .scalings
            .clone()
            .unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]),
        max_spread: raw.max_spread.unwrap_or(3.0),
        common_paths: raw.common_paths.unwrap_or(16),
        trials: raw.trials.unwrap_or(2000),
        cases: raw.cases.unwrap_or(200),
        lipschitz: raw.lipschitz,
        lipschitz_form: raw
            .lipschitz_form
            .clone()
            .unwrap_or_else(|| "standard".into()),
        coercivity: raw.coercivity,
        coercivity_form: raw
            .coercivity_form
            .clone()
            .unwrap_or_else(|| "standard".into()),
        local_bound: raw.local_bound,
        radius: raw.radius.unwrap_or(2.0),
    };
    if let (Some(p), Some(beta)) = (e.p, beta) {
        if !(p >= 1.0 && p < beta) {
            c.push(format!(
                "p < beta required (and p >= 1), got p = {p}, beta = {beta}"
            ));
        }
    }
    if !(e.q1 >= 0.0 && e.q1 < e.q2 && e.q2 < 1.0) {
        c.push(format!(
            "q1 < q2 < 1 required, got q1 = {}, q2 = {}",
            e.q1, e.q2
        ));
    }
    if e.n_grid.len() < 3 {
        c.push("experiment.n_grid needs at least 3 values");
    }
    if e.n_grid.first() == Some(&0) || e.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        c.push("experiment.n_grid must be positive and strictly increasing");
    }
    if e.replications < 2 {
        c.push("experiment.replications must be at least 2");
    }
    if e.particles == 0 {
        c.push("experiment.particles must be positive");
    }
    if projections == 0 {
        c.push("experiment.projections must be positive");
    }
    if !(e.slack >= 0.0) {
        c.push("experiment.slack must be >= 0");
    }
    if e.scalings.is_empty() || e.scalings.iter().any(|s| !s.is_finite()) {
        c.push("experiment.scalings must be a non-empty list of finite numbers");
    }
    if !(e.max_spread > 1.0) {
        c.push("experiment.max_spread must exceed 1");
    }
    if e.common_paths == 0 {
        c.push("experiment.common_paths must be positive");
    }
    if e.trials == 0 || e.cases == 0 {
        c.push("experiment.trials and experiment.cases must be positive");
    }
    for (name, v) in [
        ("lipschitz", e.lipschitz),
        ("coercivity", e.coercivity),
        ("local_bound", e.local_bound),
    ] {
        if let Some(v) = v {
            if !(v >= 0.0 && v.is_finite()) {
                c.push(format!(
                    "experiment.{name} must be a finite constant >= 0, got {v}"
                ));
            }
        }
    }
    if !matches!(e.lipschitz_form.as_str(), "standard" | "mixed" | "common") {
        c.push(format!(
            "unknown lipschitz_form `{}` (expected standard, mixed or common)",
            e.lipschitz_form
        ));
    }
    if !matches!(e.coercivity_form.as_str(), "standard" | "strong" | "common") {
        c.push(format!(
            "unknown coercivity_form `{}` (expected standard, strong or common)",
            e.coercivity_form
        ));
    }
    c.positive(e.radius, "experiment.radius");
    e
}

fn cubic_warning(spec: &RawModel, dim: usize, beta: f64, levy: &LevyModel) -> Option<String> {
    let p = &spec.params;
    let c = [p.get("c1")?, p.get("c2")?, p.get("c3")?, p.get("c4")?];
    let m =
        CubicInteraction::new(dim, beta, [*c[0], *c[1], *c[2], *c[3]], Kernel::Linear(1.0)).ok()?;
    let threshold = m.stability_threshold(levy).ok()?;
    (m.c2 <= threshold).then(|| {
        format!(
            "cubic_interaction: c2 = {} does not exceed 12 c3^2 c4^2 nu(|z|^2 on U) = {threshold:.6}; moment bounds are not guaranteed",
            m.c2
        )
    })
}

/// Parses TOML text into a validated config, or lists every violation.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        violations: vec![format!("malformed config: {}", e.message().trim())],
    })?;
    resolve(raw)
}

/// Validates already-deserialized raw tables.
pub fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut c = Checker::default();
    let mut warnings = Vec::new();
    match raw.version {
        Some(CONFIG_VERSION) => {}
        Some(v) => c.push(format!(
            "unsupported config version {v} (expected {CONFIG_VERSION})"
        )),
        None => c.push("missing required field `version`"),
    }
    let seed = raw.seed.unwrap_or(0);

    let model_raw = c.require(&raw.model, "model");
    let (family, beta, dim) = match &model_raw {
        Some(m) => (
            c.require(&m.family, "model.family"),
            c.require(&m.beta, "model.beta"),
            m.dim.unwrap_or(1),
        ),
        None => (None, None, 1),
    };
    if dim == 0 {
        c.push("model.dim must be positive");
    }
    let registry = FamilyRegistry::with_builtins();
    let coeffs = match (&family, beta, &model_raw) {
        (Some(f), Some(b), Some(m)) if dim > 0 => {
            if !registry.contains(f) {
                let known: Vec<&str> = registry.names().collect();
                c.push(format!(
                    "unknown model family `{f}` (known: {})",
                    known.join(", ")
                ));
                None
            } else {
                match registry.build(f, dim, b, &m.params) {
                    Ok(coeffs) => Some(coeffs),
                    Err(e) => {
                        c.push(format!("model: {}", strip(&e)));
                        None
                    }
                }
            }
        }
        _ => None,
    };

    let levy_raw = c.require(&raw.levy, "levy");
    let levy_model = levy_raw
        .as_ref()
        .filter(|_| dim > 0)
        .and_then(|l| levy(&mut c, l, dim, "levy", &mut warnings));
    let common_levy = raw
        .common_levy
        .as_ref()
        .filter(|_| dim > 0)
        .and_then(|l| levy(&mut c, l, dim, "common_levy", &mut warnings));

    let init = c.require(&raw.initial, "initial").and_then(|i| {
        if dim > 0 {
            initial(&mut c, &i, dim)
        } else {
            None
        }
    });
    let solver_spec = solver(&mut c, &raw.solver.clone().unwrap_or_default());
    let experiment_spec = experiment(&mut c, &raw.experiment.clone().unwrap_or_default(), beta);

    if let (Some("cubic_interaction"), Some(m), Some(b), Some(l)) =
        (family.as_deref(), &model_raw, beta, &levy_model)
    {
        if coeffs.is_some() {
            warnings.extend(cubic_warning(m, dim, b, l));
        }
    }

    if !c.bad.is_empty() {
        return Err(ConfigError { violations: c.bad });
    }
    let canonical = toml::to_string(&raw).map_err(|e| ConfigError {
        violations: vec![format!("cannot serialize config: {e}")],
    })?;
    // Every Option below is Some once no violation was recorded.
    Ok(ExperimentConfig {
        seed,
        model: ModelSpec {
            family: family.expect("checked"),
            beta: beta.expect("checked"),
            dim,
            params: model_raw.expect("checked").params,
            coeffs: coeffs.expect("checked"),
        },
        levy: levy_model.expect("checked"),
        common_levy,
        initial: init.expect("checked"),
        solver: solver_spec,
        experiment: experiment_spec,
        warnings,
        canonical,
    })
}

/// Parses, applies a seed override, and re-validates so the canonical text
/// (and thus the hash) reflects the seed actually used.
pub fn parse_with_seed(text: &str, seed: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        violations: vec![format!("malformed config: {}", e.message().trim())],
    })?;
    if seed.is_some() {
        raw.seed = seed;
    }
    resolve(raw)
}

/// Settings read by `wasserstein-selftest`, which needs no model.
#[derive(Debug, Clone, PartialEq)]
pub struct SelftestSettings {
    pub seed: Option<u64>,
    pub cases: Option<usize>,
    pub hash: String,
}

pub fn selftest_settings(text: &str, seed: Option<u64>) -> Result<SelftestSettings, ConfigError> {
    let mut raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        violations: vec![format!("malformed config: {}", e.message().trim())],
    })?;
    if let Some(v) = raw.version.filter(|v| *v != CONFIG_VERSION) {
        return Err(ConfigError {
            violations: vec![format!(
                "unsupported config version {v} (expected {CONFIG_VERSION})"
            )],
        });
    }
    if seed.is_some() {
        raw.seed = seed;
    }
    let cases = raw.experiment.as_ref().and_then(|e| e.cases);
    if cases == Some(0) {
        return Err(ConfigError {
            violations: vec!["experiment.cases must be positive".into()],
        });
    }
    let canonical = toml::to_string(&raw).map_err(|e| ConfigError {
        violations: vec![format!("cannot serialize config: {e}")],
    })?;
    Ok(SelftestSettings {
        seed: raw.seed,
        cases,
        hash: sha256_hex(&canonical),
    })
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Subcommand-specific requirements, checked before any run.
pub fn check_for(cfg: &ExperimentConfig, cmd: Command) -> Result<(), ConfigError> {
    let mut bad = Vec::new();
    let beta = cfg.model.beta;
    let e = &cfg.experiment;
    let rate = matches!(
        cmd,
        Command::Poc | Command::StrongPoc | Command::CommonNoise
    );
    if rate && e.p.is_none() && !(DEFAULT_P < beta) {
        bad.push(format!(
            "p < beta required: default p = {DEFAULT_P} with beta = {beta}; set experiment.p"
        ));
    }
    if rate && cfg.model.coeffs.small_jump_depends_on_measure() {
        bad.push(format!(
            "{} requires a small-jump coefficient that does not depend on the measure",
            cmd.name()
        ));
    }
    if matches!(cmd, Command::CommonNoise) {
        match &cfg.common_levy {
            None => bad.push("common-noise requires a [common_levy] block".to_string()),
            Some(_) if !cfg.model.coeffs.has_common_noise() => bad.push(format!(
                "model family `{}` has no common-noise coefficients",
                cfg.model.family
            )),
            _ => {}
        }
    }
    if matches!(cmd, Command::CheckAssumptions) {
        if e.lipschitz.is_none() && e.coercivity.is_none() && e.local_bound.is_none() {
            bad.push(
                "check-assumptions needs at least one declared constant (lipschitz, coercivity, local_bound)"
                    .to_string(),
            );
        }
        let needs_common = e.lipschitz.is_some() && e.lipschitz_form == "common"
            || e.coercivity.is_some() && e.coercivity_form == "common";
        if needs_common && cfg.common_levy.is_none() {
            bad.push("common-noise assumption forms require a [common_levy] block".to_string());
        }
        if e.lipschitz.is_some() && e.lipschitz_form == "mixed" && e.p.is_none() {
            bad.push("lipschitz_form = \"mixed\" requires experiment.p".to_string());
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(ConfigError { violations: bad })
    }
}
