//! One function per subcommand. Each returns its artifacts in memory.

use std::fmt::Write as _;

use mvlab::chaos::{
    run_moment_experiment, run_sampling_rate, run_strong_poc, run_weak_poc, MomentConfig,
    PoCConfig, RateReport,
};
use mvlab::common_noise::{run_conditional_poc, TwoLayerNoise};
use mvlab::model::{
    beta_norm, check_coercivity, check_local_boundedness, check_one_sided_lipschitz,
    AssumptionReport, CheckConfig, CoercivityForm, EmpiricalMeasure, LipschitzForm, MeasureFlow,
};
use mvlab::solver::{
    picard_fixed_point, simulate_particle_system, Ensemble, SolverConfig, TimeGrid,
};
use mvlab::stream::tag;
use mvlab::wasserstein::selftest;
use mvlab::Exec;
use serde::Serialize;

use crate::config::{Estimator, ExperimentConfig};
use crate::output::{columns, json, num, opt, Table};
use crate::{Command, Context, JobSeed, Outcome, RunError};

/// Runs a config-driven subcommand; `wasserstein-selftest` goes through
/// [`wasserstein_selftest`] instead.
pub fn execute(cmd: Command, cfg: &ExperimentConfig, exec: Exec) -> Result<Outcome, RunError> {
    match cmd {
        Command::Simulate => simulate(cfg, exec),
        Command::Picard => picard(cfg, exec),
        Command::Poc | Command::StrongPoc | Command::CommonNoise => rate(cmd, cfg, exec),
        Command::Moments => moments(cfg, exec),
        Command::CheckAssumptions => check_assumptions(cfg, exec),
        Command::WassersteinSelftest => wasserstein_selftest(cfg.seed, cfg.experiment.cases),
    }
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid, RunError> {
    TimeGrid::new(cfg.solver.horizon, cfg.solver.step).context("time grid")
}

/// `time, particle, x_1..x_d` for every cloud of a flow.
fn cloud_table(flow: &MeasureFlow, name: &str) -> crate::Artifact {
    let mut header = vec!["time".to_string(), "particle".to_string()];
    header.extend(columns("x", flow.dim()));
    let mut t = Table::new(&header);
    for (time, cloud) in flow.times().iter().zip(flow.clouds()) {
        for (i, x) in cloud.iter().enumerate() {
            let mut row = vec![num(*time), i.to_string()];
            row.extend(x.iter().map(|v| num(*v)));
            t.row(&row);
        }
    }
    t.finish(name)
}

/// `time, mean_1..mean_d, beta_norm` per base time.
fn flow_summary(flow: &MeasureFlow, beta: f64, name: &str) -> crate::Artifact {
    let mut header = vec!["time".to_string()];
    header.extend(columns("mean", flow.dim()));
    header.push("beta_norm".to_string());
    let mut t = Table::new(&header);
    for (time, cloud) in flow.times().iter().zip(flow.clouds()) {
        let mut row = vec![num(*time)];
        row.extend(cloud.mean().iter().map(|v| num(*v)));
        row.push(num(beta_norm(cloud, beta)));
        t.row(&row);
    }
    t.finish(name)
}

#[derive(Serialize)]
struct SimulateSummary {
    particles: usize,
    dim: usize,
    steps: usize,
    jumps: usize,
    terminal_mean: Vec<f64>,
    terminal_beta_norm: f64,
}

fn simulate(cfg: &ExperimentConfig, exec: Exec) -> Result<Outcome, RunError> {
    let grid = grid(cfg)?;
    let n = cfg.experiment.particles;
    let record = cfg.experiment.record.unwrap_or(n).min(n);
    let experiment = tag("simulate");
    let ens = Ensemble::draw(&cfg.initial, n, cfg.seed, experiment, 0);
    let run = simulate_particle_system(
        cfg.model.coeffs.as_ref(),
        &cfg.levy,
        &ens,
        &grid,
        record > 0,
        exec,
    )
    .context("particle system")?;
    let d = cfg.model.dim;
    let flow = run.flow();

    let mut header = vec!["time".to_string(), "particle".to_string()];
    header.extend(columns("x", d));
    let mut paths = Table::new(&header);
    let mut jheader = vec![
        "particle".to_string(),
        "time".to_string(),
        "common".to_string(),
    ];
    jheader.extend(columns("mark", d));
    jheader.extend(columns("pre", d));
    jheader.extend(columns("increment", d));
    let mut jumps = Table::new(&jheader);
    let mut jump_count = 0;
    for (i, path) in run.paths.iter().flatten().take(record).enumerate() {
        for (k, t) in path.times.iter().enumerate() {
            let mut row = vec![num(*t), i.to_string()];
            row.extend(path.states[k * d..(k + 1) * d].iter().map(|v| num(*v)));
            paths.row(&row);
        }
        for j in &path.jumps {
            let mut row = vec![i.to_string(), num(j.time), j.common.to_string()];
            row.extend(
                j.mark
                    .iter()
                    .chain(&j.pre_state)
                    .chain(&j.increment)
                    .map(|v| num(*v)),
            );
            jumps.row(&row);
            jump_count += 1;
        }
    }
    let last = flow.last();
    let summary = SimulateSummary {
        particles: n,
        dim: d,
        steps: grid.steps(),
        jumps: jump_count,
        terminal_mean: last.mean().to_vec(),
        terminal_beta_norm: beta_norm(last, cfg.model.beta),
    };
    let text = format!(
        "simulate: {n} particles, {} steps, {jump_count} recorded jumps, terminal mean {:?}\n",
        grid.steps(),
        summary.terminal_mean
    );
    Ok(Outcome {
        passed: true,
        summary: text,
        artifacts: vec![
            paths.finish("paths.csv"),
            jumps.finish("jumps.csv"),
            flow_summary(&flow, cfg.model.beta, "flow.csv"),
            json("summary.json", &summary)?,
        ],
        jobs: vec![JobSeed::new("simulate", cfg.seed, experiment, 1, n)],
    })
}

fn solver_config(cfg: &ExperimentConfig, exec: Exec, experiment: u64) -> SolverConfig {
    let s = &cfg.solver;
    let mut sc = SolverConfig::new(s.step, s.paths, cfg.seed);
    sc.gamma = s.gamma;
    sc.tolerance = s.tolerance;
    sc.max_iterations = s.max_iterations;
    sc.common_random_numbers = s.common_random_numbers;
    sc.experiment = experiment;
    sc.exec = exec;
    sc
}

#[derive(Serialize)]
struct PicardSummary {
    converged: bool,
    iterations: usize,
    trace: Vec<f64>,
    /// `trace[k] / trace[k-1]`.
    ratios: Vec<f64>,
    paths: usize,
    gamma: f64,
    tolerance: f64,
}

fn trace_table(trace: &[f64]) -> crate::Artifact {
    let mut t = Table::new(&["iteration", "distance"]);
    for (k, d) in trace.iter().enumerate() {
        t.row(&[(k + 1).to_string(), num(*d)]);
    }
    t.finish("trace.csv")
}

fn ratios(trace: &[f64]) -> Vec<f64> {
    trace.windows(2).map(|w| w[1] / w[0]).collect()
}

fn picard(cfg: &ExperimentConfig, exec: Exec) -> Result<Outcome, RunError> {
    let grid = grid(cfg)?;
    let experiment = tag("picard");
    let sc = solver_config(cfg, exec, experiment);
    let replicas = if sc.common_random_numbers {
        1
    } else {
        sc.max_iterations + 1
    };
    let jobs = vec![JobSeed::new(
        "picard", cfg.seed, experiment, replicas, sc.paths,
    )];
    let result = picard_fixed_point(
        cfg.model.coeffs.as_ref(),
        &cfg.initial,
        &cfg.levy,
        &grid,
        &sc,
    );
    let summary = |converged: bool, iterations: usize, trace: Vec<f64>| PicardSummary {
        converged,
        iterations,
        ratios: ratios(&trace),
        trace,
        paths: sc.paths,
        gamma: sc.gamma,
        tolerance: sc.tolerance,
    };
    match result {
        Ok(out) => {
            let s = summary(true, out.iterations, out.trace.clone());
            let text = format!(
                "picard: converged after {} iteration(s); trace {:?}\n",
                out.iterations, out.trace
            );
            Ok(Outcome {
                passed: true,
                summary: text,
                artifacts: vec![
                    cloud_table(&out.flow, "flow.csv"),
                    flow_summary(&out.flow, cfg.model.beta, "flow_summary.csv"),
                    trace_table(&out.trace),
                    json("picard.json", &s)?,
                ],
                jobs,
            })
        }
        Err(mvlab::Error::NoConvergence {
            iterations, trace, ..
        }) => {
            let text = format!(
                "picard: no convergence after {iterations} iteration(s); trace {trace:?}\n"
            );
            Ok(Outcome {
                passed: false,
                summary: text,
                artifacts: vec![
                    trace_table(&trace),
                    json("picard.json", &summary(false, iterations, trace))?,
                ],
                jobs,
            })
        }
        Err(e) => Err(RunError::Library {
            context: "picard iteration".into(),
            source: e,
        }),
    }
}

fn poc_config(cfg: &ExperimentConfig, exec: Exec) -> PoCConfig {
    let e = &cfg.experiment;
    let s = &cfg.solver;
    let mut pc = PoCConfig::new(
        &cfg.model.family,
        e.p(),
        e.n_grid.clone(),
        e.replications,
        cfg.seed,
    );
    pc.q1 = e.q1;
    pc.q2 = e.q2;
    pc.horizon = s.horizon;
    pc.step = s.step;
    pc.reference_paths = e.reference_paths;
    pc.gamma = s.gamma;
    pc.tolerance = s.tolerance;
    pc.max_iterations = s.max_iterations;
    pc.eval = e.eval;
    pc.distance = e.distance;
    pc.slack = e.slack;
    pc.exec = exec;
    pc
}

fn rate_table(report: &RateReport) -> crate::Artifact {
    let mut t = Table::new(&[
        "n",
        "estimate",
        "se",
        "interaction",
        "interaction_se",
        "sampling",
        "sampling_se",
    ]);
    for p in &report.points {
        t.row(&[
            p.n.to_string(),
            num(p.estimate),
            num(p.se),
            opt(p.interaction.map(|x| x.mean)),
            opt(p.interaction.map(|x| x.se)),
            opt(p.sampling.map(|x| x.mean)),
            opt(p.sampling.map(|x| x.se)),
        ]);
    }
    t.finish("rate.csv")
}

fn rate_summary(report: &RateReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} ({}), p = {}, beta = {}, d = {}",
        report.kind, report.model, report.p, report.beta, report.dim
    );
    let _ = writeln!(s, "{:>8}  {:>14}  {:>12}", "n", "estimate", "se");
    for p in &report.points {
        let _ = writeln!(s, "{:>8}  {:>14.6e}  {:>12.3e}", p.n, p.estimate, p.se);
    }
    let slope = report
        .slope
        .map(|v| format!("{v:.4} +/- {:.4}", report.slope_se.unwrap_or(f64::NAN)))
        .unwrap_or_else(|| "n/a (all estimates zero)".into());
    let _ = writeln!(
        s,
        "slope {slope}; theoretical {:.4} (slack {}); verdict {:?}",
        report.theoretical, report.slack, report.verdict
    );
    s
}

fn rate(cmd: Command, cfg: &ExperimentConfig, exec: Exec) -> Result<Outcome, RunError> {
    let pc = poc_config(cfg, exec);
    let coeffs = cfg.model.coeffs.as_ref();
    let report = match cmd {
        Command::Poc => match cfg.experiment.estimator {
            Estimator::Weak => run_weak_poc(coeffs, &cfg.initial, &cfg.levy, &pc),
            Estimator::Sampling => run_sampling_rate(coeffs, &cfg.initial, &cfg.levy, &pc),
        },
        Command::StrongPoc => run_strong_poc(coeffs, &cfg.initial, &cfg.levy, &pc),
        _ => {
            let common = cfg
                .common_levy
                .clone()
                .ok_or_else(|| RunError::Output("missing common_levy".into()))?;
            let noise = TwoLayerNoise::new(cfg.levy.clone(), common).context("two-layer noise")?;
            run_conditional_poc(
                coeffs,
                &cfg.initial,
                &noise,
                &pc,
                cfg.experiment.common_paths,
            )
        }
    }
    .context(cmd.name())?;

    let reference = pc.reference_solver();
    let mut jobs = vec![JobSeed::new(
        "reference",
        cfg.seed,
        reference.experiment,
        if reference.common_random_numbers {
            1
        } else {
            reference.max_iterations + 1
        },
        reference.paths,
    )];
    let roles: &[&str] = match (cmd, cfg.experiment.estimator) {
        (Command::StrongPoc, _) => &["coupled"],
        _ => &["coupled", "independent"],
    };
    for &n in &pc.n_grid {
        for role in roles {
            let job = format!("{role}/{n}");
            jobs.push(JobSeed::new(&job, cfg.seed, tag(&job), pc.replications, n));
        }
    }
    let mut artifacts = vec![rate_table(&report), json("report.json", &report)?];
    if cmd == Command::CommonNoise {
        let common = cfg.common_levy.clone().expect("checked above");
        let noise = TwoLayerNoise::new(cfg.levy.clone(), common).context("two-layer noise")?;
        let mut header = vec!["path".to_string(), "time".to_string(), "band".to_string()];
        header.extend(columns("mark", cfg.model.dim));
        let mut t = Table::new(&header);
        for j in 0..cfg.experiment.common_paths {
            let path = noise
                .common_path(cfg.seed, j, cfg.solver.horizon)
                .context("common path")?;
            let mut events: Vec<_> = path.small.iter().chain(&path.big).collect();
            events.sort_by(|a, b| a.time.total_cmp(&b.time));
            for ev in events {
                let mut row = vec![j.to_string(), num(ev.time), format!("{:?}", ev.band)];
                row.extend(ev.mark.iter().map(|v| num(*v)));
                t.row(&row);
            }
            jobs.push(JobSeed::new(
                &format!("common-path/{j}"),
                cfg.seed,
                tag("common-path"),
                1,
                1,
            ));
        }
        artifacts.push(t.finish("common_paths.csv"));
    }
    Ok(Outcome {
        passed: report.verdict.passed(),
        summary: rate_summary(&report),
        artifacts,
        jobs,
    })
}

#[derive(Serialize)]
struct DivergedMoments {
    beta: f64,
    diverged: bool,
    error: String,
}

fn moments(cfg: &ExperimentConfig, exec: Exec) -> Result<Outcome, RunError> {
    let e = &cfg.experiment;
    let mut mc = MomentConfig::new(e.particles, cfg.solver.horizon, cfg.solver.step, cfg.seed);
    mc.scalings = e.scalings.clone();
    mc.max_spread = e.max_spread;
    mc.exec = exec;
    let jobs = vec![JobSeed::new(
        "moments",
        cfg.seed,
        tag("moments"),
        1,
        e.particles,
    )];
    match run_moment_experiment(cfg.model.coeffs.as_ref(), &cfg.initial, &cfg.levy, &mc) {
        Ok(report) => {
            let mut t = Table::new(&[
                "scale",
                "initial",
                "terminal",
                "sup_of_mean",
                "mean_of_sup",
                "ratio",
            ]);
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:>8}  {:>12}  {:>12}  {:>12}  {:>8}",
                "scale", "initial", "sup_mean", "mean_sup", "ratio"
            );
            for r in &report.rows {
                t.row(&[
                    num(r.scale),
                    num(r.initial),
                    num(r.terminal),
                    num(r.sup_of_mean),
                    num(r.mean_of_sup),
                    num(r.ratio),
                ]);
                let _ = writeln!(
                    s,
                    "{:>8}  {:>12.4e}  {:>12.4e}  {:>12.4e}  {:>8.4}",
                    r.scale, r.initial, r.sup_of_mean, r.mean_of_sup, r.ratio
                );
            }
            let _ = writeln!(
                s,
                "ratio spread {:.3} (max {}); verdict {:?}",
                report.spread, e.max_spread, report.verdict
            );
            Ok(Outcome {
                passed: report.verdict.passed(),
                summary: s,
                artifacts: vec![t.finish("moments.csv"), json("report.json", &report)?],
                jobs,
            })
        }
        Err(err @ mvlab::Error::Divergence { .. }) => {
            let body = DivergedMoments {
                beta: cfg.model.beta,
                diverged: true,
                error: err.to_string(),
            };
            Ok(Outcome {
                passed: false,
                summary: format!("moments: moment bound falsified, {err}\n"),
                artifacts: vec![json("report.json", &body)?],
                jobs,
            })
        }
        Err(e) => Err(RunError::Library {
            context: "moment experiment".into(),
            source: e,
        }),
    }
}

fn check_assumptions(cfg: &ExperimentConfig, exec: Exec) -> Result<Outcome, RunError> {
    let e = &cfg.experiment;
    let coeffs = cfg.model.coeffs.as_ref();
    let common = cfg.common_levy.as_ref();
    let check_cfg = |declared: f64| {
        let mut c = CheckConfig::new(declared, e.trials, cfg.seed);
        c.exec = exec;
        c
    };
    let mut reports: Vec<AssumptionReport> = Vec::new();
    if let Some(l) = e.lipschitz {
        let form = match e.lipschitz_form.as_str() {
            "mixed" => LipschitzForm::Mixed { p: e.p() },
            "common" => LipschitzForm::Common,
            _ => LipschitzForm::Standard,
        };
        reports.push(
            check_one_sided_lipschitz(coeffs, &cfg.levy, common, form, &check_cfg(l))
                .context("lipschitz check")?,
        );
    }
    if let Some(l) = e.coercivity {
        let form = match e.coercivity_form.as_str() {
            "strong" => CoercivityForm::Strong,
            "common" => CoercivityForm::Common,
            _ => CoercivityForm::Standard,
        };
        reports.push(
            check_coercivity(coeffs, &cfg.levy, common, form, &check_cfg(l))
                .context("coercivity check")?,
        );
    }
    if let Some(l) = e.local_bound {
        let grid = grid(cfg)?;
        let x0 = Ensemble::draw(
            &cfg.initial,
            cfg.solver.paths,
            cfg.seed,
            tag("check-assumptions"),
            0,
        )
        .x0;
        let cloud = EmpiricalMeasure::new(cfg.model.dim, x0.concat()).context("initial cloud")?;
        let flow = MeasureFlow::constant(grid.times().to_vec(), cloud).context("constant flow")?;
        reports.push(
            check_local_boundedness(coeffs, &cfg.levy, &flow, e.radius, &check_cfg(l))
                .context("local boundedness check")?,
        );
    }
    let mut t = Table::new(&["id", "declared", "worst_ratio", "trials", "verdict"]);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8}  {:>10}  {:>12}  {:>7}  verdict",
        "id", "declared", "worst", "trials"
    );
    for r in &reports {
        let id = format!("{:?}", r.id);
        let verdict = format!("{:?}", r.verdict);
        t.row(&[
            id.clone(),
            num(r.declared),
            num(r.worst_ratio),
            r.trials.to_string(),
            verdict.clone(),
        ]);
        let _ = writeln!(
            s,
            "{id:>8}  {:>10}  {:>12.6}  {:>7}  {verdict}",
            r.declared, r.worst_ratio, r.trials
        );
    }
    let passed = reports
        .iter()
        .all(|r| r.verdict == mvlab::model::Verdict::Pass);
    Ok(Outcome {
        passed,
        summary: s,
        artifacts: vec![t.finish("assumptions.csv"), json("report.json", &reports)?],
        jobs: vec![
            JobSeed::new("tuples", cfg.seed, 0xC4EC, 1, e.trials),
            JobSeed::new(
                "check-assumptions",
                cfg.seed,
                tag("check-assumptions"),
                1,
                cfg.solver.paths,
            ),
        ],
    })
}

pub fn wasserstein_selftest(seed: u64, cases: usize) -> Result<Outcome, RunError> {
    let rows = selftest(seed, cases);
    let mut t = Table::new(&["check", "cases", "worst", "tolerance", "pass"]);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<36}  {:>6}  {:>10}  {:>10}  result",
        "check", "cases", "worst", "tolerance"
    );
    for r in &rows {
        t.row(&[
            r.check.clone(),
            r.cases.to_string(),
            num(r.worst),
            num(r.tolerance),
            r.pass.to_string(),
        ]);
        let _ = writeln!(
            s,
            "{:<36}  {:>6}  {:>10.2e}  {:>10.1e}  {}",
            r.check,
            r.cases,
            r.worst,
            r.tolerance,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    Ok(Outcome {
        passed: rows.iter().all(|r| r.pass),
        summary: s,
        artifacts: vec![t.finish("selftest.csv"), json("selftest.json", &rows)?],
        jobs: vec![JobSeed::new("selftest", seed, 0, 1, cases)],
    })
}
