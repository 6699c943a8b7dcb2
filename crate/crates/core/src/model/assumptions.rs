//! Sampling-based falsifiers for the structural assumptions.
//!
//! Each check evaluates the ratio of the assumption's left-hand side to its
//! bracket (the right-hand side without the constant) over random tuples drawn
//! from a box plus adversarial rays, and reports the largest ratio seen. The
//! verdict passes iff that ratio does not exceed the declared constant.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::levy::{Band, LevyModel};
use crate::model::coeffs::{
    common_small_jump_sq, drift_inner, small_jump_sq, small_jump_sq_diff, Coefficients,
};
use crate::model::measure::{beta_norm, EmpiricalMeasure, MeasureFlow};
use crate::numeric::{dist, dot, norm};
use crate::stream::{Layer, NoiseStream, StreamId};
use crate::wasserstein::w_p_exact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionId {
    A1,
    A1Prime,
    A2,
    A21,
    A3,
    B1,
    B2,
}

/// Which one-sided Lipschitz bracket to test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LipschitzForm {
    /// `L (|x-y|² + W_β²)` with the jump condition in `W_β`.
    Standard,
    /// `L (|x-y| + W_p)|x-y|`, jump condition in `W_p`.
    Mixed { p: f64 },
    /// Common-noise form: `K |x-y|(|x-y| + W_β)`, adds `f⁰` and `g⁰` terms.
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoercivityForm {
    /// `2⟨x,b⟩ + ν|f|² <= L (1 + |x|² + μ(|·|^β)^{2/β})`.
    Standard,
    /// `⟨x,b⟩ ∨ ν|f|² <= L (1 + |x|² + μ(|·|^β)^{2/β})`.
    Strong,
    /// `2⟨x,b⟩ + ν|f|² + ν⁰|f⁰|² <= K (1 + |x|² + |x| μ(|·|^β)^{1/β})`.
    Common,
}

/// Where test tuples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleSampler {
    pub box_radius: f64,
    pub cloud_size: usize,
    pub ray_radii: Vec<f64>,
    pub ray_offset: f64,
}

impl Default for TupleSampler {
    fn default() -> Self {
        Self {
            box_radius: 5.0,
            cloud_size: 8,
            ray_radii: vec![10.0, 100.0, 1000.0],
            ray_offset: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub declared: f64,
    pub trials: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub sampler: TupleSampler,
    #[serde(skip)]
    pub exec: Exec,
}

impl CheckConfig {
    pub fn new(declared: f64, trials: usize, seed: u64) -> Self {
        Self {
            declared,
            trials,
            tolerance: 1e-9,
            seed,
            sampler: TupleSampler::default(),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub mu1: Vec<f64>,
    pub mu2: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub id: AssumptionId,
    pub trials: usize,
    pub declared: f64,
    /// Smallest constant consistent with every sampled tuple.
    pub worst_ratio: f64,
    /// Worst ratio per sub-condition (e.g. drift part, jump part).
    pub components: Vec<(String, f64)>,
    pub witness: Option<Witness>,
    pub verdict: Verdict,
}

struct Tuple {
    x: Vec<f64>,
    y: Vec<f64>,
    mu1: EmpiricalMeasure,
    mu2: EmpiricalMeasure,
    zs: Vec<Vec<f64>>,
}

const ADVERSARIAL_PER_RAY: usize = 3;
const MARKS_PER_TRIAL: usize = 4;

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

fn in_box(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d)
        .map(|_| r * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

impl TupleSampler {
    fn adversarial_count(&self) -> usize {
        self.ray_radii.len() * ADVERSARIAL_PER_RAY
    }

    fn cloud(&self, rng: &mut ChaCha8Rng, d: usize) -> EmpiricalMeasure {
        let pts = (0..self.cloud_size.max(1))
            .flat_map(|_| in_box(rng, d, self.box_radius))
            .collect();
        EmpiricalMeasure::from_finite(d, pts)
    }

    /// Trial `t`: adversarial rays first, then uniform tuples in the box.
    fn tuple(&self, t: usize, seed: u64, d: usize, levy: &LevyModel) -> Tuple {
        let stream = NoiseStream::new(seed, StreamId::new(0xC4EC, 0, t as u64, Layer::Aux(7)));
        let mut rng = stream.rng();
        let mu1 = self.cloud(&mut rng, d);
        let mu2 = if rng.random::<bool>() {
            mu1.clone()
        } else {
            self.cloud(&mut rng, d)
        };
        let (x, y) = if t < self.adversarial_count() {
            let r = self.ray_radii[t / ADVERSARIAL_PER_RAY];
            let u = unit(&mut rng, d);
            let x: Vec<f64> = u.iter().map(|v| r * v).collect();
            let y = match t % ADVERSARIAL_PER_RAY {
                0 => x.iter().map(|v| -v).collect(),
                1 => x.iter().map(|v| (1.0 - self.ray_offset) * v).collect(),
                _ => {
                    let w = unit(&mut rng, d);
                    x.iter()
                        .zip(&w)
                        .map(|(a, b)| a + self.ray_offset * r * b)
                        .collect()
                }
            };
            (x, y)
        } else {
            (
                in_box(&mut rng, d, self.box_radius),
                in_box(&mut rng, d, self.box_radius),
            )
        };
        let mut zs = Vec::new();
        if levy.rate(Band::V) > 0.0 {
            for _ in 0..MARKS_PER_TRIAL {
                let mut z = vec![0.0; d];
                levy.marks(Band::V).sample_into(&mut rng, &mut z);
                zs.push(z);
            }
        }
        Tuple { x, y, mu1, mu2, zs }
    }
}

fn verdict(worst: f64, declared: f64, tol: f64) -> Verdict {
    if worst.is_finite() && worst <= declared + tol * declared.abs().max(1.0) {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

struct TrialOutcome {
    ratios: Vec<f64>,
    witness: Witness,
}

fn reduce(
    id: AssumptionId,
    names: &[&str],
    outcomes: Vec<TrialOutcome>,
    cfg: &CheckConfig,
) -> AssumptionReport {
    let mut worst = vec![f64::NEG_INFINITY; names.len()];
    let mut best_total = f64::NEG_INFINITY;
    let mut witness = None;
    let trials = outcomes.len();
    for o in outcomes {
        for (w, r) in worst.iter_mut().zip(&o.ratios) {
            if r.is_nan() {
                *w = f64::NAN;
            } else if *r > *w {
                *w = *r;
            }
        }
        let total = if o.ratios.iter().any(|r| r.is_nan()) {
            f64::INFINITY
        } else {
            o.ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        if total > best_total {
            best_total = total;
            witness = Some(o.witness);
        }
    }
    let overall = if worst.iter().any(|w| w.is_nan()) {
        f64::NAN
    } else {
        worst.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    AssumptionReport {
        id,
        trials,
        declared: cfg.declared,
        worst_ratio: overall,
        components: names
            .iter()
            .zip(worst)
            .map(|(n, w)| (n.to_string(), w))
            .collect(),
        witness,
        verdict: verdict(overall, cfg.declared, cfg.tolerance),
    }
}

/// Tests the one-sided Lipschitz condition on `(b, f)` together with the
/// Lipschitz condition on the big-jump coefficient.
pub fn check_one_sided_lipschitz(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    common: Option<&LevyModel>,
    form: LipschitzForm,
    cfg: &CheckConfig,
) -> Result<AssumptionReport> {
    let d = coeffs.dim();
    let (id, order) = match form {
        LipschitzForm::Standard => (AssumptionId::A1, coeffs.beta()),
        LipschitzForm::Mixed { p } => (AssumptionId::A1Prime, p),
        LipschitzForm::Common => (AssumptionId::B1, coeffs.beta()),
    };
    if form == LipschitzForm::Common && common.is_none() {
        return Err(Error::Config(
            "common-noise check needs the common Lévy model".into(),
        ));
    }
    let total = cfg.trials + cfg.sampler.adversarial_count();
    let outcomes = cfg.exec.try_map(total, |t| -> Result<TrialOutcome> {
        let tup = cfg.sampler.tuple(t, cfg.seed, d, levy);
        let w = w_p_exact(&tup.mu1, &tup.mu2, order)?.0;
        let dx = dist(&tup.x, &tup.y);
        let mut b1 = vec![0.0; d];
        let mut b2 = vec![0.0; d];
        coeffs.drift(&tup.x, &tup.mu1, &mut b1);
        coeffs.drift(&tup.y, &tup.mu2, &mut b2);
        let diff: Vec<f64> = tup.x.iter().zip(&tup.y).map(|(a, b)| a - b).collect();
        let db: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a - b).collect();
        let mut lhs = 2.0 * dot(&db, &diff)
            + small_jump_sq_diff(coeffs, levy, &tup.x, &tup.mu1, &tup.y, &tup.mu2);
        if let (LipschitzForm::Common, Some(c)) = (form, common) {
            lhs += common_small_jump_sq(coeffs, c, &tup.x, Some(&tup.y));
        }
        let bracket = match form {
            LipschitzForm::Standard => dx * dx + w * w,
            LipschitzForm::Mixed { .. } | LipschitzForm::Common => (dx + w) * dx,
        };
        let drift_ratio = if bracket > 0.0 {
            lhs / bracket
        } else {
            f64::NEG_INFINITY
        };

        let mut jump_ratio = f64::NEG_INFINITY;
        let mut worst_z = None;
        let mut g1 = vec![0.0; d];
        let mut g2 = vec![0.0; d];
        for z in &tup.zs {
            coeffs.big_jump(&tup.x, &tup.mu1, z, &mut g1);
            coeffs.big_jump(&tup.y, &tup.mu2, z, &mut g2);
            let mut num = dist(&g1, &g2);
            if form == LipschitzForm::Common {
                coeffs.common_big_jump(&tup.x, &tup.mu1, z, &mut g1);
                coeffs.common_big_jump(&tup.y, &tup.mu2, z, &mut g2);
                num += dist(&g1, &g2);
            }
            let den = (1.0 + norm(z)) * (dx + w);
            if den > 0.0 && num / den > jump_ratio {
                jump_ratio = num / den;
                worst_z = Some(z.clone());
            }
        }
        Ok(TrialOutcome {
            ratios: vec![drift_ratio, jump_ratio],
            witness: Witness {
                x: tup.x,
                y: Some(tup.y),
                mu1: tup.mu1.points().to_vec(),
                mu2: Some(tup.mu2.points().to_vec()),
                z: worst_z,
            },
        })
    })?;
    Ok(reduce(id, &["drift_small_jump", "big_jump"], outcomes, cfg))
}

/// Tests the coercivity (growth) condition on `(b, f)`.
pub fn check_coercivity(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    common: Option<&LevyModel>,
    form: CoercivityForm,
    cfg: &CheckConfig,
) -> Result<AssumptionReport> {
    let d = coeffs.dim();
    let beta = coeffs.beta();
    let id = match form {
        CoercivityForm::Standard => AssumptionId::A2,
        CoercivityForm::Strong => AssumptionId::A21,
        CoercivityForm::Common => AssumptionId::B2,
    };
    if form == CoercivityForm::Common && common.is_none() {
        return Err(Error::Config(
            "common-noise check needs the common Lévy model".into(),
        ));
    }
    let total = cfg.trials + cfg.sampler.adversarial_count();
    let outcomes = cfg.exec.map(total, |t| {
        let tup = cfg.sampler.tuple(t, cfg.seed, d, levy);
        let x = &tup.x;
        let mu = &tup.mu1;
        let m = beta_norm(mu, beta);
        let xb = drift_inner(coeffs, x, mu);
        let f2 = small_jump_sq(coeffs, levy, x, mu);
        let r2 = dot(x, x);
        let ratio = match form {
            CoercivityForm::Standard => (2.0 * xb + f2) / (1.0 + r2 + m * m),
            CoercivityForm::Strong => xb.max(f2) / (1.0 + r2 + m * m),
            CoercivityForm::Common => {
                let f0 = common.map_or(0.0, |c| common_small_jump_sq(coeffs, c, x, None));
                (2.0 * xb + f2 + f0) / (1.0 + r2 + r2.sqrt() * m)
            }
        };
        TrialOutcome {
            ratios: vec![ratio],
            witness: Witness {
                x: x.clone(),
                y: None,
                mu1: mu.points().to_vec(),
                mu2: None,
                z: None,
            },
        }
    });
    Ok(reduce(id, &["growth"], outcomes, cfg))
}

/// Local boundedness along a produced flow: the time integral of
/// `sup_{|x| <= R} |b(x, μ_t)| + ν(sup_{|x| <= R} |f(x, μ_t, ·)|² 1_U)`,
/// with the suprema taken over probe points. Passes iff the integral is finite
/// and at most the declared constant.
pub fn check_local_boundedness(
    coeffs: &dyn Coefficients,
    levy: &LevyModel,
    flow: &MeasureFlow,
    radius: f64,
    cfg: &CheckConfig,
) -> Result<AssumptionReport> {
    let d = coeffs.dim();
    let stream = NoiseStream::new(cfg.seed, StreamId::new(0xB0B, 0, 0, Layer::Aux(8)));
    let mut rng = stream.rng();
    let mut probes: Vec<Vec<f64>> = vec![vec![0.0; d]];
    for _ in 0..cfg.trials.max(1) {
        let u = unit(&mut rng, d);
        let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
        probes.push(u.iter().map(|v| r * v).collect());
        probes.push(u.iter().map(|v| radius * v).collect());
    }
    let mut b = vec![0.0; d];
    let values: Vec<f64> = flow
        .clouds()
        .iter()
        .map(|mu| {
            let mut sup_b = 0.0f64;
            let mut sup_f = 0.0f64;
            for x in &probes {
                coeffs.drift(x, mu, &mut b);
                sup_b = sup_b.max(norm(&b));
                sup_f = sup_f.max(small_jump_sq(coeffs, levy, x, mu));
            }
            sup_b + sup_f
        })
        .collect();
    let times = flow.times();
    let mut integral = 0.0;
    for k in 1..times.len() {
        integral += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
    }
    if times.len() == 1 {
        integral = values[0];
    }
    Ok(AssumptionReport {
        id: AssumptionId::A3,
        trials: probes.len(),
        declared: cfg.declared,
        worst_ratio: integral,
        components: vec![("time_integral".into(), integral)],
        witness: None,
        verdict: verdict(integral, cfg.declared, cfg.tolerance),
    })
}
