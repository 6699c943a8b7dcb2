mod common;

use mvlab::chaos::fit_loglog_slope;
use mvlab::levy::{Band, JumpEvent};
use mvlab::model::CubicInteraction;
use mvlab::model::{EmpiricalMeasure, Frozen, Initial, Kernel, LinearMeanField, MeasureFlow};
use mvlab::solver::{
    integrate_decoupled, integrate_decoupled_with_big_jumps, picard_fixed_point, simulate_coupled,
    simulate_decoupled, simulate_particle_system, Ensemble, SolverConfig, TimeGrid,
};
use mvlab::stream::{Layer, NoiseStream, StreamId};
use mvlab::{Error, Exec};

fn stream(i: u64) -> NoiseStream {
    NoiseStream::new(7, StreamId::new(1, 0, i, Layer::SmallJumps))
}

fn const_flow(grid: &TimeGrid, x: f64) -> MeasureFlow {
    MeasureFlow::constant(grid.times().to_vec(), EmpiricalMeasure::dirac(&[x])).unwrap()
}

#[test]
fn zero_coefficients_keep_the_initial_state() {
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    let c = Frozen::new(1, 2.0).unwrap();
    let levy = common::levy(1, 3.0, 2.0);
    let path = integrate_decoupled(
        &c,
        &levy,
        &const_flow(&grid, 0.0),
        &[0.7],
        &stream(0),
        &grid,
    )
    .unwrap();
    assert!(path.states.iter().all(|x| *x == 0.7));
}

#[test]
fn linear_decay_matches_exponential() {
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let c = Frozen::new(1, 2.0).unwrap().drift(0.0, -1.0, 0.0);
    let levy = common::silent(1);
    let path = integrate_decoupled(
        &c,
        &levy,
        &const_flow(&grid, 0.0),
        &[1.0],
        &stream(0),
        &grid,
    )
    .unwrap();
    assert!((path.final_state()[0] - (-1f64).exp()).abs() < 5e-3);
}

#[test]
fn euler_order_on_linear_decay() {
    let levy = common::silent(1);
    let c = Frozen::new(1, 2.0).unwrap().drift(0.0, -1.0, 0.0);
    let pts: Vec<(f64, f64, f64)> = (6..=12)
        .map(|k| {
            let h = 2f64.powi(-k);
            let grid = TimeGrid::new(1.0, h).unwrap();
            let p = integrate_decoupled(
                &c,
                &levy,
                &const_flow(&grid, 0.0),
                &[1.0],
                &stream(0),
                &grid,
            )
            .unwrap();
            (1.0 / h, (p.final_state()[0] - (-1f64).exp()).abs(), 0.0)
        })
        .collect();
    let order = -fit_loglog_slope(&pts).unwrap().slope;
    assert!(order >= 0.8, "order {order}");
}

#[test]
fn forced_big_jump_is_spliced() {
    let grid = TimeGrid::new(1.0, 0.1).unwrap();
    let c = Frozen::new(1, 2.0).unwrap().jumps(0.0, 1.0);
    let levy = common::levy(1, 0.0, 1.0);
    let ev = JumpEvent {
        time: 0.3,
        mark: vec![1.0],
        band: Band::V,
    };
    let path = integrate_decoupled_with_big_jumps(
        &c,
        &levy,
        &const_flow(&grid, 0.0),
        &[0.0],
        &stream(0),
        &grid,
        vec![ev],
    )
    .unwrap();
    assert!(path.times.contains(&0.3));
    for (t, x) in path.times.iter().zip(&path.states) {
        assert_eq!(*x, if *t < 0.3 { 0.0 } else { 1.0 }, "t = {t}");
    }
    assert_eq!(path.at(0.29)[0], 0.0);
    assert_eq!(path.at(0.3)[0], 1.0);
    assert_eq!(path.left_limit(0.3), vec![0.0]);
    assert_eq!(path.jumps.len(), 1);
    assert_eq!(path.jumps[0].increment, vec![1.0]);
    assert!(path.without_jumps().iter().all(|x| *x == 0.0));
}

#[test]
fn jump_log_times_are_grid_points() {
    let grid = TimeGrid::new(2.0, 0.05).unwrap();
    let c = Frozen::new(1, 2.0)
        .unwrap()
        .drift(0.0, 1.0, -1.0)
        .jumps(0.2, 0.5);
    let levy = common::levy(1, 2.0, 3.0);
    let path = integrate_decoupled(
        &c,
        &levy,
        &const_flow(&grid, 0.2),
        &[0.1],
        &stream(3),
        &grid,
    )
    .unwrap();
    assert!(!path.jumps.is_empty());
    assert!(path.times.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(path.times[0], 0.0);
    assert_eq!(*path.times.last().unwrap(), 2.0);
    for j in &path.jumps {
        assert!(path.times.contains(&j.time));
        let post: Vec<f64> = j
            .pre_state
            .iter()
            .zip(&j.increment)
            .map(|(a, b)| a + b)
            .collect();
        assert_eq!(path.at(j.time), post.as_slice());
    }
    for t in grid.times() {
        assert!(path.times.contains(t));
    }
}

#[test]
fn silent_big_band_equals_deleted_band() {
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let c = CubicInteraction::new(1, 2.0, [1.0, 1.0, 0.2, 0.2], Kernel::Linear(0.5)).unwrap();
    let with = common::levy(1, 4.0, 0.0);
    let without = with.without_big_jumps();
    let flow = const_flow(&grid, 0.3);
    for i in 0..5 {
        let a = integrate_decoupled(&c, &with, &flow, &[0.5], &stream(i), &grid).unwrap();
        let b = integrate_decoupled(&c, &without, &flow, &[0.5], &stream(i), &grid).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn divergence_is_reported() {
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let c = Frozen::new(1, 2.0).unwrap().drift(0.0, 0.0, 1.0);
    let r = integrate_decoupled(
        &c,
        &common::silent(1),
        &const_flow(&grid, 0.0),
        &[2.0],
        &stream(0),
        &grid,
    );
    match r {
        Err(Error::Divergence { time, particle, .. }) => {
            assert_eq!(particle, 0);
            assert!(time > 0.0 && time < 1.0);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

fn cubic() -> CubicInteraction {
    CubicInteraction::new(1, 2.0, [1.0, 1.0, 0.2, 0.2], Kernel::Linear(0.5))
        .unwrap()
        .with_small_jump_interaction(false)
}

#[test]
fn single_particle_is_self_interacting() {
    let grid = TimeGrid::new(1.0, 0.02).unwrap();
    let c = cubic();
    let levy = common::levy(1, 3.0, 1.0);
    let ens = Ensemble {
        x0: vec![vec![0.4]],
        streams: vec![stream(9)],
    };
    let sys = simulate_particle_system(&c, &levy, &ens, &grid, true, Exec::Sequential).unwrap();
    let own = sys.flow();
    let path = integrate_decoupled(&c, &levy, &own, &[0.4], &stream(9), &grid).unwrap();
    assert_eq!(&sys.paths.unwrap()[0], &path);
}

#[test]
fn measure_free_particles_decouple() {
    let grid = TimeGrid::new(1.0, 0.02).unwrap();
    let c = Frozen::new(1, 2.0)
        .unwrap()
        .drift(0.1, -1.0, -0.5)
        .jumps(0.3, 0.2);
    let levy = common::levy(1, 3.0, 1.0);
    let init = Initial::Normal {
        mean: vec![0.0],
        sd: 1.0,
    };
    let ens = Ensemble::draw(&init, 20, 3, 4, 0);
    let sys = simulate_particle_system(&c, &levy, &ens, &grid, false, Exec::Sequential).unwrap();
    let flow = const_flow(&grid, 123.0);
    for i in 0..20 {
        let p = integrate_decoupled(&c, &levy, &flow, &ens.x0[i], &ens.streams[i], &grid).unwrap();
        assert_eq!(sys.state(grid.steps(), i), p.final_state());
    }
    let cp = simulate_coupled(&c, &levy, &ens, &grid, &flow, Exec::Sequential).unwrap();
    assert!(cp.errors().iter().flatten().all(|e| *e == 0.0));
}

#[test]
fn particle_system_is_exchangeable() {
    let grid = TimeGrid::new(0.5, 0.01).unwrap();
    let c = cubic();
    let levy = common::levy(1, 3.0, 1.0);
    let init = Initial::Uniform {
        dim: 1,
        low: -1.0,
        high: 1.0,
    };
    let ens = Ensemble::draw(&init, 12, 3, 5, 0);
    let perm: Vec<usize> = vec![3, 0, 11, 5, 7, 1, 2, 9, 10, 4, 6, 8];
    let a = simulate_particle_system(&c, &levy, &ens, &grid, false, Exec::Sequential).unwrap();
    let b = simulate_particle_system(
        &c,
        &levy,
        &ens.permuted(&perm),
        &grid,
        false,
        Exec::Sequential,
    )
    .unwrap();
    for k in [1, grid.steps()] {
        for (i, &j) in perm.iter().enumerate() {
            // Cloud statistics are summed in a different order; allow rounding.
            assert!((b.state(k, i)[0] - a.state(k, j)[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn worker_count_does_not_matter() {
    let grid = TimeGrid::new(0.5, 0.01).unwrap();
    let c = cubic();
    let levy = common::levy(1, 3.0, 1.0);
    let init = Initial::Uniform {
        dim: 1,
        low: -1.0,
        high: 1.0,
    };
    let ens = Ensemble::draw(&init, 64, 3, 5, 0);
    let a = simulate_particle_system(&c, &levy, &ens, &grid, true, Exec::Sequential).unwrap();
    let b = simulate_particle_system(&c, &levy, &ens, &grid, true, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn linear_mean_follows_ode() {
    let grid = TimeGrid::new(1.0, 1e-3).unwrap();
    let (a, cc) = (1.0, 0.5);
    let c = LinearMeanField::new(1, 2.0, a, cc, 0.0).unwrap();
    let init = Initial::Normal {
        mean: vec![1.0],
        sd: 0.5,
    };
    let ens = Ensemble::draw(&init, 10_000, 11, 1, 0);
    let sys = simulate_particle_system(&c, &common::silent(1), &ens, &grid, false, Exec::default())
        .unwrap();
    let xs: Vec<f64> = sys.final_cloud().points().to_vec();
    let (m, se) = mvlab::numeric::mean_and_se(&xs);
    let m0 = mvlab::numeric::mean_and_se(&ens.x0.concat()).0;
    let want = ((cc - a) * 1.0f64).exp() * m0;
    assert!(
        (m - want).abs() < 3.0 * se + 1e-3,
        "{m} vs {want} (se {se})"
    );
}

#[test]
fn picard_on_frozen_family_stops_at_second_iterate() {
    let grid = TimeGrid::new(1.0, 0.05).unwrap();
    let c = Frozen::new(1, 2.0)
        .unwrap()
        .drift(0.0, -1.0, 0.0)
        .jumps(0.3, 0.5);
    let levy = common::levy(1, 2.0, 1.0);
    let init = Initial::Normal {
        mean: vec![0.0],
        sd: 1.0,
    };
    let cfg = SolverConfig::new(0.05, 200, 5);
    let out = picard_fixed_point(&c, &init, &levy, &grid, &cfg).unwrap();
    assert_eq!(out.iterations, 2);
    assert!(out.trace[0] > 0.0);
    assert_eq!(out.trace[1], 0.0);
}

#[test]
fn picard_trace_is_deterministic_and_contracting() {
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let c = cubic();
    let levy = common::levy(1, 2.0, 0.5);
    let init = Initial::Uniform {
        dim: 1,
        low: -1.0,
        high: 1.0,
    };
    let mut cfg = SolverConfig::new(0.01, 500, 5);
    cfg.gamma = 10.0;
    cfg.tolerance = 1e-6;
    let a = picard_fixed_point(&c, &init, &levy, &grid, &cfg).unwrap();
    let b = picard_fixed_point(&c, &init, &levy, &grid, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.trace.iter().all(|d| *d >= 0.0));
    assert!(*a.trace.last().unwrap() < cfg.tolerance);
    for w in a.trace.windows(2).skip(1) {
        assert!(w[1] < w[0], "{:?}", a.trace);
    }
}

#[test]
fn picard_reports_non_convergence() {
    let grid = TimeGrid::new(1.0, 0.05).unwrap();
    let c = cubic();
    let init = Initial::Uniform {
        dim: 1,
        low: -1.0,
        high: 1.0,
    };
    let mut cfg = SolverConfig::new(0.05, 50, 5);
    cfg.max_iterations = 2;
    cfg.tolerance = 1e-14;
    match picard_fixed_point(&c, &init, &common::levy(1, 1.0, 0.0), &grid, &cfg) {
        Err(Error::NoConvergence {
            iterations, trace, ..
        }) => {
            assert_eq!(iterations, 2);
            assert_eq!(trace.len(), 2);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn coupled_error_is_bounded_and_nonzero() {
    let grid = TimeGrid::new(1.0, 0.01).unwrap();
    let c = LinearMeanField::new(1, 2.0, 1.0, 0.5, 0.3).unwrap();
    let levy = common::levy(1, 2.0, 0.0);
    let init = Initial::Normal {
        mean: vec![1.0],
        sd: 0.5,
    };
    let cfg = SolverConfig::new(0.01, 10_000, 2);
    let reference = picard_fixed_point(&c, &init, &levy, &grid, &cfg).unwrap();
    let ens = Ensemble::draw(&init, 1, 2, 77, 0);
    let run = simulate_coupled(&c, &levy, &ens, &grid, &reference.flow, Exec::Sequential).unwrap();
    let e = run.sup_errors()[0];
    assert!(e > 0.0 && e < 2.0, "{e}");
    let solo = simulate_decoupled(
        &c,
        &levy,
        &reference.flow,
        &ens,
        &grid,
        false,
        Exec::Sequential,
    )
    .unwrap();
    assert_eq!(solo, run.limit);
}
