mod support;

use nar_core::driver::{run, NoObserver, RunConfig, SchemePlan, Trajectory};
use nar_core::error::NarError;
use nar_core::schemes::{SchemeKind, SchemeOptions, Tolerances};
use support::*;

fn config(dt: f64, t_max: f64, plan: SchemePlan<f64>, tol: Tolerances<f64>) -> RunConfig<f64> {
    RunConfig {
        dt,
        t_max,
        cadence: 1,
        max_halvings: 0,
        plan,
        tolerances: tol,
        options: SchemeOptions::default(),
    }
}

#[test]
fn zero_steps_keep_only_the_initial_state() {
    let g = grid(16);
    let state = random_state(&g, 2, 1);
    let problem = growth_problem(&state, 0.05);
    let cfg = config(1e-3, 0.0, SchemePlan::Single(SchemeKind::Linear), Tolerances::for_grid(&g));
    let mut traj = Trajectory::default();
    let out = run(&problem, state.clone(), &cfg, &mut traj).unwrap();
    assert_eq!(traj.steps, vec![0]);
    assert_eq!(traj.states, vec![state.clone()]);
    assert!(traj.records[0].is_none());
    assert_eq!(out.steps, 0);
    assert_eq!(out.state, state);
}

#[test]
fn identical_runs_are_bit_identical() {
    let g = grid(32);
    let state = random_state(&g, 3, 2);
    let problem = growth_problem(&state, 0.05);
    let cfg = config(1e-2, 0.1, SchemePlan::Single(SchemeKind::Linear), Tolerances::for_grid(&g));
    let go = || {
        let mut traj = Trajectory::default();
        run(&problem, state.clone(), &cfg, &mut traj).unwrap();
        traj
    };
    let (a, b) = (go(), go());
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.states.len(), 11);
    for (x, y) in a.states.iter().zip(&b.states) {
        let bits = |s: &State| -> Vec<u64> {
            s.phi
                .iter()
                .chain([&s.psi, &s.phi0])
                .flat_map(|f| f.values().iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(x), bits(y));
        assert_eq!(x.t.to_bits(), y.t.to_bits());
    }
    assert_eq!(a.records, b.records);
}

#[test]
fn cadence_observes_ticks_and_the_final_state() {
    let g = grid(16);
    let state = random_state(&g, 1, 3);
    let problem = growth_problem(&state, 0.05);
    let mut cfg = config(1e-2, 0.07, SchemePlan::Single(SchemeKind::Linear), Tolerances::for_grid(&g));
    cfg.cadence = 3;
    let mut seen = Vec::new();
    let mut obs = |n: usize, s: &State, _: Option<&nar_core::schemes::MultiplierRecord<f64>>| {
        seen.push((n, s.t));
        Ok(())
    };
    run(&problem, state, &cfg, &mut obs).unwrap();
    let steps: Vec<usize> = seen.iter().map(|p| p.0).collect();
    assert_eq!(steps, vec![0, 3, 6, 7]);
    for (n, t) in seen {
        assert!((t - n as f64 * 1e-2).abs() <= 1e-15);
    }
}

#[test]
fn switch_plan_changes_scheme_at_the_given_time() {
    let g = grid(16);
    let state = random_state(&g, 2, 4);
    let problem = frozen_problem(&state);
    let plan = SchemePlan::Switch {
        before: SchemeKind::Linear,
        after: SchemeKind::EnergyStable,
        at: 0.05,
    };
    let cfg = config(1e-2, 0.1, plan, Tolerances::for_grid(&g));
    let mut traj = Trajectory::default();
    run(&problem, state, &cfg, &mut traj).unwrap();
    assert_eq!(traj.steps.len(), 11);
    for (n, rec) in traj.steps.iter().zip(&traj.records).skip(1) {
        // Step n starts at (n - 1) dt; only the energy-stable scheme reports R.
        let stable = *n > 5;
        assert_eq!(rec.as_ref().unwrap().r.is_some(), stable, "step {n}");
    }
}

#[test]
fn energy_stable_before_the_clamp_is_rejected() {
    let g = grid(16);
    let state = random_state(&g, 1, 5);
    let problem = growth_problem(&state, 0.05);
    let cfg = config(1e-2, 0.1, SchemePlan::Single(SchemeKind::EnergyStable), Tolerances::for_grid(&g));
    let err = run(&problem, state, &cfg, &mut NoObserver).unwrap_err();
    assert!(matches!(err.error, NarError::Precondition(_)), "{}", err.error);
    assert_eq!(err.step, 1);
}

#[test]
fn invalid_config_is_rejected() {
    let g = grid(16);
    let state = random_state(&g, 1, 6);
    let problem = growth_problem(&state, 0.05);
    for (dt, t_max) in [(0.0, 1.0), (-1e-3, 1.0), (1e-3, -1.0), (f64::NAN, 1.0)] {
        let cfg = config(dt, t_max, SchemePlan::Single(SchemeKind::Linear), Tolerances::for_grid(&g));
        assert!(run(&problem, state.clone(), &cfg, &mut NoObserver).is_err());
    }
}
