mod common;

use ddto::io::ScenarioFile;
use ddto::model::multiple_shooting_step;
use ddto::scp::*;
use ddto::DdtoError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Obstacle-free vehicle with light drag.
fn open_field(targets: Vec<Vec<f64>>, horizon: usize, l_max: f64) -> ScpScenario {
    let mut system = common::drag_quadrotor();
    system.obstacles.clear();
    system.g_scale.drain(..2);
    let n = targets.len();
    ScpScenario {
        name: "open".into(),
        system,
        z0: vec![0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0],
        targets,
        priorities: (1..=n).collect(),
        horizon,
        l_max,
    }
}

fn landing(x: f64, y: f64) -> Vec<f64> {
    vec![x, y, 0.0, 0.0, 0.0, 0.0]
}

#[test]
fn time_map_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s: Vec<f64> = (0..17).map(|_| rng.gen_range(1.0..15.0)).collect();
    let m = TimeMap::from_dilation(&s).unwrap();
    let tf: f64 = s.iter().sum::<f64>() / s.len() as f64;
    assert!((m.final_time() - tf).abs() < 1e-12);
    assert_eq!(m.t(0.0), 0.0);
    for _ in 0..200 {
        let t = rng.gen_range(0.0..tf);
        assert!((m.t(m.tau(t)) - t).abs() < 1e-12);
    }
    let m2 = TimeMap::from_dilation(&[2.0; 5]).unwrap();
    assert!((m2.final_time() - 2.0).abs() < 1e-15);
    assert!((m2.t(0.25) - 0.5).abs() < 1e-15);
}

#[test]
fn nonpositive_dilation_is_rejected() {
    assert!(TimeMap::from_dilation(&[1.0, -1.0]).is_err());
    assert!(reconstruct_time(&[vec![0.0, 0.0, 9.8, 0.0]]).is_err());
}

#[test]
fn config_guards() {
    assert!(ScpConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
    assert!(ScpConfig { s_min: 0.0, ..Default::default() }.validate().is_err());
    assert!(ScpConfig { w_pen: 0.0, ..Default::default() }.validate().is_err());
    assert!(ScpConfig::default().validate().is_ok());
}

#[test]
fn even_horizon_is_a_sizing_error() {
    let sc = open_field(vec![landing(5.0, 0.0), landing(-5.0, 0.0)], 10, 1e4);
    assert!(matches!(run_ddto_scp(&sc, &ScpConfig::default()), Err(DdtoError::Invalid(_))));
}

#[test]
fn too_few_nodes_for_the_targets() {
    let targets = (0..4).map(|k| landing(k as f64, 1.0)).collect();
    let sc = open_field(targets, 3, 1e4);
    let err = run_ddto_scp(&sc, &ScpConfig::default()).unwrap_err();
    assert!(err.to_string().contains("fewer than 2 nodes"), "{err}");
    let sc = open_field(vec![landing(1.0, 1.0)], 5, 1e4);
    assert!(scp_solve(&sc, &[0], &sc.z0, 1, &ScpConfig::default(), 1).is_err());
}

#[test]
fn single_target_gives_one_path() {
    let sc = open_field(vec![landing(6.0, 2.0)], 9, 1e4);
    let cfg = ScpConfig::default();
    let out = run_ddto_scp(&sc, &cfg).unwrap();
    assert_eq!(out.rounds.len(), 1);
    assert_eq!(out.tree.branches.len(), 1);
    let paths = out.tree.paths();
    let p = &paths[&1];
    assert_eq!(p.states.len(), 9);
    let end = p.states.last().unwrap();
    for i in 0..6 {
        assert!((end[i] - sc.targets[0][i]).abs() < 1e-4, "{end:?}");
    }
    let rep = validate_continuous(&out.tree, &sc.system, 20, 10).unwrap();
    assert!(rep.within(&sc.system, sc.l_max, (cfg.s_min, cfg.s_max), 1e-3), "{rep:?}");
}

#[test]
fn two_targets_branch_after_a_positive_trunk() {
    let sc = open_field(vec![landing(8.0, 4.0), landing(8.0, -4.0)], 11, 1e4);
    let cfg = ScpConfig::default();
    let out = run_ddto_scp(&sc, &cfg).unwrap();
    let t = &out.tree;
    assert_eq!(t.trunks.len(), 1);
    assert_eq!(t.branches.len(), 2);
    assert!(t.branch_clock[&1] > 0.0);
    assert_eq!(t.branch_clock[&1], t.branch_clock[&2]);
    assert_eq!(t.branch_times[&1], 6);
    assert!(out.coincided.is_none());
    let rep = validate_continuous(t, &sc.system, 20, 10).unwrap();
    assert!(rep.max_defect < 1e-4, "{rep:?}");
}

#[test]
fn converged_iterate_satisfies_the_round_invariants() {
    let sc = open_field(vec![landing(8.0, 4.0), landing(8.0, -4.0)], 11, 1e4);
    let cfg = ScpConfig::default();
    let sol = scp_solve(&sc, &[0, 1], &sc.z0, 6, &cfg, 1).unwrap();
    let it = &sol.iterate;
    let m = it.nodes();
    let span = 1.0 / (m - 1) as f64;
    assert!(it.defect <= cfg.tol_defect && it.terminal_residual <= cfg.tol_defect);
    for q in 0..it.states.len() {
        let xs = &it.states[q];
        let us = &it.inputs[q];
        let s_sum: f64 = us.iter().map(|u| u[3]).sum();
        assert!((it.final_time(q) - s_sum * span).abs() < 1e-10);
        for k in 0..m - 1 {
            assert!(us[k][3] >= cfg.s_min - 1e-7 && us[k][3] <= cfg.s_max + 1e-7);
            assert!(xs[k + 1][7] - xs[k][7] <= cfg.epsilon * (1.0 + 1e-6));
            let next = multiple_shooting_step(&sc.system, &xs[k], &us[k], span, cfg.substeps).unwrap();
            assert!((next[8] - xs[k + 1][8]).abs() < 1e-6);
        }
    }
    // branches start where the trunk ends
    for q in 1..it.states.len() {
        for i in 0..7 {
            assert!((it.states[q][0][i] - it.states[0][m - 1][i]).abs() < 1e-6);
        }
    }
}

#[test]
fn subproblem_at_a_feasible_iterate_needs_no_slack() {
    let sc = open_field(vec![landing(6.0, 2.0)], 9, 1e4);
    let cfg = ScpConfig::default();
    let sol = scp_solve(&sc, &[0], &sc.z0, 5, &cfg, 1).unwrap();
    let lin = linearize(&sc.system, &sol.iterate, cfg.substeps).unwrap();
    let sub = build_scp_subproblem(&sol.iterate, &lin, cfg.w_tr, &cfg, &sc, &[0], &sc.z0).unwrap();
    let res = ddto_conic::solve(&sub.program, &cfg.settings).unwrap();
    let (_, pen) = sub.recover(&sol.iterate, &res.x, cfg.w_pen);
    assert!(pen < 1e-4, "penalty {pen}");
    let bad = ScpConfig { epsilon: 0.0, ..cfg.clone() };
    assert!(build_scp_subproblem(&sol.iterate, &lin, cfg.w_tr, &bad, &sc, &[0], &sc.z0).is_err());
}

#[test]
fn impossible_budget_does_not_converge() {
    let sc = open_field(vec![landing(6.0, 2.0)], 9, 10.0);
    let cfg = ScpConfig { max_iter: 15, ..Default::default() };
    match run_ddto_scp(&sc, &cfg) {
        Err(DdtoError::NonConvergence { slack, .. }) => assert!(slack > 0.0),
        r => panic!("expected non-convergence, got {:?}", r.map(|o| o.rounds)),
    }
}

#[test]
fn trace_is_written_as_csv() {
    let sc = open_field(vec![landing(6.0, 2.0)], 9, 1e4);
    let out = run_ddto_scp(&sc, &ScpConfig::default()).unwrap();
    let rows = out.trace();
    let mut buf = vec![];
    write_trace(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("round,iteration,penalty,defect,trunk_time,change"));
    assert_eq!(lines.count(), rows.len());
    assert_eq!(rows[0].iteration, 0);
}

#[test]
fn nonconvex_quadrotor_tree_meets_the_dense_sample_bounds() {
    let f = ScenarioFile::load(std::path::Path::new("examples/quad_nonconvex.json")).unwrap();
    let (sc, cfg) = f.scp_problem().unwrap();
    assert_eq!((sc.n_targets(), sc.horizon, cfg.epsilon), (4, 23, 1e-5));
    let out = run_ddto_scp(&sc, &cfg).unwrap();
    assert_eq!(out.tree.trunks.len(), 3);
    assert_eq!(out.tree.branches.len(), 4);
    assert_eq!(out.rounds.iter().map(|r| r.nodes).collect::<Vec<_>>(), vec![12, 6, 3]);
    let clock: Vec<f64> = sc.priorities.iter().rev().map(|j| out.tree.branch_clock[j]).collect();
    assert!(clock.windows(2).all(|w| w[0] <= w[1]), "{clock:?}");
    let rep = validate_continuous(&out.tree, &sc.system, 50, cfg.substeps).unwrap();
    assert!(rep.within(&sc.system, sc.l_max, (cfg.s_min, cfg.s_max), 1e-3), "{rep:#?}");
}
