use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ddto::cli::{run, Method, RunOptions};
use ddto::io::{read_tree, write_json, AnchorSpec, Dynamics, ScenarioFile};
use ddto::tree::{Branch, DdtoTree, Segment};
use proptest::prelude::*;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn csv_rows(p: &Path) -> usize {
    fs::read_to_string(p).unwrap().lines().count() - 1
}

#[test]
fn shipped_scenarios_load_with_their_parameters() {
    let t1 = ScenarioFile::load(&example("quad_convex.json")).unwrap().scenario().unwrap();
    assert_eq!(t1.n_targets(), 4);
    assert_eq!(t1.horizons, vec![20; 4]);
    assert_eq!(t1.l_max, 3794.0);
    assert_eq!(t1.inputs.delta_max_deg, Some(60.0));
    let f2 = ScenarioFile::load(&example("quad_nonconvex.json")).unwrap();
    let Some(Dynamics::Quadrotor { drag, obstacles, .. }) = &f2.dynamics else { panic!() };
    assert_eq!(*drag, 0.01);
    let diag: Vec<[f64; 3]> = obstacles.iter().map(|o| [o.shape[0][0], o.shape[1][1], o.shape[2][2]]).collect();
    assert_eq!(diag, vec![[0.2, 0.1, 0.2], [0.1, 0.2, 0.2]]);
    let (sc, cfg) = f2.scp_problem().unwrap();
    assert_eq!(sc.system.v_max, 8.0);
    assert_eq!((sc.horizon, sc.l_max, cfg.epsilon, cfg.s_min, cfg.s_max), (23, 1100.0, 1e-5, 1.0, 15.0));
}

#[test]
fn inconsistent_scenarios_are_rejected() {
    let mut f = ScenarioFile::load(&example("quad_convex.json")).unwrap();
    f.inputs.u_min = Some(25.0);
    assert!(f.scenario().is_err());
    let err = ScenarioFile::from_json("{\n  \"name\": \"x\",\n  \"l_max\": \"lots\"\n}").unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn qcvx_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let rep = run(Method::Qcvx, &example("quad_convex.json"), dir.path(), &RunOptions::default()).unwrap();
    assert!(rep.passed);
    for j in 1..=4 {
        assert_eq!(csv_rows(&dir.path().join(format!("traj_{j}.csv"))), 20);
    }
    for f in ["tree.json", "summary.json", "plotdata/position.csv", "plotdata/speed.csv", "plotdata/cost.csv",
        "plotdata/thrust.csv", "plotdata/pointing.csv"]
    {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    assert_eq!(csv_rows(&dir.path().join("plotdata/thrust.csv")), 4 * 19);
    let tree = read_tree(&dir.path().join("tree.json")).unwrap();
    assert_eq!(tree.method, "qcvx");
    // re-export is byte-identical
    let again = dir.path().join("again.json");
    write_json(&again, &tree).unwrap();
    assert_eq!(fs::read(&again).unwrap(), fs::read(dir.path().join("tree.json")).unwrap());
}

#[test]
fn repeated_runs_are_bit_identical() {
    for (method, file) in [(Method::Qcvx, "quad_convex.json"), (Method::Micp, "quad_convex.json"), (Method::Oracle, "grid_corpus.json")] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let opts = RunOptions { seed: Some(1), ..Default::default() };
        run(method, &example(file), a.path(), &opts).unwrap();
        run(method, &example(file), b.path(), &opts).unwrap();
        let name = if method == Method::Oracle { "oracle.json" } else { "tree.json" };
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{method:?}");
    }
}

#[test]
fn micp_anchor_override() {
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions { anchor: Some(AnchorSpec::Target(9)), ..Default::default() };
    assert!(run(Method::Micp, &example("quad_convex.json"), dir.path(), &opts).is_err());
    assert!(dir.path().join("error.json").is_file());
}

#[test]
fn verify_passes_on_the_bundled_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let rep = run(Method::Verify, &example("grid_corpus.json"), dir.path(), &RunOptions::default()).unwrap();
    assert!(rep.passed);
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(s["instances"].as_u64().unwrap() >= 50);
    assert_eq!(s["qcvx_mismatches"], 0);
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_ddto");
    let dir = tempfile::tempdir().unwrap();
    let mut f: serde_json::Value = serde_json::from_str(&fs::read_to_string(example("quad_nonconvex.json")).unwrap()).unwrap();
    f["scp"]["n"] = 22.into();
    let even = dir.path().join("even.json");
    fs::write(&even, f.to_string()).unwrap();
    let out = dir.path().join("out");
    let st = Command::new(exe).args(["scp", even.to_str().unwrap(), "--out", out.to_str().unwrap()]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let diag = fs::read_to_string(out.join("error.json")).unwrap();
    assert!(diag.contains("odd"), "{diag}");

    let st = Command::new(exe)
        .args(["oracle", example("grid_corpus.json").to_str().unwrap(), "--out", out.to_str().unwrap(), "--anchor", "free"])
        .env("DDTO_LOG", "info")
        .status()
        .unwrap();
    assert!(st.success());
    let st = Command::new(exe).args(["bogus", "x.json", "--out", "y"]).status().unwrap();
    assert!(!st.success());
}

fn seg(start: usize, vals: Vec<f64>) -> Segment {
    let n = vals.len();
    Segment {
        start,
        end: start + n - 1,
        states: vals.iter().map(|v| vec![*v, -v]).collect(),
        inputs: vals.windows(2).map(|w| vec![w[1] - w[0]]).collect(),
        times: None,
        dilation: None,
    }
}

proptest! {
    #[test]
    fn tree_json_round_trip_is_exact(
        trunk in prop::collection::vec(prop::num::f64::NORMAL, 2..6),
        branch in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL, 2..6),
    ) {
        let t = seg(1, trunk);
        let bt = t.end;
        let b = seg(bt, branch);
        let tree = DdtoTree {
            method: "test".into(),
            priorities: vec![1],
            trunks: vec![t],
            branches: vec![Branch { target: 1, branch_time: bt, branch_point: b.states[0].clone(), segment: b }],
            branch_times: [(1, bt)].into_iter().collect(),
            branch_clock: Default::default(),
        };
        let text = serde_json::to_string(&tree).unwrap();
        let back: DdtoTree = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, tree);
    }
}
