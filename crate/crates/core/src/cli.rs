//! Method orchestration and export for the `ddto` binary.
//!
//! Every method writes into one output directory: `tree.json`,
//! `traj_<j>.csv`, `summary.json` and `plotdata/` for the trajectory
//! methods, `oracle.json` or `verify.json` for the enumeration methods.
//! Failures leave an `error.json` behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::info;
use serde_json::{json, Value};

use crate::error::DdtoError;
use crate::io::{write_json, AnchorName, AnchorSpec, Dynamics, ScenarioFile};
use crate::micp::{best_anchor, branch_and_bound, build_micp, solution_tree, MicpConfig, PNorm};
use crate::oracle::{check_theorems, embed_convex, exhaustive_ddto, Anchor, GridSystem, DEFAULT_BUDGET};
use crate::qcvx::{max_branch_time, run_ddto_qcvx, Coincidence, QcvxConfig};
use crate::scp::{run_ddto_scp, validate_continuous, write_trace};
use crate::tree::{DdtoTree, Path as TreePath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Qcvx,
    Micp,
    Scp,
    Oracle,
    Verify,
}

impl FromStr for Method {
    type Err = DdtoError;

    fn from_str(s: &str) -> Result<Self, DdtoError> {
        Ok(match s {
            "qcvx" => Method::Qcvx,
            "micp" => Method::Micp,
            "scp" => Method::Scp,
            "oracle" => Method::Oracle,
            "verify" => Method::Verify,
            _ => return Err(DdtoError::invalid(format!("unknown method '{s}' (qcvx, micp, scp, oracle, verify)"))),
        })
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Qcvx => "qcvx",
            Method::Micp => "micp",
            Method::Scp => "scp",
            Method::Oracle => "oracle",
            Method::Verify => "verify",
        }
    }
}

/// Command-line overrides of the scenario's method block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// qcvx: coincidence tolerance; micp: gap tolerance; scp: iterate-change tolerance.
    pub tol: Option<f64>,
    /// scp: iteration cap per round; micp: node limit.
    pub max_iter: Option<usize>,
    /// verify/oracle: seed of the generated corpora.  Recorded otherwise.
    pub seed: Option<u64>,
    pub anchor: Option<AnchorSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: Method,
    pub files: Vec<PathBuf>,
    /// False when `verify` found a failing check.
    pub passed: bool,
}

/// Process exit code for an error.
pub fn exit_code(err: &DdtoError) -> i32 {
    match err {
        DdtoError::Invalid(_) | DdtoError::Scenario(_) | DdtoError::Json(_) | DdtoError::Io(_) => 2,
        _ => 3,
    }
}

/// Runs `method` on the scenario at `path` and writes artifacts into `out`.
/// On failure an `error.json` describing the error is written as well.
pub fn run(method: Method, path: &Path, out: &Path, opts: &RunOptions) -> Result<RunReport, DdtoError> {
    fs::create_dir_all(out)?;
    let res = ScenarioFile::load(path).and_then(|file| dispatch(method, &file, out, opts));
    if let Err(e) = &res {
        let diag = json!({
            "method": method.name(),
            "scenario": path.display().to_string(),
            "error": e.to_string(),
            "exit_code": exit_code(e),
        });
        let _ = write_json(&out.join("error.json"), &diag);
    }
    res
}

fn dispatch(method: Method, file: &ScenarioFile, out: &Path, opts: &RunOptions) -> Result<RunReport, DdtoError> {
    let start = Instant::now();
    let mut files = vec![];
    let mut passed = true;
    let mut summary = match method {
        Method::Qcvx => run_qcvx(file, out, opts, &mut files)?,
        Method::Micp => run_micp(file, out, opts, &mut files)?,
        Method::Scp => run_scp(file, out, opts, &mut files)?,
        Method::Oracle => run_oracle(file, out, opts, &mut files)?,
        Method::Verify => {
            let (s, ok) = run_verify(file, out, opts, &mut files)?;
            passed = ok;
            s
        }
    };
    summary["method"] = json!(method.name());
    summary["scenario"] = json!(file.name);
    summary["seed"] = json!(opts.seed);
    summary["elapsed_s"] = json!(start.elapsed().as_secs_f64());
    let p = out.join("summary.json");
    write_json(&p, &summary)?;
    files.push(p);
    info!("{} finished in {:.2?}", method.name(), start.elapsed());
    Ok(RunReport { method, files, passed })
}

fn run_qcvx(file: &ScenarioFile, out: &Path, opts: &RunOptions, files: &mut Vec<PathBuf>) -> Result<Value, DdtoError> {
    let sc = file.scenario()?;
    let blk = file.qcvx.clone().ok_or_else(|| DdtoError::Scenario("missing 'qcvx' block".into()))?;
    let d = QcvxConfig::default();
    let cfg = QcvxConfig {
        coincidence: blk.coincidence,
        margin: blk.margin.unwrap_or(d.margin),
        tol: opts.tol.unwrap_or(d.tol),
        ..d
    };
    let res = run_ddto_qcvx(&sc, &cfg)?;
    let dt = discrete_step(file);
    let axis = sc.inputs.axis_or_default(sc.system.nu());
    export_tree(&res.tree, out, dt, &axis, files)?;
    let energy: Vec<Value> =
        res.tree.paths().iter().map(|(j, p)| json!({"target": j, "cost": p.input_energy()})).collect();
    Ok(json!({
        "branch_times": res.tree.branch_times,
        "rounds": res.rounds,
        "path_costs": energy,
        "dynamics_defect": res.tree.dynamics_defect(&sc.system),
        "path_costs": energy,
    }))
}

fn run_micp(file: &ScenarioFile, out: &Path, opts: &RunOptions, files: &mut Vec<PathBuf>) -> Result<Value, DdtoError> {
    let sc = file.scenario()?;
    let blk = file.micp.clone().ok_or_else(|| DdtoError::Scenario("missing 'micp' block".into()))?;
    let cfg = MicpConfig {
        big_m: blk.big_m,
        p_norm: PNorm::parse(&blk.p_norm)?,
        gap_tol: opts.tol.unwrap_or(blk.gap_tol),
        node_limit: opts.max_iter.or(blk.node_limit),
        time_limit: blk.time_limit_s.map(Duration::from_secs_f64),
        monotone_cuts: blk.monotone_cuts,
        ..Default::default()
    };
    let sol = match opts.anchor.unwrap_or(blk.anchor) {
        AnchorSpec::Named(AnchorName::Free) => best_anchor(&sc, &cfg)?,
        AnchorSpec::Target(i) => {
            if i > sc.n_targets() {
                return Err(DdtoError::invalid(format!("anchor {i} out of range 1..={}", sc.n_targets())));
            }
            branch_and_bound(&build_micp(&sc, i - 1, &cfg)?, &cfg)?
        }
    };
    let tree = solution_tree(&sc, &sol);
    let dt = discrete_step(file);
    let axis = sc.inputs.axis_or_default(sc.system.nu());
    export_tree(&tree, out, dt, &axis, files)?;
    let p = out.join("node_log.csv");
    sol.write_node_log(fs::File::create(&p)?)?;
    files.push(p);
    let sets: Vec<Vec<usize>> = sol.sets.iter().map(|s| s.iter().map(|j| j + 1).collect()).collect();
    Ok(json!({
        "anchor": sol.anchor + 1,
        "objective": sol.objective,
        "lower_bound": sol.lower_bound,
        "closed": sol.closed,
        "gap": sol.gap(),
        "nodes": sol.nodes,
        "coincidence_count": sol.coincidence_count(),
        "sets": sets,
        "big_m_usage": sol.big_m_usage,
        "bound_transcript": sol.transcript,
        "dynamics_defect": tree.dynamics_defect(&sc.system),
    }))
}

fn run_scp(file: &ScenarioFile, out: &Path, opts: &RunOptions, files: &mut Vec<PathBuf>) -> Result<Value, DdtoError> {
    let (sc, mut cfg) = file.scp_problem()?;
    if let Some(t) = opts.tol {
        cfg.tol_change = t;
    }
    if let Some(m) = opts.max_iter {
        cfg.max_iter = m;
    }
    cfg.validate()?;
    let res = run_ddto_scp(&sc, &cfg)?;
    export_tree(&res.tree, out, None, &sc.system.axis, files)?;
    let p = out.join("trace.csv");
    write_trace(&res.trace(), fs::File::create(&p)?)?;
    files.push(p);
    let rep = validate_continuous(&res.tree, &sc.system, 50, cfg.substeps)?;
    Ok(json!({
        "branch_times": res.tree.branch_times,
        "branch_clock": res.tree.branch_clock,
        "rounds": res.rounds,
        "coincided": res.coincided.as_ref().map(|(r, e)| json!({"round": r, "error": e})),
        "continuous_check": rep,
        "within_bounds": rep.within(&sc.system, sc.l_max, (cfg.s_min, cfg.s_max), 1e-3),
    }))
}

fn oracle_instances(file: &ScenarioFile, opts: &RunOptions) -> Result<(Vec<GridSystem>, u128), DdtoError> {
    let mut blk = file.oracle.clone().ok_or_else(|| DdtoError::Scenario("missing 'oracle' block".into()))?;
    if let Some(seed) = opts.seed {
        for c in [&mut blk.random, &mut blk.convex].into_iter().flatten() {
            c.seed = seed;
        }
    }
    let inst = blk.all_instances();
    if inst.is_empty() {
        return Err(DdtoError::Scenario("the oracle block lists no instances".into()));
    }
    for s in &inst {
        s.validate().map_err(|e| DdtoError::Scenario(format!("instance '{}': {e}", s.name)))?;
    }
    Ok((inst, blk.budget.unwrap_or(DEFAULT_BUDGET)))
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1 << n)).map(move |m| (0..n).filter(|j| m & (1 << j) != 0).collect())
}

fn run_oracle(file: &ScenarioFile, out: &Path, opts: &RunOptions, files: &mut Vec<PathBuf>) -> Result<Value, DdtoError> {
    let (inst, budget) = oracle_instances(file, opts)?;
    let mut rows = vec![];
    for sys in &inst {
        let tables = sys.reach_tables();
        let n = sys.targets.len();
        let bt: Vec<Value> = subsets(n)
            .map(|set| {
                let k = tables.branch_time(&set).ok();
                json!({"targets": set.iter().map(|j| j + 1).collect::<Vec<_>>(), "branch_time": k})
            })
            .collect();
        let anchor = match opts.anchor {
            Some(AnchorSpec::Target(i)) if i >= 1 && i <= n => Anchor::Target(i - 1),
            Some(AnchorSpec::Target(i)) => {
                return Err(DdtoError::invalid(format!("anchor {i} out of range for '{}'", sys.name)))
            }
            _ => Anchor::Free,
        };
        let ex = match exhaustive_ddto(sys, anchor, budget) {
            Ok(s) => json!({
                "anchor": s.anchor + 1,
                "objective": s.objective,
                "sets": s.sets.iter().map(|j| j.iter().map(|v| v + 1).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "branch_times": s.branch_times,
                "trajectories": s.trajectories,
            }),
            Err(e) => json!({"error": e.to_string()}),
        };
        rows.push(json!({"name": sys.name, "horizon": sys.horizon, "branch_times": bt, "exhaustive": ex}));
    }
    let p = out.join("oracle.json");
    write_json(&p, &rows)?;
    files.push(p);
    Ok(json!({"instances": inst.len()}))
}

fn run_verify(
    file: &ScenarioFile,
    out: &Path,
    opts: &RunOptions,
    files: &mut Vec<PathBuf>,
) -> Result<(Value, bool), DdtoError> {
    let (inst, budget) = oracle_instances(file, opts)?;
    let cfg = QcvxConfig { coincidence: Coincidence::StateOnly, ..Default::default() };
    let mut rows = vec![];
    let (mut theorem_fail, mut qcvx_checked, mut qcvx_fail) = (0, 0, 0);
    for sys in &inst {
        let rep = check_theorems(sys, budget)?;
        if !rep.all_pass() {
            theorem_fail += 1;
        }
        let mut mismatches = vec![];
        let mut checked = 0;
        if let Some(sc) = embed_convex(sys) {
            let tables = sys.reach_tables();
            for set in subsets(sys.targets.len()) {
                checked += 1;
                let want = tables.branch_time(&set).ok();
                let got = max_branch_time(&sc, &set, &sc.horizons, &sc.z0, sc.l_max, &cfg);
                let ok = match (&want, &got) {
                    (Some(a), Ok(b)) => *a == b.k && b.certified(),
                    (None, Err(_)) => true,
                    _ => false,
                };
                if !ok {
                    mismatches.push(json!({
                        "targets": set.iter().map(|j| j + 1).collect::<Vec<_>>(),
                        "oracle": want,
                        "qcvx": got.as_ref().map(|b| json!(b)).unwrap_or_else(|e| json!(e.to_string())),
                    }));
                }
            }
        }
        qcvx_checked += checked;
        qcvx_fail += mismatches.len();
        let mut row = json!({
            "name": sys.name,
            "theorems_pass": rep.all_pass(),
            "coincidence_equals_branch_time": rep.coincidence_equals_branch_time,
            "monotone_nonemptiness": rep.monotone_nonemptiness,
            "monotone_sets": rep.monotone_sets,
            "no_recoincidence": rep.no_recoincidence,
            "counting_identity": rep.counting_identity,
            "failures": rep.failures,
            "qcvx_checked": checked,
            "qcvx_mismatches": mismatches,
        });
        if !rep.all_pass() || !row["qcvx_mismatches"].as_array().unwrap().is_empty() {
            // replayable counterexample
            row["instance"] = json!(sys);
        }
        rows.push(row);
    }
    let p = out.join("verify.json");
    write_json(&p, &rows)?;
    files.push(p);
    let ok = theorem_fail == 0 && qcvx_fail == 0;
    Ok((
        json!({
            "instances": inst.len(),
            "theorem_failures": theorem_fail,
            "qcvx_checked": qcvx_checked,
            "qcvx_mismatches": qcvx_fail,
            "all_pass": ok,
        }),
        ok,
    ))
}

fn discrete_step(file: &ScenarioFile) -> Option<f64> {
    match &file.dynamics {
        Some(Dynamics::DoubleIntegrator { dt, .. }) => Some(*dt),
        _ => None,
    }
}

fn state_names(nx: usize) -> Vec<String> {
    let named = ["rx", "ry", "rz", "vx", "vy", "vz", "theta"];
    if nx == 6 || nx == 7 {
        named[..nx].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=nx).map(|i| format!("x{i}")).collect()
    }
}

fn input_names(nu: usize) -> Vec<String> {
    if nu == 3 {
        vec!["ux".into(), "uy".into(), "uz".into()]
    } else {
        (1..=nu).map(|i| format!("u{i}")).collect()
    }
}

/// Node times of a path: physical times when present, else `(k − 1)·dt`.
fn path_times(p: &TreePath, dt: Option<f64>) -> Option<Vec<f64>> {
    p.times.clone().or_else(|| dt.map(|dt| (0..p.states.len()).map(|k| k as f64 * dt).collect()))
}

/// Cumulative cost at every node: the running-cost state of continuous-time
/// paths, `Σ‖u‖²` otherwise.
fn cumulative_cost(p: &TreePath) -> Vec<f64> {
    if p.times.is_some() {
        return p.states.iter().map(|x| *x.last().unwrap()).collect();
    }
    let mut c = vec![0.0];
    for u in &p.inputs {
        c.push(c.last().unwrap() + u.iter().map(|v| v * v).sum::<f64>());
    }
    c
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// `tree.json`, one `traj_<j>.csv` per target and the plot series.
pub fn export_tree(
    tree: &DdtoTree,
    out: &Path,
    dt: Option<f64>,
    axis: &[f64],
    files: &mut Vec<PathBuf>,
) -> Result<(), DdtoError> {
    let p = out.join("tree.json");
    write_json(&p, tree)?;
    files.push(p);
    let paths = tree.paths();
    for (j, path) in &paths {
        let nx = path.states[0].len();
        let nu = path.inputs.first().map(|u| u.len()).unwrap_or(0);
        let times = path_times(path, dt);
        let cost = cumulative_cost(path);
        let mut header = vec!["k".to_string()];
        if times.is_some() {
            header.push("t".into());
        }
        header.extend(state_names(nx));
        header.extend(input_names(nu));
        header.push("cost".into());
        let p = out.join(format!("traj_{j}.csv"));
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(&header)?;
        for (k, x) in path.states.iter().enumerate() {
            let mut row = vec![(k + 1).to_string()];
            if let Some(t) = &times {
                row.push(fmt(t[k]));
            }
            row.extend(x.iter().map(|v| fmt(*v)));
            match path.inputs.get(k) {
                Some(u) => row.extend(u.iter().map(|v| fmt(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), nu)),
            }
            row.push(fmt(cost[k]));
            w.write_record(&row)?;
        }
        w.flush()?;
        files.push(p);
    }
    write_plotdata(&paths, &out.join("plotdata"), dt, axis, files)
}

fn write_plotdata(
    paths: &std::collections::BTreeMap<usize, TreePath>,
    dir: &Path,
    dt: Option<f64>,
    axis: &[f64],
    files: &mut Vec<PathBuf>,
) -> Result<(), DdtoError> {
    fs::create_dir_all(dir)?;
    let tcol = |t: &Option<Vec<f64>>, k: usize| t.as_ref().map(|t| fmt(t[k])).unwrap_or_default();
    let mut position = csv::Writer::from_path(dir.join("position.csv"))?;
    let mut speed = csv::Writer::from_path(dir.join("speed.csv"))?;
    let mut cost = csv::Writer::from_path(dir.join("cost.csv"))?;
    let mut thrust = csv::Writer::from_path(dir.join("thrust.csv"))?;
    let mut pointing = csv::Writer::from_path(dir.join("pointing.csv"))?;
    position.write_record(["target", "k", "t", "x", "y", "z"])?;
    speed.write_record(["target", "k", "t", "speed"])?;
    cost.write_record(["target", "k", "t", "cost"])?;
    thrust.write_record(["target", "k", "t", "thrust"])?;
    pointing.write_record(["target", "k", "t", "angle_deg"])?;
    for (j, p) in paths {
        let times = path_times(p, dt);
        let c = cumulative_cost(p);
        for (k, x) in p.states.iter().enumerate() {
            let (jj, kk, t) = (j.to_string(), (k + 1).to_string(), tcol(&times, k));
            let mut pos: Vec<String> = x.iter().take(3).map(|v| fmt(*v)).collect();
            pos.resize(3, String::new());
            position.write_record([jj.clone(), kk.clone(), t.clone(), pos[0].clone(), pos[1].clone(), pos[2].clone()])?;
            if x.len() >= 6 {
                let s = (x[3] * x[3] + x[4] * x[4] + x[5] * x[5]).sqrt();
                speed.write_record([jj.clone(), kk.clone(), t.clone(), fmt(s)])?;
            }
            cost.write_record([jj, kk, t, fmt(c[k])])?;
        }
        for (k, u) in p.inputs.iter().enumerate() {
            let (jj, kk, t) = (j.to_string(), (k + 1).to_string(), tcol(&times, k));
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            thrust.write_record([jj.clone(), kk.clone(), t.clone(), fmt(n)])?;
            if n > 0.0 && u.len() == axis.len() {
                let eu: f64 = u.iter().zip(axis).map(|(a, b)| a * b).sum();
                let ang = (eu / n).clamp(-1.0, 1.0).acos().to_degrees();
                pointing.write_record([jj, kk, t, fmt(ang)])?;
            }
        }
    }
    for (mut w, name) in [
        (position, "position.csv"),
        (speed, "speed.csv"),
        (cost, "cost.csv"),
        (thrust, "thrust.csv"),
        (pointing, "pointing.csv"),
    ] {
        w.flush()?;
        files.push(dir.join(name));
    }
    Ok(())
}
