//! One line per acceptance criterion: `[PASS|FAIL] <n> <title> (<seconds>) <details>`.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ddto::cli::{run, Method, RunOptions};
use ddto::io::ScenarioFile;
use ddto::micp::{branch_and_bound, build_micp, MicpConfig};
use ddto::oracle::*;
use ddto::qcvx::{max_branch_time, run_ddto_qcvx, Coincidence, QcvxConfig};
use ddto::scp::{run_ddto_scp, validate_continuous};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

struct Outcome {
    pass: bool,
    details: String,
}

fn outcome(pass: bool, details: impl Into<String>) -> Outcome {
    Outcome { pass, details: details.into() }
}

fn remark() -> Outcome {
    let s = remark_instance();
    let a = s.forward_reach(1, &[0, 0]).contains(&vec![3, 9]);
    let b = s.forward_reach(2, &[0, 0]).contains(&vec![4, 8]);
    let c = !s.forward_reach(1, &[3, 9]).contains(&vec![4, 8]);
    outcome(a && b && c, format!("(3,9) in F1(z0): {a}, (4,8) in F2(z0): {b}, (4,8) not in F1((3,9)): {c}"))
}

fn theorem_battery() -> Outcome {
    let mut corpus = random_corpus(2024, 60);
    let small = corpus.iter().all(|s| s.targets.len() <= 3 && s.horizon <= 5 && s.inputs.len() <= 3);
    corpus.push(remark_instance());
    let mut failed = vec![];
    for sys in &corpus {
        match check_theorems(sys, DEFAULT_BUDGET) {
            Ok(r) if r.all_pass() => {}
            Ok(r) => failed.push(format!("{}: {:?}", sys.name, r.failures)),
            Err(e) => failed.push(format!("{}: {e}", sys.name)),
        }
    }
    let random = corpus.len() - 1;
    outcome(
        failed.is_empty() && small && random >= 50,
        format!("{random} random instances + remark, random sizes within n <= 3, N <= 5, |inputs| <= 3: {small}, failures: {failed:?}"),
    )
}

fn qcvx_oracle() -> Outcome {
    let (mut checked, mut bad) = (0, vec![]);
    for sys in convex_corpus(7, 30) {
        let sc = embed_convex(&sys).unwrap();
        let tables = sys.reach_tables();
        let nt = sys.targets.len();
        for coincidence in [Coincidence::Shared, Coincidence::StateOnly] {
            let cfg = QcvxConfig { coincidence, ..Default::default() };
            for mask in 1u32..(1 << nt) {
                let set: Vec<usize> = (0..nt).filter(|j| mask & (1 << j) != 0).collect();
                checked += 1;
                let ok = match (tables.branch_time(&set), max_branch_time(&sc, &set, &sc.horizons, &sc.z0, sc.l_max, &cfg)) {
                    (Ok(a), Ok(b)) => a == b.k && b.certified(),
                    (Err(_), Err(_)) => true,
                    _ => false,
                };
                if !ok {
                    bad.push(format!("{} {set:?} {coincidence:?}", sys.name));
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{checked} target sets on 30 integrator instances, mismatches: {bad:?}"))
}

fn convex_quadrotor() -> Outcome {
    let sc = ScenarioFile::load(&example("quad_convex.json")).unwrap().scenario().unwrap();
    let out = match run_ddto_qcvx(&sc, &QcvxConfig::default()) {
        Ok(o) => o,
        Err(e) => return outcome(false, e.to_string()),
    };
    let t = &out.tree;
    let defect = t.dynamics_defect(&sc.system);
    let (mut cost, mut tmin, mut tmax, mut ang, mut term): (f64, f64, f64, f64, f64) = (0.0, f64::INFINITY, 0.0, 0.0, 0.0);
    for (j, p) in t.paths() {
        cost = cost.max(p.input_energy());
        term = term.max(sc.targets[j - 1].violation(p.states.last().unwrap()));
        for u in &p.inputs {
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            tmin = tmin.min(n);
            tmax = tmax.max(n);
            ang = ang.max((u[2] / n).clamp(-1.0, 1.0).acos());
        }
    }
    let order: Vec<usize> = out.rounds.iter().map(|r| r.rejected).collect();
    let kt: Vec<usize> = [4, 3, 2, 1].iter().map(|j| t.branch_times[j]).collect();
    let ordered = order == vec![4, 3, 2] && kt.windows(2).all(|w| w[0] <= w[1]);
    let pass = defect <= 1e-8
        && cost <= 3794.0 * (1.0 + 1e-6)
        && tmin >= 8.0 * (1.0 - 1e-6)
        && tmax <= 20.0 * (1.0 + 1e-6)
        && ang <= 60f64.to_radians() + 1e-4
        && term <= 1e-5
        && ordered;
    outcome(
        pass,
        format!(
            "defect {defect:.1e}, max cost {cost:.3}, thrust [{tmin:.4}, {tmax:.4}], pointing {:.4} deg, terminal {term:.1e}, branch times (4,3,2,1) {kt:?}",
            ang.to_degrees()
        ),
    )
}

fn micp_dominance() -> Outcome {
    let sc = ScenarioFile::load(&example("quad_convex.json")).unwrap().scenario().unwrap();
    let q = match run_ddto_qcvx(&sc, &QcvxConfig::default()) {
        Ok(o) => o,
        Err(e) => return outcome(false, e.to_string()),
    };
    let cfg = MicpConfig { big_m: Some(200.0), time_limit: Some(Duration::from_secs(540)), ..Default::default() };
    let qcount = q.tree.coincidence_count(1, cfg.tol);
    let sol = match build_micp(&sc, 0, &cfg).and_then(|i| branch_and_bound(&i, &cfg)) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mcount = sol.coincidence_count();
    let gap_ok = sol.closed && sol.gap() <= cfg.gap_tol;
    outcome(
        mcount >= qcount && (gap_ok || !sol.transcript.is_empty()),
        format!(
            "sum|J_k| micp {mcount} vs qcvx {qcount}; objective {} bound {} closed {} after {} nodes",
            sol.objective, sol.lower_bound, sol.closed, sol.nodes
        ),
    )
}

fn micp_exhaustive() -> Outcome {
    let (mut checked, mut bad) = (0, vec![]);
    for sys in convex_corpus(7, 30) {
        let sc = embed_convex(&sys).unwrap();
        for monotone_cuts in [true, false] {
            let cfg = MicpConfig { monotone_cuts, ..Default::default() };
            for i in 0..sys.targets.len() {
                checked += 1;
                let ex = exhaustive_ddto(&sys, Anchor::Target(i), DEFAULT_BUDGET).map(|e| e.objective);
                let bb = build_micp(&sc, i, &cfg).and_then(|inst| branch_and_bound(&inst, &cfg)).map(|s| s.objective);
                match (ex, bb) {
                    (Ok(a), Ok(b)) if a == b => {}
                    (a, b) => bad.push(format!("{} anchor {} cuts {monotone_cuts}: {a:?} vs {b:?}", sys.name, i + 1)),
                }
            }
        }
    }
    outcome(bad.is_empty(), format!("{checked} anchored instances, mismatches: {bad:?}"))
}

fn nonconvex_quadrotor() -> Outcome {
    let (sc, cfg) = ScenarioFile::load(&example("quad_nonconvex.json")).unwrap().scp_problem().unwrap();
    let out = match run_ddto_scp(&sc, &cfg) {
        Ok(o) => o,
        Err(e) => return outcome(false, e.to_string()),
    };
    let rep = match validate_continuous(&out.tree, &sc.system, 50, cfg.substeps) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let shape = out.tree.trunks.len() == 3 && out.tree.branches.len() == 4;
    let pass = shape && rep.within(&sc.system, sc.l_max, (cfg.s_min, cfg.s_max), 1e-3);
    let fallback = match &out.coincided {
        Some((r, e)) => format!("round {r} fell back to coincident branches: {e}"),
        None => "no fallback".into(),
    };
    outcome(
        pass,
        format!(
            "obstacle margin {:.5}, speed {:.5}, thrust [{:.4}, {:.4}], cost {:.5}, dilation [{:.4}, {:.4}], trunk times {:?}, {fallback}",
            rep.min_obstacle_margin,
            rep.max_speed,
            rep.min_thrust,
            rep.max_thrust,
            rep.max_cost,
            rep.min_dilation,
            rep.max_dilation,
            out.rounds.iter().map(|r| (r.trunk_time * 1e3).round() / 1e3).collect::<Vec<_>>()
        ),
    )
}

fn hygiene() -> Outcome {
    let jac = common::quadrotor_jacobian_error(100, 2024);
    let shoot = common::shooting_jacobian_error(100, 2025);
    let order = common::rk4_observed_order(8);
    let pass = jac <= 1e-4 && shoot <= 1e-4 && order.iter().all(|p| *p >= 3.5);
    outcome(pass, format!("field/constraint Jacobians {jac:.1e}, shooting sensitivities {shoot:.1e}, RK4 order {order:.2?}"))
}

fn determinism() -> Outcome {
    let cases = [
        (Method::Qcvx, "quad_convex.json", "tree.json"),
        (Method::Micp, "quad_convex.json", "tree.json"),
        (Method::Scp, "quad_nonconvex.json", "tree.json"),
        (Method::Oracle, "grid_corpus.json", "oracle.json"),
        (Method::Verify, "grid_corpus.json", "verify.json"),
    ];
    let mut notes = vec![];
    let mut pass = true;
    for (m, file, artifact) in cases {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let opts = RunOptions { seed: Some(7), ..Default::default() };
        let mut bytes = vec![];
        for d in &dirs {
            match run(m, &example(file), d.path(), &opts) {
                Ok(_) => bytes.push(fs::read(d.path().join(artifact)).unwrap()),
                Err(e) => {
                    pass = false;
                    notes.push(format!("{}: {e}", m.name()));
                }
            }
        }
        let same = bytes.len() == 2 && bytes[0] == bytes[1];
        pass &= same;
        notes.push(format!("{} {artifact} identical: {same}", m.name()));
    }
    outcome(pass, notes.join(", "))
}

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, Duration); 9] = [
        ("remark counterexample", remark, Duration::from_secs(1)),
        ("theorem battery", theorem_battery, Duration::from_secs(60)),
        ("qcvx / oracle equivalence", qcvx_oracle, Duration::from_secs(60)),
        ("convex quadrotor tree", convex_quadrotor, Duration::from_secs(30)),
        ("micp dominance", micp_dominance, Duration::from_secs(600)),
        ("micp / exhaustive equivalence", micp_exhaustive, Duration::from_secs(120)),
        ("nonconvex quadrotor tree", nonconvex_quadrotor, Duration::from_secs(300)),
        ("numerical hygiene", hygiene, Duration::from_secs(30)),
        ("determinism", determinism, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (n, (title, check, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        let el = t.elapsed();
        let pass = o.pass && el <= *limit;
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] {} {title} ({:.2}s, limit {}s) {}",
            if pass { "PASS" } else { "FAIL" },
            n + 1,
            el.as_secs_f64(),
            limit.as_secs(),
            o.details
        );
    }
    println!("{} of 9 criteria passed", 9 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
