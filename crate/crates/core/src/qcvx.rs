//! Branch times by bisection over convex coincidence problems, and the
//! recursive trunk/branch construction for discrete affine systems.

use std::collections::BTreeMap;
use std::ops::Range;

use ddto_conic::{check_feasible_with, solve, Backend, ConicProgram, Feasibility, Ipm, LinExpr, ProgramBuilder, Settings, SolveStatus};
use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::DdtoError;
use crate::model::DiscreteAffineSystem;
use crate::scenario::{InputConstraints, Scenario, StateBounds, TargetSet};
use crate::tree::{Branch, DdtoTree, Segment};

/// How trunk coincidence is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Coincidence {
    /// One shared block of trunk states and inputs.
    #[default]
    Shared,
    /// Separate variables per target tied by state equality rows.
    StateOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcvxConfig {
    pub settings: Settings,
    pub coincidence: Coincidence,
    /// Relative slack added to inequality rows so that sets with empty
    /// interior stay solvable.
    pub margin: f64,
    /// Tolerance used when comparing states for coincidence.
    pub tol: f64,
}

impl Default for QcvxConfig {
    fn default() -> Self {
        QcvxConfig { settings: Settings::default(), coincidence: Coincidence::Shared, margin: 1e-7, tol: 1e-6 }
    }
}

/// `max k'` such that all trajectories agree (∞-norm ≤ `tol`) at every `k ≤ k'`.
pub fn coincidence_horizon(trajectories: &[Vec<Vec<f64>>], tol: f64) -> Result<usize, DdtoError> {
    let first = trajectories.first().ok_or_else(|| DdtoError::invalid("no trajectories"))?;
    let len = trajectories.iter().map(|t| t.len()).min().unwrap_or(0);
    for k in 0..len {
        let agree = trajectories[1..]
            .iter()
            .all(|t| t[k].iter().zip(&first[k]).all(|(a, b)| (a - b).abs() <= tol));
        if !agree {
            return Ok(k);
        }
    }
    Ok(len)
}

// ---------------------------------------------------------------------------
// Shared emission helpers (also used by the mixed-integer method).

pub(crate) fn vars(r: &Range<usize>) -> Vec<LinExpr> {
    r.clone().map(LinExpr::var).collect()
}

/// `x_next = A x + B u + c`.
pub(crate) fn emit_dynamics(
    b: &mut ProgramBuilder,
    sys: &DiscreteAffineSystem,
    x: &Range<usize>,
    u: &Range<usize>,
    x_next: &Range<usize>,
) {
    for i in 0..sys.nx() {
        let mut e = LinExpr::var(x_next.start + i).add_const(-sys.c[i]);
        for j in 0..sys.nx() {
            let a = sys.a[(i, j)];
            if a != 0.0 {
                e.push(x.start + j, -a);
            }
        }
        for j in 0..sys.nu() {
            let v = sys.b[(i, j)];
            if v != 0.0 {
                e.push(u.start + j, -v);
            }
        }
        b.eq(e);
    }
}

pub(crate) fn emit_fixed(b: &mut ProgramBuilder, x: &Range<usize>, value: &[f64]) {
    for (i, v) in value.iter().enumerate() {
        b.eq(LinExpr::var(x.start + i).add_const(-v));
    }
}

pub(crate) fn emit_inputs(b: &mut ProgramBuilder, ic: &InputConstraints, u: &Range<usize>, margin: f64) {
    let nu = u.len();
    let e = ic.axis_or_default(nu);
    let proj = || {
        let mut p = LinExpr::constant(0.0);
        for (i, a) in e.iter().enumerate() {
            if *a != 0.0 {
                p.push(u.start + i, *a);
            }
        }
        p
    };
    if let Some(m) = ic.u_max {
        let mut rows = vec![LinExpr::constant(m * (1.0 + margin))];
        rows.extend(vars(u));
        b.soc(rows);
    }
    if let Some(d) = ic.delta_max_deg {
        let sec = (1.0 + margin) / d.to_radians().cos();
        let mut rows = vec![proj().scaled(sec)];
        rows.extend(vars(u));
        b.soc(rows);
    }
    if let Some(m) = ic.u_min {
        b.nonneg(proj().add_const(-m + margin * m.abs()));
    }
    if let Some(bx) = ic.u_box {
        for v in u.clone() {
            b.nonneg(LinExpr::term(v, -1.0).add_const(bx * (1.0 + margin)));
            b.nonneg(LinExpr::term(v, 1.0).add_const(bx * (1.0 + margin)));
        }
    }
}

pub(crate) fn emit_state_bounds(b: &mut ProgramBuilder, sb: &StateBounds, x: &Range<usize>, margin: f64) {
    for (i, l) in sb.lo.iter().enumerate() {
        if let Some(l) = l {
            b.nonneg(LinExpr::var(x.start + i).add_const(-l + margin * (1.0 + l.abs())));
        }
    }
    for (i, h) in sb.hi.iter().enumerate() {
        if let Some(h) = h {
            b.nonneg(LinExpr::term(x.start + i, -1.0).add_const(h + margin * (1.0 + h.abs())));
        }
    }
}

pub(crate) fn emit_target(b: &mut ProgramBuilder, t: &TargetSet, x: &Range<usize>, margin: f64) {
    match t {
        TargetSet::Point { z } => emit_fixed(b, x, z),
        TargetSet::Box { lo, hi } => {
            for (i, (l, h)) in lo.iter().zip(hi).enumerate() {
                b.nonneg(LinExpr::var(x.start + i).add_const(-l + margin * (1.0 + l.abs())));
                b.nonneg(LinExpr::term(x.start + i, -1.0).add_const(h + margin * (1.0 + h.abs())));
            }
        }
        TargetSet::Ball { center, radius } => {
            let mut rows = vec![LinExpr::constant(radius + margin * (1.0 + radius))];
            rows.extend(center.iter().enumerate().map(|(i, c)| LinExpr::var(x.start + i).add_const(-c)));
            b.soc(rows);
        }
    }
}

/// Epigraph variable `τ ≥ ‖u‖²`.
pub(crate) fn emit_energy(b: &mut ProgramBuilder, u: &Range<usize>) -> usize {
    let t = b.add_vars("tau", 1).start;
    b.rotated_soc(LinExpr::var(t), LinExpr::constant(1.0), vars(u));
    t
}

/// `Σ τ ≤ l_max` with the relative margin.
pub(crate) fn emit_budget(b: &mut ProgramBuilder, taus: &[usize], l_max: f64, margin: f64) {
    let mut e = LinExpr::constant(l_max.max(0.0) * (1.0 + margin) + margin);
    for &t in taus {
        e.push(t, -1.0);
    }
    b.nonneg(e);
}

// ---------------------------------------------------------------------------

/// Variable layout of a coincidence program.
#[derive(Debug, Clone)]
pub struct CoincidentProgram {
    pub program: ConicProgram,
    /// Targets (0-based) in program order.
    pub targets: Vec<usize>,
    /// Per target, per node: state variables.
    pub states: Vec<Vec<Range<usize>>>,
    /// Per target, per interval: input variables.
    pub inputs: Vec<Vec<Range<usize>>>,
    pub k_star: usize,
}

impl CoincidentProgram {
    fn read(&self, x: &[f64], r: &Range<usize>) -> Vec<f64> {
        x[r.clone()].to_vec()
    }

    pub fn state_values(&self, x: &[f64], pos: usize) -> Vec<Vec<f64>> {
        self.states[pos].iter().map(|r| self.read(x, r)).collect()
    }

    pub fn input_values(&self, x: &[f64], pos: usize) -> Vec<Vec<f64>> {
        self.inputs[pos].iter().map(|r| self.read(x, r)).collect()
    }
}

/// Coincidence problem: one trajectory per target in `targets` from `z0`
/// over `horizons[j]` nodes, each ending in `Z^j` within budget `l_max`, all
/// coincident on nodes `1..=k_star`.  The objective is total input energy.
pub fn build_coincident_feasibility(
    sc: &Scenario,
    targets: &[usize],
    k_star: usize,
    horizons: &[usize],
    z0: &[f64],
    l_max: f64,
    cfg: &QcvxConfig,
) -> Result<CoincidentProgram, DdtoError> {
    if targets.is_empty() {
        return Err(DdtoError::invalid("empty target set"));
    }
    let kmax = targets.iter().map(|&j| horizons[j]).min().unwrap();
    if k_star < 1 || k_star > kmax {
        return Err(DdtoError::invalid(format!("k* = {k_star} outside 1..={kmax}")));
    }
    let sys = &sc.system;
    let (nx, nu) = (sys.nx(), sys.nu());
    let m = cfg.margin;
    let mut b = ProgramBuilder::new();
    let mut states: Vec<Vec<Range<usize>>> = vec![];
    let mut inputs: Vec<Vec<Range<usize>>> = vec![];
    let mut taus: Vec<Vec<usize>> = vec![];

    let shared = cfg.coincidence == Coincidence::Shared;
    let (mut trunk_x, mut trunk_u, mut trunk_tau) = (vec![], vec![], vec![]);
    if shared {
        for k in 0..k_star {
            trunk_x.push(b.add_vars(&format!("trunk_x{}", k + 1), nx));
            if let Some(sb) = &sc.states {
                emit_state_bounds(&mut b, sb, &trunk_x[k], m);
            }
        }
        emit_fixed(&mut b, &trunk_x[0], z0);
        for k in 0..k_star - 1 {
            let u = b.add_vars(&format!("trunk_u{}", k + 1), nu);
            emit_inputs(&mut b, &sc.inputs, &u, m);
            emit_dynamics(&mut b, sys, &trunk_x[k], &u, &trunk_x[k + 1]);
            trunk_tau.push(emit_energy(&mut b, &u));
            trunk_u.push(u);
        }
    }

    for (pos, &j) in targets.iter().enumerate() {
        let n = horizons[j];
        let mut xs = vec![];
        let mut us = vec![];
        let mut ts = vec![];
        let own_from = if shared { k_star } else { 0 };
        xs.extend(trunk_x.iter().cloned());
        us.extend(trunk_u.iter().cloned());
        ts.extend(trunk_tau.iter().copied());
        for k in own_from..n {
            let x = b.add_vars(&format!("x{}_{}", j + 1, k + 1), nx);
            if let Some(sb) = &sc.states {
                emit_state_bounds(&mut b, sb, &x, m);
            }
            xs.push(x);
        }
        if !shared {
            emit_fixed(&mut b, &xs[0], z0);
        }
        for k in us.len()..n - 1 {
            let u = b.add_vars(&format!("u{}_{}", j + 1, k + 1), nu);
            emit_inputs(&mut b, &sc.inputs, &u, m);
            emit_dynamics(&mut b, sys, &xs[k], &u, &xs[k + 1]);
            ts.push(emit_energy(&mut b, &u));
            us.push(u);
        }
        emit_target(&mut b, &sc.targets[j], &xs[n - 1], m);
        emit_budget(&mut b, &ts, l_max, m);
        if !shared && pos > 0 {
            for k in 0..k_star {
                for i in 0..nx {
                    b.eq(LinExpr::var(xs[k].start + i).add_term(states[0][k].start + i, -1.0));
                }
            }
        }
        states.push(xs);
        inputs.push(us);
        taus.push(ts);
    }
    let mut all: Vec<usize> = taus.iter().flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    for t in all {
        b.add_cost(t, 1.0);
    }
    Ok(CoincidentProgram { program: b.build()?, targets: targets.to_vec(), states, inputs, k_star })
}

/// One probe of the bisection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub k: usize,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTimeResult {
    pub k: usize,
    /// Upper end of the search range (`min_j horizons[j]`).
    pub k_max: usize,
    pub transcript: Vec<Probe>,
}

impl BranchTimeResult {
    /// `feasible(k) ∧ ¬feasible(k+1)` is on record (or `k = k_max`).
    pub fn certified(&self) -> bool {
        let rec = |k: usize| self.transcript.iter().find(|p| p.k == k).map(|p| p.feasible);
        rec(self.k) == Some(true) && (self.k == self.k_max || rec(self.k + 1) == Some(false))
    }
}

fn probe(
    backend: &dyn Backend,
    sc: &Scenario,
    targets: &[usize],
    k: usize,
    horizons: &[usize],
    z0: &[f64],
    l_max: f64,
    cfg: &QcvxConfig,
) -> Result<bool, DdtoError> {
    let p = build_coincident_feasibility(sc, targets, k, horizons, z0, l_max, cfg)?;
    let (f, res) = check_feasible_with(backend, &p.program, &cfg.settings)?;
    debug!("probe J={:?} k={k}: {:?} after {} iterations", targets, f, res.iterations);
    Ok(f == Feasibility::Feasible)
}

/// Largest `k` for which the coincidence problem is feasible, by bisection.
pub fn max_branch_time(
    sc: &Scenario,
    targets: &[usize],
    horizons: &[usize],
    z0: &[f64],
    l_max: f64,
    cfg: &QcvxConfig,
) -> Result<BranchTimeResult, DdtoError> {
    max_branch_time_with(&Ipm, sc, targets, horizons, z0, l_max, cfg)
}

pub fn max_branch_time_with(
    backend: &dyn Backend,
    sc: &Scenario,
    targets: &[usize],
    horizons: &[usize],
    z0: &[f64],
    l_max: f64,
    cfg: &QcvxConfig,
) -> Result<BranchTimeResult, DdtoError> {
    if targets.is_empty() {
        return Err(DdtoError::invalid("empty target set"));
    }
    let k_max = targets.iter().map(|&j| horizons[j]).min().unwrap();
    let mut transcript = vec![];
    let first = probe(backend, sc, targets, 1, horizons, z0, l_max, cfg)?;
    transcript.push(Probe { k: 1, feasible: first });
    if !first {
        return Err(DdtoError::UndefinedBranchTime(targets.iter().map(|j| j + 1).collect()));
    }
    if targets.len() == 1 {
        return Ok(BranchTimeResult { k: k_max, k_max, transcript: vec![Probe { k: k_max, feasible: true }] });
    }
    let (mut lo, mut hi) = (1, k_max + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let f = probe(backend, sc, targets, mid, horizons, z0, l_max, cfg)?;
        transcript.push(Probe { k: mid, feasible: f });
        if f {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BranchTimeResult { k: lo, k_max, transcript })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub feasible: Vec<bool>,
}

impl AssumptionReport {
    pub fn all(&self) -> bool {
        self.feasible.iter().all(|f| *f)
    }
}

/// Single-target feasibility of every target from `z0`.
pub fn check_assumption(sc: &Scenario, cfg: &QcvxConfig) -> Result<AssumptionReport, DdtoError> {
    sc.validate()?;
    let feasible = (0..sc.n_targets())
        .map(|j| probe(&Ipm, sc, &[j], 1, &sc.horizons, &sc.z0, sc.l_max, cfg))
        .collect::<Result<_, _>>()?;
    Ok(AssumptionReport { feasible })
}

/// Round record of the recursive construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcvxRound {
    pub retained: Vec<usize>,
    pub rejected: usize,
    pub branch_time: usize,
    pub transcript: Vec<Probe>,
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QcvxOutcome {
    pub tree: DdtoTree,
    pub rounds: Vec<QcvxRound>,
}

fn extract(
    sc: &Scenario,
    targets: &[usize],
    k: usize,
    horizons: &[usize],
    z0: &[f64],
    l_max: f64,
    cfg: &QcvxConfig,
    round: usize,
) -> Result<(CoincidentProgram, Vec<f64>), DdtoError> {
    let p = build_coincident_feasibility(sc, targets, k, horizons, z0, l_max, cfg)?;
    let res = solve(&p.program, &cfg.settings)?;
    if res.status != SolveStatus::Optimal {
        return Err(DdtoError::Consistency(format!(
            "round {round}: extraction at k = {k} ended with {:?} although the probe was feasible",
            res.status
        )));
    }
    Ok((p, res.x))
}

/// The recursive trunk/branch construction: each round finds the branch
/// time of the retained targets, rejects the lowest priority one, and
/// restarts from the branch point with the remaining budget.
pub fn run_ddto_qcvx(sc: &Scenario, cfg: &QcvxConfig) -> Result<QcvxOutcome, DdtoError> {
    sc.validate()?;
    let sys = &sc.system;
    let n = sc.n_targets();
    let mut retained = sc.priority_order();
    let mut z0 = sc.z0.clone();
    let mut l_max = sc.l_max;
    let mut offset = 1usize; // global index of the current start node
    let mut trunks = vec![];
    let mut branches = vec![];
    let mut branch_times = BTreeMap::new();
    let mut rounds = vec![];

    let make_branch = |j: usize, k_global: usize, states: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>| Branch {
        target: j + 1,
        branch_time: k_global,
        branch_point: states[0].clone(),
        segment: Segment { start: k_global, end: k_global + states.len() - 1, states, inputs, times: None, dilation: None },
    };

    if n == 1 {
        let horizons = sc.horizons.clone();
        let (p, x) = extract(sc, &[0], horizons[0], &horizons, &z0, l_max, cfg, 1)
            .map_err(|e| match e {
                DdtoError::UndefinedBranchTime(_) => DdtoError::Unreachable { target: 1 },
                e => e,
            })?;
        let us = p.input_values(&x, 0);
        let xs = sys.rollout(&z0, &us);
        branches.push(make_branch(0, 1, xs, us));
        branch_times.insert(1, 1);
    }

    let mut round = 0;
    while retained.len() >= 2 {
        round += 1;
        let horizons: Vec<usize> = sc.horizons.iter().map(|h| (h + 1).saturating_sub(offset)).collect();
        if horizons.iter().zip(0..).any(|(h, j)| retained.contains(&j) && *h < 2) {
            return Err(DdtoError::BudgetExhausted { round });
        }
        let bt = max_branch_time(sc, &retained, &horizons, &z0, l_max, cfg).map_err(|e| match e {
            DdtoError::UndefinedBranchTime(_) => DdtoError::BudgetExhausted { round },
            e => e,
        })?;
        let k = bt.k;
        info!("round {round}: targets {:?} branch at local k = {k}", retained.iter().map(|j| j + 1).collect::<Vec<_>>());
        let (p, x) = extract(sc, &retained, k, &horizons, &z0, l_max, cfg, round)?;
        let k_global = offset + k - 1;

        // trunk: shared prefix, taken from the first retained target
        let trunk_u: Vec<Vec<f64>> = p.input_values(&x, 0)[..k - 1].to_vec();
        let trunk_x = sys.rollout(&z0, &trunk_u);
        let trunk_cost: f64 = trunk_u.iter().map(|u| u.iter().map(|v| v * v).sum::<f64>()).sum();
        let point = trunk_x.last().unwrap().clone();

        let rejected = *retained.last().unwrap();
        let last_round = retained.len() == 2;
        let emit: Vec<usize> = if last_round { retained.clone() } else { vec![rejected] };
        for &j in &emit {
            let pos = retained.iter().position(|&r| r == j).unwrap();
            let us: Vec<Vec<f64>> = p.input_values(&x, pos)[k - 1..].to_vec();
            let xs = sys.rollout(&point, &us);
            branches.push(make_branch(j, k_global, xs, us));
            branch_times.insert(j + 1, k_global);
        }
        rounds.push(QcvxRound {
            retained: retained.iter().map(|j| j + 1).collect(),
            rejected: rejected + 1,
            branch_time: k_global,
            transcript: bt.transcript,
            budget: l_max,
        });
        trunks.push(Segment { start: offset, end: k_global, states: trunk_x, inputs: trunk_u, times: None, dilation: None });
        retained.pop();
        z0 = point;
        l_max -= trunk_cost;
        offset = k_global;
    }
    branches.sort_by_key(|b| b.target);
    let tree = DdtoTree {
        method: "qcvx".into(),
        priorities: sc.priorities.clone(),
        trunks,
        branches,
        branch_times,
        branch_clock: BTreeMap::new(),
    };
    Ok(QcvxOutcome { tree, rounds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincidence_horizon_examples() {
        let a: Vec<Vec<f64>> = (0..20).map(|k| vec![k as f64]).collect();
        assert_eq!(coincidence_horizon(&[a.clone(), a.clone()], 0.0).unwrap(), 20);
        let mut b = a.clone();
        for v in &mut b[5..] {
            v[0] += 1.0;
        }
        assert_eq!(coincidence_horizon(&[a.clone(), b], 1e-6).unwrap(), 5);
        assert_eq!(coincidence_horizon(&[a], 0.0).unwrap(), 20);
        assert!(coincidence_horizon(&[], 0.0).is_err());
    }
}
