//! Mixed-integer conic formulation with big-M coincidence indicators and a
//! best-first branch-and-bound.
//!
//! Binary `ζ^j_k = 1` allows target `j` to leave the anchor trajectory at
//! node `k`.  Fixing `ζ^j_k = 0` is encoded exactly by letting `x^j_k` reuse
//! the anchor's state variables.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::Write;
use std::ops::Range;
use std::time::{Duration, Instant};

use ddto_conic::{solve, ConicProgram, LinExpr, ProgramBuilder, Settings, SolveStatus};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::DdtoError;
use crate::qcvx::{emit_budget, emit_dynamics, emit_energy, emit_fixed, emit_inputs, emit_state_bounds, emit_target};
use crate::scenario::Scenario;
use crate::tree::{Branch, DdtoTree, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PNorm {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "inf")]
    Inf,
}

impl PNorm {
    pub fn parse(s: &str) -> Result<Self, DdtoError> {
        match s {
            "1" => Ok(PNorm::One),
            "2" => Ok(PNorm::Two),
            "inf" => Ok(PNorm::Inf),
            _ => Err(DdtoError::invalid(format!("p_norm must be 1, 2 or inf, got '{s}'"))),
        }
    }

    fn norm(self, v: &[f64]) -> f64 {
        match self {
            PNorm::One => v.iter().map(|x| x.abs()).sum(),
            PNorm::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            PNorm::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicpConfig {
    /// `None` derives a bound from the scenario.
    pub big_m: Option<f64>,
    pub p_norm: PNorm,
    pub gap_tol: f64,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    /// Impose `ζ^j_k ≤ ζ^j_{k+1}`.
    pub monotone_cuts: bool,
    pub settings: Settings,
    pub margin: f64,
    /// Coincidence tolerance for extracting `J_k`.
    pub tol: f64,
}

impl Default for MicpConfig {
    fn default() -> Self {
        MicpConfig {
            big_m: None,
            p_norm: PNorm::Two,
            gap_tol: 1e-6,
            node_limit: None,
            time_limit: None,
            monotone_cuts: true,
            settings: Settings::default(),
            margin: 1e-7,
            tol: 1e-5,
        }
    }
}

/// `(j, k)` with 0-based target and 1-based node.
pub type BinaryIndex = (usize, usize);

#[derive(Debug, Clone)]
pub struct MicpInstance {
    pub scenario: Scenario,
    pub anchor: usize,
    pub big_m: f64,
    pub p_norm: PNorm,
    pub binaries: Vec<BinaryIndex>,
    /// Root relaxation.
    pub base: ConicProgram,
    monotone: bool,
    margin: f64,
    settings: Settings,
}

/// Interval hull of states reachable under per-component input bounds.
fn state_envelope(sc: &Scenario) -> Option<(Vec<f64>, Vec<f64>)> {
    let ic = &sc.inputs;
    let ub = match (ic.u_box, ic.u_max) {
        (Some(b), Some(m)) => b.min(m),
        (Some(b), None) => b,
        (None, Some(m)) => m,
        (None, None) => return None,
    };
    let sys = &sc.system;
    let nx = sys.nx();
    let mut lo = sc.z0.clone();
    let mut hi = sc.z0.clone();
    let (mut all_lo, mut all_hi) = (lo.clone(), hi.clone());
    let n = *sc.horizons.iter().max()?;
    for _ in 1..n {
        let mut nlo = vec![0.0; nx];
        let mut nhi = vec![0.0; nx];
        for i in 0..nx {
            let mut l = sys.c[i];
            let mut h = sys.c[i];
            for j in 0..nx {
                let a = sys.a[(i, j)];
                l += (a * lo[j]).min(a * hi[j]);
                h += (a * lo[j]).max(a * hi[j]);
            }
            for j in 0..sys.nu() {
                let b = sys.b[(i, j)].abs();
                l -= b * ub;
                h += b * ub;
            }
            if let Some(sb) = &sc.states {
                if let Some(Some(v)) = sb.lo.get(i) {
                    l = l.max(*v);
                }
                if let Some(Some(v)) = sb.hi.get(i) {
                    h = h.min(*v);
                }
            }
            nlo[i] = l;
            nhi[i] = h;
        }
        lo = nlo;
        hi = nhi;
        for i in 0..nx {
            all_lo[i] = all_lo[i].min(lo[i]);
            all_hi[i] = all_hi[i].max(hi[i]);
        }
    }
    Some((all_lo, all_hi))
}

/// Twice the `p`-norm diameter of the reachable state envelope.
pub fn default_big_m(sc: &Scenario, p: PNorm) -> Result<f64, DdtoError> {
    let (lo, hi) = state_envelope(sc)
        .ok_or_else(|| DdtoError::invalid("no input bound to derive big-M from; set big_m explicitly"))?;
    let d: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
    Ok((2.0 * p.norm(&d)).max(1.0))
}

pub fn build_micp(sc: &Scenario, anchor: usize, cfg: &MicpConfig) -> Result<MicpInstance, DdtoError> {
    sc.validate()?;
    let n = sc.n_targets();
    if anchor >= n {
        return Err(DdtoError::invalid(format!("anchor {} out of range 1..={n}", anchor + 1)));
    }
    let big_m = match cfg.big_m {
        Some(m) => m,
        None => default_big_m(sc, cfg.p_norm)?,
    };
    if !(big_m > 0.0) {
        return Err(DdtoError::invalid(format!("big-M must be positive, got {big_m}")));
    }
    let mut binaries = vec![];
    for j in 0..n {
        if j == anchor {
            continue;
        }
        for k in 1..=sc.horizons[j].min(sc.horizons[anchor]) {
            binaries.push((j, k));
        }
    }
    let mut inst = MicpInstance {
        scenario: sc.clone(),
        anchor,
        big_m,
        p_norm: cfg.p_norm,
        binaries,
        base: ConicProgram::new(vec![], ddto_conic::CscMatrix::zeros(0, 0), vec![], vec![])?,
        monotone: cfg.monotone_cuts,
        margin: cfg.margin,
        settings: cfg.settings.clone(),
    };
    let root = inst.root_fixing();
    inst.base = inst.node_program(&root)?.program;
    Ok(inst)
}

/// Fixings of the binaries, in the order of [`MicpInstance::binaries`].
pub type Fixing = Vec<Option<bool>>;

struct NodeProgram {
    program: ConicProgram,
    states: Vec<Vec<Range<usize>>>,
    inputs: Vec<Vec<Range<usize>>>,
    zeta: Vec<Option<usize>>,
    ones: usize,
}

/// Relaxation outcome at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxed {
    pub status: SolveStatus,
    /// Relaxation value (lower bound on the node's integer optimum).
    pub bound: f64,
    /// `ζ` values in binary order (fixed entries included).
    pub zeta: Vec<f64>,
    /// Earliest fractional node per target, when any.
    pub earliest_fractional: BTreeMap<usize, usize>,
    pub states: Vec<Vec<Vec<f64>>>,
    pub inputs: Vec<Vec<Vec<f64>>>,
}

const FRAC_TOL: f64 = 1e-6;

impl MicpInstance {
    pub fn root_fixing(&self) -> Fixing {
        // x^j_1 = x^i_1 = z0 always
        self.binaries.iter().map(|&(_, k)| if k == 1 { Some(false) } else { None }).collect()
    }

    fn index(&self, j: usize, k: usize) -> Option<usize> {
        self.binaries.iter().position(|&b| b == (j, k))
    }

    /// Applies `ζ^j_k = value` and, with monotone cuts, its implications.
    pub fn fix(&self, fixing: &mut Fixing, b: usize, value: bool) -> bool {
        let (j, k) = self.binaries[b];
        let set = |idx: usize, v: bool, f: &mut Fixing| -> bool {
            match f[idx] {
                Some(old) if old != v => false,
                _ => {
                    f[idx] = Some(v);
                    true
                }
            }
        };
        if !set(b, value, fixing) {
            return false;
        }
        if self.monotone {
            for (idx, &(jj, kk)) in self.binaries.iter().enumerate() {
                if jj == j && ((!value && kk < k) || (value && kk > k)) && !set(idx, value, fixing) {
                    return false;
                }
            }
        }
        true
    }

    fn node_program(&self, fixing: &Fixing) -> Result<NodeProgram, DdtoError> {
        let sc = &self.scenario;
        let sys = &sc.system;
        let (nx, nu) = (sys.nx(), sys.nu());
        let i = self.anchor;
        let m = self.margin;
        let mut b = ProgramBuilder::new();
        let n = sc.n_targets();
        let mut states: Vec<Vec<Range<usize>>> = vec![vec![]; n];
        let mut inputs: Vec<Vec<Range<usize>>> = vec![vec![]; n];
        let shared = |j: usize, k: usize| -> bool {
            j != i && self.index(j, k).map(|b| fixing[b] == Some(false)).unwrap_or(false)
        };
        let mut anchor_taus: Vec<usize> = vec![];
        let mut order = vec![i];
        order.extend((0..n).filter(|&j| j != i));
        for &j in &order {
            let nj = sc.horizons[j];
            for k in 1..=nj {
                let x = if shared(j, k) {
                    states[i][k - 1].clone()
                } else {
                    let x = b.add_vars(&format!("x{}_{}", j + 1, k), nx);
                    if let Some(sb) = &sc.states {
                        emit_state_bounds(&mut b, sb, &x, m);
                    }
                    x
                };
                states[j].push(x);
            }
            if !shared(j, 1) {
                emit_fixed(&mut b, &states[j][0], &sc.z0);
            }
            let mut taus = vec![];
            for k in 1..nj {
                // an interval between two shared nodes is trunk: reuse its input
                if j != i && shared(j, k) && shared(j, k + 1) {
                    let u = inputs[i][k - 1].clone();
                    inputs[j].push(u);
                    taus.push(anchor_taus[k - 1]);
                    continue;
                }
                let u = b.add_vars(&format!("u{}_{}", j + 1, k), nu);
                emit_inputs(&mut b, &sc.inputs, &u, m);
                taus.push(emit_energy(&mut b, &u));
                emit_dynamics(&mut b, sys, &states[j][k - 1], &u, &states[j][k]);
                inputs[j].push(u);
            }
            let duplicate = j != i && shared(j, nj) && nj == sc.horizons[i] && sc.targets[j] == sc.targets[i];
            if !duplicate {
                emit_target(&mut b, &sc.targets[j], &states[j][nj - 1], m);
            }
            if j == i {
                anchor_taus = taus.clone();
            }
            emit_budget(&mut b, &taus, sc.l_max, m);
        }
        let mut zeta = vec![None; self.binaries.len()];
        let mut ones = 0;
        for (idx, &(j, k)) in self.binaries.iter().enumerate() {
            if fixing[idx] == Some(false) {
                continue;
            }
            let xi = &states[i][k - 1];
            let xj = &states[j][k - 1];
            let diff = |c: usize| LinExpr::var(xj.start + c).add_term(xi.start + c, -1.0);
            let bound = match fixing[idx] {
                Some(true) => {
                    ones += 1;
                    LinExpr::constant(self.big_m)
                }
                _ => {
                    let z = b.add_vars(&format!("zeta{}_{}", j + 1, k), 1).start;
                    b.nonneg(LinExpr::var(z));
                    b.nonneg(LinExpr::term(z, -1.0).add_const(1.0));
                    b.add_cost(z, 1.0);
                    zeta[idx] = Some(z);
                    LinExpr::term(z, self.big_m)
                }
            };
            match self.p_norm {
                PNorm::Two => {
                    let mut rows = vec![bound];
                    rows.extend((0..nx).map(diff));
                    b.soc(rows);
                }
                PNorm::Inf => {
                    for c in 0..nx {
                        b.nonneg(bound.clone().minus(&diff(c)));
                        b.nonneg(bound.clone().plus(&diff(c)));
                    }
                }
                PNorm::One => {
                    let t = b.add_vars("abs", nx);
                    let mut sum = bound;
                    for c in 0..nx {
                        b.nonneg(LinExpr::var(t.start + c).minus(&diff(c)));
                        b.nonneg(LinExpr::var(t.start + c).plus(&diff(c)));
                        sum.push(t.start + c, -1.0);
                    }
                    b.nonneg(sum);
                }
            }
        }
        if self.monotone {
            for (idx, &(j, k)) in self.binaries.iter().enumerate() {
                if let (Some(z0), Some(next)) = (zeta[idx], self.index(j, k + 1)) {
                    match (zeta[next], fixing[next]) {
                        (Some(z1), _) => b.nonneg(LinExpr::var(z1).add_term(z0, -1.0)),
                        (None, Some(false)) => b.nonneg(LinExpr::term(z0, -1.0)),
                        _ => {}
                    }
                }
            }
        }
        Ok(NodeProgram { program: b.build()?, states, inputs, zeta, ones })
    }

    /// Convex relaxation with the node's fixings.
    pub fn solve_relaxed(&self, fixing: &Fixing) -> Result<Relaxed, DdtoError> {
        let np = self.node_program(fixing)?;
        let res = solve(&np.program, &self.settings)?;
        let zeta: Vec<f64> = np
            .zeta
            .iter()
            .zip(fixing)
            .map(|(z, f)| match (z, f) {
                (Some(v), _) => res.x[*v].clamp(0.0, 1.0),
                (None, Some(true)) => 1.0,
                _ => 0.0,
            })
            .collect();
        let mut earliest = BTreeMap::new();
        for (idx, &(j, k)) in self.binaries.iter().enumerate() {
            if fixing[idx].is_none() && zeta[idx] > FRAC_TOL && zeta[idx] < 1.0 - FRAC_TOL {
                earliest.entry(j).or_insert(k);
            }
        }
        let read = |rs: &Vec<Range<usize>>| rs.iter().map(|r| res.x[r.clone()].to_vec()).collect::<Vec<_>>();
        Ok(Relaxed {
            status: res.status,
            bound: res.objective + np.ones as f64,
            zeta,
            earliest_fractional: earliest,
            states: np.states.iter().map(read).collect(),
            inputs: np.inputs.iter().map(read).collect(),
        })
    }

    /// Solves with every binary fixed; `None` if infeasible.
    fn solve_fixed(&self, fixing: &Fixing) -> Result<Option<Relaxed>, DdtoError> {
        debug_assert!(fixing.iter().all(|f| f.is_some()));
        let r = self.solve_relaxed(fixing)?;
        Ok((r.status == SolveStatus::Optimal).then_some(r))
    }

    /// Fixing from per-target coincidence counts: `ζ^j_k = 0` for `k ≤ t_j`.
    fn threshold_fixing(&self, t: &BTreeMap<usize, usize>) -> Fixing {
        self.binaries.iter().map(|&(j, k)| Some(k > t[&j])).collect()
    }
}

/// One entry of the bound transcript.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub node: usize,
    pub incumbent: Option<usize>,
    pub lower_bound: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLog {
    pub node: usize,
    pub depth: usize,
    pub bound: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicpSolution {
    pub anchor: usize,
    pub objective: usize,
    /// Best proven lower bound on the integer optimum.
    pub lower_bound: f64,
    /// True when the gap closed within `gap_tol`.
    pub closed: bool,
    pub nodes: usize,
    pub states: Vec<Vec<Vec<f64>>>,
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub zeta: Vec<f64>,
    pub sets: Vec<Vec<usize>>,
    /// `k^j` per target (0-based index), 1-based node.
    pub branch_times: Vec<usize>,
    pub transcript: Vec<BoundRecord>,
    pub node_log: Vec<NodeLog>,
    /// Largest coincidence-row difference relative to big-M.
    pub big_m_usage: f64,
}

impl MicpSolution {
    pub fn gap(&self) -> f64 {
        (self.objective as f64 - self.lower_bound.ceil()).max(0.0)
    }

    /// `Σ_k |J_k|`.
    pub fn coincidence_count(&self) -> usize {
        self.sets.iter().map(|s| s.len()).sum()
    }

    /// Node log as CSV (`node,depth,bound,status`).
    pub fn write_node_log<W: Write>(&self, w: W) -> Result<(), DdtoError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["node", "depth", "bound", "status"])?;
        for n in &self.node_log {
            wr.write_record([n.node.to_string(), n.depth.to_string(), format!("{:?}", n.bound), n.status.clone()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

struct Open {
    key: f64,
    depth: usize,
    id: usize,
    fixing: Fixing,
}

impl PartialEq for Open {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Open {
    // max-heap: smallest bound first, then deepest, then oldest
    fn cmp(&self, o: &Self) -> Ordering {
        o.key
            .total_cmp(&self.key)
            .then(self.depth.cmp(&o.depth))
            .then(o.id.cmp(&self.id))
    }
}

fn integer_floor(bound: f64) -> f64 {
    (bound - 1e-6).ceil().max(0.0)
}

/// Coordinate ascent on per-target coincidence counts with every other
/// count held fixed; gives a monotone integer-feasible start.
fn greedy_incumbent(inst: &MicpInstance) -> Result<Option<(Fixing, Relaxed)>, DdtoError> {
    let sc = &inst.scenario;
    let others: Vec<usize> = (0..sc.n_targets()).filter(|&j| j != inst.anchor).collect();
    let cap = |j: usize| sc.horizons[j].min(sc.horizons[inst.anchor]);
    let mut t: BTreeMap<usize, usize> = others.iter().map(|&j| (j, 1)).collect();
    let Some(mut best) = inst.solve_fixed(&inst.threshold_fixing(&t))? else {
        return Ok(None);
    };
    loop {
        let mut improved = false;
        for &j in &others {
            let (mut lo, mut hi) = (t[&j], cap(j) + 1);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                let mut trial = t.clone();
                trial.insert(j, mid);
                match inst.solve_fixed(&inst.threshold_fixing(&trial))? {
                    Some(r) => {
                        lo = mid;
                        best = r;
                    }
                    None => hi = mid,
                }
            }
            if lo > t[&j] {
                t.insert(j, lo);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    // re-solve at the final counts so states match the fixing
    let fix = inst.threshold_fixing(&t);
    if let Some(r) = inst.solve_fixed(&fix)? {
        best = r;
    }
    Ok(Some((fix, best)))
}

/// Best-first branch-and-bound on the coincidence indicators.
pub fn branch_and_bound(inst: &MicpInstance, cfg: &MicpConfig) -> Result<MicpSolution, DdtoError> {
    let start = Instant::now();
    let root = inst.root_fixing();
    let mut transcript = vec![];
    let mut node_log = vec![];

    let mut incumbent: Option<(usize, Fixing, Relaxed)> = None;
    let consider = |inc: &mut Option<(usize, Fixing, Relaxed)>, fix: Fixing, r: Relaxed| {
        let obj = fix.iter().filter(|f| **f == Some(true)).count();
        if inc.as_ref().map(|(o, _, _)| obj < *o).unwrap_or(true) {
            debug!("incumbent {obj}");
            *inc = Some((obj, fix, r));
        }
    };

    let root_rel = inst.solve_relaxed(&root)?;
    if root_rel.status == SolveStatus::Infeasible {
        return Err(DdtoError::RootInfeasible);
    }
    if let Some((fix, r)) = greedy_incumbent(inst)? {
        consider(&mut incumbent, fix, r);
    }

    let mut heap = BinaryHeap::new();
    let mut seen_rounding: BTreeSet<Vec<bool>> = BTreeSet::new();
    heap.push(Open { key: root_rel.bound, depth: 0, id: 0, fixing: root });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut exhausted = false;
    let mut cached_root = Some(root_rel);

    while let Some(node) = heap.pop() {
        let lb = integer_floor(node.key);
        if let Some((obj, _, _)) = &incumbent {
            if lb >= *obj as f64 - cfg.gap_tol {
                // every open node is at least this bad
                heap.push(node);
                break;
            }
        }
        if cfg.node_limit.is_some_and(|l| nodes >= l) || cfg.time_limit.is_some_and(|t| start.elapsed() >= t) {
            heap.push(node);
            exhausted = true;
            break;
        }
        nodes += 1;
        let rel = match cached_root.take() {
            Some(r) if node.id == 0 => r,
            _ => inst.solve_relaxed(&node.fixing)?,
        };
        let status = match rel.status {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "indeterminate",
        };
        node_log.push(NodeLog { node: node.id, depth: node.depth, bound: rel.bound, status: status.into() });
        if rel.status != SolveStatus::Optimal {
            continue;
        }
        let bound = integer_floor(rel.bound);
        if incumbent.as_ref().is_some_and(|(o, _, _)| bound >= *o as f64) {
            continue;
        }
        // rounding heuristic
        let mut rounded = node.fixing.clone();
        let mut ok = true;
        for (idx, f) in node.fixing.iter().enumerate() {
            if f.is_none() {
                let v = rel.zeta[idx] >= 0.5;
                if rounded[idx].is_none() && !inst.fix(&mut rounded, idx, v) {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let key: Vec<bool> = rounded.iter().map(|f| f.unwrap_or(true)).collect();
            if seen_rounding.insert(key) {
                let full: Fixing = rounded.iter().map(|f| Some(f.unwrap_or(true))).collect();
                if let Some(r) = inst.solve_fixed(&full)? {
                    consider(&mut incumbent, full, r);
                }
            }
        }
        if incumbent.as_ref().is_some_and(|(o, _, _)| bound >= *o as f64) {
            continue;
        }
        // branch on the earliest fractional indicator, else the earliest free one
        let pick = rel
            .earliest_fractional
            .iter()
            .min_by_key(|(j, k)| (**k, **j))
            .and_then(|(&j, &k)| inst.index(j, k))
            .or_else(|| node.fixing.iter().position(|f| f.is_none()));
        let Some(b) = pick else { continue };
        for v in [false, true] {
            let mut child = node.fixing.clone();
            if inst.fix(&mut child, b, v) {
                heap.push(Open { key: rel.bound, depth: node.depth + 1, id: next_id, fixing: child });
                next_id += 1;
            }
        }
        if nodes % 10 == 0 || heap.is_empty() {
            let lower = heap.peek().map(|o| integer_floor(o.key)).unwrap_or(f64::INFINITY);
            transcript.push(BoundRecord {
                node: nodes,
                incumbent: incumbent.as_ref().map(|i| i.0),
                lower_bound: lower,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    let (objective, fix, rel) = incumbent.ok_or(DdtoError::RootInfeasible)?;
    let lower = heap.peek().map(|o| integer_floor(o.key).min(objective as f64)).unwrap_or(objective as f64);
    transcript.push(BoundRecord {
        node: nodes,
        incumbent: Some(objective),
        lower_bound: lower,
        elapsed_s: start.elapsed().as_secs_f64(),
    });
    let closed = !exhausted && (objective as f64 - lower) <= cfg.gap_tol;
    info!(
        "anchor {}: objective {objective}, bound {lower}, {nodes} nodes, {}",
        inst.anchor + 1,
        if closed { "closed" } else { "budget exhausted" }
    );
    finish(inst, cfg, objective, lower, closed, nodes, fix, rel, transcript, node_log)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    inst: &MicpInstance,
    cfg: &MicpConfig,
    objective: usize,
    lower: f64,
    closed: bool,
    nodes: usize,
    fix: Fixing,
    rel: Relaxed,
    transcript: Vec<BoundRecord>,
    node_log: Vec<NodeLog>,
) -> Result<MicpSolution, DdtoError> {
    let sc = &inst.scenario;
    let sys = &sc.system;
    let n = sc.n_targets();
    let i = inst.anchor;
    // exact rollouts of the solved inputs; shared nodes stay bitwise equal
    let mut states = vec![vec![]; n];
    let inputs = rel.inputs.clone();
    states[i] = sys.rollout(&sc.z0, &inputs[i]);
    for j in 0..n {
        if j == i {
            continue;
        }
        let mut xs = vec![sc.z0.clone()];
        for k in 1..sc.horizons[j] {
            let shared = inst.index(j, k + 1).map(|b| fix[b] == Some(false)).unwrap_or(false);
            let next = if shared { states[i][k].clone() } else { sys.step(&xs[k - 1], &inputs[j][k - 1]) };
            xs.push(next);
        }
        states[j] = xs;
    }
    let ni = sc.horizons[i];
    let sets = extract_target_sets(&states, i, ni, cfg.tol);
    let mut branch_times = vec![0; n];
    for (k, s) in sets.iter().enumerate() {
        for &j in s {
            branch_times[j] = k + 1;
        }
    }
    // counting identity on the shared horizon
    let count: usize = sets.iter().map(|s| s.len()).sum();
    let expected: usize = ni + (0..n).filter(|&j| j != i).map(|j| sc.horizons[j].min(ni)).sum::<usize>();
    if objective + count != expected {
        return Err(DdtoError::Consistency(format!(
            "counting identity: objective {objective} + Σ|J_k| {count} != {expected}"
        )));
    }
    let mut usage: f64 = 0.0;
    for &(j, k) in &inst.binaries {
        let d: Vec<f64> = states[j][k - 1].iter().zip(&states[i][k - 1]).map(|(a, b)| a - b).collect();
        usage = usage.max(inst.p_norm.norm(&d) / inst.big_m);
    }
    if usage >= 0.99 {
        warn!("state differences reach {:.1}% of big-M; the bound may be cutting off solutions", 100.0 * usage);
    }
    Ok(MicpSolution {
        anchor: i,
        objective,
        lower_bound: lower,
        closed,
        nodes,
        states,
        inputs,
        zeta: fix.iter().map(|f| if *f == Some(true) { 1.0 } else { 0.0 }).collect(),
        sets,
        branch_times,
        transcript,
        node_log,
        big_m_usage: usage,
    })
}

/// `J_k = { j : ‖x^j_k − x^i_k‖∞ ≤ tol }` for `k = 1..N^i` (0-based targets).
pub fn extract_target_sets(states: &[Vec<Vec<f64>>], anchor: usize, horizon: usize, tol: f64) -> Vec<Vec<usize>> {
    (0..horizon)
        .map(|k| {
            (0..states.len())
                .filter(|&j| {
                    states[j].get(k).is_some_and(|x| {
                        x.iter().zip(&states[anchor][k]).all(|(a, b)| (a - b).abs() <= tol)
                    })
                })
                .collect()
        })
        .collect()
}

/// Solves every anchor and keeps the smallest objective (smallest index on ties).
pub fn best_anchor(sc: &Scenario, cfg: &MicpConfig) -> Result<MicpSolution, DdtoError> {
    let mut best: Option<MicpSolution> = None;
    for i in 0..sc.n_targets() {
        let sol = branch_and_bound(&build_micp(sc, i, cfg)?, cfg)?;
        if best.as_ref().map(|b| sol.objective < b.objective).unwrap_or(true) {
            best = Some(sol);
        }
    }
    best.ok_or_else(|| DdtoError::invalid("no targets"))
}

/// Trunks between successive distinct branch times along the anchor path,
/// one branch per target.
pub fn solution_tree(sc: &Scenario, sol: &MicpSolution) -> DdtoTree {
    let i = sol.anchor;
    let n = sc.n_targets();
    let mut cuts: Vec<usize> = (0..n).filter(|&j| j != i).map(|j| sol.branch_times[j]).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let seg = |states: &[Vec<f64>], inputs: &[Vec<f64>], a: usize, b: usize| Segment {
        start: a,
        end: b,
        states: states[a - 1..b].to_vec(),
        inputs: inputs[a - 1..b - 1].to_vec(),
        times: None,
        dilation: None,
    };
    let mut trunks = vec![];
    let mut prev = 1;
    for &c in &cuts {
        trunks.push(seg(&sol.states[i], &sol.inputs[i], prev, c));
        prev = c;
    }
    let mut branches = vec![];
    let mut branch_times = BTreeMap::new();
    for j in 0..n {
        let k = if j == i { prev } else { sol.branch_times[j] };
        let end = sc.horizons[j];
        branches.push(Branch {
            target: j + 1,
            branch_time: k,
            branch_point: sol.states[j][k - 1].clone(),
            segment: seg(&sol.states[j], &sol.inputs[j], k, end),
        });
        branch_times.insert(j + 1, k);
    }
    DdtoTree {
        method: "micp".into(),
        priorities: sc.priorities.clone(),
        trunks,
        branches,
        branch_times,
        branch_clock: BTreeMap::new(),
    }
}
