//! Exact reachability on finite integer systems.
//!
//! Everything here is computed by enumeration over integer grids, so set
//! operations are exact.  These routines are the ground truth the convex and
//! mixed-integer methods are checked against.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DdtoError;
use crate::model::DiscreteAffineSystem;
use crate::scenario::{InputConstraints, Scenario, StateBounds, TargetSet};

pub type State = Vec<i64>;
pub type StateSet = BTreeSet<State>;

/// Default cap on enumeration work.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Halfspace {
    pub a: Vec<i64>,
    pub b: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub from: State,
    pub input: usize,
    pub to: State,
}

/// The transition map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepKind {
    /// `x⁺ = A x + B u + c` with integer data.
    Affine { a: Vec<Vec<i64>>, b: Vec<Vec<i64>>, c: Vec<i64> },
    /// Planar `x⁺ = x + (u, u²)` with scalar inputs.
    InputSquare,
    /// Explicit transitions; a missing entry means the input is not
    /// admissible at that state.
    Table { transitions: Vec<Transition> },
}

/// Finite system with box-and-halfspace admissible states `X`, an explicit
/// input list, targets given as state lists, an initial state and a horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSystem {
    #[serde(default)]
    pub name: String,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    #[serde(default)]
    pub halfspaces: Vec<Halfspace>,
    pub inputs: Vec<Vec<i64>>,
    pub step: StepKind,
    pub targets: Vec<Vec<State>>,
    pub z0: State,
    pub horizon: usize,
}

impl GridSystem {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn validate(&self) -> Result<(), DdtoError> {
        let d = self.dim();
        let bad = |m: &str| Err(DdtoError::invalid(format!("grid system '{}': {m}", self.name)));
        if d == 0 || self.hi.len() != d || self.z0.len() != d {
            return bad("dimension mismatch");
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| l > h) {
            return bad("empty box");
        }
        if self.horizon < 1 {
            return bad("horizon must be at least 1");
        }
        if !self.in_x(&self.z0) {
            return bad("z0 outside X");
        }
        for (j, t) in self.targets.iter().enumerate() {
            if t.is_empty() {
                return bad(&format!("target {} is empty", j + 1));
            }
            if t.iter().any(|s| s.len() != d || !self.in_x(s)) {
                return bad(&format!("target {} not inside X", j + 1));
            }
        }
        if self.halfspaces.iter().any(|h| h.a.len() != d) {
            return bad("halfspace dimension");
        }
        match &self.step {
            StepKind::Affine { a, b, c } => {
                let nu = self.inputs.first().map(|u| u.len()).unwrap_or(0);
                if a.len() != d || a.iter().any(|r| r.len() != d) || c.len() != d || b.len() != d
                    || b.iter().any(|r| r.len() != nu)
                    || self.inputs.iter().any(|u| u.len() != nu)
                {
                    return bad("affine step dimensions");
                }
            }
            StepKind::InputSquare => {
                if d != 2 || self.inputs.iter().any(|u| u.len() != 1) {
                    return bad("input-square step needs a planar state and scalar inputs");
                }
            }
            StepKind::Table { transitions } => {
                if transitions.iter().any(|t| t.input >= self.inputs.len() || t.from.len() != d || t.to.len() != d) {
                    return bad("table transition out of range");
                }
            }
        }
        Ok(())
    }

    pub fn in_x(&self, s: &[i64]) -> bool {
        s.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
            && self.halfspaces.iter().all(|h| h.a.iter().zip(s).map(|(a, x)| a * x).sum::<i64>() <= h.b)
    }

    /// `f(x, u)` without the admissibility check on the result.
    pub fn apply(&self, s: &[i64], input: usize) -> Option<State> {
        let u = &self.inputs[input];
        match &self.step {
            StepKind::Affine { a, b, c } => Some(
                (0..s.len())
                    .map(|i| {
                        a[i].iter().zip(s).map(|(p, q)| p * q).sum::<i64>()
                            + b[i].iter().zip(u).map(|(p, q)| p * q).sum::<i64>()
                            + c[i]
                    })
                    .collect(),
            ),
            StepKind::InputSquare => Some(vec![s[0] + u[0], s[1] + u[0] * u[0]]),
            StepKind::Table { transitions } => {
                transitions.iter().find(|t| t.input == input && t.from == s).map(|t| t.to.clone())
            }
        }
    }

    /// Admissible successors, one per input (inputs leading outside X skipped).
    pub fn successors(&self, s: &[i64]) -> Vec<(usize, State)> {
        (0..self.inputs.len())
            .filter_map(|i| self.apply(s, i).filter(|n| self.in_x(n)).map(|n| (i, n)))
            .collect()
    }

    /// All admissible states.
    pub fn universe(&self) -> Vec<State> {
        let d = self.dim();
        let mut out = Vec::new();
        let mut cur = self.lo.clone();
        loop {
            if self.in_x(&cur) {
                out.push(cur.clone());
            }
            let mut i = 0;
            loop {
                if i == d {
                    return out;
                }
                if cur[i] < self.hi[i] {
                    cur[i] += 1;
                    break;
                }
                cur[i] = self.lo[i];
                i += 1;
            }
        }
    }

    /// `F_M(z)`: terminal states of feasible `M`-step trajectories from `z`.
    pub fn forward_reach(&self, m: usize, z: &[i64]) -> StateSet {
        let mut layer: StateSet = [z.to_vec()].into_iter().collect();
        for _ in 0..m {
            layer = layer.iter().flat_map(|s| self.successors(s).into_iter().map(|(_, n)| n)).collect();
        }
        layer
    }

    /// `B_M(Z)`: initial states of feasible `M`-step trajectories into `Z`.
    pub fn backward_reach(&self, m: usize, z: &StateSet) -> StateSet {
        let mut layer: StateSet = z.iter().filter(|s| self.in_x(s)).cloned().collect();
        if m == 0 {
            return layer;
        }
        let uni = self.universe();
        for _ in 0..m {
            layer = uni
                .iter()
                .filter(|s| self.successors(s).iter().any(|(_, n)| layer.contains(n)))
                .cloned()
                .collect();
        }
        layer
    }

    pub fn target_set(&self, j: usize) -> StateSet {
        self.targets[j].iter().cloned().collect()
    }

    /// Precomputed forward layers from `z0` and backward layers of each target.
    pub fn reach_tables(&self) -> ReachTables {
        let n = self.horizon;
        let mut fwd = vec![[self.z0.clone()].into_iter().collect::<StateSet>()];
        for _ in 1..n {
            let next = fwd
                .last()
                .unwrap()
                .iter()
                .flat_map(|s| self.successors(s).into_iter().map(|(_, x)| x))
                .collect();
            fwd.push(next);
        }
        let uni = self.universe();
        let succ: BTreeMap<State, Vec<State>> =
            uni.iter().map(|s| (s.clone(), self.successors(s).into_iter().map(|(_, x)| x).collect())).collect();
        let mut bwd = Vec::new();
        for j in 0..self.targets.len() {
            let mut layers = vec![self.target_set(j)];
            for _ in 1..n {
                let prev = layers.last().unwrap();
                let next: StateSet = uni
                    .iter()
                    .filter(|s| succ[*s].iter().any(|x| prev.contains(x)))
                    .cloned()
                    .collect();
                layers.push(next);
            }
            bwd.push(layers);
        }
        ReachTables { fwd, bwd, horizon: n }
    }
}

/// `fwd[m] = F_m(z0)`, `bwd[j][m] = B_m(Z^j)` for `m < N`.
#[derive(Debug, Clone)]
pub struct ReachTables {
    pub fwd: Vec<StateSet>,
    pub bwd: Vec<Vec<StateSet>>,
    pub horizon: usize,
}

impl ReachTables {
    /// `R^j_k = F_{k−1}(z0) ∩ B_{N−k}(Z^j)`, `k` 1-based.
    pub fn k_reach(&self, j: usize, k: usize) -> StateSet {
        self.k_reach_set(&[j], k)
    }

    /// `R^J_k`, the intersection over `J`.
    pub fn k_reach_set(&self, targets: &[usize], k: usize) -> StateSet {
        let n = self.horizon;
        self.fwd[k - 1]
            .iter()
            .filter(|s| targets.iter().all(|&j| self.bwd[j][n - k].contains(*s)))
            .cloned()
            .collect()
    }

    /// `Λ_k`: nonempty target subsets with a nonempty `R^J_k`, as sorted index lists.
    pub fn lambda_sets(&self, k: usize) -> Vec<Vec<usize>> {
        let nt = self.bwd.len();
        (1u32..(1 << nt))
            .map(|mask| (0..nt).filter(|j| mask & (1 << j) != 0).collect::<Vec<_>>())
            .filter(|set| !self.k_reach_set(set, k).is_empty())
            .collect()
    }

    /// `k^J = max { k : R^J_k ≠ ∅ }`.
    pub fn branch_time(&self, targets: &[usize]) -> Result<usize, DdtoError> {
        let mut best = None;
        for k in 1..=self.horizon {
            if !self.k_reach_set(targets, k).is_empty() {
                best = Some(k);
            }
        }
        best.filter(|_| !self.k_reach_set(targets, 1).is_empty())
            .ok_or_else(|| DdtoError::UndefinedBranchTime(targets.iter().map(|j| j + 1).collect()))
    }

    /// Targets `j` with `x ∈ B_{N−k}(Z^j)`.
    fn reachable_from(&self, x: &State, k: usize) -> Vec<usize> {
        (0..self.bwd.len()).filter(|&j| self.bwd[j][self.horizon - k].contains(x)).collect()
    }
}

/// [`ReachTables::branch_time`] computed from scratch.
pub fn branch_time_oracle(sys: &GridSystem, targets: &[usize]) -> Result<usize, DdtoError> {
    sys.reach_tables().branch_time(targets)
}

/// All feasible horizon-`N` trajectories from `z0` into target `j`.
pub fn trajectories_to(
    sys: &GridSystem,
    tables: &ReachTables,
    j: usize,
    budget: u128,
) -> Result<Vec<Vec<State>>, DdtoError> {
    let n = sys.horizon;
    let mut out = Vec::new();
    let mut work: u128 = 0;
    let mut path = vec![sys.z0.clone()];
    fn rec(
        sys: &GridSystem,
        tables: &ReachTables,
        j: usize,
        path: &mut Vec<State>,
        out: &mut Vec<Vec<State>>,
        work: &mut u128,
        budget: u128,
    ) -> Result<(), DdtoError> {
        let n = sys.horizon;
        *work += 1;
        if *work > budget {
            return Err(DdtoError::EnumerationBudget { needed: *work, budget });
        }
        let k = path.len();
        if k == n {
            out.push(path.clone());
            return Ok(());
        }
        let last = path.last().unwrap().clone();
        let mut seen = BTreeSet::new();
        for (_, nx) in sys.successors(&last) {
            if tables.bwd[j][n - k - 1].contains(&nx) && seen.insert(nx.clone()) {
                path.push(nx);
                rec(sys, tables, j, path, out, work, budget)?;
                path.pop();
            }
        }
        Ok(())
    }
    if tables.bwd[j][n - 1].contains(&sys.z0) {
        rec(sys, tables, j, &mut path, &mut out, &mut work, budget)?;
    }
    Ok(out)
}

/// Anchor choice for the cardinality problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Target(usize),
    Free,
}

/// Exact minimizer of the pairwise-mismatch count.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveSolution {
    pub anchor: usize,
    /// One trajectory per target.
    pub trajectories: Vec<Vec<State>>,
    /// `J_k = { j : x^j_k = x^i_k }`, `k = 1..N`.
    pub sets: Vec<Vec<usize>>,
    pub objective: usize,
    /// `k^j = max { k : j ∈ J_k }`.
    pub branch_times: Vec<usize>,
}

/// Minimum number of mismatches against `anchor` over trajectories into `j`,
/// and a minimizing trajectory.  Exact dynamic program over the reach layers.
fn best_follower(
    sys: &GridSystem,
    tables: &ReachTables,
    j: usize,
    anchor: &[State],
) -> Option<(usize, Vec<State>)> {
    let n = sys.horizon;
    // layer k (0-based) states with cost-so-far and parent
    let mut layers: Vec<BTreeMap<State, (usize, Option<State>)>> = Vec::with_capacity(n);
    let mut first = BTreeMap::new();
    if !tables.bwd[j][n - 1].contains(&sys.z0) {
        return None;
    }
    first.insert(sys.z0.clone(), (usize::from(sys.z0 != anchor[0]), None));
    layers.push(first);
    for k in 1..n {
        let mut next: BTreeMap<State, (usize, Option<State>)> = BTreeMap::new();
        for (s, (c, _)) in &layers[k - 1] {
            for (_, nx) in sys.successors(s) {
                if !tables.bwd[j][n - k - 1].contains(&nx) {
                    continue;
                }
                let cost = c + usize::from(nx != anchor[k]);
                let e = next.entry(nx).or_insert((usize::MAX, None));
                if cost < e.0 {
                    *e = (cost, Some(s.clone()));
                }
            }
        }
        layers.push(next);
    }
    let (end, (cost, _)) = layers[n - 1].iter().min_by_key(|(s, (c, _))| (*c, (*s).clone()))?;
    let mut traj = vec![end.clone()];
    let mut cur = end.clone();
    for k in (1..n).rev() {
        let p = layers[k][&cur].1.clone().unwrap();
        traj.push(p.clone());
        cur = p;
    }
    traj.reverse();
    Some((*cost, traj))
}

/// Minimizes `Σ_{j≠i} Σ_k 1(x^i_k ≠ x^j_k)` exactly.  Anchor trajectories are
/// enumerated; each other target's best response is an exact dynamic program.
pub fn exhaustive_ddto(sys: &GridSystem, anchor: Anchor, budget: u128) -> Result<ExhaustiveSolution, DdtoError> {
    sys.validate()?;
    let tables = sys.reach_tables();
    let nt = sys.targets.len();
    let anchors: Vec<usize> = match anchor {
        Anchor::Target(i) => {
            if i >= nt {
                return Err(DdtoError::invalid(format!("anchor {} out of range", i + 1)));
            }
            vec![i]
        }
        Anchor::Free => (0..nt).collect(),
    };
    let per_follow: u128 = tables.fwd.iter().map(|l| l.len() as u128).sum::<u128>() * sys.inputs.len() as u128;
    let mut best: Option<ExhaustiveSolution> = None;
    let mut work: u128 = 0;
    for &i in &anchors {
        let cands = trajectories_to(sys, &tables, i, budget)?;
        if cands.is_empty() {
            return Err(DdtoError::Unreachable { target: i + 1 });
        }
        work += cands.len() as u128 * (per_follow * nt as u128).max(1);
        if work > budget {
            return Err(DdtoError::EnumerationBudget { needed: work, budget });
        }
        for xa in &cands {
            let mut total = 0;
            let mut trajs = vec![Vec::new(); nt];
            let mut ok = true;
            for j in 0..nt {
                if j == i {
                    trajs[j] = xa.clone();
                    continue;
                }
                match best_follower(sys, &tables, j, xa) {
                    Some((c, t)) => {
                        total += c;
                        trajs[j] = t;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                return Err(DdtoError::Unreachable { target: i + 1 });
            }
            if best.as_ref().map(|b| total < b.objective).unwrap_or(true) {
                best = Some(assemble(i, trajs, total));
            }
        }
    }
    best.ok_or_else(|| DdtoError::invalid("no targets"))
}

fn assemble(i: usize, trajectories: Vec<Vec<State>>, objective: usize) -> ExhaustiveSolution {
    let n = trajectories[i].len();
    let sets: Vec<Vec<usize>> = (0..n)
        .map(|k| (0..trajectories.len()).filter(|&j| trajectories[j][k] == trajectories[i][k]).collect())
        .collect();
    let branch_times = (0..trajectories.len())
        .map(|j| (0..n).filter(|&k| sets[k].contains(&j)).map(|k| k + 1).max().unwrap_or(0))
        .collect();
    ExhaustiveSolution { anchor: i, trajectories, sets, objective, branch_times }
}

/// Optimal value of the set-based problem: maximize `Σ_k |J_k|` over a single
/// feasible trajectory into `Z^i` with `J_k` the targets still reachable
/// from `x_k`.
pub fn max_reachable_count(sys: &GridSystem, tables: &ReachTables, i: usize) -> Option<usize> {
    let n = sys.horizon;
    let mut value: BTreeMap<State, usize> = BTreeMap::new();
    for s in &tables.fwd[n - 1] {
        if tables.bwd[i][0].contains(s) {
            value.insert(s.clone(), tables.reachable_from(s, n).len());
        }
    }
    for k in (1..n).rev() {
        // layer k (1-based) from layer k+1
        let mut next = BTreeMap::new();
        for s in &tables.fwd[k - 1] {
            if !tables.bwd[i][n - k].contains(s) {
                continue;
            }
            let best = sys.successors(s).iter().filter_map(|(_, x)| value.get(x).copied()).max();
            if let Some(b) = best {
                next.insert(s.clone(), b + tables.reachable_from(s, k).len());
            }
        }
        value = next;
    }
    value.get(&sys.z0).copied()
}

/// Outcome of [`check_theorems`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TheoremReport {
    /// Coincidence maximization equals the branch time for every `J`.
    pub coincidence_equals_branch_time: bool,
    /// `R^J_k` nonempty exactly on a prefix `1..k^J`.
    pub monotone_nonemptiness: bool,
    /// `J_k ⊆ J_{k−1}` in every exhaustive optimum.
    pub monotone_sets: bool,
    /// No simultaneous coincidence after the branch time.
    pub no_recoincidence: bool,
    /// `objective + Σ|J_k| = nN` and agreement with the set-based optimum.
    pub counting_identity: bool,
    pub failures: Vec<String>,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.coincidence_equals_branch_time
            && self.monotone_nonemptiness
            && self.monotone_sets
            && self.no_recoincidence
            && self.counting_identity
    }
}

/// Checks the structural theorems on one instance by enumeration.
pub fn check_theorems(sys: &GridSystem, budget: u128) -> Result<TheoremReport, DdtoError> {
    sys.validate()?;
    let tables = sys.reach_tables();
    let nt = sys.targets.len();
    let n = sys.horizon;
    let mut rep = TheoremReport {
        coincidence_equals_branch_time: true,
        monotone_nonemptiness: true,
        monotone_sets: true,
        no_recoincidence: true,
        counting_identity: true,
        failures: vec![],
    };
    let trajs: Vec<Vec<Vec<State>>> =
        (0..nt).map(|j| trajectories_to(sys, &tables, j, budget)).collect::<Result<_, _>>()?;

    for mask in 1u32..(1 << nt) {
        let set: Vec<usize> = (0..nt).filter(|j| mask & (1 << j) != 0).collect();
        let nonempty: Vec<bool> = (1..=n).map(|k| !tables.k_reach_set(&set, k).is_empty()).collect();
        let kj = nonempty.iter().rposition(|b| *b).map(|p| p + 1);
        if let Some(kj) = kj {
            if nonempty[..kj].iter().any(|b| !b) {
                rep.monotone_nonemptiness = false;
                rep.failures.push(format!("R^J_k not a prefix for J={set:?}: {nonempty:?}"));
            }
        }
        if !nonempty[0] {
            continue;
        }
        let kj = kj.unwrap();
        // coincidence maximization by prefix intersection of enumerated trajectories
        let mut g = 0;
        for k in 1..=n {
            let mut common: Option<BTreeSet<&[State]>> = None;
            for &j in &set {
                let pref: BTreeSet<&[State]> = trajs[j].iter().map(|t| &t[..k]).collect();
                common = Some(match common {
                    None => pref,
                    Some(c) => c.intersection(&pref).copied().collect(),
                });
            }
            if common.map(|c| !c.is_empty()).unwrap_or(false) {
                g = k;
            }
        }
        if g != kj {
            rep.coincidence_equals_branch_time = false;
            rep.failures.push(format!("J={set:?}: coincidence optimum {g} vs branch time {kj}"));
        }
        for k in kj + 1..=n {
            let mut common: Option<BTreeSet<&State>> = None;
            for &j in &set {
                let at: BTreeSet<&State> = trajs[j].iter().map(|t| &t[k - 1]).collect();
                common = Some(match common {
                    None => at,
                    Some(c) => c.intersection(&at).copied().collect(),
                });
            }
            if set.len() > 1 && common.map(|c| !c.is_empty()).unwrap_or(false) {
                rep.no_recoincidence = false;
                rep.failures.push(format!("J={set:?}: trajectories meet at k={k} > k^J={kj}"));
            }
        }
    }

    for i in 0..nt {
        let sol = exhaustive_ddto(sys, Anchor::Target(i), budget)?;
        for k in 1..n {
            if !sol.sets[k].iter().all(|j| sol.sets[k - 1].contains(j)) {
                rep.monotone_sets = false;
                rep.failures.push(format!("anchor {}: J_{} not inside J_{}", i + 1, k + 1, k));
            }
        }
        for (j, &kj) in sol.branch_times.iter().enumerate() {
            if (kj..n).any(|k| sol.trajectories[j][k] == sol.trajectories[i][k]) {
                rep.no_recoincidence = false;
                rep.failures.push(format!("anchor {}: target {} re-joins after k={kj}", i + 1, j + 1));
            }
        }
        let count: usize = sol.sets.iter().map(|s| s.len()).sum();
        if sol.objective + count != nt * n {
            rep.counting_identity = false;
            rep.failures.push(format!("anchor {}: {} + {} != {}", i + 1, sol.objective, count, nt * n));
        }
        match max_reachable_count(sys, &tables, i) {
            Some(v) if v == count => {}
            other => {
                rep.counting_identity = false;
                rep.failures.push(format!("anchor {}: set-based optimum {other:?} vs {count}", i + 1));
            }
        }
    }
    Ok(rep)
}

/// The planar instance `x⁺ = x + (u, u²)`, `x₂ ≤ 9`, integer inputs −3..3.
pub fn remark_instance() -> GridSystem {
    GridSystem {
        name: "input-square".into(),
        lo: vec![-12, 0],
        hi: vec![12, 12],
        halfspaces: vec![Halfspace { a: vec![0, 1], b: 9 }],
        inputs: (-3..=3).map(|u| vec![u]).collect(),
        step: StepKind::InputSquare,
        targets: vec![vec![vec![4, 8]]],
        z0: vec![0, 0],
        horizon: 3,
    }
}

/// `x⁺ = x + u` with `u ∈ {−1, 0, 1}^dim` and box `X`.
pub fn integrator_instance(
    name: &str,
    bound: i64,
    targets: Vec<State>,
    z0: State,
    horizon: usize,
) -> GridSystem {
    let dim = z0.len();
    let mut inputs = vec![vec![]];
    for _ in 0..dim {
        inputs = inputs
            .into_iter()
            .flat_map(|u: Vec<i64>| (-1..=1).map(move |v| [u.clone(), vec![v]].concat()))
            .collect();
    }
    let eye: Vec<Vec<i64>> = (0..dim).map(|i| (0..dim).map(|j| i64::from(i == j)).collect()).collect();
    GridSystem {
        name: name.into(),
        lo: vec![-bound; dim],
        hi: vec![bound; dim],
        halfspaces: vec![],
        inputs,
        step: StepKind::Affine { a: eye.clone(), b: eye, c: vec![0; dim] },
        targets: targets.into_iter().map(|t| vec![t]).collect(),
        z0,
        horizon,
    }
}

/// True when `sys` is an integrator with the full `{−1,0,1}^d` input grid,
/// a plain box `X` and singleton targets, so that its convex hull has the
/// same branch times.
pub fn is_convex_embeddable(sys: &GridSystem) -> bool {
    let d = sys.dim();
    let reference = integrator_instance("", 0, vec![], vec![0; d], 1);
    sys.step == reference.step
        && sys.halfspaces.is_empty()
        && sys.inputs.iter().collect::<BTreeSet<_>>() == reference.inputs.iter().collect::<BTreeSet<_>>()
        && sys.targets.iter().all(|t| t.len() == 1)
}

/// The convex hull of an embeddable instance: real states in the box,
/// inputs in `[−1, 1]^d`, point targets and an inactive budget.
pub fn embed_convex(sys: &GridSystem) -> Option<Scenario> {
    if !is_convex_embeddable(sys) {
        return None;
    }
    let d = sys.dim();
    let n = sys.targets.len();
    let f = |v: &[i64]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    Some(Scenario {
        name: sys.name.clone(),
        system: DiscreteAffineSystem::integrator(d),
        z0: f(&sys.z0),
        targets: sys.targets.iter().map(|t| TargetSet::Point { z: f(&t[0]) }).collect(),
        priorities: (1..=n).collect(),
        horizons: vec![sys.horizon; n],
        inputs: InputConstraints { u_box: Some(1.0), ..Default::default() },
        states: Some(StateBounds {
            lo: sys.lo.iter().map(|&v| Some(v as f64)).collect(),
            hi: sys.hi.iter().map(|&v| Some(v as f64)).collect(),
        }),
        // every path spends at most (N − 1)·d
        l_max: (sys.horizon * d) as f64,
    })
}

/// Random reachable end point of `steps` random admissible moves.
fn random_walk(sys: &GridSystem, rng: &mut ChaCha8Rng, steps: usize) -> Option<State> {
    let mut s = sys.z0.clone();
    for _ in 0..steps {
        let succ = sys.successors(&s);
        s = succ.choose(rng)?.1.clone();
    }
    Some(s)
}

/// Random instance with at most 3 targets, horizon at most 5 and at most 3
/// inputs.  Targets are end points of random walks, so every target is
/// reachable.
pub fn random_instance(rng: &mut ChaCha8Rng, name: String) -> GridSystem {
    loop {
        let dim = rng.gen_range(1..=2);
        let bound = rng.gen_range(2..=4);
        let n_in = rng.gen_range(2..=3);
        let horizon = rng.gen_range(2..=5);
        let kind = rng.gen_range(0..3);
        let inputs: Vec<Vec<i64>> = {
            let mut set = BTreeSet::new();
            while set.len() < n_in {
                set.insert((0..dim).map(|_| rng.gen_range(-1..=1)).collect::<Vec<i64>>());
            }
            set.into_iter().collect()
        };
        let lo = vec![-bound; dim];
        let hi = vec![bound; dim];
        let step = match kind {
            0 => {
                let eye: Vec<Vec<i64>> = (0..dim).map(|i| (0..dim).map(|j| i64::from(i == j)).collect()).collect();
                StepKind::Affine { a: eye.clone(), b: eye, c: vec![0; dim] }
            }
            1 => {
                let a: Vec<Vec<i64>> = (0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { 1 } else { rng.gen_range(-1..=1) }).collect())
                    .collect();
                let b: Vec<Vec<i64>> = (0..dim).map(|_| (0..dim).map(|_| rng.gen_range(-1..=1)).collect()).collect();
                let c: Vec<i64> = (0..dim).map(|_| rng.gen_range(-1..=1)).collect();
                StepKind::Affine { a, b, c }
            }
            _ => {
                // random table on the box
                let tmp = GridSystem {
                    name: String::new(),
                    lo: lo.clone(),
                    hi: hi.clone(),
                    halfspaces: vec![],
                    inputs: inputs.clone(),
                    step: StepKind::InputSquare,
                    targets: vec![],
                    z0: vec![0; dim],
                    horizon,
                };
                let uni = tmp.universe();
                let mut transitions = Vec::new();
                for s in &uni {
                    for i in 0..inputs.len() {
                        if rng.gen_bool(0.85) {
                            let to: State = s.iter().map(|v| (v + rng.gen_range(-1..=1)).clamp(-bound, bound)).collect();
                            transitions.push(Transition { from: s.clone(), input: i, to });
                        }
                    }
                }
                StepKind::Table { transitions }
            }
        };
        let mut sys = GridSystem {
            name: name.clone(),
            lo,
            hi,
            halfspaces: vec![],
            inputs,
            step,
            targets: vec![],
            z0: (0..dim).map(|_| rng.gen_range(-1..=1)).collect(),
            horizon,
        };
        if rng.gen_bool(0.3) {
            let a: Vec<i64> = (0..dim).map(|_| rng.gen_range(-1..=1)).collect();
            let az: i64 = a.iter().zip(&sys.z0).map(|(p, q)| p * q).sum();
            sys.halfspaces.push(Halfspace { a, b: az + rng.gen_range(1..=2) });
        }
        let nt = rng.gen_range(1..=3);
        let mut ok = true;
        for _ in 0..nt {
            let size = rng.gen_range(1..=2);
            let mut t = BTreeSet::new();
            for _ in 0..size {
                match random_walk(&sys, rng, horizon - 1) {
                    Some(s) => {
                        t.insert(s);
                    }
                    None => ok = false,
                }
            }
            sys.targets.push(t.into_iter().collect());
        }
        if ok && sys.validate().is_ok() {
            return sys;
        }
    }
}

/// `count` random instances from a fixed seed.
pub fn random_corpus(seed: u64, count: usize) -> Vec<GridSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| random_instance(&mut rng, format!("random-{seed}-{i}"))).collect()
}

/// Integrator instances whose branch times carry over to the convex hull.
pub fn convex_corpus(seed: u64, count: usize) -> Vec<GridSystem> {
    let mut out = vec![integrator_instance("pm3", 5, vec![vec![3], vec![-3]], vec![0], 5)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while out.len() < count {
        let dim = rng.gen_range(1..=2);
        let horizon = rng.gen_range(3..=5);
        let bound = rng.gen_range(3..=6);
        let z0: State = (0..dim).map(|_| rng.gen_range(-1..=1)).collect();
        let mut sys = integrator_instance(&format!("integrator-{seed}-{}", out.len()), bound, vec![], z0, horizon);
        let nt = rng.gen_range(2..=3);
        for _ in 0..nt {
            if let Some(t) = random_walk(&sys, &mut rng, horizon - 1) {
                sys.targets.push(vec![t]);
            }
        }
        if sys.targets.len() >= 2 && sys.validate().is_ok() {
            out.push(sys);
        }
    }
    out
}
