//! Sequential convex programming for continuous-time problems with free
//! final times.
//!
//! Every trajectory lives on the normalized interval `[0, 1]` with `M`
//! nodes.  The augmented state is `x̃ = (x, y, t)` and the augmented input
//! `ũ = (u, s)`: `y` integrates squared path-constraint violations, `t` is
//! the physical clock and `s` the dilation factor.  Trajectory 0 is the
//! trunk; the others start where it ends.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;

use ddto_conic::{solve, ConicProgram, LinExpr, ProgramBuilder, Settings, SolveStatus};
use log::{debug, info, warn};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::DdtoError;
use crate::model::{linearize_step, rk4, ContinuousSystem, Quadrotor};
use crate::tree::{Branch, DdtoTree, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct ScpConfig {
    /// Weight of the quadratic trust-region term (scaled units).
    pub w_tr: f64,
    /// Weight of the l1 penalty on virtual controls and terminal slacks.
    pub w_pen: f64,
    /// Factor applied to `w_tr` after every iteration.
    pub tr_decay: f64,
    /// Floor for the decayed trust-region weight.
    pub w_tr_min: f64,
    pub max_iter: usize,
    /// Convergence threshold on the scaled ∞-norm iterate change.
    pub tol_change: f64,
    /// Threshold on scaled shooting defects and terminal residuals.
    pub tol_defect: f64,
    /// Bound on the per-interval increase of `y`.
    pub epsilon: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// RK4 steps per shooting interval.
    pub substeps: usize,
    /// When a later round does not converge, keep the previous round's
    /// branches for the remaining targets, so their branch times coincide.
    pub coincide_on_failure: bool,
    pub settings: Settings,
}

impl Default for ScpConfig {
    fn default() -> Self {
        ScpConfig {
            w_tr: 1e-1,
            w_pen: 1e3,
            tr_decay: 0.9,
            w_tr_min: 1e-4,
            max_iter: 100,
            tol_change: 1e-3,
            tol_defect: 1e-6,
            epsilon: 1e-5,
            s_min: 1.0,
            s_max: 15.0,
            substeps: 10,
            coincide_on_failure: true,
            settings: Settings::default(),
        }
    }
}

impl ScpConfig {
    pub fn validate(&self) -> Result<(), DdtoError> {
        if !(self.epsilon > 0.0) {
            return Err(DdtoError::invalid(
                "epsilon must be positive; an equality on y violates constraint qualifications",
            ));
        }
        if !(self.w_tr > 0.0 && self.w_pen > 0.0) {
            return Err(DdtoError::invalid("w_tr and w_pen must be positive"));
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max) {
            return Err(DdtoError::invalid(format!("need 0 < s_min <= s_max, got [{}, {}]", self.s_min, self.s_max)));
        }
        if self.substeps == 0 || self.max_iter == 0 {
            return Err(DdtoError::invalid("substeps and max_iter must be positive"));
        }
        Ok(())
    }
}

/// A continuous-time scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScpScenario {
    pub name: String,
    pub system: Quadrotor,
    /// Initial state, running cost included.
    pub z0: Vec<f64>,
    /// Terminal values of the leading state components, per target.
    pub targets: Vec<Vec<f64>>,
    /// 1-based labels, highest priority first.
    pub priorities: Vec<usize>,
    /// Total horizon `N` (odd).
    pub horizon: usize,
    /// Bound on the running-cost state at every terminal node.
    pub l_max: f64,
}

impl ScpScenario {
    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn priority_order(&self) -> Vec<usize> {
        self.priorities.iter().map(|p| p - 1).collect()
    }

    pub fn validate(&self) -> Result<(), DdtoError> {
        let nx = self.system.nx();
        if self.z0.len() != nx {
            return Err(DdtoError::invalid(format!("z0 has {} entries, the system has {nx} states", self.z0.len())));
        }
        if self.targets.is_empty() {
            return Err(DdtoError::invalid("no targets"));
        }
        if let Some(t) = self.targets.iter().find(|t| t.is_empty() || t.len() >= nx) {
            return Err(DdtoError::invalid(format!("target has {} entries, need 1..{}", t.len(), nx - 1)));
        }
        let mut p = self.priorities.clone();
        p.sort_unstable();
        if p != (1..=self.n_targets()).collect::<Vec<_>>() {
            return Err(DdtoError::invalid("priorities must be a permutation of 1..=n"));
        }
        if self.horizon < 3 || self.horizon.is_multiple_of(2) {
            return Err(DdtoError::invalid(format!("horizon N = {} must be odd and at least 3", self.horizon)));
        }
        if !(self.l_max >= 0.0) {
            return Err(DdtoError::invalid("l_max must be nonnegative"));
        }
        if self.system.g_scale.len() != self.system.ng() || self.system.g_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(DdtoError::invalid(format!("g_scale needs {} positive entries", self.system.ng())));
        }
        Ok(())
    }
}

/// Node values of all trajectories of one subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct ScpIterate {
    /// Trunk first, then one trajectory per target of `J`; `M` augmented
    /// states each.
    pub states: Vec<Vec<Vec<f64>>>,
    /// `M − 1` augmented inputs per trajectory.
    pub inputs: Vec<Vec<Vec<f64>>>,
    /// Penalty term of the subproblem that produced this iterate.
    pub penalty: f64,
    /// Largest scaled shooting defect.
    pub defect: f64,
    /// Largest scaled terminal residual.
    pub terminal_residual: f64,
}

impl ScpIterate {
    pub fn nodes(&self) -> usize {
        self.states[0].len()
    }

    /// Final physical time of trajectory `q`.
    pub fn final_time(&self, q: usize) -> f64 {
        let x = self.states[q].last().unwrap();
        x[x.len() - 1]
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub iteration: usize,
    pub penalty: f64,
    pub defect: f64,
    pub trunk_time: f64,
    pub change: f64,
}

/// Writes `round,iteration,penalty,defect,trunk_time,change`.
pub fn write_trace<W: Write>(rows: &[TraceRow], w: W) -> Result<(), DdtoError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["round", "iteration", "penalty", "defect", "trunk_time", "change"])?;
    for r in rows {
        wr.write_record([
            r.round.to_string(),
            r.iteration.to_string(),
            format!("{:?}", r.penalty),
            format!("{:?}", r.defect),
            format!("{:?}", r.trunk_time),
            format!("{:?}", r.change),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Variable scales: deviations, defects and residuals are measured in these units.
#[derive(Debug, Clone)]
struct Scales {
    x: Vec<f64>,
    u: Vec<f64>,
}

/// Scale of the violation integral `y`.
const Y_SCALE: f64 = 1.0;

fn scales(sc: &ScpScenario, cfg: &ScpConfig) -> Scales {
    let sys = &sc.system;
    let nx = sys.nx();
    let mut reach: f64 = 1.0;
    for t in &sc.targets {
        for i in 0..3.min(t.len()) {
            reach = reach.max((t[i] - sc.z0[i]).abs() / 2.0);
        }
    }
    let mut x = vec![1.0; nx + 2];
    for (i, v) in x.iter_mut().enumerate().take(nx - 1) {
        *v = if i < 3 { reach } else { sys.v_max.max(1.0) };
    }
    x[nx - 1] = sc.l_max.max(1.0);
    x[nx] = Y_SCALE;
    x[nx + 1] = cfg.s_max;
    let mut u = vec![sys.u_max.max(1.0); sys.nu() + 1];
    u[sys.nu()] = cfg.s_max;
    Scales { x, u }
}

/// Straight-line guess: the trunk runs halfway towards the centroid of the
/// retained targets at rest, each branch from there to its target; hover
/// input and a dilation from distance over half the speed bound.
pub fn initial_guess(sc: &ScpScenario, targets: &[usize], z0: &[f64], m: usize, cfg: &ScpConfig) -> ScpIterate {
    let sys = &sc.system;
    let nx = sys.nx();
    let hover: Vec<f64> = sys.gravity.iter().map(|g| -g).collect();
    let hover_cost: f64 = hover.iter().map(|v| v * v).sum();
    let dims = targets.iter().map(|&j| sc.targets[j].len()).min().unwrap_or(0);
    let mut centroid = z0[..dims].to_vec();
    if !targets.is_empty() {
        for (i, c) in centroid.iter_mut().enumerate() {
            *c = targets.iter().map(|&j| sc.targets[j][i]).sum::<f64>() / targets.len() as f64;
        }
    }
    let mut mid = z0.to_vec();
    for i in 0..dims {
        mid[i] = if i < 3 { 0.5 * (z0[i] + centroid[i]) } else { 0.0 };
    }
    let leg = |from: &[f64], to: &[f64]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let dist = (0..3.min(to.len())).map(|i| (to[i] - from[i]).powi(2)).sum::<f64>().sqrt();
        let tf = (dist / (0.5 * sys.v_max.max(1e-3))).clamp(cfg.s_min, cfg.s_max);
        let mut xs = vec![];
        for k in 0..m {
            let a = k as f64 / (m - 1) as f64;
            let mut x = vec![0.0; nx + 2];
            for i in 0..nx - 1 {
                let target = to.get(i).copied().unwrap_or(from[i]);
                x[i] = from[i] + a * (target - from[i]);
            }
            x[nx - 1] = from[nx - 1] + hover_cost * a * tf;
            x[nx + 1] = a * tf;
            xs.push(x);
        }
        let mut u = hover.clone();
        u.push(tf);
        (xs, vec![u; m - 1])
    };
    let (tx, tu) = leg(z0, &mid[..dims]);
    let end = tx.last().unwrap()[..nx].to_vec();
    let mut states = vec![tx];
    let mut inputs = vec![tu];
    for &j in targets {
        let (bx, bu) = leg(&end, &sc.targets[j]);
        states.push(bx);
        inputs.push(bu);
    }
    ScpIterate { states, inputs, penalty: 0.0, defect: f64::INFINITY, terminal_residual: f64::INFINITY }
}

/// State and held input of trajectory `xs, us` at elapsed time `t`, by
/// linear interpolation between nodes.
fn sample_at(xs: &[Vec<f64>], us: &[Vec<f64>], t: f64) -> (Vec<f64>, Vec<f64>) {
    let ti = xs[0].len() - 1;
    let m = xs.len();
    let k = (0..m - 1).find(|&k| t < xs[k + 1][ti]).unwrap_or(m - 2);
    let (t0, t1) = (xs[k][ti], xs[k + 1][ti]);
    let a = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 0.0 };
    let x = xs[k].iter().zip(&xs[k + 1]).map(|(p, q)| p + a * (q - p)).collect();
    (x, us[k].clone())
}

/// Guess for the next round from the previous one: the trunk follows the
/// branch of the first retained target for `s_min` seconds, and every
/// branch is the rest of its previous branch, resampled on `m` nodes.
pub fn warm_guess(prev: &ScpIterate, prev_targets: &[usize], targets: &[usize], m: usize, cfg: &ScpConfig) -> ScpIterate {
    let na = prev.states[0][0].len();
    let (iy, it_) = (na - 2, na - 1);
    let resample = |q: usize, from: f64, to: f64| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs = &prev.states[q];
        let us = &prev.inputs[q];
        let dur = to - from;
        let mut states = vec![];
        let mut inputs = vec![];
        for k in 0..m {
            let tau = k as f64 / (m - 1) as f64;
            let (mut x, _) = sample_at(xs, us, from + tau * dur);
            x[iy] = 0.0;
            x[it_] = tau * dur;
            states.push(x);
            if k + 1 < m {
                let mid = from + (k as f64 + 0.5) / (m - 1) as f64 * dur;
                let (_, mut u) = sample_at(xs, us, mid);
                *u.last_mut().unwrap() = dur;
                inputs.push(u);
            }
        }
        (states, inputs)
    };
    let q_of = |j: usize| prev_targets.iter().position(|&r| r == j).unwrap() + 1;
    let lead = q_of(targets[0]);
    let shortest = targets.iter().map(|&j| prev.final_time(q_of(j))).fold(f64::INFINITY, f64::min);
    let cut = cfg.s_min.min((shortest - cfg.s_min).max(0.5 * shortest));
    let (tx, tu) = resample(lead, 0.0, cut);
    let mut states = vec![tx];
    let mut inputs = vec![tu];
    for &j in targets {
        let q = q_of(j);
        let end = prev.final_time(q).max(cut + cfg.s_min);
        let (bx, bu) = resample(q, cut, end);
        states.push(bx);
        inputs.push(bu);
    }
    ScpIterate { states, inputs, penalty: 0.0, defect: f64::INFINITY, terminal_residual: f64::INFINITY }
}

/// `(f̃(x̄, ū), ∂f̃/∂x̃, ∂f̃/∂ũ)` per trajectory and interval.
pub type Linearization = Vec<Vec<(Vec<f64>, DMatrix<f64>, DMatrix<f64>)>>;

pub fn linearize(sys: &Quadrotor, it: &ScpIterate, substeps: usize) -> Result<Linearization, DdtoError> {
    let m = it.nodes();
    let span = 1.0 / (m - 1) as f64;
    it.states
        .iter()
        .zip(&it.inputs)
        .map(|(xs, us)| (0..m - 1).map(|k| linearize_step(sys, &xs[k], &us[k], span, substeps)).collect())
        .collect()
}

/// Fills defect, terminal residual and the l1 penalty of the nonlinear
/// constraints, weighted as in the subproblem.
fn measure(sc: &ScpScenario, targets: &[usize], it: &mut ScpIterate, lin: &Linearization, s: &Scales, w_pen: f64) {
    let nx = sc.system.nx();
    let mut defect: f64 = 0.0;
    let mut pen = 0.0;
    for (q, traj) in lin.iter().enumerate() {
        for (k, (f, _, _)) in traj.iter().enumerate() {
            for (i, v) in f.iter().enumerate() {
                let d = (it.states[q][k + 1][i] - v).abs() / s.x[i];
                defect = defect.max(d);
                pen += w_pen * d;
            }
        }
    }
    let mut term: f64 = 0.0;
    for (pos, &j) in targets.iter().enumerate() {
        let x = it.states[pos + 1].last().unwrap();
        for (i, z) in sc.targets[j].iter().enumerate() {
            let d = (x[i] - z).abs() / s.x[i];
            term = term.max(d);
            pen += w_pen * d;
        }
        let d = (x[nx - 1] - sc.l_max).max(0.0) / s.x[nx - 1];
        term = term.max(d);
        pen += w_pen * d;
    }
    it.defect = defect;
    it.terminal_residual = term;
    it.penalty = pen;
}

fn objective(it: &ScpIterate, s: &Scales) -> f64 {
    -it.final_time(0) / s.x[s.x.len() - 1]
}

/// The convexified subproblem around an iterate.  Its variables are the
/// scaled deviations `δ = (x̃ − x̄) / σ` and every row is divided by the
/// scale of the quantity it constrains.
#[derive(Debug, Clone)]
pub struct ScpSubproblem {
    pub program: ConicProgram,
    x: Vec<Vec<Range<usize>>>,
    u: Vec<Vec<Range<usize>>>,
    penalty: Vec<usize>,
    sx: Vec<f64>,
    su: Vec<f64>,
}

impl ScpSubproblem {
    /// Iterate recovered from a solution vector, and the l1 penalty value
    /// of the convex model.
    pub fn recover(&self, base: &ScpIterate, sol: &[f64], w_pen: f64) -> (ScpIterate, f64) {
        let read = |rs: &Vec<Vec<Range<usize>>>, bar: &Vec<Vec<Vec<f64>>>, sig: &[f64]| -> Vec<Vec<Vec<f64>>> {
            rs.iter()
                .zip(bar)
                .map(|(t, tb)| {
                    t.iter()
                        .zip(tb)
                        .map(|(r, xb)| xb.iter().enumerate().map(|(i, v)| v + sig[i] * sol[r.start + i]).collect())
                        .collect()
                })
                .collect()
        };
        let it = ScpIterate {
            states: read(&self.x, &base.states, &self.sx),
            inputs: read(&self.u, &base.inputs, &self.su),
            penalty: 0.0,
            defect: f64::INFINITY,
            terminal_residual: f64::INFINITY,
        };
        let pen = w_pen * self.penalty.iter().map(|&v| sol[v]).sum::<f64>();
        (it, pen)
    }
}

/// Linearized shooting defects with penalized virtual controls, the input
/// set, `y` increments bounded by ε, stitching and initial rows, penalized
/// terminal rows, a quadratic trust region and `−t⁰_M` as objective.
#[allow(clippy::too_many_arguments)]
pub fn build_scp_subproblem(
    it: &ScpIterate,
    lin: &Linearization,
    w_tr: f64,
    cfg: &ScpConfig,
    sc: &ScpScenario,
    targets: &[usize],
    z0: &[f64],
) -> Result<ScpSubproblem, DdtoError> {
    cfg.validate()?;
    let sys = &sc.system;
    let sf = scales(sc, cfg);
    let (sx, su) = (&sf.x, &sf.u);
    let nx = sys.nx();
    let nu = sys.nu();
    let (na, nb) = (nx + 2, nu + 1);
    let (iy, it_) = (nx, nx + 1);
    let m = it.nodes();
    let mut b = ProgramBuilder::new();
    let mut xr: Vec<Vec<Range<usize>>> = vec![];
    let mut ur: Vec<Vec<Range<usize>>> = vec![];
    let mut penalty = vec![];
    let slack_pair = |b: &mut ProgramBuilder, penalty: &mut Vec<usize>| -> (usize, usize) {
        let p = b.add_vars("slack+", 1).start;
        let q = b.add_vars("slack-", 1).start;
        b.nonneg(LinExpr::var(p));
        b.nonneg(LinExpr::var(q));
        b.add_cost(p, cfg.w_pen);
        b.add_cost(q, cfg.w_pen);
        penalty.push(p);
        penalty.push(q);
        (p, q)
    };
    for q in 0..=targets.len() {
        let xb = &it.states[q];
        let ub = &it.inputs[q];
        let xs: Vec<Range<usize>> = (0..m).map(|k| b.add_vars(&format!("dx{q}_{}", k + 1), na)).collect();
        let us: Vec<Range<usize>> = (0..m - 1).map(|k| b.add_vars(&format!("du{q}_{}", k + 1), nb)).collect();
        for (u, ubar) in us.iter().zip(ub) {
            for i in 0..nu {
                let c = ubar[i] / su[i];
                let lim = sys.u_max / su[i];
                b.nonneg(LinExpr::term(u.start + i, -1.0).add_const(lim - c));
                b.nonneg(LinExpr::term(u.start + i, 1.0).add_const(lim + c));
            }
            let c = ubar[nu] / su[nu];
            b.nonneg(LinExpr::var(u.start + nu).add_const(c - cfg.s_min / su[nu]));
            b.nonneg(LinExpr::term(u.start + nu, -1.0).add_const(cfg.s_max / su[nu] - c));
        }
        b.eq(LinExpr::var(xs[0].start + iy).add_const(xb[0][iy] / sx[iy]));
        b.eq(LinExpr::var(xs[0].start + it_).add_const(xb[0][it_] / sx[it_]));
        for i in 0..nx {
            let e = if q == 0 {
                LinExpr::var(xs[0].start + i).add_const((xb[0][i] - z0[i]) / sx[i])
            } else {
                LinExpr::var(xs[0].start + i)
                    .add_term(xr[0][m - 1].start + i, -1.0)
                    .add_const((xb[0][i] - it.states[0][m - 1][i]) / sx[i])
            };
            b.eq(e);
        }
        for k in 0..m - 1 {
            let (f, a, bm) = &lin[q][k];
            for i in 0..na {
                // x_{k+1} = f + A (x − x̄) + B (u − ū) + ν, divided by σᵢ
                let mut e = LinExpr::var(xs[k + 1].start + i);
                for j in 0..na {
                    let v = a[(i, j)] * sx[j] / sx[i];
                    if v != 0.0 {
                        e.push(xs[k].start + j, -v);
                    }
                }
                for j in 0..nb {
                    let v = bm[(i, j)] * su[j] / sx[i];
                    if v != 0.0 {
                        e.push(us[k].start + j, -v);
                    }
                }
                let (p, n) = slack_pair(&mut b, &mut penalty);
                e.push(p, -1.0);
                e.push(n, 1.0);
                b.eq(e.add_const((xb[k + 1][i] - f[i]) / sx[i]));
            }
            let inc = (xb[k + 1][iy] - xb[k][iy]) / sx[iy];
            b.nonneg(
                LinExpr::constant(cfg.epsilon / sx[iy] - inc)
                    .add_term(xs[k + 1].start + iy, -1.0)
                    .add_term(xs[k].start + iy, 1.0),
            );
        }
        // trust region per node
        for k in 0..m {
            let eta = b.add_vars("eta", 1).start;
            b.add_cost(eta, w_tr);
            let mut dev: Vec<LinExpr> = (0..na).map(|i| LinExpr::var(xs[k].start + i)).collect();
            if k < m - 1 {
                dev.extend((0..nb).map(|i| LinExpr::var(us[k].start + i)));
            }
            b.rotated_soc(LinExpr::var(eta), LinExpr::constant(1.0), dev);
        }
        if q > 0 {
            let j = targets[q - 1];
            let last = &xs[m - 1];
            for (i, z) in sc.targets[j].iter().enumerate() {
                let (p, n) = slack_pair(&mut b, &mut penalty);
                b.eq(LinExpr::var(last.start + i).add_const((xb[m - 1][i] - z) / sx[i]).add_term(p, -1.0).add_term(n, 1.0));
            }
            let th = nx - 1;
            let p = b.add_vars("budget", 1).start;
            b.nonneg(LinExpr::var(p).add_term(last.start + th, -1.0).add_const((sc.l_max - xb[m - 1][th]) / sx[th]));
            b.nonneg(LinExpr::var(p));
            b.add_cost(p, cfg.w_pen);
            penalty.push(p);
        }
        xr.push(xs);
        ur.push(us);
    }
    b.add_cost(xr[0][m - 1].start + it_, -1.0);
    Ok(ScpSubproblem { program: b.build()?, x: xr, u: ur, penalty, sx: sx.clone(), su: su.clone() })
}

fn scaled_change(a: &ScpIterate, b: &ScpIterate, s: &Scales) -> f64 {
    let mut d: f64 = 0.0;
    for (xa, xb) in a.states.iter().flatten().zip(b.states.iter().flatten()) {
        for i in 0..xa.len() {
            d = d.max((xa[i] - xb[i]).abs() / s.x[i]);
        }
    }
    for (ua, ub) in a.inputs.iter().flatten().zip(b.inputs.iter().flatten()) {
        for i in 0..ua.len() {
            d = d.max((ua[i] - ub[i]).abs() / s.u[i]);
        }
    }
    d
}

/// Step acceptance threshold on actual over predicted merit reduction.
const RHO_ACCEPT: f64 = 0.1;
/// Above this ratio the trust-region weight is halved in addition to the decay.
const RHO_GOOD: f64 = 0.75;

/// Converged solution of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ScpSolution {
    pub iterate: ScpIterate,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Prox-linear iterations on the l1 merit `−t⁰_M + w_pen · violation`.  A
/// step is accepted when the merit drops by at least a tenth of the
/// reduction predicted by the convex model; the trust-region weight then
/// decays, otherwise it doubles and the step is retried.  Stops once an
/// accepted step moves less than `tol_change` with negligible defects.
pub fn scp_solve(
    sc: &ScpScenario,
    targets: &[usize],
    z0: &[f64],
    m: usize,
    cfg: &ScpConfig,
    round: usize,
) -> Result<ScpSolution, DdtoError> {
    if m < 2 {
        return Err(DdtoError::invalid(format!("round {round}: {m} nodes per trajectory, need at least 2")));
    }
    scp_solve_from(sc, targets, z0, initial_guess(sc, targets, z0, m, cfg), cfg, round)
}

/// [`scp_solve`] from a given initial iterate.
pub fn scp_solve_from(
    sc: &ScpScenario,
    targets: &[usize],
    z0: &[f64],
    guess: ScpIterate,
    cfg: &ScpConfig,
    round: usize,
) -> Result<ScpSolution, DdtoError> {
    cfg.validate()?;
    let m = guess.nodes();
    if m < 2 || guess.states.len() != targets.len() + 1 {
        return Err(DdtoError::invalid(format!("round {round}: initial iterate does not match {} targets", targets.len())));
    }
    let sys = &sc.system;
    let sf = scales(sc, cfg);
    let mut it = guess;
    let mut lin = linearize(sys, &it, cfg.substeps)?;
    measure(sc, targets, &mut it, &lin, &sf, cfg.w_pen);
    let mut w_tr = cfg.w_tr;
    let mut trace = vec![TraceRow {
        round,
        iteration: 0,
        penalty: it.penalty,
        defect: it.defect,
        trunk_time: it.final_time(0),
        change: f64::INFINITY,
    }];
    let feasible = |it: &ScpIterate| it.defect <= cfg.tol_defect && it.terminal_residual <= cfg.tol_defect;
    for iter in 1..=cfg.max_iter {
        let sub = build_scp_subproblem(&it, &lin, w_tr, cfg, sc, targets, z0)?;
        let res = solve(&sub.program, &cfg.settings)?;
        if res.status != SolveStatus::Optimal {
            warn!("round {round} iter {iter}: subproblem status {:?}", res.status);
            if res.status == SolveStatus::Infeasible || res.x.iter().any(|v| !v.is_finite()) {
                w_tr *= 2.0;
                continue;
            }
        }
        let (mut cand, model_pen) = sub.recover(&it, &res.x, cfg.w_pen);
        let model = objective(&cand, &sf) + model_pen;
        let change = scaled_change(&cand, &it, &sf);
        let cand_lin = match linearize(sys, &cand, cfg.substeps) {
            Ok(l) => Some(l),
            Err(DdtoError::Propagation(_)) => None,
            Err(e) => return Err(e),
        };
        let current = objective(&it, &sf) + it.penalty;
        let (rho, actual) = match &cand_lin {
            Some(l) => {
                measure(sc, targets, &mut cand, l, &sf, cfg.w_pen);
                let actual = objective(&cand, &sf) + cand.penalty;
                let predicted = current - model;
                if predicted <= 1e-12 * (1.0 + current.abs()) {
                    (1.0, actual)
                } else {
                    ((current - actual) / predicted, actual)
                }
            }
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let accept = rho >= RHO_ACCEPT;
        debug!(
            "round {round} iter {iter}: merit {current:.6e} -> {actual:.6e} (model {model:.6e}) w_tr {w_tr:.2e} change {change:.2e} {}",
            if accept { "accepted" } else { "rejected" }
        );
        if !accept {
            w_tr *= 2.0;
            continue;
        }
        it = cand;
        lin = cand_lin.unwrap();
        w_tr *= cfg.tr_decay;
        if rho >= RHO_GOOD {
            w_tr *= 0.5;
        }
        w_tr = w_tr.max(cfg.w_tr_min);
        trace.push(TraceRow {
            round,
            iteration: iter,
            penalty: it.penalty,
            defect: it.defect,
            trunk_time: it.final_time(0),
            change,
        });
        debug!(
            "round {round} iter {iter}: t0 {:.6} defect {:.2e} terminal {:.2e}",
            it.final_time(0),
            it.defect,
            it.terminal_residual
        );
        if change <= cfg.tol_change && feasible(&it) {
            info!("round {round}: converged in {iter} iterations, trunk time {:.6}", it.final_time(0));
            return Ok(ScpSolution { iterate: it, iterations: iter, trace });
        }
    }
    Err(DdtoError::NonConvergence {
        round,
        iterations: cfg.max_iter,
        defect: it.defect,
        slack: it.terminal_residual,
    })
}

/// Piecewise-linear map between normalized time `τ ∈ [0, 1]` and physical time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMap {
    tau: Vec<f64>,
    t: Vec<f64>,
}

impl TimeMap {
    /// Knots on a uniform `τ` grid with one dilation factor per interval.
    pub fn from_dilation(s: &[f64]) -> Result<Self, DdtoError> {
        if s.is_empty() {
            return Err(DdtoError::invalid("no intervals"));
        }
        if let Some(v) = s.iter().find(|v| !(**v > 0.0)) {
            return Err(DdtoError::invalid(format!("dilation factor must be positive, got {v}")));
        }
        let n = s.len();
        let h = 1.0 / n as f64;
        let tau: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let mut t = vec![0.0];
        for v in s {
            t.push(t.last().unwrap() + v * h);
        }
        Ok(TimeMap { tau, t })
    }

    pub fn final_time(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.t
    }

    fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
        let n = xs.len();
        if x <= xs[0] {
            return ys[0];
        }
        if x >= xs[n - 1] {
            return ys[n - 1];
        }
        let k = xs.partition_point(|v| *v <= x).min(n - 1).max(1) - 1;
        let a = (x - xs[k]) / (xs[k + 1] - xs[k]);
        ys[k] + a * (ys[k + 1] - ys[k])
    }

    pub fn t(&self, tau: f64) -> f64 {
        Self::interp(&self.tau, &self.t, tau)
    }

    pub fn tau(&self, t: f64) -> f64 {
        Self::interp(&self.t, &self.tau, t)
    }

    /// Node values linearly interpolated on a uniform physical grid of step
    /// `dt`, merged with the knot times so that node values are kept exactly.
    pub fn resample(&self, values: &[Vec<f64>], dt: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let tf = self.final_time();
        let mut grid: Vec<f64> = self.t.clone();
        if dt > 0.0 {
            let steps = (tf / dt).floor() as usize;
            grid.extend((0..=steps).map(|i| i as f64 * dt).filter(|v| *v <= tf));
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let out = grid
            .iter()
            .map(|&t| {
                if let Some(k) = self.t.iter().position(|v| *v == t) {
                    return values[k].clone();
                }
                let k = self.t.partition_point(|v| *v <= t) - 1;
                let a = (t - self.t[k]) / (self.t[k + 1] - self.t[k]);
                values[k].iter().zip(&values[k + 1]).map(|(x, y)| x + a * (y - x)).collect()
            })
            .collect();
        (grid, out)
    }
}

/// Physical node times of a trajectory from its dilation factors.
pub fn reconstruct_time(inputs: &[Vec<f64>]) -> Result<TimeMap, DdtoError> {
    let s: Vec<f64> = inputs.iter().map(|u| *u.last().unwrap()).collect();
    TimeMap::from_dilation(&s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScpRound {
    pub retained: Vec<usize>,
    pub rejected: usize,
    pub nodes: usize,
    pub trunk_time: f64,
    pub iterations: usize,
    pub defect: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScpOutcome {
    pub tree: DdtoTree,
    pub rounds: Vec<ScpRound>,
    /// Round whose failure made the remaining branch times coincide, with the error.
    pub coincided: Option<(usize, String)>,
}

impl ScpOutcome {
    pub fn trace(&self) -> Vec<TraceRow> {
        self.rounds.iter().flat_map(|r| r.trace.iter().copied()).collect()
    }
}

fn segment(sys: &Quadrotor, xs: &[Vec<f64>], us: &[Vec<f64>], start: usize, t0: f64) -> Segment {
    let nx = sys.nx();
    let nu = sys.nu();
    Segment {
        start,
        end: start + xs.len() - 1,
        states: xs.iter().map(|x| x[..nx].to_vec()).collect(),
        inputs: us.iter().map(|u| u[..nu].to_vec()).collect(),
        times: Some(match reconstruct_time(us) {
            Ok(m) => m.knot_times().iter().map(|t| t0 + t).collect(),
            Err(_) => xs.iter().map(|x| t0 + x[nx + 1]).collect(),
        }),
        dilation: Some(us.iter().map(|u| u[nu]).collect()),
    }
}

/// The recursive construction on a halving grid: each round maximizes the
/// trunk duration for the retained targets, rejects the lowest priority one
/// and restarts from the end of the trunk.  The running-cost state carries
/// the spent budget across rounds.
pub fn run_ddto_scp(sc: &ScpScenario, cfg: &ScpConfig) -> Result<ScpOutcome, DdtoError> {
    sc.validate()?;
    cfg.validate()?;
    let sys = &sc.system;
    let nx = sys.nx();
    let n = sc.n_targets();
    let mut mm = sc.horizon + 1;
    for r in 1..=n.saturating_sub(1).max(1) {
        mm = mm.div_ceil(2);
        if mm < 2 {
            return Err(DdtoError::invalid(format!(
                "horizon N = {} leaves fewer than 2 nodes in round {r}; {n} targets need N >= {}",
                sc.horizon,
                (1usize << (n - 1)) + 1
            )));
        }
    }
    let mut retained = sc.priority_order();
    let mut z0 = sc.z0.clone();
    let mut m = sc.horizon + 1;
    let mut clock = 0.0;
    let mut node = 1usize;
    let mut trunks = vec![];
    let mut branches = vec![];
    let mut branch_times = BTreeMap::new();
    let mut branch_clock = BTreeMap::new();
    let mut rounds = vec![];
    let mut round = 0;
    let mut prev: Option<(ScpIterate, Vec<usize>)> = None;
    let mut coincided = None;
    loop {
        round += 1;
        m = m.div_ceil(2);
        let sol = match &prev {
            None => scp_solve(sc, &retained, &z0, m, cfg, round)?,
            Some((p, pt)) => {
                match scp_solve_from(sc, &retained, &z0, warm_guess(p, pt, &retained, m, cfg), cfg, round) {
                    Ok(s) => s,
                    Err(e @ DdtoError::NonConvergence { .. }) if cfg.coincide_on_failure => {
                        warn!("{e}; targets {retained:?} branch at the previous branch point");
                        for &j in &retained {
                            let q = pt.iter().position(|&r| r == j).unwrap() + 1;
                            let seg = segment(sys, &p.states[q], &p.inputs[q], node, clock);
                            branches.push(Branch {
                                target: j + 1,
                                branch_time: node,
                                branch_point: seg.states[0].clone(),
                                segment: seg,
                            });
                            branch_times.insert(j + 1, node);
                            branch_clock.insert(j + 1, clock);
                        }
                        coincided = Some((round, e.to_string()));
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let itr = &sol.iterate;
        let t0 = reconstruct_time(&itr.inputs[0])?.final_time();
        if t0 <= 0.0 {
            warn!("round {round}: trunk has zero duration");
        }
        let bnode = node + m - 1;
        trunks.push(segment(sys, &itr.states[0], &itr.inputs[0], node, clock));
        let rejected = *retained.last().unwrap();
        let emit: Vec<usize> = if retained.len() <= 2 { retained.clone() } else { vec![rejected] };
        for &j in &emit {
            let q = retained.iter().position(|&r| r == j).unwrap() + 1;
            let seg = segment(sys, &itr.states[q], &itr.inputs[q], bnode, clock + t0);
            branches.push(Branch { target: j + 1, branch_time: bnode, branch_point: seg.states[0].clone(), segment: seg });
            branch_times.insert(j + 1, bnode);
            branch_clock.insert(j + 1, clock + t0);
        }
        rounds.push(ScpRound {
            retained: retained.iter().map(|j| j + 1).collect(),
            rejected: rejected + 1,
            nodes: m,
            trunk_time: t0,
            iterations: sol.iterations,
            defect: itr.defect,
            trace: sol.trace.clone(),
        });
        z0 = itr.states[0][m - 1][..nx].to_vec();
        clock += t0;
        node = bnode;
        if retained.len() <= 2 {
            break;
        }
        prev = Some((sol.iterate.clone(), retained.clone()));
        retained.pop();
    }
    branches.sort_by_key(|b| b.target);
    let tree = DdtoTree {
        method: "scp".into(),
        priorities: sc.priorities.clone(),
        trunks,
        branches,
        branch_times,
        branch_clock,
    };
    Ok(ScpOutcome { tree, rounds, coincided })
}

/// Dense-sampling check of a continuous-time tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousReport {
    pub samples: usize,
    /// Largest positive part of any scaled path constraint.
    pub max_violation: f64,
    /// Smallest `‖H (r − q)‖` over obstacles (`∞` without obstacles).
    pub min_obstacle_margin: f64,
    pub max_speed: f64,
    pub min_thrust: f64,
    pub max_thrust: f64,
    pub max_pointing_deg: f64,
    /// Largest terminal running cost over all paths.
    pub max_cost: f64,
    pub min_dilation: f64,
    pub max_dilation: f64,
    /// Largest mismatch between an integrated interval and the next node.
    pub max_defect: f64,
}

impl ContinuousReport {
    /// Bounds with relative tolerance `rel` on the physical limits.
    pub fn within(&self, sys: &Quadrotor, l_max: f64, s_range: (f64, f64), rel: f64) -> bool {
        self.min_obstacle_margin >= 1.0 - rel
            && self.max_speed <= sys.v_max * (1.0 + rel)
            && self.min_thrust >= sys.u_min * (1.0 - rel)
            && self.max_thrust <= sys.u_max * (1.0 + rel)
            && self.max_pointing_deg <= sys.delta_max.to_degrees() * (1.0 + rel)
            && self.max_cost <= l_max * (1.0 + rel)
            && self.min_dilation >= s_range.0
            && self.max_dilation <= s_range.1
    }
}

pub fn validate_continuous(
    tree: &DdtoTree,
    sys: &Quadrotor,
    samples_per_interval: usize,
    substeps: usize,
) -> Result<ContinuousReport, DdtoError> {
    let samples = samples_per_interval.max(1);
    let mut rep = ContinuousReport {
        samples,
        max_violation: 0.0,
        min_obstacle_margin: f64::INFINITY,
        max_speed: 0.0,
        min_thrust: f64::INFINITY,
        max_thrust: 0.0,
        max_pointing_deg: 0.0,
        max_cost: f64::NEG_INFINITY,
        min_dilation: f64::INFINITY,
        max_dilation: 0.0,
        max_defect: 0.0,
    };
    let nx = sys.nx();
    let segs = tree.trunks.iter().chain(tree.branches.iter().map(|b| &b.segment));
    for seg in segs {
        let times = seg.times.as_ref().ok_or_else(|| DdtoError::invalid("segment without physical times"))?;
        for s in seg.dilation.iter().flatten() {
            rep.min_dilation = rep.min_dilation.min(*s);
            rep.max_dilation = rep.max_dilation.max(*s);
        }
        for (k, u) in seg.inputs.iter().enumerate() {
            let dt = (times[k + 1] - times[k]) / samples as f64;
            let thrust = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            rep.min_thrust = rep.min_thrust.min(thrust);
            rep.max_thrust = rep.max_thrust.max(thrust);
            let eu: f64 = sys.axis.iter().zip(u).map(|(a, b)| a * b).sum();
            if thrust > 0.0 {
                rep.max_pointing_deg = rep.max_pointing_deg.max((eu / thrust).clamp(-1.0, 1.0).acos().to_degrees());
            }
            let mut x = seg.states[k].clone();
            for i in 0..=samples {
                if i > 0 {
                    x = rk4(|xx| sys.field(xx, u), &x, dt, substeps)?;
                }
                let g = sys.g(&x, u);
                rep.max_violation = rep.max_violation.max(g.iter().fold(0.0, |a, v| a.max(*v)));
                for o in &sys.obstacles {
                    let mm = o.map(&x[..3]);
                    rep.min_obstacle_margin =
                        rep.min_obstacle_margin.min((mm[0] * mm[0] + mm[1] * mm[1] + mm[2] * mm[2]).sqrt());
                }
                rep.max_speed = rep.max_speed.max((x[3] * x[3] + x[4] * x[4] + x[5] * x[5]).sqrt());
            }
            let next = &seg.states[k + 1];
            for i in 0..nx {
                rep.max_defect = rep.max_defect.max((x[i] - next[i]).abs());
            }
        }
    }
    for p in tree.paths().values() {
        let last = p.states.last().unwrap();
        rep.max_cost = rep.max_cost.max(last[nx - 1]);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_map_examples() {
        let m = TimeMap::from_dilation(&[2.0]).unwrap();
        assert_eq!(m.final_time(), 2.0);
        assert!((m.t(0.3) - 0.6).abs() < 1e-15);
        let m = TimeMap::from_dilation(&[1.0, 3.0, 1.0, 3.0]).unwrap();
        assert!((m.final_time() - 2.0).abs() < 1e-15);
        assert!(TimeMap::from_dilation(&[1.0, 0.0]).is_err());
        let (grid, vals) = m.resample(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]], 0.3);
        for (k, t) in m.knot_times().iter().enumerate() {
            let i = grid.iter().position(|g| g == t).unwrap();
            assert_eq!(vals[i][0], k as f64);
        }
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let cfg = ScpConfig { epsilon: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
