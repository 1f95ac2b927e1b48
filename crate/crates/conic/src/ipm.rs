//! Primal–dual interior-point method on the homogeneous self-dual embedding.
//!
//! Mehrotra predictor–corrector steps with Nesterov–Todd scaling.  Each
//! iteration factors the quasi-definite system
//!
//! ```text
//! [ 0   Aᵀ   Gᵀ  ]
//! [ A   0    0   ]
//! [ G   0   −W²  ]
//! ```
//!
//! once (with a small static regularization and iterative refinement) and
//! solves it three times.  Infeasibility is read off the embedding: when
//! `κ > τ` and `(y, z)` normalized by `−(bᵀy + hᵀz)` nearly satisfies
//! `Aᵀy + Gᵀz = 0`, the problem is declared infeasible.

use crate::cones::{ConeLayout, NtScaling};
use crate::error::ConicError;
use crate::ldl::SymmetricSystem;
use crate::prepare::{fill_residuals, Prepared};
use crate::program::{ConicProgram, CscMatrix};
use crate::{Backend, SolveResult, SolveStatus, Settings};

/// Interior-point backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ipm;

const STATIC_REG: f64 = 1e-8;
const STATIC_PROP: f64 = f64::EPSILON;
const LOOSE_FACTOR: f64 = 100.0;
const REFINE_STEPS: usize = 8;
const DYN_EPS: f64 = 1e-13;
const DYN_DELTA: f64 = 2e-7;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// KKT matrix with slots: x-diagonal, y-diagonal, A, G, z-orthant, z-soc.
struct Kkt {
    n: usize,
    p: usize,
    m: usize,
    sys: SymmetricSystem,
    vals_true: Vec<f64>,
    vals_reg: Vec<f64>,
    z_lp_slot: usize,
    z_soc_slots: Vec<(usize, usize, usize)>, // (first slot, offset, dim)
}

impl Kkt {
    fn new(a: &CscMatrix, g: &CscMatrix, layout: &ConeLayout) -> Result<Kkt, ConicError> {
        let n = a.ncols;
        let p = a.nrows;
        let m = g.nrows;
        let dim = n + p + m;
        let mut entries = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            vals.push(0.0);
        }
        for i in 0..p {
            entries.push((n + i, n + i));
            vals.push(0.0);
        }
        for (r, c, v) in a.triplets() {
            entries.push((c, n + r));
            vals.push(v);
        }
        for (r, c, v) in g.triplets() {
            entries.push((c, n + p + r));
            vals.push(v);
        }
        let z_lp_slot = entries.len();
        for i in 0..layout.nonneg {
            entries.push((n + p + i, n + p + i));
            vals.push(-1.0);
        }
        let mut z_soc_slots = Vec::new();
        for (o, d) in layout.soc_blocks() {
            z_soc_slots.push((entries.len(), o, d));
            for i in 0..d {
                for j in i..d {
                    entries.push((n + p + o + i, n + p + o + j));
                    vals.push(if i == j { -1.0 } else { 0.0 });
                }
            }
        }
        let mut signs = vec![1.0; dim];
        for s in signs.iter_mut().skip(n) {
            *s = -1.0;
        }
        let sys = SymmetricSystem::new(dim, &entries, signs)?;
        let vals_reg = vals.clone();
        Ok(Kkt { n, p, m, sys, vals_true: vals, vals_reg, z_lp_slot, z_soc_slots })
    }

    /// Loads `−W²` into the z-block and factors.
    fn update(&mut self, w: Option<&NtScaling>) -> Result<(), ConicError> {
        match w {
            Some(w) => {
                let diag = w.w2_diag();
                for (i, v) in diag.iter().enumerate() {
                    self.vals_true[self.z_lp_slot + i] = -v;
                    self.vals_reg[self.z_lp_slot + i] = -v;
                }
                let blocks = w.w2_blocks();
                for (&(first, _, d), blk) in self.z_soc_slots.iter().zip(&blocks) {
                    let mut s = first;
                    for i in 0..d {
                        for j in i..d {
                            self.vals_true[s] = -blk[i * d + j];
                            self.vals_reg[s] = -blk[i * d + j];
                            s += 1;
                        }
                    }
                }
            }
            None => {
                for i in 0..(self.m - self.z_soc_slots.iter().map(|t| t.2).sum::<usize>()) {
                    self.vals_true[self.z_lp_slot + i] = -1.0;
                    self.vals_reg[self.z_lp_slot + i] = -1.0;
                }
                for &(first, _, d) in &self.z_soc_slots {
                    let mut s = first;
                    for i in 0..d {
                        for j in i..d {
                            let v = if i == j { -1.0 } else { 0.0 };
                            self.vals_true[s] = v;
                            self.vals_reg[s] = v;
                            s += 1;
                        }
                    }
                }
            }
        }
        // static regularization, scaled with the largest diagonal entry
        let zdiag = self.z_diag_slots();
        let big = zdiag.iter().fold(1.0f64, |a, &k| a.max(self.vals_true[k].abs()));
        let reg = STATIC_REG + STATIC_PROP * big;
        for k in 0..self.n {
            self.vals_reg[k] = self.vals_true[k] + reg;
        }
        for k in self.n..self.n + self.p {
            self.vals_reg[k] = self.vals_true[k] - reg;
        }
        self.sys.set_values(&self.vals_reg);
        self.sys.factor(DYN_EPS, DYN_DELTA)?;
        Ok(())
    }

    fn z_diag_slots(&self) -> Vec<usize> {
        let soc: usize = self.z_soc_slots.iter().map(|t| t.2).sum();
        let mut out: Vec<usize> = (self.z_lp_slot..self.z_lp_slot + self.m - soc).collect();
        for &(first, _, d) in &self.z_soc_slots {
            let mut s = first;
            for i in 0..d {
                out.push(s);
                s += d - i;
            }
        }
        out
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.sys.solve(rhs);
        let bn = inf_norm(rhs);
        for _ in 0..REFINE_STEPS {
            let kx = self.sys.multiply(&self.vals_true, &x);
            let r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
            if inf_norm(&r) <= 1e-14 * (1.0 + bn) {
                break;
            }
            let dx = self.sys.solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        x
    }

    fn split(&self, v: Vec<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = v[..self.n].to_vec();
        let y = v[self.n..self.n + self.p].to_vec();
        let z = v[self.n + self.p..].to_vec();
        (x, y, z)
    }

    fn join(&self, a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n + self.p + self.m);
        v.extend_from_slice(a);
        v.extend_from_slice(b);
        v.extend_from_slice(c);
        v
    }
}

struct Step {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkap: f64,
}

impl Backend for Ipm {
    fn solve(&self, prog: &ConicProgram, settings: &Settings) -> Result<SolveResult, ConicError> {
        prog.validate()?;
        let pd = Prepared::new(prog, settings.equilibrate);
        let (x, y, s, z, status, iters, cert) = run(&pd, settings)?;
        let (xo, so, zo) = pd.unscale(prog, &x, &y, &s, &z);
        let mut res = SolveResult {
            status,
            x: xo,
            s: so,
            z: zo,
            objective: 0.0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            gap: 0.0,
            certificate_residual: cert,
            iterations: iters,
        };
        fill_residuals(prog, &mut res);
        Ok(res)
    }
}

type RunOut = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, SolveStatus, usize, f64);

fn run(pd: &Prepared, st: &Settings) -> Result<RunOut, ConicError> {
    let n = pd.n;
    let p = pd.a.nrows;
    let m = pd.g.nrows;
    let layout = &pd.layout;
    let (a, g, b, h, c) = (&pd.a, &pd.g, &pd.b, &pd.h, &pd.c);
    let mut kkt = Kkt::new(a, g, layout)?;
    let deg = layout.degree() as f64;

    let matvec_a = |x: &[f64]| {
        let mut out = vec![0.0; p];
        a.gemv(x, &mut out);
        out
    };
    let matvec_g = |x: &[f64]| {
        let mut out = vec![0.0; m];
        g.gemv(x, &mut out);
        out
    };
    let tmul = |y: &[f64], z: &[f64]| {
        let mut out = vec![0.0; n];
        a.gemv_t(y, &mut out);
        g.gemv_t(z, &mut out);
        out
    };

    // initial point
    kkt.update(None)?;
    let zeros_n = vec![0.0; n];
    let zeros_p = vec![0.0; p];
    let zeros_m = vec![0.0; m];
    let (x0, _, v0) = kkt.split(kkt.solve(&kkt.join(&zeros_n, b, h)));
    let mut x = x0;
    let mut s: Vec<f64> = v0.iter().map(|v| -v).collect();
    layout.shift_interior(&mut s);
    let negc: Vec<f64> = c.iter().map(|v| -v).collect();
    let (_, y0, z0) = kkt.split(kkt.solve(&kkt.join(&negc, &zeros_p, &zeros_m)));
    let mut y = y0;
    let mut z = z0;
    layout.shift_interior(&mut z);
    let mut tau = 1.0;
    let mut kap = 1.0;

    let bnorm = inf_norm(b).max(inf_norm(h));
    let cnorm = inf_norm(c);
    let mut status = SolveStatus::MaxIterations;
    let mut cert = 0.0;
    let mut iters = 0;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64)> = None;
    let mut small_steps = 0;

    for it in 0..=st.max_iter {
        iters = it;
        // residuals
        let ax = matvec_a(&x);
        let gx = matvec_g(&x);
        let aty_gtz = tmul(&y, &z);
        let rx: Vec<f64> = (0..n).map(|i| aty_gtz[i] + c[i] * tau).collect();
        let ry: Vec<f64> = (0..p).map(|i| ax[i] - b[i] * tau).collect();
        let rz: Vec<f64> = (0..m).map(|i| s[i] + gx[i] - h[i] * tau).collect();
        let cx = dot(c, &x);
        let by_hz = dot(b, &y) + dot(h, &z);
        let rt = kap + cx + by_hz;

        let pres = inf_norm(&ry).max(inf_norm(&rz)) / tau;
        let dres = inf_norm(&rx) / tau;
        let pcost = cx / tau;
        let dcost = -by_hz / tau;
        let sz = dot(&s, &z);
        let gap_ok = {
            let g1 = (pcost - dcost).abs();
            let comp = sz / (tau * tau);
            let scale = 1.0 + pcost.abs().min(dcost.abs());
            g1 <= st.tol * scale.max(1.0) * 10.0 && comp <= st.tol * scale
        };
        let pres_ok = pres <= st.tol * (1.0 + bnorm);
        let dres_ok = dres <= st.tol * (1.0 + cnorm);
        log::trace!(
            "ipm {it:3} pres {pres:.2e} dres {dres:.2e} pcost {pcost:+.6e} dcost {dcost:+.6e} tau {tau:.2e} kap {kap:.2e}"
        );
        if !(pres.is_finite() && dres.is_finite() && tau.is_finite()) {
            break;
        }
        if pres_ok && dres_ok && gap_ok {
            status = SolveStatus::Optimal;
            break;
        }
        // keep the best-looking iterate for an indeterminate exit
        let gap_rel = {
            let scale = 1.0 + pcost.abs().min(dcost.abs());
            ((pcost - dcost).abs() / (10.0 * scale)).max(sz / (tau * tau) / scale)
        };
        let merit = (pres / (1.0 + bnorm)).max(dres / (1.0 + cnorm)).max(gap_rel);
        if best.as_ref().map(|b| merit < b.0).unwrap_or(true) {
            best = Some((merit, x.clone(), y.clone(), s.clone(), z.clone(), tau));
        }
        if kap > tau {
            if by_hz < 0.0 {
                let t = -by_hz;
                let r = inf_norm(&aty_gtz) / t;
                if r <= st.tol_infeas {
                    status = SolveStatus::Infeasible;
                    cert = r;
                    break;
                }
            }
            if cx < 0.0 {
                let t = -cx;
                let r = inf_norm(&ax).max(inf_norm(&(0..m).map(|i| gx[i] + s[i]).collect::<Vec<_>>())) / t;
                if r <= st.tol_infeas {
                    status = SolveStatus::Unbounded;
                    cert = r;
                    break;
                }
            }
        }
        if it == st.max_iter {
            break;
        }

        let w = match NtScaling::new(layout, &s, &z) {
            Some(w) => w,
            None => break,
        };
        if let Err(e) = kkt.update(Some(&w)) {
            log::debug!("ipm {it}: {e}; stopping");
            break;
        }
        let lambda = w.lambda.clone();
        let (dx2, dy2, dz2) = kkt.split(kkt.solve(&kkt.join(&negc, b, h)));
        let den = dot(c, &dx2) + dot(b, &dy2) + dot(h, &dz2) - kap / tau;

        let direction = |eta: f64, ds_rhs: &[f64], dk_rhs: f64| -> Step {
            let q = w.apply_w(&layout.jordan_div(&lambda, ds_rhs));
            let r1: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let r2: Vec<f64> = ry.iter().map(|v| -eta * v).collect();
            let r3: Vec<f64> = (0..m).map(|i| -eta * rz[i] - q[i]).collect();
            let (dx1, dy1, dz1) = kkt.split(kkt.solve(&kkt.join(&r1, &r2, &r3)));
            let num = -eta * rt - dk_rhs / tau - (dot(c, &dx1) + dot(b, &dy1) + dot(h, &dz1));
            let dtau = num / den;
            let dx: Vec<f64> = (0..n).map(|i| dx1[i] + dtau * dx2[i]).collect();
            let dy: Vec<f64> = (0..p).map(|i| dy1[i] + dtau * dy2[i]).collect();
            let dz: Vec<f64> = (0..m).map(|i| dz1[i] + dtau * dz2[i]).collect();
            let wdz = w.apply_w(&dz);
            let wwdz = w.apply_w(&wdz);
            let ds: Vec<f64> = (0..m).map(|i| q[i] - wwdz[i]).collect();
            let dkap = (dk_rhs - kap * dtau) / tau;
            Step { dx, dy, dz, ds, dtau, dkap }
        };
        let step_len = |d: &Step| -> f64 {
            let mut a = layout.max_step(&s, &d.ds).min(layout.max_step(&z, &d.dz));
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkap < 0.0 {
                a = a.min(-kap / d.dkap);
            }
            a
        };

        let mu = (sz + tau * kap) / (deg + 1.0);
        // predictor
        let ll = layout.jordan(&lambda, &lambda);
        let ds_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
        let aff = direction(1.0, &ds_aff, -tau * kap);
        let alpha_aff = step_len(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);
        // corrector
        let dsa = w.apply_winv(&aff.ds);
        let dza = w.apply_w(&aff.dz);
        let corr = layout.jordan(&dsa, &dza);
        let e = layout.identity();
        let ds_cc: Vec<f64> = (0..m).map(|i| -ll[i] - corr[i] + sigma * mu * e[i]).collect();
        let dk_cc = -tau * kap - aff.dtau * aff.dkap + sigma * mu;
        let d = direction(1.0 - sigma, &ds_cc, dk_cc);
        let alpha = (0.99 * step_len(&d)).min(1.0);
        if alpha < 1e-10 {
            small_steps += 1;
            if small_steps > 3 {
                break;
            }
        } else {
            small_steps = 0;
        }
        for i in 0..n {
            x[i] += alpha * d.dx[i];
        }
        for i in 0..p {
            y[i] += alpha * d.dy[i];
        }
        for i in 0..m {
            s[i] += alpha * d.ds[i];
            z[i] += alpha * d.dz[i];
        }
        tau += alpha * d.dtau;
        kap += alpha * d.dkap;
        if !(tau > 0.0 && kap > 0.0) {
            break;
        }
    }

    if status == SolveStatus::MaxIterations {
        if let Some((merit, bx, by, bs, bz, bt)) = best {
            // stalled close to optimal: accept at reduced accuracy
            if merit <= LOOSE_FACTOR * st.tol {
                log::debug!("ipm: accepting iterate at reduced accuracy ({merit:.2e})");
                status = SolveStatus::Optimal;
            }
            x = bx;
            y = by;
            s = bs;
            z = bz;
            tau = bt;
        }
    }
    let scale = if status == SolveStatus::Infeasible {
        let t = -(dot(b, &y) + dot(h, &z));
        x.iter_mut().for_each(|v| *v = 0.0);
        s.iter_mut().for_each(|v| *v = 0.0);
        1.0 / t
    } else if status == SolveStatus::Unbounded {
        let t = -dot(c, &x);
        y.iter_mut().for_each(|v| *v = 0.0);
        z.iter_mut().for_each(|v| *v = 0.0);
        1.0 / t
    } else {
        1.0 / tau
    };
    for v in x.iter_mut().chain(y.iter_mut()).chain(s.iter_mut()).chain(z.iter_mut()) {
        *v *= scale;
    }
    Ok((x, y, s, z, status, iters, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{LinExpr, ProgramBuilder};

    #[test]
    fn lp_with_equality() {
        // min x + 2y  s.t. x + y = 1, x, y ≥ 0  → (1, 0), value 1
        let mut b = ProgramBuilder::new();
        let v = b.add_vars("v", 2);
        b.add_cost(v.start, 1.0);
        b.add_cost(v.start + 1, 2.0);
        b.eq(LinExpr::var(0).add_term(1, 1.0).add_const(-1.0));
        b.nonneg(LinExpr::var(0));
        b.nonneg(LinExpr::var(1));
        let prog = b.build().unwrap();
        let r = Ipm.solve(&prog, &Settings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 1.0).abs() < 1e-7, "{}", r.objective);
        assert!((r.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_lp() {
        let mut b = ProgramBuilder::new();
        b.add_vars("x", 1);
        b.nonneg(LinExpr::var(0).add_const(-1.0));
        b.nonneg(LinExpr::term(0, -1.0));
        let r = Ipm.solve(&b.build().unwrap(), &Settings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_lp() {
        let mut b = ProgramBuilder::new();
        b.add_vars("x", 1);
        b.add_cost(0, -1.0);
        b.nonneg(LinExpr::var(0));
        let r = Ipm.solve(&b.build().unwrap(), &Settings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Unbounded);
    }
}
