//! Operator-splitting backend.
//!
//! Alternates a linear solve onto the affine set `{A x + s = b}` with a
//! projection onto the cone product, with over-relaxation.  The KKT matrix
//! depends only on fixed step sizes and is factored once.  Infeasibility is
//! detected from the normalized differences of successive iterates.

use crate::cones::ConeLayout;
use crate::error::ConicError;
use crate::ldl::SymmetricSystem;
use crate::prepare::{fill_residuals, Prepared};
use crate::program::{ConicProgram, CscMatrix};
use crate::{Backend, SolveResult, SolveStatus, Settings};

/// Splitting backend with fixed step sizes.
#[derive(Debug, Clone, Copy)]
pub struct Admm {
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Residuals are checked every this many iterations.
    pub check_every: usize,
}

impl Default for Admm {
    fn default() -> Self {
        Admm { rho: 0.1, sigma: 1e-6, alpha: 1.6, check_every: 25 }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Stacks `[A; G]` into one matrix.
fn stack(a: &CscMatrix, g: &CscMatrix) -> CscMatrix {
    let mut t = a.triplets();
    t.extend(g.triplets().into_iter().map(|(r, c, v)| (r + a.nrows, c, v)));
    CscMatrix::from_triplets(a.nrows + g.nrows, a.ncols, &t)
}

impl Backend for Admm {
    fn solve(&self, prog: &ConicProgram, st: &Settings) -> Result<SolveResult, ConicError> {
        prog.validate()?;
        let pd = Prepared::new(prog, st.equilibrate);
        let n = pd.n;
        let p = pd.a.nrows;
        let k = stack(&pd.a, &pd.g);
        let m = k.nrows;
        let mut b = pd.b.clone();
        b.extend_from_slice(&pd.h);
        let c = &pd.c;
        let layout: &ConeLayout = &pd.layout;

        let rho: Vec<f64> = (0..m).map(|i| if i < p { self.rho * 1e3 } else { self.rho }).collect();

        let mut entries = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            vals.push(self.sigma);
        }
        for (r, col, v) in k.triplets() {
            entries.push((col, n + r));
            vals.push(v);
        }
        for (i, r) in rho.iter().enumerate() {
            entries.push((n + i, n + i));
            vals.push(-1.0 / r);
        }
        let mut signs = vec![1.0; n + m];
        signs[n..].iter_mut().for_each(|s| *s = -1.0);
        let mut sys = SymmetricSystem::new(n + m, &entries, signs)?;
        sys.set_values(&vals);
        sys.factor(1e-14, 1e-14)?;

        let project = |v: &mut [f64]| {
            v[..p].iter_mut().for_each(|x| *x = 0.0);
            layout.project(&mut v[p..]);
        };

        let mut x = vec![0.0; n];
        let mut s = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut rhs = vec![0.0; n + m];
        let mut status = SolveStatus::MaxIterations;
        let mut cert = 0.0;
        let mut iters = 0;
        let bnorm = inf_norm(&b);
        let cnorm = inf_norm(c);

        for it in 1..=st.max_iter {
            iters = it;
            let x_prev = x.clone();
            let y_prev = y.clone();
            for i in 0..n {
                rhs[i] = self.sigma * x[i] - c[i];
            }
            for i in 0..m {
                rhs[n + i] = b[i] - s[i] + y[i] / rho[i];
            }
            let sol = sys.solve(&rhs);
            let (xt, nu) = sol.split_at(n);
            let a = self.alpha;
            let mut s_rel = vec![0.0; m];
            for i in 0..m {
                let st_i = s[i] - (nu[i] + y[i]) / rho[i];
                s_rel[i] = a * st_i + (1.0 - a) * s[i];
            }
            for i in 0..n {
                x[i] = a * xt[i] + (1.0 - a) * x[i];
            }
            let mut s_new: Vec<f64> = (0..m).map(|i| s_rel[i] + y[i] / rho[i]).collect();
            project(&mut s_new);
            for i in 0..m {
                y[i] += rho[i] * (s_rel[i] - s_new[i]);
            }
            s = s_new;

            if it % self.check_every != 0 && it != st.max_iter {
                continue;
            }
            // convergence
            let mut ax = vec![0.0; m];
            k.gemv(&x, &mut ax);
            let rp: Vec<f64> = (0..m).map(|i| ax[i] + s[i] - b[i]).collect();
            let mut aty = vec![0.0; n];
            k.gemv_t(&y, &mut aty);
            let rd: Vec<f64> = (0..n).map(|i| c[i] - aty[i]).collect();
            let pres = inf_norm(&rp);
            let dres = inf_norm(&rd);
            let pobj = dot(c, &x);
            let dobj = dot(&b, &y);
            let gap = (pobj - dobj).abs();
            log::trace!("admm {it:6} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e}");
            if pres <= st.tol * (1.0 + bnorm.max(inf_norm(&ax)).max(inf_norm(&s)))
                && dres <= st.tol * (1.0 + cnorm.max(inf_norm(&aty)))
                && gap <= st.tol * (1.0 + pobj.abs().max(dobj.abs()))
            {
                status = SolveStatus::Optimal;
                break;
            }
            // primal infeasibility: δz = −δy with Kᵀδz = 0, bᵀδz < 0, δz ∈ K
            let dz: Vec<f64> = (0..m).map(|i| -(y[i] - y_prev[i])).collect();
            let dzn = inf_norm(&dz);
            if dzn > 0.0 {
                let mut ktdz = vec![0.0; n];
                k.gemv_t(&dz, &mut ktdz);
                let mut proj = dz[p..].to_vec();
                layout.project(&mut proj);
                let cone_dist = inf_norm(&proj.iter().zip(&dz[p..]).map(|(a, b)| a - b).collect::<Vec<_>>());
                let r = inf_norm(&ktdz).max(cone_dist) / dzn;
                if dot(&b, &dz) / dzn < -st.tol_infeas && r <= st.tol_infeas {
                    status = SolveStatus::Infeasible;
                    cert = r;
                    y = dz.iter().map(|v| -v / (-dot(&b, &dz))).collect();
                    break;
                }
            }
            // dual infeasibility: Kδx + ds = 0 with ds ∈ K, cᵀδx < 0
            let dx: Vec<f64> = (0..n).map(|i| x[i] - x_prev[i]).collect();
            let dxn = inf_norm(&dx);
            if dxn > 0.0 {
                let mut kdx = vec![0.0; m];
                k.gemv(&dx, &mut kdx);
                let mut ds: Vec<f64> = kdx.iter().map(|v| -v).collect();
                let before = ds.clone();
                project(&mut ds);
                let r = inf_norm(&ds.iter().zip(&before).map(|(a, b)| a - b).collect::<Vec<_>>()) / dxn;
                if dot(c, &dx) / dxn < -st.tol_infeas && r <= st.tol_infeas {
                    status = SolveStatus::Unbounded;
                    cert = r;
                    x = dx.iter().map(|v| v / (-dot(c, &dx))).collect();
                    break;
                }
            }
        }

        // z = −y in the convention Gᵀz + c = 0
        let z_all: Vec<f64> = y.iter().map(|v| -v).collect();
        let (ye, zc) = z_all.split_at(p);
        let (xo, so, zo) = pd.unscale(prog, &x, ye, &s[p..], zc);
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
