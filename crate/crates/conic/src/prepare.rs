//! Reordering and equilibration shared by the backends.
//!
//! Rows of `G` are split into equalities (`A x = b`) and cone rows (`G x + s = h`)
//! laid out as `[orthant | soc blocks]`.  Ruiz equilibration then scales
//! columns by `D` and rows by `E` (one factor per second-order block), and the
//! objective by `σ`.

use crate::cones::ConeLayout;
use crate::program::{ConeKind, ConicProgram, CscMatrix};
use crate::SolveResult;

#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub n: usize,
    pub c: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub g: CscMatrix,
    pub h: Vec<f64>,
    pub layout: ConeLayout,
    pub eq_rows: Vec<usize>,
    pub cone_rows: Vec<usize>,
    pub dcol: Vec<f64>,
    pub erow_a: Vec<f64>,
    pub erow_g: Vec<f64>,
    pub cscale: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl Prepared {
    pub fn new(prog: &ConicProgram, equilibrate: bool) -> Prepared {
        let mut eq_rows = Vec::new();
        let mut nonneg_rows = Vec::new();
        let mut soc_rows = Vec::new();
        let mut soc_dims = Vec::new();
        let mut off = 0;
        for k in &prog.cones {
            let rows = off..off + k.dim;
            match k.kind {
                ConeKind::Zero => eq_rows.extend(rows),
                ConeKind::Nonnegative => nonneg_rows.extend(rows),
                ConeKind::SecondOrder => {
                    soc_rows.extend(rows);
                    soc_dims.push(k.dim);
                }
            }
            off += k.dim;
        }
        let layout = ConeLayout { nonneg: nonneg_rows.len(), soc: soc_dims };
        let mut cone_rows = nonneg_rows;
        cone_rows.extend(soc_rows);
        let a = prog.g.select_rows(&eq_rows);
        let b: Vec<f64> = eq_rows.iter().map(|&r| prog.h[r]).collect();
        let g = prog.g.select_rows(&cone_rows);
        let h: Vec<f64> = cone_rows.iter().map(|&r| prog.h[r]).collect();
        let mut p = Prepared {
            n: prog.n,
            c: prog.c.clone(),
            a,
            b,
            g,
            h,
            layout,
            eq_rows,
            cone_rows,
            dcol: vec![1.0; prog.n],
            erow_a: vec![],
            erow_g: vec![],
            cscale: 1.0,
        };
        p.erow_a = vec![1.0; p.a.nrows];
        p.erow_g = vec![1.0; p.g.nrows];
        if equilibrate {
            p.ruiz(25);
        }
        p
    }

    fn ruiz(&mut self, passes: usize) {
        let n = self.n;
        let block_of: Vec<usize> = {
            // group index for every cone row: orthant rows are singletons
            let mut v = Vec::with_capacity(self.g.nrows);
            let mut gid = 0;
            for _ in 0..self.layout.nonneg {
                v.push(gid);
                gid += 1;
            }
            for &d in &self.layout.soc {
                for _ in 0..d {
                    v.push(gid);
                }
                gid += 1;
            }
            v
        };
        let ngroups = block_of.last().map(|g| g + 1).unwrap_or(0);
        for _ in 0..passes {
            let mut colmax = vec![0.0f64; n];
            let mut rowmax_a = vec![0.0f64; self.a.nrows];
            let mut grpmax = vec![0.0f64; ngroups];
            for j in 0..n {
                for p in self.a.colptr[j]..self.a.colptr[j + 1] {
                    let v = self.a.nzval[p].abs();
                    colmax[j] = colmax[j].max(v);
                    rowmax_a[self.a.rowval[p]] = rowmax_a[self.a.rowval[p]].max(v);
                }
                for p in self.g.colptr[j]..self.g.colptr[j + 1] {
                    let v = self.g.nzval[p].abs();
                    colmax[j] = colmax[j].max(v);
                    let gi = block_of[self.g.rowval[p]];
                    grpmax[gi] = grpmax[gi].max(v);
                }
            }
            let fac = |m: f64| if m > 0.0 { 1.0 / m.sqrt() } else { 1.0 };
            let dc: Vec<f64> = colmax.iter().map(|&m| fac(m)).collect();
            let ea: Vec<f64> = rowmax_a.iter().map(|&m| fac(m)).collect();
            let eg: Vec<f64> = grpmax.iter().map(|&m| fac(m)).collect();
            let mut done = true;
            for j in 0..n {
                let nd = (self.dcol[j] * dc[j]).clamp(1e-4, 1e4);
                let f = nd / self.dcol[j];
                if (f - 1.0).abs() > 1e-3 {
                    done = false;
                }
                self.dcol[j] = nd;
                for p in self.a.colptr[j]..self.a.colptr[j + 1] {
                    self.a.nzval[p] *= f;
                }
                for p in self.g.colptr[j]..self.g.colptr[j + 1] {
                    self.g.nzval[p] *= f;
                }
                self.c[j] *= f;
            }
            let mut fa = vec![1.0; self.a.nrows];
            for i in 0..self.a.nrows {
                let ne = (self.erow_a[i] * ea[i]).clamp(1e-4, 1e4);
                fa[i] = ne / self.erow_a[i];
                self.erow_a[i] = ne;
                self.b[i] *= fa[i];
            }
            let mut fg = vec![1.0; self.g.nrows];
            for i in 0..self.g.nrows {
                let gi = block_of[i];
                let ne = (self.erow_g[i] * eg[gi]).clamp(1e-4, 1e4);
                fg[i] = ne / self.erow_g[i];
                self.erow_g[i] = ne;
                self.h[i] *= fg[i];
            }
            if fa.iter().chain(&fg).any(|f| (f - 1.0).abs() > 1e-3) {
                done = false;
            }
            for p in 0..self.a.nzval.len() {
                self.a.nzval[p] *= fa[self.a.rowval[p]];
            }
            for p in 0..self.g.nzval.len() {
                self.g.nzval[p] *= fg[self.g.rowval[p]];
            }
            if done {
                break;
            }
        }
        let cn = inf_norm(&self.c);
        if cn > 0.0 {
            self.cscale = (1.0 / cn).clamp(1e-4, 1e4);
            self.c.iter_mut().for_each(|v| *v *= self.cscale);
        }
    }

    /// Maps a scaled iterate back to the original program and fills the
    /// residual fields.
    pub fn unscale(
        &self,
        prog: &ConicProgram,
        x: &[f64],
        y: &[f64],
        s: &[f64],
        z: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = prog.m();
        let xo: Vec<f64> = x.iter().zip(&self.dcol).map(|(v, d)| v * d).collect();
        let mut so = vec![0.0; m];
        let mut zo = vec![0.0; m];
        for (k, &r) in self.eq_rows.iter().enumerate() {
            zo[r] = y[k] * self.erow_a[k] / self.cscale;
        }
        for (k, &r) in self.cone_rows.iter().enumerate() {
            so[r] = s[k] / self.erow_g[k];
            zo[r] = z[k] * self.erow_g[k] / self.cscale;
        }
        (xo, so, zo)
    }
}

/// Residuals of `(x, s, z)` on the original data.
pub(crate) fn fill_residuals(prog: &ConicProgram, res: &mut SolveResult) {
    let mut r = vec![0.0; prog.m()];
    prog.g.gemv(&res.x, &mut r);
    for i in 0..prog.m() {
        r[i] += res.s[i] - prog.h[i];
    }
    res.primal_residual = inf_norm(&r);
    let mut d = prog.c.clone();
    prog.g.gemv_t(&res.z, &mut d);
    res.dual_residual = inf_norm(&d);
    let pobj: f64 = prog.c.iter().zip(&res.x).map(|(a, b)| a * b).sum();
    let dobj: f64 = -prog.h.iter().zip(&res.z).map(|(a, b)| a * b).sum::<f64>();
    res.objective = pobj;
    res.gap = (pobj - dobj).abs();
}
