//! Problem data: `minimize cᵀx  subject to  Gx + s = h,  s ∈ K`.
//!
//! `K` is an ordered product of zero cones, nonnegative orthants and
//! second-order cones `{(t, v) : ‖v‖₂ ≤ t}`.  Programs are usually put together
//! with [`ProgramBuilder`], which accepts constraints as "affine expression lies
//! in cone" and keeps a label → index-range map for reading results back.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::ops::Range;

use crate::error::ConicError;

/// Cone family of one block of rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConeKind {
    Zero,
    Nonnegative,
    SecondOrder,
}

impl ConeKind {
    fn label(self) -> &'static str {
        match self {
            ConeKind::Zero => "zero",
            ConeKind::Nonnegative => "nonneg",
            ConeKind::SecondOrder => "soc",
        }
    }
}

/// One cone of the product, covering `dim` consecutive rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConeSpec {
    pub kind: ConeKind,
    pub dim: usize,
}

impl ConeSpec {
    pub fn zero(dim: usize) -> Self {
        ConeSpec { kind: ConeKind::Zero, dim }
    }
    pub fn nonneg(dim: usize) -> Self {
        ConeSpec { kind: ConeKind::Nonnegative, dim }
    }
    pub fn soc(dim: usize) -> Self {
        ConeSpec { kind: ConeKind::SecondOrder, dim }
    }
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub colptr: Vec<usize>,
    pub rowval: Vec<usize>,
    pub nzval: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CscMatrix { nrows, ncols, colptr: vec![0; ncols + 1], rowval: vec![], nzval: vec![] }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = trip.to_vec();
        sorted.sort_by_key(|t| (t.1, t.0));
        let mut colptr = vec![0usize; ncols + 1];
        let mut rowval = Vec::with_capacity(sorted.len());
        let mut nzval: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        let mut cols = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *nzval.last_mut().unwrap() += v;
            } else {
                rowval.push(r);
                nzval.push(v);
                cols.push(c);
                last = Some((r, c));
            }
        }
        let mut keep_r = Vec::with_capacity(rowval.len());
        let mut keep_v = Vec::with_capacity(rowval.len());
        for ((r, v), c) in rowval.into_iter().zip(nzval).zip(cols) {
            if v != 0.0 {
                keep_r.push(r);
                keep_v.push(v);
                colptr[c + 1] += 1;
            }
        }
        for j in 0..ncols {
            colptr[j + 1] += colptr[j];
        }
        CscMatrix { nrows, ncols, colptr, rowval: keep_r, nzval: keep_v }
    }

    pub fn nnz(&self) -> usize {
        self.nzval.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for j in 0..self.ncols {
            for p in self.colptr[j]..self.colptr[j + 1] {
                out.push((self.rowval[p], j, self.nzval[p]));
            }
        }
        out
    }

    /// `y += A x`
    pub fn gemv(&self, x: &[f64], y: &mut [f64]) {
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.colptr[j]..self.colptr[j + 1] {
                y[self.rowval[p]] += self.nzval[p] * xj;
            }
        }
    }

    /// `x += Aᵀ y`
    pub fn gemv_t(&self, y: &[f64], x: &mut [f64]) {
        for j in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.colptr[j]..self.colptr[j + 1] {
                acc += self.nzval[p] * y[self.rowval[p]];
            }
            x[j] += acc;
        }
    }

    /// Keeps the listed rows, in the listed order.
    pub fn select_rows(&self, rows: &[usize]) -> CscMatrix {
        let mut new_index = vec![usize::MAX; self.nrows];
        for (k, &r) in rows.iter().enumerate() {
            new_index[r] = k;
        }
        let mut trip = Vec::new();
        for (r, c, v) in self.triplets() {
            if new_index[r] != usize::MAX {
                trip.push((new_index[r], c, v));
            }
        }
        CscMatrix::from_triplets(rows.len(), self.ncols, &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] += v;
        }
        d
    }
}

/// A cone program in standard form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub n: usize,
    pub c: Vec<f64>,
    pub g: CscMatrix,
    pub h: Vec<f64>,
    pub cones: Vec<ConeSpec>,
    pub names: BTreeMap<String, Range<usize>>,
}

impl ConicProgram {
    pub fn new(c: Vec<f64>, g: CscMatrix, h: Vec<f64>, cones: Vec<ConeSpec>) -> Result<Self, ConicError> {
        let prog = ConicProgram { n: c.len(), c, g, h, cones, names: BTreeMap::new() };
        prog.validate()?;
        Ok(prog)
    }

    pub fn m(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        if self.c.len() != self.n {
            return Err(ConicError::Malformed(format!("objective has {} entries, n = {}", self.c.len(), self.n)));
        }
        if self.g.ncols != self.n {
            return Err(ConicError::Malformed(format!("G has {} columns, n = {}", self.g.ncols, self.n)));
        }
        if self.g.nrows != self.h.len() {
            return Err(ConicError::Malformed(format!("G has {} rows, h has {}", self.g.nrows, self.h.len())));
        }
        let total: usize = self.cones.iter().map(|k| k.dim).sum();
        if total != self.h.len() {
            return Err(ConicError::Malformed(format!("cone dims sum to {total}, m = {}", self.h.len())));
        }
        if self.cones.iter().any(|k| k.kind == ConeKind::SecondOrder && k.dim == 0) {
            return Err(ConicError::Malformed("second-order cone of dimension 0".into()));
        }
        if self.g.colptr.len() != self.n + 1 || self.g.rowval.iter().any(|&r| r >= self.g.nrows) {
            return Err(ConicError::Malformed("inconsistent sparse structure".into()));
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(ConicError::NonFinite("objective"));
        }
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(ConicError::NonFinite("offset h"));
        }
        if self.g.nzval.iter().any(|v| !v.is_finite()) {
            return Err(ConicError::NonFinite("constraint matrix G"));
        }
        for (name, r) in &self.names {
            if r.end > self.n {
                return Err(ConicError::Malformed(format!("variable block {name} exceeds n")));
            }
        }
        Ok(())
    }

    /// Index range registered under `name`.
    pub fn var(&self, name: &str) -> Option<Range<usize>> {
        self.names.get(name).cloned()
    }

    /// Same constraints, objective replaced by zero.
    pub fn feasibility_version(&self) -> ConicProgram {
        let mut p = self.clone();
        p.c = vec![0.0; self.n];
        p
    }

    /// Writes the documented triplet dump:
    ///
    /// ```text
    /// ddto-conic 1
    /// n <n> m <m> nnz <nnz>
    /// c <j> <value>          (nonzeros only)
    /// G <row> <col> <value>
    /// h <i> <value>          (nonzeros only)
    /// cone <zero|nonneg|soc> <dim>
    /// name <label> <start> <end>
    /// ```
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<(), ConicError> {
        writeln!(w, "ddto-conic 1")?;
        writeln!(w, "n {} m {} nnz {}", self.n, self.m(), self.g.nnz())?;
        for (j, v) in self.c.iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "c {j} {v:e}")?;
            }
        }
        for (r, c, v) in self.g.triplets() {
            writeln!(w, "G {r} {c} {v:e}")?;
        }
        for (i, v) in self.h.iter().enumerate() {
            if *v != 0.0 {
                writeln!(w, "h {i} {v:e}")?;
            }
        }
        for k in &self.cones {
            writeln!(w, "cone {} {}", k.kind.label(), k.dim)?;
        }
        for (name, r) in &self.names {
            writeln!(w, "name {name} {} {}", r.start, r.end)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`ConicProgram::write_triplets`].
    pub fn read_triplets<R: BufRead>(r: R) -> Result<ConicProgram, ConicError> {
        let mut n = 0;
        let mut m = 0;
        let mut c = Vec::new();
        let mut h = Vec::new();
        let mut trip = Vec::new();
        let mut cones = Vec::new();
        let mut names = BTreeMap::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let perr = |msg: &str| ConicError::Parse { line: lineno, msg: msg.to_string() };
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.is_empty() {
                continue;
            }
            let num = |i: usize| -> Result<f64, ConicError> {
                tok.get(i).and_then(|t| t.parse::<f64>().ok()).ok_or_else(|| perr("bad number"))
            };
            let idx_at = |i: usize| -> Result<usize, ConicError> {
                tok.get(i).and_then(|t| t.parse::<usize>().ok()).ok_or_else(|| perr("bad index"))
            };
            match tok[0] {
                "ddto-conic" => {}
                "n" => {
                    n = idx_at(1)?;
                    m = idx_at(3)?;
                    c = vec![0.0; n];
                    h = vec![0.0; m];
                }
                "c" => {
                    let j = idx_at(1)?;
                    *c.get_mut(j).ok_or_else(|| perr("objective index out of range"))? = num(2)?;
                }
                "G" => trip.push((idx_at(1)?, idx_at(2)?, num(3)?)),
                "h" => {
                    let i = idx_at(1)?;
                    *h.get_mut(i).ok_or_else(|| perr("offset index out of range"))? = num(2)?;
                }
                "cone" => {
                    let dim = idx_at(2)?;
                    let kind = match tok.get(1).copied() {
                        Some("zero") => ConeKind::Zero,
                        Some("nonneg") => ConeKind::Nonnegative,
                        Some("soc") => ConeKind::SecondOrder,
                        _ => return Err(perr("unknown cone")),
                    };
                    cones.push(ConeSpec { kind, dim });
                }
                "name" => {
                    let label = tok.get(1).ok_or_else(|| perr("missing label"))?.to_string();
                    names.insert(label, idx_at(2)?..idx_at(3)?);
                }
                _ => return Err(perr("unknown record")),
            }
        }
        if trip.iter().any(|&(r, col, _)| r >= m || col >= n) {
            return Err(ConicError::Malformed("triplet index out of range".into()));
        }
        let g = CscMatrix::from_triplets(m, n, &trip);
        let prog = ConicProgram { n, c, g, h, cones, names };
        prog.validate()?;
        Ok(prog)
    }
}

/// Affine expression `Σ aᵢ x_{vᵢ} + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr { terms: vec![], constant: c }
    }

    pub fn var(v: usize) -> Self {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(v: usize, a: f64) -> Self {
        LinExpr { terms: vec![(v, a)], constant: 0.0 }
    }

    pub fn add_term(mut self, v: usize, a: f64) -> Self {
        self.terms.push((v, a));
        self
    }

    pub fn add_const(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn push(&mut self, v: usize, a: f64) {
        self.terms.push((v, a));
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn minus(mut self, other: &LinExpr) -> Self {
        self.terms.extend(other.terms.iter().map(|&(v, a)| (v, -a)));
        self.constant -= other.constant;
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, a)| a * x[v]).sum::<f64>()
    }
}

/// Incremental construction of a [`ConicProgram`].
#[derive(Debug, Clone, Default)]
pub struct ProgramBuilder {
    n: usize,
    c: Vec<f64>,
    trip: Vec<(usize, usize, f64)>,
    h: Vec<f64>,
    cones: Vec<ConeSpec>,
    names: BTreeMap<String, Range<usize>>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn num_rows(&self) -> usize {
        self.h.len()
    }

    /// Adds a block of `count` variables labelled `name`.
    pub fn add_vars(&mut self, name: &str, count: usize) -> Range<usize> {
        let r = self.n..self.n + count;
        self.n += count;
        self.c.resize(self.n, 0.0);
        if !name.is_empty() {
            self.names.insert(name.to_string(), r.clone());
        }
        r
    }

    pub fn add_cost(&mut self, v: usize, coef: f64) {
        self.c[v] += coef;
    }

    /// Adds `expr` to the objective (the constant part is ignored).
    pub fn add_cost_expr(&mut self, expr: &LinExpr) {
        for &(v, a) in &expr.terms {
            self.c[v] += a;
        }
    }

    fn push_rows(&mut self, exprs: &[LinExpr]) {
        for e in exprs {
            let row = self.h.len();
            for &(v, a) in &e.terms {
                debug_assert!(v < self.n, "expression refers to unknown variable {v}");
                self.trip.push((row, v, -a));
            }
            self.h.push(e.constant);
        }
    }

    fn push_cone(&mut self, kind: ConeKind, dim: usize) {
        if dim == 0 {
            return;
        }
        if kind != ConeKind::SecondOrder {
            if let Some(last) = self.cones.last_mut() {
                if last.kind == kind {
                    last.dim += dim;
                    return;
                }
            }
        }
        self.cones.push(ConeSpec { kind, dim });
    }

    /// `expr = 0`
    pub fn eq(&mut self, expr: LinExpr) {
        self.push_rows(std::slice::from_ref(&expr));
        self.push_cone(ConeKind::Zero, 1);
    }

    /// `expr ≥ 0`
    pub fn nonneg(&mut self, expr: LinExpr) {
        self.push_rows(std::slice::from_ref(&expr));
        self.push_cone(ConeKind::Nonnegative, 1);
    }

    /// `‖(e₁, …, e_k)‖₂ ≤ e₀` for `exprs = [e₀, e₁, …]`.
    pub fn soc(&mut self, exprs: Vec<LinExpr>) {
        self.push_rows(&exprs);
        self.push_cone(ConeKind::SecondOrder, exprs.len());
    }

    /// `u² ≤ t·w` style rotated cone: `‖(a, (t−w)/2)‖ ≤ (t+w)/2` means `a² ≤ t w`,
    /// with `t, w ≥ 0` implied.
    pub fn rotated_soc(&mut self, t: LinExpr, w: LinExpr, a: Vec<LinExpr>) {
        let mut rows = Vec::with_capacity(a.len() + 2);
        rows.push(t.clone().plus(&w).scaled(0.5));
        rows.push(t.minus(&w).scaled(0.5));
        rows.extend(a);
        self.soc(rows);
    }

    pub fn build(self) -> Result<ConicProgram, ConicError> {
        let m = self.h.len();
        let g = CscMatrix::from_triplets(m, self.n, &self.trip);
        let prog = ConicProgram { n: self.n, c: self.c, g, h: self.h, cones: self.cones, names: self.names };
        prog.validate()?;
        Ok(prog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 0.0), (1, 0, -1.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense(), vec![vec![3.0, 0.0], vec![-1.0, 0.0]]);
        let mut y = vec![0.0; 2];
        m.gemv(&[1.0, 5.0], &mut y);
        assert_eq!(y, vec![3.0, -1.0]);
        let mut x = vec![0.0; 2];
        m.gemv_t(&[1.0, 1.0], &mut x);
        assert_eq!(x, vec![2.0, 0.0]);
    }

    #[test]
    fn builder_merges_linear_cones() {
        let mut b = ProgramBuilder::new();
        let x = b.add_vars("x", 2);
        b.nonneg(LinExpr::var(x.start));
        b.nonneg(LinExpr::var(x.start + 1));
        b.soc(vec![LinExpr::constant(1.0), LinExpr::var(0), LinExpr::var(1)]);
        b.eq(LinExpr::var(0).add_const(-0.5));
        let p = b.build().unwrap();
        assert_eq!(p.cones, vec![ConeSpec::nonneg(2), ConeSpec::soc(3), ConeSpec::zero(1)]);
        assert_eq!(p.var("x"), Some(0..2));
    }

    #[test]
    fn dump_roundtrip() {
        let mut b = ProgramBuilder::new();
        let x = b.add_vars("x", 3);
        b.add_cost(x.start, 1.5);
        b.soc(vec![LinExpr::constant(2.0), LinExpr::term(0, 0.1), LinExpr::var(2)]);
        b.eq(LinExpr::var(1).add_term(2, -3.25).add_const(7.0));
        let p = b.build().unwrap();
        let mut buf = Vec::new();
        p.write_triplets(&mut buf).unwrap();
        let q = ConicProgram::read_triplets(&buf[..]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn malformed_detected() {
        let g = CscMatrix::zeros(2, 1);
        assert!(ConicProgram::new(vec![0.0], g.clone(), vec![0.0, 0.0], vec![ConeSpec::nonneg(1)]).is_err());
        assert!(matches!(
            ConicProgram::new(vec![f64::NAN], g, vec![0.0, 0.0], vec![ConeSpec::nonneg(2)]),
            Err(ConicError::NonFinite(_))
        ));
    }
}
