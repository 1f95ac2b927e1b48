//! Sparse `LDLᵀ` for symmetric quasi-definite matrices.
//!
//! Fill-reducing ordering is a plain minimum-degree elimination on the
//! explicit graph; the factorization is the up-looking algorithm driven by the
//! elimination tree (as in QDLDL).  No pivoting: the matrices fed here are
//! regularized so every pivot has a known sign, and tiny pivots are pushed to
//! that sign.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use crate::error::ConicError;

/// Minimum-degree ordering of the symmetric pattern given as adjacency lists.
/// Returns `perm` with `perm[new] = old`.
pub fn min_degree_order(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(i, j) in edges {
        if i != j {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut perm = Vec::with_capacity(n);
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        perm.push(v);
        let nbrs: Vec<usize> = adj[v].iter().copied().collect();
        for &a in &nbrs {
            adj[a].remove(&v);
        }
        for (ia, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[ia + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &nbrs {
            heap.push(Reverse((adj[a].len(), a)));
        }
        adj[v].clear();
    }
    perm
}

/// Upper-triangular CSC pattern plus numeric factor storage.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    // matrix (upper triangle, permuted, CSC)
    ap: Vec<usize>,
    ai: Vec<usize>,
    // factor
    etree: Vec<Option<usize>>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    // workspace
    y_vals: Vec<f64>,
    y_marks: Vec<bool>,
    y_idx: Vec<usize>,
    elim: Vec<usize>,
    next_in_col: Vec<usize>,
}

impl LdlFactor {
    /// Symbolic analysis of an upper-triangular CSC pattern `(ap, ai)` with rows
    /// sorted within each column and the diagonal present in every column.
    pub fn analyze(n: usize, ap: Vec<usize>, ai: Vec<usize>) -> Result<Self, ConicError> {
        let mut etree = vec![None; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        for j in 0..n {
            flag[j] = j;
            for p in ap[j]..ap[j + 1] {
                let mut i = ai[p];
                if i > j {
                    return Err(ConicError::Factorization("pattern not upper triangular".into()));
                }
                while flag[i] != j {
                    if etree[i].is_none() {
                        etree[i] = Some(j);
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    match etree[i] {
                        Some(e) => i = e,
                        None => break,
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let nnz_l = lp[n];
        Ok(LdlFactor {
            n,
            ap,
            ai,
            etree,
            lp,
            li: vec![0; nnz_l],
            lx: vec![0.0; nnz_l],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            y_vals: vec![0.0; n],
            y_marks: vec![false; n],
            y_idx: vec![0; n],
            elim: vec![0; n],
            next_in_col: vec![0; n],
        })
    }

    pub fn nnz_l(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization of the values `ax` (same pattern as `analyze`).
    /// `signs[k]` is the expected sign of pivot `k`; pivots with
    /// `|d| < delta` or of the wrong sign are replaced by `signs[k]·delta`.
    /// Returns the number of pivots that needed such a push.
    pub fn factor(&mut self, ax: &[f64], signs: &[f64], eps: f64, delta: f64) -> Result<usize, ConicError> {
        let n = self.n;
        let mut bumped = 0;
        for i in 0..n {
            self.next_in_col[i] = self.lp[i];
            self.y_marks[i] = false;
            self.y_vals[i] = 0.0;
        }
        for k in 0..n {
            let mut nnz_y = 0;
            let mut diag = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let bidx = self.ai[p];
                if bidx == k {
                    diag = ax[p];
                    continue;
                }
                self.y_vals[bidx] = ax[p];
                if !self.y_marks[bidx] {
                    self.y_marks[bidx] = true;
                    self.elim[0] = bidx;
                    let mut nnz_e = 1;
                    let mut next = self.etree[bidx];
                    while let Some(nx) = next {
                        if nx >= k || self.y_marks[nx] {
                            break;
                        }
                        self.y_marks[nx] = true;
                        self.elim[nnz_e] = nx;
                        nnz_e += 1;
                        next = self.etree[nx];
                    }
                    while nnz_e > 0 {
                        nnz_e -= 1;
                        self.y_idx[nnz_y] = self.elim[nnz_e];
                        nnz_y += 1;
                    }
                }
            }
            let mut dk = diag;
            for t in (0..nnz_y).rev() {
                let cidx = self.y_idx[t];
                let slot = self.next_in_col[cidx];
                let yc = self.y_vals[cidx];
                for q in self.lp[cidx]..slot {
                    self.y_vals[self.li[q]] -= self.lx[q] * yc;
                }
                self.li[slot] = k;
                let l = yc * self.dinv[cidx];
                self.lx[slot] = l;
                dk -= yc * l;
                self.next_in_col[cidx] += 1;
                self.y_vals[cidx] = 0.0;
                self.y_marks[cidx] = false;
            }
            if !dk.is_finite() {
                return Err(ConicError::Factorization(format!("non-finite pivot at {k}")));
            }
            if dk * signs[k] < eps {
                dk = signs[k] * delta;
                bumped += 1;
            }
            self.d[k] = dk;
            self.dinv[k] = 1.0 / dk;
        }
        Ok(bumped)
    }

    /// Solves `L D Lᵀ x = b` in place.
    pub fn solve(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for p in self.lp[i]..self.lp[i + 1] {
                    x[self.li[p]] -= self.lx[p] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for p in self.lp[i]..self.lp[i + 1] {
                acc -= self.lx[p] * x[self.li[p]];
            }
            x[i] = acc;
        }
    }
}

/// A symmetric matrix with a fixed sparsity pattern, stored as the upper
/// triangle of `P A Pᵀ` and addressed through entry slots in original indices.
#[derive(Debug, Clone)]
pub struct SymmetricSystem {
    pub n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    values: Vec<f64>,
    // slot -> position in values
    slot_pos: Vec<usize>,
    // original entries (i <= j) for multiplication
    entries: Vec<(usize, usize)>,
    factor: LdlFactor,
    signs: Vec<f64>,
}

impl SymmetricSystem {
    /// `entries` are `(i, j)` pairs in original indexing (either triangle);
    /// each becomes a slot in the returned order. Every diagonal must appear.
    pub fn new(n: usize, entries: &[(usize, usize)], signs: Vec<f64>) -> Result<Self, ConicError> {
        let perm = min_degree_order(n, entries);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut keyed: Vec<(usize, usize, usize)> = entries
            .iter()
            .enumerate()
            .map(|(s, &(i, j))| {
                let (a, b) = (iperm[i], iperm[j]);
                let (r, c) = if a <= b { (a, b) } else { (b, a) };
                (c, r, s)
            })
            .collect();
        keyed.sort();
        let mut ap = vec![0usize; n + 1];
        let mut ai = Vec::with_capacity(keyed.len());
        let mut slot_pos = vec![0usize; entries.len()];
        let mut last: Option<(usize, usize)> = None;
        for &(c, r, s) in &keyed {
            if last != Some((c, r)) {
                ai.push(r);
                ap[c + 1] += 1;
                last = Some((c, r));
            }
            slot_pos[s] = ai.len() - 1;
        }
        for j in 0..n {
            ap[j + 1] += ap[j];
        }
        for j in 0..n {
            let has_diag = ai[ap[j]..ap[j + 1]].last() == Some(&j);
            if !has_diag {
                return Err(ConicError::Factorization(format!("missing diagonal in column {j}")));
            }
        }
        let nnz = ai.len();
        let psigns: Vec<f64> = perm.iter().map(|&old| signs[old]).collect();
        let factor = LdlFactor::analyze(n, ap, ai)?;
        let ents = entries.iter().map(|&(i, j)| if i <= j { (i, j) } else { (j, i) }).collect();
        Ok(SymmetricSystem { n, perm, iperm, values: vec![0.0; nnz], slot_pos, entries: ents, factor, signs: psigns })
    }

    /// Sets every slot value (summing slots that share an entry).
    pub fn set_values(&mut self, slot_values: &[f64]) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        for (s, &v) in slot_values.iter().enumerate() {
            self.values[self.slot_pos[s]] += v;
        }
    }

    /// Pivots with the wrong sign or magnitude below `eps` are replaced by
    /// `±delta`.
    pub fn factor(&mut self, eps: f64, delta: f64) -> Result<usize, ConicError> {
        self.factor.factor(&self.values, &self.signs, eps, delta)
    }

    /// Solves with the current factor; `b` in original indexing.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            w[new] = b[old];
        }
        self.factor.solve(&mut w);
        let mut x = vec![0.0; self.n];
        for (old, &new) in self.iperm.iter().enumerate() {
            x[old] = w[new];
        }
        x
    }

    /// `y = A x` for a symmetric matrix given by slot values (duplicated slots
    /// summed), original indexing.
    pub fn multiply(&self, slot_values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (s, &(i, j)) in self.entries.iter().enumerate() {
            let v = slot_values[s];
            if v == 0.0 {
                continue;
            }
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn fill(&self) -> usize {
        self.factor.nnz_l()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_quasidefinite() {
        // [4 1 2; 1 -3 0; 2 0 -5]
        let entries = vec![(0, 0), (1, 1), (2, 2), (0, 1), (0, 2)];
        let vals = vec![4.0, -3.0, -5.0, 1.0, 2.0];
        let mut sys = SymmetricSystem::new(3, &entries, vec![1.0, -1.0, -1.0]).unwrap();
        sys.set_values(&vals);
        sys.factor(1e-14, 1e-14).unwrap();
        let b = vec![1.0, 2.0, 3.0];
        let x = sys.solve(&b);
        let r = sys.multiply(&vals, &x);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn arrow_matrix_fill_is_small() {
        // hub node 0 connected to everything: min degree eliminates leaves first
        let n = 50;
        let mut entries: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for i in 1..n {
            entries.push((0, i));
        }
        let sys = SymmetricSystem::new(n, &entries, vec![1.0; n]).unwrap();
        assert_eq!(sys.fill(), n - 1);
    }
}
