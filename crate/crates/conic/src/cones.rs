//! Per-cone kernels: membership, projection, Jordan algebra and
//! Nesterov–Todd scaling for the nonnegative orthant and second-order cones.
//!
//! Vectors are laid out as `[l nonnegative entries | soc₁ | soc₂ | …]`.

/// Layout of a product of one orthant block and several second-order cones.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeLayout {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl ConeLayout {
    pub fn dim(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Degree of the cone (number of "eigenvalue pairs").
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// Iterates SOC blocks as `(offset, dim)`.
    pub fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.nonneg;
        self.soc.iter().map(move |&d| {
            let o = off;
            off += d;
            (o, d)
        })
    }

    /// Identity element `e`.
    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[..self.nonneg].iter_mut().for_each(|v| *v = 1.0);
        for (o, _) in self.soc_blocks() {
            e[o] = 1.0;
        }
        e
    }

    /// Smallest "eigenvalue" of `x` (negative means outside the cone).
    pub fn min_eig(&self, x: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &v in &x[..self.nonneg] {
            m = m.min(v);
        }
        for (o, d) in self.soc_blocks() {
            m = m.min(x[o] - norm(&x[o + 1..o + d]));
        }
        m
    }

    /// Moves `x` into the interior: unchanged if already strictly inside,
    /// else `x + (1 + α) e` with `α = −min_eig(x)`.
    pub fn shift_interior(&self, x: &mut [f64]) {
        let alpha = -self.min_eig(x);
        if alpha >= -1e-8 || !alpha.is_finite() {
            let shift = if alpha.is_finite() { 1.0 + alpha.max(0.0) } else { 1.0 };
            for v in &mut x[..self.nonneg] {
                *v += shift;
            }
            for (o, _) in self.soc_blocks() {
                x[o] += shift;
            }
        }
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, x: &mut [f64]) {
        for v in &mut x[..self.nonneg] {
            *v = v.max(0.0);
        }
        for (o, d) in self.soc_blocks() {
            project_soc(&mut x[o..o + d]);
        }
    }

    /// Largest `α ≥ 0` (possibly ∞) keeping `x + α dx` in the cone.
    pub fn max_step(&self, x: &[f64], dx: &[f64]) -> f64 {
        let mut a = f64::INFINITY;
        for i in 0..self.nonneg {
            if dx[i] < 0.0 {
                a = a.min(-x[i] / dx[i]);
            }
        }
        for (o, d) in self.soc_blocks() {
            a = a.min(soc_max_step(&x[o..o + d], &dx[o..o + d]));
        }
        a.max(0.0)
    }

    /// Jordan product `u ∘ v`.
    pub fn jordan(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..self.nonneg {
            out[i] = u[i] * v[i];
        }
        for (o, d) in self.soc_blocks() {
            out[o] = dot(&u[o..o + d], &v[o..o + d]);
            for k in 1..d {
                out[o + k] = u[o] * v[o + k] + v[o] * u[o + k];
            }
        }
        out
    }

    /// Solves `λ ∘ x = v` for `x`.
    pub fn jordan_div(&self, lambda: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.nonneg {
            out[i] = v[i] / lambda[i];
        }
        for (o, d) in self.soc_blocks() {
            let l0 = lambda[o];
            let l1 = &lambda[o + 1..o + d];
            let det = l0 * l0 - dot(l1, l1);
            let x0 = (l0 * v[o] - dot(l1, &v[o + 1..o + d])) / det;
            out[o] = x0;
            for k in 1..d {
                out[o + k] = (v[o + k] - x0 * lambda[o + k]) / l0;
            }
        }
        out
    }
}

fn project_soc(x: &mut [f64]) {
    let t = x[0];
    let nv = norm(&x[1..]);
    if nv <= t {
        return;
    }
    if nv <= -t {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let a = 0.5 * (t + nv);
    x[0] = a;
    let f = a / nv;
    for v in &mut x[1..] {
        *v *= f;
    }
}

fn soc_max_step(x: &[f64], d: &[f64]) -> f64 {
    // q(α) = a α² + 2 b α + c, exit at the smallest positive root
    let c = x[0] * x[0] - dot(&x[1..], &x[1..]);
    let b = x[0] * d[0] - dot(&x[1..], &d[1..]);
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let mut best = f64::INFINITY;
    if c <= 0.0 {
        return 0.0;
    }
    if a.abs() < 1e-300 {
        if b < 0.0 {
            best = best.min(-c / (2.0 * b));
        }
        return best;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return best;
    }
    let sq = disc.sqrt();
    let q = -(b + b.signum() * sq);
    let mut roots = [f64::NAN, f64::NAN];
    if q != 0.0 {
        roots[0] = q / a;
        roots[1] = c / q;
    } else {
        roots[0] = -b / a;
    }
    for r in roots {
        if r.is_finite() && r > 0.0 {
            best = best.min(r);
        }
    }
    best
}

/// Nesterov–Todd scaling `W` with `W z = W⁻¹ s = λ`.
#[derive(Debug, Clone)]
pub struct NtScaling {
    layout: ConeLayout,
    /// `sqrt(s/z)` on the orthant
    d: Vec<f64>,
    /// per SOC: (β, w̄) with `W = β (2 w̄ w̄ᵀ − J)`
    soc: Vec<(f64, Vec<f64>)>,
    pub lambda: Vec<f64>,
}

impl NtScaling {
    /// Requires `s`, `z` strictly interior.
    pub fn new(layout: &ConeLayout, s: &[f64], z: &[f64]) -> Option<Self> {
        let l = layout.nonneg;
        let mut d = Vec::with_capacity(l);
        for i in 0..l {
            if s[i] <= 0.0 || z[i] <= 0.0 {
                return None;
            }
            d.push((s[i] / z[i]).sqrt());
        }
        let mut soc = Vec::with_capacity(layout.soc.len());
        for (o, dim) in layout.soc_blocks() {
            let sb = &s[o..o + dim];
            let zb = &z[o..o + dim];
            let sdet = sb[0] * sb[0] - dot(&sb[1..], &sb[1..]);
            let zdet = zb[0] * zb[0] - dot(&zb[1..], &zb[1..]);
            if sdet <= 0.0 || zdet <= 0.0 || sb[0] <= 0.0 || zb[0] <= 0.0 {
                return None;
            }
            let sn = sdet.sqrt();
            let zn = zdet.sqrt();
            let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
            let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
            let mut w = vec![0.0; dim];
            w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for k in 1..dim {
                w[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
            }
            // hyperbolic reflector vector v = (w̄ + e)/√(2(w̄₀ + 1))
            let scale = 1.0 / (2.0 * (w[0] + 1.0)).sqrt();
            w[0] += 1.0;
            w.iter_mut().for_each(|x| *x *= scale);
            let beta = (sn / zn).sqrt();
            soc.push((beta, w));
        }
        let mut sc = NtScaling { layout: layout.clone(), d, soc, lambda: vec![] };
        sc.lambda = sc.apply_w(z);
        Some(sc)
    }

    /// `W v`
    pub fn apply_w(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.layout.nonneg {
            out[i] = self.d[i] * v[i];
        }
        for ((o, dim), (beta, w)) in self.layout.soc_blocks().zip(&self.soc) {
            let vb = &v[o..o + dim];
            // (2 w wᵀ − J) v = 2 w (wᵀv) − J v
            let wv = dot(w, vb);
            out[o] = beta * (2.0 * w[0] * wv - vb[0]);
            for k in 1..dim {
                out[o + k] = beta * (2.0 * w[k] * wv + vb[k]);
            }
        }
        out
    }

    /// `W⁻¹ v` with `W⁻¹ = (1/β)(2 J w̄ w̄ᵀ J − J)`.
    pub fn apply_winv(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.layout.nonneg {
            out[i] = v[i] / self.d[i];
        }
        for ((o, dim), (beta, w)) in self.layout.soc_blocks().zip(&self.soc) {
            let vb = &v[o..o + dim];
            // J w
            let jwv = w[0] * vb[0] - dot(&w[1..], &vb[1..]);
            out[o] = (2.0 * w[0] * jwv - vb[0]) / beta;
            for k in 1..dim {
                out[o + k] = (-2.0 * w[k] * jwv + vb[k]) / beta;
            }
        }
        out
    }

    /// Diagonal of `W²` on the orthant.
    pub fn w2_diag(&self) -> Vec<f64> {
        self.d.iter().map(|v| v * v).collect()
    }

    /// Dense upper triangle of `W²` for each SOC block, row-major `dim×dim`.
    pub fn w2_blocks(&self) -> Vec<Vec<f64>> {
        self.soc
            .iter()
            .map(|(beta, w)| {
                let dim = w.len();
                // M = 2 w wᵀ − J ; W² = β² M M ; M M = 4 (wᵀw) w wᵀ − 2 w wᵀ J − 2 J w wᵀ + I
                let ww = dot(w, w);
                let mut out = vec![0.0; dim * dim];
                for i in 0..dim {
                    let ji = if i == 0 { 1.0 } else { -1.0 };
                    for j in 0..dim {
                        let jj = if j == 0 { 1.0 } else { -1.0 };
                        let mut v = 4.0 * ww * w[i] * w[j] - 2.0 * w[i] * w[j] * jj - 2.0 * ji * w[i] * w[j];
                        if i == j {
                            v += 1.0;
                        }
                        out[i * dim + j] = beta * beta * v;
                    }
                }
                out
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ConeLayout {
        ConeLayout { nonneg: 2, soc: vec![3, 4] }
    }

    #[test]
    fn nt_scaling_identities() {
        let k = layout();
        let s = vec![1.0, 2.0, 3.0, 1.0, -1.5, 2.0, 0.3, 0.2, -0.5];
        let z = vec![0.5, 4.0, 2.0, -0.7, 0.4, 1.5, -0.1, 0.9, 0.3];
        assert!(k.min_eig(&s) > 0.0 && k.min_eig(&z) > 0.0);
        let w = NtScaling::new(&k, &s, &z).unwrap();
        let wz = w.apply_w(&z);
        let winvs = w.apply_winv(&s);
        for i in 0..s.len() {
            assert!((wz[i] - winvs[i]).abs() < 1e-12, "{i}: {} vs {}", wz[i], winvs[i]);
        }
        // W W⁻¹ = I
        let v: Vec<f64> = (0..9).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = w.apply_w(&w.apply_winv(&v));
        for i in 0..9 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
        // W² blocks agree with W applied twice
        let blocks = w.w2_blocks();
        let ww = w.apply_w(&w.apply_w(&v));
        for ((o, d), b) in k.soc_blocks().zip(&blocks) {
            for i in 0..d {
                let acc: f64 = (0..d).map(|j| b[i * d + j] * v[o + j]).sum();
                assert!((acc - ww[o + i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jordan_division_inverts_product() {
        let k = layout();
        let lam = vec![1.0, 2.0, 3.0, 1.0, -1.5, 2.0, 0.3, 0.2, -0.5];
        let v: Vec<f64> = (0..9).map(|i| (i as f64 * 0.71).cos()).collect();
        let x = k.jordan_div(&lam, &v);
        let back = k.jordan(&lam, &x);
        for i in 0..9 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_length_hits_boundary() {
        let k = ConeLayout { nonneg: 0, soc: vec![3] };
        let x = vec![1.0, 0.0, 0.0];
        let dx = vec![0.0, 1.0, 0.0];
        let a = k.max_step(&x, &dx);
        assert!((a - 1.0).abs() < 1e-12);
        let inside = vec![1.0, 0.0, 0.0];
        assert!(k.max_step(&x, &inside).is_infinite());
    }

    #[test]
    fn projection_onto_soc() {
        let k = ConeLayout { nonneg: 1, soc: vec![3] };
        let mut x = vec![-2.0, 0.0, 3.0, 4.0];
        k.project(&mut x);
        assert_eq!(x[0], 0.0);
        assert!((x[1] - 2.5).abs() < 1e-12);
        assert!((x[2] * x[2] + x[3] * x[3]).sqrt() - x[1] < 1e-12);
    }
}
