//! System models: discrete affine maps, continuous fields with path
//! constraints, cumulative-cost augmentation, time dilation and RK4 shooting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::DdtoError;

/// `x⁺ = A x + B u + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineData", into = "AffineData")]
pub struct DiscreteAffineSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineData {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
}

fn rows_to_matrix(rows: &[Vec<f64>], ncols_hint: usize) -> Result<DMatrix<f64>, DdtoError> {
    let ncols = rows.first().map(|r| r.len()).unwrap_or(ncols_hint);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(DdtoError::invalid("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TryFrom<AffineData> for DiscreteAffineSystem {
    type Error = DdtoError;
    fn try_from(d: AffineData) -> Result<Self, DdtoError> {
        let a = rows_to_matrix(&d.a, 0)?;
        let b = rows_to_matrix(&d.b, 0)?;
        DiscreteAffineSystem::new(a, b, DVector::from_vec(d.c))
    }
}

impl From<DiscreteAffineSystem> for AffineData {
    fn from(s: DiscreteAffineSystem) -> Self {
        AffineData { a: matrix_to_rows(&s.a), b: matrix_to_rows(&s.b), c: s.c.iter().copied().collect() }
    }
}

impl DiscreteAffineSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DVector<f64>) -> Result<Self, DdtoError> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.nrows() != n || c.len() != n || b.ncols() == 0 {
            return Err(DdtoError::invalid(format!(
                "inconsistent affine system dimensions: A {}x{}, B {}x{}, c {}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.len()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(DdtoError::invalid("non-finite entry in affine system"));
        }
        Ok(DiscreteAffineSystem { a, b, c })
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let uv = DVector::from_column_slice(u);
        (&self.a * xv + &self.b * uv + &self.c).iter().copied().collect()
    }

    /// Rolls out `inputs` from `x0`; returns `inputs.len() + 1` states.
    pub fn rollout(&self, x0: &[f64], inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out = vec![x0.to_vec()];
        for u in inputs {
            let next = self.step(out.last().unwrap(), u);
            out.push(next);
        }
        out
    }

    /// Pure integrator `x⁺ = x + u` in `dim` dimensions.
    pub fn integrator(dim: usize) -> Self {
        DiscreteAffineSystem {
            a: DMatrix::identity(dim, dim),
            b: DMatrix::identity(dim, dim),
            c: DVector::zeros(dim),
        }
    }
}

/// Unit-mass point in 3-D under constant acceleration `a`, sampled every `dt`.
/// State `(r, v)`, input acceleration.
pub fn double_integrator_discrete(dt: f64, a: [f64; 3]) -> DiscreteAffineSystem {
    let mut am = DMatrix::identity(6, 6);
    let mut bm = DMatrix::zeros(6, 3);
    let mut c = DVector::zeros(6);
    for i in 0..3 {
        am[(i, 3 + i)] = dt;
        bm[(i, i)] = dt * dt / 2.0;
        bm[(3 + i, i)] = dt;
        c[i] = dt * dt / 2.0 * a[i];
        c[3 + i] = dt * a[i];
    }
    DiscreteAffineSystem { a: am, b: bm, c }
}

/// Appends a running-cost state: `((x, θ), u) ↦ (step(x, u), θ + l(x, u))`.
pub fn augment_cumulative_step<F, L>(step: F, l: L) -> impl Fn(&[f64], &[f64]) -> Vec<f64>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
    L: Fn(&[f64], &[f64]) -> f64,
{
    move |xt: &[f64], u: &[f64]| {
        let (x, theta) = xt.split_at(xt.len() - 1);
        let mut out = step(x, u);
        out.push(theta[0] + l(x, u));
        out
    }
}

/// `‖u‖²`, the stage cost of both shipped examples.
pub fn input_energy(_x: &[f64], u: &[f64]) -> f64 {
    u.iter().map(|v| v * v).sum()
}

/// Continuous-time field `ẋ = F(x, u)` with path constraints `g(x, u) ≤ 0`,
/// `h(x, u) = 0`.
pub trait ContinuousSystem {
    fn nx(&self) -> usize;
    fn nu(&self) -> usize;
    fn field(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    /// `(∂F/∂x, ∂F/∂u)`.
    fn jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>);

    fn ng(&self) -> usize {
        0
    }
    fn g(&self, _x: &[f64], _u: &[f64]) -> Vec<f64> {
        vec![]
    }
    /// `(∂g/∂x, ∂g/∂u)`, one row per component.
    fn g_jacobians(&self, _x: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        (DMatrix::zeros(0, self.nx()), DMatrix::zeros(0, self.nu()))
    }
    fn nh(&self) -> usize {
        0
    }
    fn h(&self, _x: &[f64], _u: &[f64]) -> Vec<f64> {
        vec![]
    }
    fn h_jacobians(&self, _x: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        (DMatrix::zeros(0, self.nx()), DMatrix::zeros(0, self.nu()))
    }
}

/// `ẋ = A x + B u + c`, no path constraints.
#[derive(Debug, Clone)]
pub struct LinearField {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LinearField {
    /// 3-D double integrator `ṙ = v, v̇ = u + a`.
    pub fn double_integrator(a: [f64; 3]) -> Self {
        let mut am = DMatrix::zeros(6, 6);
        let mut bm = DMatrix::zeros(6, 3);
        let mut c = DVector::zeros(6);
        for i in 0..3 {
            am[(i, 3 + i)] = 1.0;
            bm[(3 + i, i)] = 1.0;
            c[3 + i] = a[i];
        }
        LinearField { a: am, b: bm, c }
    }
}

impl ContinuousSystem for LinearField {
    fn nx(&self) -> usize {
        self.a.nrows()
    }
    fn nu(&self) -> usize {
        self.b.ncols()
    }
    fn field(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let v = &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(u) + &self.c;
        v.iter().copied().collect()
    }
    fn jacobians(&self, _x: &[f64], _u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
}

/// Ellipsoidal keep-out zone `‖H (r − q)‖ ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipsoid {
    pub shape: [[f64; 3]; 3],
    pub center: [f64; 3],
}

impl Ellipsoid {
    pub fn axis_aligned(diag: [f64; 3], center: [f64; 3]) -> Self {
        let mut shape = [[0.0; 3]; 3];
        for i in 0..3 {
            shape[i][i] = diag[i];
        }
        Ellipsoid { shape, center }
    }

    /// `H (r − q)`.
    pub fn map(&self, r: &[f64]) -> [f64; 3] {
        let d = [r[0] - self.center[0], r[1] - self.center[1], r[2] - self.center[2]];
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = (0..3).map(|j| self.shape[i][j] * d[j]).sum();
        }
        out
    }

    pub fn margin(&self, r: &[f64]) -> f64 {
        let m = self.map(r);
        (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt()
    }
}

/// Point-mass aerial vehicle with quadratic drag and a running-cost state.
///
/// State `(r, v, θ)` (7), input acceleration `u` (3).  Path constraints, in
/// order: one per obstacle, speed, thrust upper, thrust lower, pointing
/// (quadratic form), pointing half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrotor {
    pub gravity: [f64; 3],
    pub drag: f64,
    pub v_max: f64,
    pub u_max: f64,
    pub u_min: f64,
    pub axis: [f64; 3],
    pub delta_max: f64,
    pub obstacles: Vec<Ellipsoid>,
    /// Positive factor applied to each path constraint (length `ng`).
    pub g_scale: Vec<f64>,
}

fn dot3(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl Quadrotor {
    /// Path constraints without the scale factors.
    pub fn g_raw(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let r = &x[0..3];
        let v = &x[3..6];
        let sec = 1.0 / self.delta_max.cos();
        let uu = dot3(u, u);
        let eu = dot3(&self.axis, u);
        let mut g = Vec::with_capacity(self.obstacles.len() + 5);
        for o in &self.obstacles {
            let m = o.map(r);
            g.push(1.0 - dot3(&m, &m));
        }
        g.push(dot3(v, v) - self.v_max * self.v_max);
        g.push(uu - self.u_max * self.u_max);
        g.push(self.u_min * self.u_min - uu);
        g.push(uu - sec * sec * eu * eu);
        g.push(-eu);
        g
    }

    fn scale(&self, i: usize) -> f64 {
        self.g_scale.get(i).copied().unwrap_or(1.0)
    }
}

impl ContinuousSystem for Quadrotor {
    fn nx(&self) -> usize {
        7
    }
    fn nu(&self) -> usize {
        3
    }

    fn field(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let v = &x[3..6];
        let sp = dot3(v, v).sqrt();
        let mut f = vec![0.0; 7];
        for i in 0..3 {
            f[i] = v[i];
            f[3 + i] = u[i] - self.drag * sp * v[i] + self.gravity[i];
        }
        f[6] = dot3(u, u);
        f
    }

    fn jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let v = &x[3..6];
        let sp = dot3(v, v).sqrt();
        let mut fx = DMatrix::zeros(7, 7);
        let mut fu = DMatrix::zeros(7, 3);
        for i in 0..3 {
            fx[(i, 3 + i)] = 1.0;
            fu[(3 + i, i)] = 1.0;
            fu[(6, i)] = 2.0 * u[i];
            for j in 0..3 {
                // ∂(‖v‖ v)/∂v = ‖v‖ I + v vᵀ/‖v‖
                let mut d = if sp > 0.0 { v[i] * v[j] / sp } else { 0.0 };
                if i == j {
                    d += sp;
                }
                fx[(3 + i, 3 + j)] = -self.drag * d;
            }
        }
        (fx, fu)
    }

    fn ng(&self) -> usize {
        self.obstacles.len() + 5
    }

    fn g(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.g_raw(x, u).into_iter().enumerate().map(|(i, v)| v * self.scale(i)).collect()
    }

    fn g_jacobians(&self, x: &[f64], u: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let ng = self.ng();
        let r = &x[0..3];
        let v = &x[3..6];
        let sec2 = 1.0 / self.delta_max.cos().powi(2);
        let eu = dot3(&self.axis, u);
        let mut gx = DMatrix::zeros(ng, 7);
        let mut gu = DMatrix::zeros(ng, 3);
        for (k, o) in self.obstacles.iter().enumerate() {
            // −2 Hᵀ H (r − q)
            let m = o.map(r);
            for j in 0..3 {
                gx[(k, j)] = -2.0 * (0..3).map(|i| o.shape[i][j] * m[i]).sum::<f64>();
            }
        }
        let b = self.obstacles.len();
        for i in 0..3 {
            gx[(b, 3 + i)] = 2.0 * v[i];
            gu[(b + 1, i)] = 2.0 * u[i];
            gu[(b + 2, i)] = -2.0 * u[i];
            gu[(b + 3, i)] = 2.0 * u[i] - 2.0 * sec2 * eu * self.axis[i];
            gu[(b + 4, i)] = -self.axis[i];
        }
        for k in 0..ng {
            let s = self.scale(k);
            gx.row_mut(k).scale_mut(s);
            gu.row_mut(k).scale_mut(s);
        }
        (gx, gu)
    }
}

/// Augmented field on `x̃ = (x, y, t)`, `ũ = (u, s)`:
/// `s · (F(x, u), Σ max(0, gᵢ)² + Σ hⱼ², 1)`.
pub fn augmented_field<S: ContinuousSystem + ?Sized>(sys: &S, xt: &[f64], ut: &[f64]) -> Vec<f64> {
    let nx = sys.nx();
    let nu = sys.nu();
    let x = &xt[..nx];
    let u = &ut[..nu];
    let s = ut[nu];
    let mut out: Vec<f64> = sys.field(x, u).into_iter().map(|v| s * v).collect();
    let pen: f64 = sys.g(x, u).iter().map(|g| g.max(0.0).powi(2)).sum::<f64>()
        + sys.h(x, u).iter().map(|h| h * h).sum::<f64>();
    out.push(s * pen);
    out.push(s);
    out
}

/// Jacobians of [`augmented_field`] with respect to `x̃` and `ũ`.
pub fn augmented_jacobians<S: ContinuousSystem + ?Sized>(
    sys: &S,
    xt: &[f64],
    ut: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let nx = sys.nx();
    let nu = sys.nu();
    let x = &xt[..nx];
    let u = &ut[..nu];
    let s = ut[nu];
    let (fx, fu) = sys.jacobians(x, u);
    let mut ax = DMatrix::zeros(nx + 2, nx + 2);
    let mut bu = DMatrix::zeros(nx + 2, nu + 1);
    ax.view_mut((0, 0), (nx, nx)).copy_from(&(fx * s));
    bu.view_mut((0, 0), (nx, nu)).copy_from(&(fu * s));
    let f = sys.field(x, u);
    for i in 0..nx {
        bu[(i, nu)] = f[i];
    }
    let g = sys.g(x, u);
    let (gx, gu) = sys.g_jacobians(x, u);
    let h = sys.h(x, u);
    let (hx, hu) = sys.h_jacobians(x, u);
    let mut pen = 0.0;
    for (k, &gk) in g.iter().enumerate() {
        if gk > 0.0 {
            pen += gk * gk;
            for j in 0..nx {
                ax[(nx, j)] += s * 2.0 * gk * gx[(k, j)];
            }
            for j in 0..nu {
                bu[(nx, j)] += s * 2.0 * gk * gu[(k, j)];
            }
        }
    }
    for (k, &hk) in h.iter().enumerate() {
        pen += hk * hk;
        for j in 0..nx {
            ax[(nx, j)] += s * 2.0 * hk * hx[(k, j)];
        }
        for j in 0..nu {
            bu[(nx, j)] += s * 2.0 * hk * hu[(k, j)];
        }
    }
    bu[(nx, nu)] = pen;
    bu[(nx + 1, nu)] = 1.0;
    (ax, bu)
}

fn check_finite(v: &[f64], what: &str) -> Result<(), DdtoError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(DdtoError::Propagation(what.to_string()))
    }
}

/// Classical RK4 of `ẋ = f(x)` over a span of length `span` with `substeps`
/// equal steps.
pub fn rk4<F>(f: F, x0: &[f64], span: f64, substeps: usize) -> Result<Vec<f64>, DdtoError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let substeps = substeps.max(1);
    let h = span / substeps as f64;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut tmp = vec![0.0; n];
    for _ in 0..substeps {
        let k1 = f(&x);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        let k2 = f(&tmp);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        let k3 = f(&tmp);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        let k4 = f(&tmp);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_finite(&x, "non-finite state during integration")?;
    }
    Ok(x)
}

/// One multiple-shooting interval of the augmented field under a held input.
pub fn multiple_shooting_step<S: ContinuousSystem + ?Sized>(
    sys: &S,
    xt: &[f64],
    ut: &[f64],
    span: f64,
    substeps: usize,
) -> Result<Vec<f64>, DdtoError> {
    rk4(|x| augmented_field(sys, x, ut), xt, span, substeps)
}

/// States at `samples + 1` equally spaced points of one shooting interval
/// (both ends included).
pub fn shooting_samples<S: ContinuousSystem + ?Sized>(
    sys: &S,
    xt: &[f64],
    ut: &[f64],
    span: f64,
    substeps_per_sample: usize,
    samples: usize,
) -> Result<Vec<Vec<f64>>, DdtoError> {
    let mut out = vec![xt.to_vec()];
    let h = span / samples as f64;
    for _ in 0..samples {
        let next = multiple_shooting_step(sys, out.last().unwrap(), ut, h, substeps_per_sample)?;
        out.push(next);
    }
    Ok(out)
}

/// Integrates `s · F(x, u)` over one unit normalized interval.
pub fn dilated_discrete_step<S: ContinuousSystem + ?Sized>(
    sys: &S,
    x: &[f64],
    u: &[f64],
    s: f64,
    substeps: usize,
) -> Result<Vec<f64>, DdtoError> {
    if !(s > 0.0) {
        return Err(DdtoError::invalid(format!("dilation factor must be positive, got {s}")));
    }
    rk4(|xx| sys.field(xx, u).into_iter().map(|v| s * v).collect(), x, 1.0, substeps)
}

/// Shooting step together with `∂x̃⁺/∂x̃` and `∂x̃⁺/∂ũ`, obtained by
/// integrating the variational equations with the same RK4 scheme.
pub fn linearize_step<S: ContinuousSystem + ?Sized>(
    sys: &S,
    xt: &[f64],
    ut: &[f64],
    span: f64,
    substeps: usize,
) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>), DdtoError> {
    let n = xt.len();
    let m = ut.len();
    // packed state: [x̃ | Φx (col-major n×n) | Φu (col-major n×m)]
    let total = n + n * n + n * m;
    let mut z0 = vec![0.0; total];
    z0[..n].copy_from_slice(xt);
    for i in 0..n {
        z0[n + i * n + i] = 1.0;
    }
    let rhs = |z: &[f64]| -> Vec<f64> {
        let x = &z[..n];
        let f = augmented_field(sys, x, ut);
        let (a, b) = augmented_jacobians(sys, x, ut);
        let phx = DMatrix::from_column_slice(n, n, &z[n..n + n * n]);
        let phu = DMatrix::from_column_slice(n, m, &z[n + n * n..]);
        let dphx = &a * phx;
        let dphu = &a * phu + b;
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(&f);
        out.extend_from_slice(dphx.as_slice());
        out.extend_from_slice(dphu.as_slice());
        out
    };
    let z = rk4(rhs, &z0, span, substeps)?;
    let x1 = z[..n].to_vec();
    let ax = DMatrix::from_column_slice(n, n, &z[n..n + n * n]);
    let bu = DMatrix::from_column_slice(n, m, &z[n + n * n..]);
    Ok((x1, ax, bu))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_integrator_matrices() {
        let s = double_integrator_discrete(0.5, [0.0, 0.0, -9.806]);
        let expect = [0.0, 0.0, -1.22575, 0.0, 0.0, -4.903];
        for i in 0..6 {
            assert!((s.c[i] - expect[i]).abs() < 1e-12);
        }
        let z = double_integrator_discrete(0.0, [0.0, 0.0, -9.806]);
        assert_eq!(z.a, DMatrix::identity(6, 6));
        assert!(z.b.iter().all(|v| *v == 0.0) && z.c.iter().all(|v| *v == 0.0));
        let one = double_integrator_discrete(1.0, [0.0; 3]);
        assert_eq!(one.b[(0, 0)], 0.5);
        assert!(one.c.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cumulative_augmentation() {
        let f = augment_cumulative_step(|x: &[f64], _u: &[f64]| x.to_vec(), input_energy);
        assert_eq!(f(&[1.0, 0.0], &[1.0, 2.0, 2.0]), vec![1.0, 9.0]);
        let zero = augment_cumulative_step(|x: &[f64], u: &[f64]| vec![x[0] + u[0]], |_: &[f64], _: &[f64]| 0.0);
        assert_eq!(zero(&[0.0, 3.5], &[1.0]), vec![1.0, 3.5]);
    }

    #[test]
    fn augmented_field_examples() {
        let q = Quadrotor {
            gravity: [0.0, 0.0, -9.806],
            drag: 0.01,
            v_max: 8.0,
            u_max: 20.0,
            u_min: 5.0,
            axis: [0.0, 0.0, 1.0],
            delta_max: 60f64.to_radians(),
            obstacles: vec![],
            g_scale: vec![],
        };
        let x = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let d = augmented_field(&q, &x, &[0.0, 0.0, 9.806, 1.0]);
        assert!((d[3] + 0.01).abs() < 1e-15 && d[4] == 0.0 && d[5].abs() < 1e-15);
        // every constraint is inactive at hover
        assert_eq!(d[7], 0.0);
        assert_eq!(d[8], 1.0);
        let z = augmented_field(&q, &x, &[0.0, 0.0, 9.806, 0.0]);
        assert!(z.iter().all(|v| *v == 0.0));
    }
}
