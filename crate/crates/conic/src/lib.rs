//! Cone-form convex programs and self-contained solvers.
//!
//! ```
//! use ddto_conic::{solve, LinExpr, ProgramBuilder, Settings, SolveStatus};
//!
//! // minimize x₁ subject to ‖(x₁, x₂)‖ ≤ 1
//! let mut b = ProgramBuilder::new();
//! let x = b.add_vars("x", 2);
//! b.add_cost(x.start, 1.0);
//! b.soc(vec![LinExpr::constant(1.0), LinExpr::var(x.start), LinExpr::var(x.start + 1)]);
//! let res = solve(&b.build().unwrap(), &Settings::default()).unwrap();
//! assert_eq!(res.status, SolveStatus::Optimal);
//! assert!((res.objective + 1.0).abs() < 1e-6);
//! ```
//!
//! Two backends implement [`Backend`]: the default primal–dual interior-point
//! method ([`Ipm`]) and an operator-splitting method ([`Admm`]).

pub mod admm;
pub mod budget;
pub mod cones;
mod error;
pub mod ipm;
pub mod ldl;
mod prepare;
pub mod program;

pub use admm::Admm;
pub use budget::QuadBudget;
pub use error::ConicError;
pub use ipm::Ipm;
pub use program::{ConeKind, ConeSpec, ConicProgram, CscMatrix, LinExpr, ProgramBuilder};

/// Termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// A certificate of primal infeasibility was found.
    Infeasible,
    /// A certificate of dual infeasibility (unbounded objective) was found.
    Unbounded,
    /// Iteration budget exhausted, or progress stalled, without a certificate.
    MaxIterations,
}

/// Solver output. `x`, `s`, `z` are the last iterate; they are a solution only
/// when `status == Optimal`.  `z` holds one multiplier per row of `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    /// `‖Gx + s − h‖∞` on the original data.
    pub primal_residual: f64,
    /// `‖Gᵀz + c‖∞` on the original data.
    pub dual_residual: f64,
    /// `|cᵀx + hᵀz|`.
    pub gap: f64,
    /// Residual of the infeasibility certificate, when one was produced.
    pub certificate_residual: f64,
    pub iterations: usize,
}

impl SolveResult {
    /// Values of a named variable block.
    pub fn block<'a>(&'a self, prog: &ConicProgram, name: &str) -> Option<&'a [f64]> {
        prog.var(name).map(|r| &self.x[r])
    }
}

/// Solver settings shared by the backends.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// Relative tolerance for residuals and gap.
    pub tol: f64,
    /// Tolerance on normalized infeasibility certificates.
    pub tol_infeas: f64,
    pub max_iter: usize,
    /// Ruiz equilibration of the constraint matrix before solving.
    pub equilibrate: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { tol: 1e-8, tol_infeas: 1e-8, max_iter: 200, equilibrate: true }
    }
}

impl Settings {
    /// Defaults suited to the splitting backend.
    pub fn admm() -> Self {
        Settings { tol: 1e-7, tol_infeas: 1e-6, max_iter: 50_000, equilibrate: true }
    }
}

/// A cone-program solver.
pub trait Backend {
    fn solve(&self, prog: &ConicProgram, settings: &Settings) -> Result<SolveResult, ConicError>;
}

/// Solves with the default interior-point backend.
pub fn solve(prog: &ConicProgram, settings: &Settings) -> Result<SolveResult, ConicError> {
    Ipm.solve(prog, settings)
}

/// Outcome of a feasibility probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
    /// No solution and no certificate within the budget.
    Indeterminate,
}

impl Feasibility {
    /// Indeterminate outcomes count as infeasible.
    pub fn is_feasible(self) -> bool {
        self == Feasibility::Feasible
    }
}

/// Solves `prog` with its objective dropped and reports feasibility.
pub fn check_feasible_with(
    backend: &dyn Backend,
    prog: &ConicProgram,
    settings: &Settings,
) -> Result<(Feasibility, SolveResult), ConicError> {
    let res = backend.solve(&prog.feasibility_version(), settings)?;
    let f = match res.status {
        SolveStatus::Optimal | SolveStatus::Unbounded => Feasibility::Feasible,
        SolveStatus::Infeasible => Feasibility::Infeasible,
        SolveStatus::MaxIterations => {
            log::warn!(
                "feasibility probe indeterminate after {} iterations (pres {:.2e}); treated as infeasible",
                res.iterations,
                res.primal_residual
            );
            Feasibility::Indeterminate
        }
    };
    Ok((f, res))
}

/// [`check_feasible_with`] on the default backend.
pub fn check_feasible(prog: &ConicProgram, settings: &Settings) -> Result<Feasibility, ConicError> {
    check_feasible_with(&Ipm, prog, settings).map(|(f, _)| f)
}
