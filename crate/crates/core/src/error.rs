use ddto_conic::ConicError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdtoError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("scenario rejected: {0}")]
    Scenario(String),
    #[error("propagation failure: {0}")]
    Propagation(String),
    #[error("conic solver: {0}")]
    Conic(#[from] ConicError),
    /// A single-target problem is infeasible from the initial state.
    #[error("assumption violated: target {target} is unreachable within its horizon")]
    Unreachable { target: usize },
    /// The coincidence probe at k = 1 failed in a given round.
    #[error("round {round}: no feasible trajectories from the branch point (budget exhausted or targets unreachable)")]
    BudgetExhausted { round: usize },
    #[error("enumeration needs about {needed} evaluations, budget is {budget}")]
    EnumerationBudget { needed: u128, budget: u128 },
    #[error("branch time undefined: target set {0:?} is not jointly reachable at k = 1")]
    UndefinedBranchTime(Vec<usize>),
    #[error("mixed-integer root relaxation is infeasible")]
    RootInfeasible,
    #[error("internal consistency check failed: {0}")]
    Consistency(String),
    #[error("round {round}: SCP did not converge after {iterations} iterations (defect {defect:.3e}, slack {slack:.3e})")]
    NonConvergence { round: usize, iterations: usize, defect: f64, slack: f64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl DdtoError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        DdtoError::Invalid(msg.into())
    }
}
