//! Estimators for the constrained and regularized ℓq problems.

mod exhaustive;
mod irl1;
mod prox;
mod proxgrad;

pub use exhaustive::{global_solve_tiny, DEFAULT_MAX_N};
pub use irl1::{irl1_constrained_solve, FEASIBILITY_SLACK, INNER_TOL, MAX_OUTER};
pub use prox::{prox_penalty, Penalty, PenaltySpec, DEFAULT_MCP_GAMMA, DEFAULT_SCAD_A};
pub use proxgrad::{
    lipschitz_constant, objective, prox_gradient_solve, prox_gradient_solve_gram, GramData, SolveResult, SolverOptions,
    StepRule,
};
