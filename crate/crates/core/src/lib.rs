//! Monte Carlo estimation of SAT partitioning cost and tabu search for good
//! decomposition sets.
//!
//! A decomposition set `X` of `d` variables splits a CNF into `2^d`
//! subproblems. The predictive function `F(X) = 2^d * mean(xi)` estimates
//! the total cost of solving all of them from a random sample, and
//! [`tabu::run_search`] minimizes it over subsets of variables.

pub mod cipher;
pub mod cnf;
pub mod decomposition;
pub mod orchestrator;
pub mod predictive;
pub mod solver;
pub mod tabu;

pub use cnf::{parse_dimacs, Assignment, CnfFormula, Lit, Var};
pub use decomposition::{chi_decode, chi_encode, draw_sample, ChiVector, DecompositionSet, SamplePlan};
pub use predictive::{estimate, EstimateOptions, EstimateStatus, PredictiveEstimate};
pub use solver::{CdclConfig, CdclSolver, CostMetric, SolveLimits, SolveResult, SolveStatus, Solver, SolverFactory};
pub use tabu::{run_search, SearchConfig, SearchReport};
