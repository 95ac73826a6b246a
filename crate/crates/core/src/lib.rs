//! Capacity-constrained multi-model finite-horizon MDPs.
//!
//! A population of `N` individuals moves through a finite state space under
//! one of several transition/reward scenarios. A decision maker picks, per
//! epoch and state, regular care (0) or special care (1); special care is
//! limited by a per-epoch capacity that must hold under every scenario. The
//! crate evaluates, optimizes (exactly and approximately), generates and
//! analyzes such problems.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod exact;
pub mod forward;
pub mod generator;
pub mod model;
pub mod padp;
pub mod rng;

pub use error::{Error, Result};
pub use evaluate::{evaluate_strategy, simulate_cohort, EvaluationResult};
pub use exact::{solve_exact, solve_exact_stationary, SearchLimits, SolveResult, SolveStatus};
pub use generator::{chronic_care_instance, generate_instance, random_instance, NominalModel};
pub use model::{Instance, InstanceParams, Scenario, Strategy};
pub use padp::{decode_path, solve_padp, PadpResult};
