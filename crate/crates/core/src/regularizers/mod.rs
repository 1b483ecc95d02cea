//! Structural regularizers over the target-tree posterior: an
//! entropy-regularized expected reward on rule distances, and a coverage
//! bound on alignments per source node enforced by posterior regularization.

mod coverage;
mod reward;

pub use coverage::{
    dual_value, expected_node_features, kl_factored, pr_objective, pr_solve, reweight, CoverageConfig,
    DualState, KlCombination, PrObjective, PrSolution,
};
pub use reward::{
    check_reward_axioms, expected_reward_objective, reward_values, zeta, AxiomReport, RewardConfig, RewardFn,
    RewardObjective,
};
