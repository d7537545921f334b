//! Measurement: recall of final tokens in earlier predictions, task
//! accuracy, threshold sweeps, residual-weight ablations, matched-budget
//! comparisons, and the exact posterior of a Markov chain.

mod oracle;
mod recall;
mod sweep;
mod tasks;

pub use oracle::{brute_force_posterior, markov_mask_kl, markov_posterior_oracle};
pub use recall::{recall_at_k, recall_at_k_multi, write_recall_csv, RecallCurve};
pub use sweep::{
    ablate_alpha, default_thresholds, matched_budget_report, pareto_sweep, write_ablation_csv, write_budget_csv,
    write_pareto_csv, AblationRow, BudgetRow, BudgetSide, MatchedBudgetReport, ParetoPoint, Variant,
};
pub use tasks::{extract_digits, task_accuracy, task_accuracy_with, AccuracyReport, AnswerKind, TaskItem, TaskSet};
