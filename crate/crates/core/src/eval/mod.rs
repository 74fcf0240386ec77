//! Candidate scoring, stage evaluation, safety gating, selection, and feedback.

pub mod criterion;
pub mod evaluate;
pub mod feedback;
pub mod safety;
pub mod select;

pub use criterion::{e_train, train_criterion, CriterionError, CriterionWeights, OBS_METRICS};
pub use evaluate::{
    evaluate_program, fmt2, homomorphic_eval, render_row, render_stage_grid, stage_grid_csv, stage_rows, term_label,
    EvalGrid, EvalReport, Stage, StageRow,
};
pub use feedback::{compile_feedback, render_best, BestSummary, CandidateSummary};
pub use safety::{deploy_gated, safety_check, Deployment, SafetyMetric, SafetyRule, SafetyVerdict, Violation};
pub use select::{n_best, select_best, select_final, FinalCandidate, SelectionError};
