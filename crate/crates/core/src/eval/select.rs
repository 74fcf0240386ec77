use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("no candidates to select from")]
    Empty,
    #[error("all {0} candidates failed")]
    AllFailed(usize),
}

/// `ceil(c_bs * k)`, with a small tolerance so products like `0.1 * 30` that
/// land a rounding error above an integer do not round up.
pub fn n_best(c_bs: f64, k: usize) -> usize {
    ((c_bs * k as f64 - 1e-9).ceil().max(1.0) as usize).min(k)
}

/// Indices of the `n_best(c_bs, len)` highest scores, best first. Failed
/// candidates (`None` or NaN) are never selected; equal scores go to the
/// lower index.
pub fn select_best(scores: &[Option<f64>], c_bs: f64) -> Result<Vec<usize>, SelectionError> {
    if scores.is_empty() {
        return Err(SelectionError::Empty);
    }
    let mut live: Vec<(usize, f64)> =
        scores.iter().enumerate().filter_map(|(i, s)| s.filter(|v| !v.is_nan()).map(|v| (i, v))).collect();
    if live.is_empty() {
        return Err(SelectionError::AllFailed(scores.len()));
    }
    live.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let n = n_best(c_bs, scores.len()).min(live.len());
    Ok(live[..n].iter().map(|(i, _)| *i).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalCandidate {
    pub index: usize,
    pub gazebo: f64,
    /// `None` when the real-like stage did not run.
    pub real: Option<f64>,
    pub safe: bool,
    pub train_criterion: f64,
}

impl FinalCandidate {
    /// Sum over the stages that ran; an unsafe candidate contributes no real score.
    pub fn deployment_score(&self) -> f64 {
        self.gazebo + if self.safe { self.real.unwrap_or(0.0) } else { 0.0 }
    }
}

/// Argmax of gazebo + real. Ties go to the higher train criterion, then the
/// lower index. With `strict`, unsafe candidates are excluded and `None` is
/// returned when none is safe.
pub fn select_final(candidates: &[FinalCandidate], strict: bool) -> Option<usize> {
    candidates
        .iter()
        .filter(|c| !strict || c.safe)
        .min_by(|a, b| {
            b.deployment_score()
                .total_cmp(&a.deployment_score())
                .then(b.train_criterion.total_cmp(&a.train_criterion))
                .then(a.index.cmp(&b.index))
        })
        .map(|c| c.index)
}
