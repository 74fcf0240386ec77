use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::{apply_homomorphism, HomomorphismMap, MismatchReport, RewardProgram};
use crate::env::{deployment_schema, rollout, training_schema, Command, Controller, EnvConfig, TaskLimits, Termination};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Train,
    GazeboLike,
    RealLike,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Train, Stage::GazeboLike, Stage::RealLike];

    /// Column heading in the stage grid.
    pub fn column(&self) -> &'static str {
        match self {
            Stage::Train => "gym",
            Stage::GazeboLike => "gazebo",
            Stage::RealLike => "real",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Train => "train",
            Stage::GazeboLike => "gazebo_like",
            Stage::RealLike => "real_like",
        }
    }
}

/// Seed by command grid of evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalGrid {
    pub seeds: Vec<u64>,
    pub commands: Vec<f64>,
}

impl Default for EvalGrid {
    fn default() -> Self {
        Self { seeds: (0..5).collect(), commands: vec![-0.5, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stage: Stage,
    pub term_names: Vec<String>,
    /// Raw per-term sums per episode, averaged over episodes.
    pub term_sums: Vec<f64>,
    /// Raw per-term means per step, over all steps of all episodes.
    pub term_means: Vec<f64>,
    /// Weighted reward per episode, averaged over episodes.
    pub reward_total: f64,
    pub survival_time: f64,
    pub velocity_error: f64,
    pub heading_error: f64,
    /// Worst case over all episodes.
    pub max_abs_pitch: f64,
    pub max_abs_torque: f64,
    pub episodes: usize,
    pub falls: usize,
    pub criterion_score: f64,
    pub mismatch: MismatchReport,
    pub failure: Option<String>,
}

impl EvalReport {
    pub fn empty(stage: Stage) -> Self {
        Self {
            stage,
            term_names: Vec::new(),
            term_sums: Vec::new(),
            term_means: Vec::new(),
            reward_total: 0.0,
            survival_time: 0.0,
            velocity_error: 0.0,
            heading_error: 0.0,
            max_abs_pitch: 0.0,
            max_abs_torque: 0.0,
            episodes: 0,
            falls: 0,
            criterion_score: 0.0,
            mismatch: MismatchReport::default(),
            failure: None,
        }
    }

    fn failed(stage: Stage, term_names: Vec<String>, message: String) -> Self {
        Self { term_names, failure: Some(message), ..Self::empty(stage) }
    }

    pub fn is_failed(&self) -> bool {
        self.failure.is_some()
    }

    /// Values of the observation metrics that criterion weights may reference.
    pub fn obs_values(&self) -> BTreeMap<String, f64> {
        [
            ("survival_time", self.survival_time),
            ("velocity_error", self.velocity_error),
            ("heading_error", self.heading_error),
            ("max_abs_pitch", self.max_abs_pitch),
            ("max_abs_torque", self.max_abs_torque),
            ("reward_total", self.reward_total),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn term_sum(&self, name: &str) -> Option<f64> {
        self.term_names.iter().position(|n| n == name).map(|i| self.term_sums[i])
    }

    pub fn term_mean(&self, name: &str) -> Option<f64> {
        self.term_names.iter().position(|n| n == name).map(|i| self.term_means[i])
    }
}

/// Rolls `controller` out over the grid and aggregates. `program` must
/// already be expressed in the schema of `env_cfg`. The criterion score of
/// the report is its mean weighted reward per episode.
pub fn evaluate_program(
    controller: &(dyn Controller + Sync),
    program: &RewardProgram,
    stage: Stage,
    env_cfg: &Arc<EnvConfig>,
    limits: TaskLimits,
    grid: &EvalGrid,
    master_seed: u64,
) -> EvalReport {
    let names: Vec<String> = program.terms.iter().map(|t| t.name.clone()).collect();
    let cells: Vec<(u64, f64)> = grid.seeds.iter().flat_map(|&s| grid.commands.iter().map(move |&c| (s, c))).collect();
    let max_steps = (limits.max_time / env_cfg.control_dt()).round() as usize + 1;
    let outcomes: Vec<_> = cells
        .par_iter()
        .map(|&(s, c)| {
            let episode_seed = seed::derive(master_seed, &[seed::EVAL, s]);
            rollout(env_cfg, limits, controller, program, episode_seed, Command::forward(c), max_steps)
        })
        .collect();

    let n_terms = names.len();
    let mut r = EvalReport { term_names: names.clone(), ..EvalReport::empty(stage) };
    r.term_sums = vec![0.0; n_terms];
    r.term_means = vec![0.0; n_terms];
    let mut steps = 0usize;
    for out in outcomes {
        let out = match out {
            Ok(o) => o,
            Err(e) => return EvalReport::failed(stage, names, e.to_string()),
        };
        let sums = out.trajectory.term_sums();
        for (k, s) in sums.iter().enumerate() {
            r.term_sums[k] += s;
            r.term_means[k] += s;
            r.reward_total += program.terms[k].scale * s;
        }
        steps += out.trajectory.len();
        r.survival_time += out.survival_time;
        r.velocity_error += out.mean_velocity_error;
        r.heading_error += out.mean_heading_error;
        r.max_abs_pitch = r.max_abs_pitch.max(out.max_abs_pitch);
        r.max_abs_torque = r.max_abs_torque.max(out.max_abs_torque);
        r.episodes += 1;
        if out.termination != Termination::TimeLimit {
            r.falls += 1;
        }
    }
    let e = r.episodes.max(1) as f64;
    for k in 0..n_terms {
        r.term_sums[k] /= e;
        r.term_means[k] /= steps.max(1) as f64;
    }
    r.reward_total /= e;
    r.survival_time /= e;
    r.velocity_error /= e;
    r.heading_error /= e;
    r.criterion_score = r.reward_total;
    r
}

/// Evaluates a training-schema program in one stage. Deployment stages run
/// the program pushed through `map`; terms it cannot carry are dropped and
/// listed in the report's mismatch section.
pub fn homomorphic_eval(
    controller: &(dyn Controller + Sync),
    program: &RewardProgram,
    stage: Stage,
    env_cfg: &Arc<EnvConfig>,
    limits: TaskLimits,
    map: &HomomorphismMap,
    grid: &EvalGrid,
    master_seed: u64,
) -> EvalReport {
    if stage == Stage::Train {
        return evaluate_program(controller, program, stage, env_cfg, limits, grid, master_seed);
    }
    let names = program.terms.iter().map(|t| t.name.clone()).collect();
    match apply_homomorphism(program, map, &training_schema(), &deployment_schema()) {
        Ok((mapped, mismatch)) => {
            let mut r = evaluate_program(controller, &mapped, stage, env_cfg, limits, grid, master_seed);
            r.mismatch = mismatch;
            r
        }
        Err(e) => EvalReport::failed(stage, names, format!("mapping failed: {e}")),
    }
}

/// Human label for a term name: `track_lin_vel` becomes `Track lin vel`.
pub fn term_label(name: &str) -> String {
    let spaced = name.replace('_', " ");
    let mut chars = spaced.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub term: String,
    /// Per-episode raw sums; `None` when the stage did not run or dropped the term.
    pub train: Option<f64>,
    pub gazebo: Option<f64>,
    pub real: Option<f64>,
    pub train_mean: Option<f64>,
    pub gazebo_mean: Option<f64>,
    pub real_mean: Option<f64>,
}

fn stage_value(r: Option<&EvalReport>, term: &str, f: fn(&EvalReport, &str) -> Option<f64>) -> Option<f64> {
    r.filter(|r| !r.is_failed()).and_then(|r| f(r, term))
}

/// Term-by-stage grid, one row per term of the training report (or of the
/// first report present).
pub fn stage_rows(train: Option<&EvalReport>, gazebo: Option<&EvalReport>, real: Option<&EvalReport>) -> Vec<StageRow> {
    let names = train.or(gazebo).or(real).map(|r| r.term_names.clone()).unwrap_or_default();
    names
        .into_iter()
        .map(|t| StageRow {
            train: stage_value(train, &t, EvalReport::term_sum),
            gazebo: stage_value(gazebo, &t, EvalReport::term_sum),
            real: stage_value(real, &t, EvalReport::term_sum),
            train_mean: stage_value(train, &t, EvalReport::term_mean),
            gazebo_mean: stage_value(gazebo, &t, EvalReport::term_mean),
            real_mean: stage_value(real, &t, EvalReport::term_mean),
            term: t,
        })
        .collect()
}

pub fn fmt2(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "n/a".into(),
    }
}

pub fn render_row(label: &str, gym: Option<f64>, gazebo: Option<f64>, real: Option<f64>) -> String {
    format!("{label} | gym {} | gazebo {} | real {}", fmt2(gym), fmt2(gazebo), fmt2(real))
}

/// Plain-text grid in the `Term | gym x | gazebo y | real z` layout.
pub fn render_stage_grid(rows: &[StageRow]) -> String {
    let mut out = String::new();
    for r in rows {
        writeln!(out, "{}", render_row(&term_label(&r.term), r.train, r.gazebo, r.real)).expect("string write");
    }
    out
}

pub fn stage_grid_csv(rows: &[StageRow]) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let delta = |a: Option<f64>, b: Option<f64>| cell(a.zip(b).map(|(a, b)| b - a));
    let mut out = String::from(
        "term,train_sum,gazebo_sum,real_sum,train_mean,gazebo_mean,real_mean,gazebo_minus_train,real_minus_train\n",
    );
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.term,
            cell(r.train),
            cell(r.gazebo),
            cell(r.real),
            cell(r.train_mean),
            cell(r.gazebo_mean),
            cell(r.real_mean),
            delta(r.train, r.gazebo),
            delta(r.train, r.real),
        )
        .expect("string write");
    }
    out
}
