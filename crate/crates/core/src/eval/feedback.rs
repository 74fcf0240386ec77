use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dsl::{pretty_print, MismatchReport, RewardProgram};
use crate::llm::BEST_PROGRAM_HEADER;

use super::evaluate::{fmt2, render_row, stage_rows, term_label, EvalReport};
use super::safety::SafetyVerdict;

/// Everything known about one candidate when feedback is compiled.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub index: usize,
    pub program: Option<RewardProgram>,
    /// Generation, training, or evaluation failure, verbatim.
    pub failure: Option<String>,
    pub train_criterion: Option<f64>,
    pub selected: bool,
    pub train: Option<EvalReport>,
    pub gazebo: Option<EvalReport>,
    pub real: Option<EvalReport>,
    pub verdict: Option<SafetyVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub index: usize,
    /// Iteration that produced the best candidate.
    pub iteration: usize,
    pub program: RewardProgram,
    pub train_criterion: f64,
    pub gazebo: f64,
    pub real: Option<f64>,
}

fn mismatch_lines(out: &mut String, m: &MismatchReport) {
    if !m.unmapped_signals.is_empty() {
        writeln!(out, "  unmapped signals: {}", m.unmapped_signals.join(", ")).expect("string write");
    }
    if !m.dropped_terms.is_empty() {
        writeln!(out, "  dropped terms: {}", m.dropped_terms.join(", ")).expect("string write");
    }
}

/// Deterministic feedback text; every number is printed with two decimals.
pub fn compile_feedback(candidates: &[CandidateSummary], best: Option<&BestSummary>) -> String {
    let mut out = String::new();
    for c in candidates {
        writeln!(out, "### Candidate {}", c.index).expect("string write");
        if let Some(f) = &c.failure {
            writeln!(out, "Failed:\n{}", f.trim_end()).expect("string write");
            out.push('\n');
            continue;
        }
        if let Some(p) = &c.program {
            writeln!(out, "```reward\n{}```", pretty_print(p)).expect("string write");
        }
        if let Some(s) = c.train_criterion {
            writeln!(out, "Train criterion: {}{}", fmt2(Some(s)), if c.selected { " (selected)" } else { "" })
                .expect("string write");
        }
        if let Some(t) = &c.train {
            writeln!(
                out,
                "Training: survival {} s, velocity error {} m/s, max |pitch| {} rad",
                fmt2(Some(t.survival_time)),
                fmt2(Some(t.velocity_error)),
                fmt2(Some(t.max_abs_pitch))
            )
            .expect("string write");
        }
        for r in [&c.gazebo, &c.real].into_iter().flatten() {
            if let Some(f) = &r.failure {
                writeln!(out, "{} evaluation failed: {f}", r.stage.as_str()).expect("string write");
            }
        }
        let rows = stage_rows(c.train.as_ref(), c.gazebo.as_ref(), c.real.as_ref());
        if c.gazebo.is_some() && !rows.is_empty() {
            writeln!(out, "Per-term episode sums:").expect("string write");
            for r in &rows {
                let d = |x: Option<f64>| r.train.zip(x).map(|(a, b)| b - a);
                writeln!(
                    out,
                    "  {} | delta gazebo {} | delta real {}",
                    render_row(&term_label(&r.term), r.train, r.gazebo, r.real),
                    fmt2(d(r.gazebo)),
                    fmt2(d(r.real))
                )
                .expect("string write");
            }
        }
        if let Some(g) = &c.gazebo {
            mismatch_lines(&mut out, &g.mismatch);
        }
        if let Some(v) = &c.verdict {
            if v.passed {
                writeln!(out, "Safety: passed").expect("string write");
            } else {
                writeln!(out, "Safety: FAILED").expect("string write");
                for x in &v.violations {
                    writeln!(out, "  {}: observed {} > limit {}", x.rule, fmt2(Some(x.observed)), fmt2(Some(x.limit)))
                        .expect("string write");
                }
            }
        }
        out.push('\n');
    }
    if let Some(b) = best {
        out.push_str(&render_best(b));
    }
    out
}

pub fn render_best(b: &BestSummary) -> String {
    format!(
        "{BEST_PROGRAM_HEADER}\n```reward\n{}```\nScores: train criterion {} | gazebo {} | real {} (iteration {}, candidate {})\n",
        pretty_print(&b.program),
        fmt2(Some(b.train_criterion)),
        fmt2(Some(b.gazebo)),
        fmt2(b.real),
        b.iteration,
        b.index
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::eval::evaluate::Stage;
    use crate::eval::safety::Violation;

    fn report(stage: Stage, sums: &[f64]) -> EvalReport {
        EvalReport {
            term_names: vec!["survival".into(), "track_lin_vel".into()],
            term_sums: sums.to_vec(),
            term_means: sums.iter().map(|s| s / 500.0).collect(),
            ..EvalReport::empty(stage)
        }
    }

    fn summaries() -> Vec<CandidateSummary> {
        let p = parse_program("survival: survival_dt\ntrack_lin_vel: exp(-norm2(base_lin_vel - cmd_lin_vel)/0.25)").unwrap();
        vec![
            CandidateSummary { index: 0, failure: Some("line 1, column 4: expected expression".into()), ..Default::default() },
            CandidateSummary {
                index: 1,
                program: Some(p),
                failure: None,
                train_criterion: Some(0.8123),
                selected: true,
                train: Some(report(Stage::Train, &[10.0, 56.923])),
                gazebo: Some(report(Stage::GazeboLike, &[9.5, 21.93])),
                real: Some(report(Stage::RealLike, &[9.0, 20.41])),
                verdict: Some(SafetyVerdict { passed: true, violations: vec![] }),
            },
            CandidateSummary {
                index: 2,
                program: Some(parse_program("survival: survival_dt").unwrap()),
                verdict: Some(SafetyVerdict {
                    passed: false,
                    violations: vec![Violation { rule: "pitch".into(), observed: 0.8, limit: 0.5 }],
                }),
                ..Default::default()
            },
        ]
    }

    #[test]
    fn sections_follow_the_contract() {
        let best = BestSummary {
            index: 1,
            iteration: 0,
            program: summaries()[1].program.clone().unwrap(),
            train_criterion: 0.81,
            gazebo: 31.43,
            real: Some(29.41),
        };
        let text = compile_feedback(&summaries(), Some(&best));
        assert!(text.contains("### Candidate 0\nFailed:\nline 1, column 4: expected expression\n"));
        assert!(text.contains("Track lin vel | gym 56.92 | gazebo 21.93 | real 20.41 | delta gazebo -34.99 | delta real -36.51"));
        assert!(text.contains("pitch: observed 0.80 > limit 0.50"));
        assert!(text.ends_with(&render_best(&best)));
        assert!(render_best(&best).contains(&pretty_print(&best.program)));
        assert!(render_best(&best).contains("Scores: train criterion 0.81 | gazebo 31.43 | real 29.41"));
        assert_eq!(text, compile_feedback(&summaries(), Some(&best)));
    }
}
