use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{BinaryOp, Expr, RewardProgram, UnaryOp};
use super::schema::ObservationFrame;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("term `{term}`: {message}")]
pub struct EvalError {
    pub term: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {step}: {source}")]
pub struct StepEvalError {
    pub step: usize,
    #[source]
    pub source: EvalError,
}

/// Raw per-term values for one frame and their scale-weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct TermValues {
    pub values: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone)]
enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Value {
    fn map(self, f: impl Fn(f64) -> f64) -> Value {
        match self {
            Value::Scalar(x) => Value::Scalar(f(x)),
            Value::Vector(v) => Value::Vector(v.into_iter().map(f).collect()),
        }
    }

    fn get(&self, i: usize) -> f64 {
        match self {
            Value::Scalar(x) => *x,
            Value::Vector(v) => v[i],
        }
    }

    fn len(&self) -> usize {
        match self {
            Value::Scalar(_) => 1,
            Value::Vector(v) => v.len(),
        }
    }

    fn finite(&self) -> bool {
        match self {
            Value::Scalar(x) => x.is_finite(),
            Value::Vector(v) => v.iter().all(|x| x.is_finite()),
        }
    }
}

fn zip(a: Value, b: Value, f: impl Fn(f64, f64) -> f64) -> Result<Value, String> {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(f(x, y))),
        (a, b) => {
            let n = a.len().max(b.len());
            if (a.len() != n && a.len() != 1) || (b.len() != n && b.len() != 1) {
                return Err(format!("arity mismatch ({} vs {})", a.len(), b.len()));
            }
            let pick = |v: &Value, i| if v.len() == 1 { v.get(0) } else { v.get(i) };
            Ok(Value::Vector((0..n).map(|i| f(pick(&a, i), pick(&b, i))).collect()))
        }
    }
}

fn eval_expr(e: &Expr, frame: &ObservationFrame) -> Result<Value, String> {
    let v = match e {
        Expr::Num(x) => Value::Scalar(*x),
        Expr::Signal { name, index } => {
            let vals = frame.get(name).ok_or_else(|| format!("unknown signal `{name}`"))?;
            match index {
                Some(i) => Value::Scalar(
                    *vals.get(*i).ok_or_else(|| format!("index {i} out of range for `{name}`"))?,
                ),
                None if vals.len() == 1 => Value::Scalar(vals[0]),
                None => Value::Vector(vals.to_vec()),
            }
        }
        Expr::Unary(UnaryOp::Norm2, a) => {
            let a = eval_expr(a, frame)?;
            Value::Scalar(match a {
                Value::Scalar(x) => x * x,
                Value::Vector(v) => v.iter().map(|x| x * x).sum(),
            })
        }
        Expr::Unary(op, a) => {
            let a = eval_expr(a, frame)?;
            if *op == UnaryOp::Sqrt && (0..a.len()).any(|i| a.get(i) < 0.0) {
                return Err("sqrt of negative value".into());
            }
            let out = a.map(|x| op.apply(x));
            if *op == UnaryOp::Exp && !out.finite() {
                return Err("exp overflow".into());
            }
            out
        }
        Expr::Binary(op, a, b) => {
            let a = eval_expr(a, frame)?;
            let b = eval_expr(b, frame)?;
            if *op == BinaryOp::Div && (0..b.len()).any(|i| b.get(i) == 0.0) {
                return Err("division by zero".into());
            }
            zip(a, b, |x, y| op.apply(x, y))?
        }
        Expr::Clamp(x, lo, hi) => {
            let x = eval_expr(x, frame)?;
            let lo = eval_expr(lo, frame)?;
            let hi = eval_expr(hi, frame)?;
            let lower = zip(x, lo, f64::max)?;
            zip(lower, hi, f64::min)?
        }
    };
    if v.finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value in `{}`", super::printer::expr_to_string(e)))
    }
}

/// Evaluates every term on one frame. Pure in `(program, frame)`.
///
/// Any non-finite intermediate (division by zero, exp overflow, sqrt of a
/// negative) is an error naming the term.
pub fn eval_step(p: &RewardProgram, frame: &ObservationFrame) -> Result<TermValues, EvalError> {
    let mut values = Vec::with_capacity(p.terms.len());
    let mut total = 0.0;
    for t in &p.terms {
        let v = match eval_expr(&t.expr, frame) {
            Ok(Value::Scalar(x)) => x,
            Ok(Value::Vector(_)) => {
                return Err(EvalError { term: t.name.clone(), message: "term is not scalar".into() })
            }
            Err(message) => return Err(EvalError { term: t.name.clone(), message }),
        };
        total += t.scale * v;
        values.push(v);
    }
    if !total.is_finite() {
        return Err(EvalError { term: "<total>".into(), message: "non-finite weighted total".into() });
    }
    Ok(TermValues { values, total })
}

/// Per-term totals over a sequence of frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSummary {
    pub term_names: Vec<String>,
    pub steps: usize,
    /// Raw (unscaled) per-term sums.
    pub sums: Vec<f64>,
    /// Raw per-term means; zero for an empty sequence.
    pub means: Vec<f64>,
    /// `scale * sum` per term.
    pub weighted_sums: Vec<f64>,
    pub total: f64,
}

pub fn accumulate<'a>(
    p: &RewardProgram,
    frames: impl IntoIterator<Item = &'a ObservationFrame>,
) -> Result<RewardSummary, StepEvalError> {
    let n = p.terms.len();
    let mut sums = vec![0.0; n];
    let mut steps = 0;
    for (step, frame) in frames.into_iter().enumerate() {
        let tv = eval_step(p, frame).map_err(|source| StepEvalError { step, source })?;
        for (s, v) in sums.iter_mut().zip(&tv.values) {
            *s += v;
        }
        steps += 1;
    }
    Ok(summarize(p, sums, steps))
}

/// Builds a summary from already-accumulated raw sums.
pub fn summarize(p: &RewardProgram, sums: Vec<f64>, steps: usize) -> RewardSummary {
    let means = sums.iter().map(|s| if steps == 0 { 0.0 } else { s / steps as f64 }).collect();
    let weighted_sums: Vec<f64> = p.terms.iter().zip(&sums).map(|(t, s)| t.scale * s).collect();
    let total = weighted_sums.iter().sum();
    RewardSummary {
        term_names: p.terms.iter().map(|t| t.name.clone()).collect(),
        steps,
        sums,
        means,
        weighted_sums,
        total,
    }
}
