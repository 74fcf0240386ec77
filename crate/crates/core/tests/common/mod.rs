//! Strategies shared by the property suites.
#![allow(dead_code)]

use std::sync::Arc;

use proptest::prelude::*;
use rewardloop::dsl::*;

pub const SIGNALS: [&str; 8] =
    ["base_lin_vel", "base_ang_vel", "pitch", "cmd_lin_vel", "cmd_ang_vel", "last_action", "applied_torque", "survival_dt"];

pub fn literal() -> impl Strategy<Value = f64> + Clone {
    prop_oneof![
        (0u32..1000).prop_map(f64::from),
        0.0f64..10.0,
        (1e-9f64..1e-3),
        (1.0f64..1e12),
    ]
}

/// Any syntactically valid tree in the canonical shape the parser produces.
pub fn any_expr() -> impl Strategy<Value = Expr> + Clone {
    let leaf = prop_oneof![
        literal().prop_map(Expr::Num),
        (0..SIGNALS.len(), proptest::option::of(0usize..4))
            .prop_map(|(i, index)| Expr::Signal { name: SIGNALS[i].into(), index }),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        let un = prop_oneof![
            Just(UnaryOp::Neg),
            Just(UnaryOp::Abs),
            Just(UnaryOp::Exp),
            Just(UnaryOp::Sqrt),
            Just(UnaryOp::Tanh),
            Just(UnaryOp::Square),
            Just(UnaryOp::Norm2),
        ];
        let bin = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
            Just(BinaryOp::Min),
            Just(BinaryOp::Max),
        ];
        prop_oneof![
            (un, inner.clone()).prop_map(|(op, e)| Expr::unary(op, e)),
            (bin, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (inner.clone(), inner.clone(), inner)
                .prop_map(|(a, b, c)| Expr::Clamp(Box::new(a), Box::new(b), Box::new(c))),
        ]
    })
}

pub fn any_program(expr: impl Strategy<Value = Expr>) -> impl Strategy<Value = RewardProgram> {
    proptest::collection::vec((prop_oneof![literal(), literal().prop_map(|v| -v)], expr), 1..5).prop_map(|terms| {
        RewardProgram {
            terms: terms
                .into_iter()
                .enumerate()
                .map(|(i, (scale, expr))| RewardTerm { name: format!("term_{i}"), scale, expr })
                .collect(),
            schema_name: "walker".into(),
        }
    })
}

/// Scalar, well-conditioned trees: no bare division, roots of non-negatives only.
pub fn tame_expr() -> impl Strategy<Value = Expr> + Clone {
    let leaf = prop_oneof![
        (0.0f64..2.0).prop_map(Expr::Num),
        (0..SIGNALS.len()).prop_map(|i| Expr::signal(SIGNALS[i])),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Neg, e)),
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Tanh, e)),
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Square, e)),
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Sqrt, Expr::unary(UnaryOp::Abs, e))),
            inner.clone().prop_map(|e| Expr::unary(UnaryOp::Exp, Expr::unary(UnaryOp::Tanh, e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Add, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Mul, a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::binary(BinaryOp::Max, a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| {
                Expr::binary(
                    BinaryOp::Div,
                    a,
                    Expr::binary(BinaryOp::Add, Expr::Num(1.0), Expr::unary(UnaryOp::Square, b)),
                )
            }),
        ]
    })
}

pub fn close(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

pub fn frame(schema: &Arc<ObservationSchema>, values: &[f64]) -> ObservationFrame {
    ObservationFrame::from_flat(schema.clone(), values.to_vec()).unwrap()
}

pub fn mid_schema() -> Arc<ObservationSchema> {
    Arc::new(
        ObservationSchema::new("mid", (0..SIGNALS.len()).map(|i| SignalSpec::new(format!("m{i}"), 1, "")).collect())
            .unwrap(),
    )
}

pub fn affine_map(sources: Vec<String>, targets: Vec<String>) -> impl Strategy<Value = HomomorphismMap> {
    proptest::collection::vec((0.5f64..2.0, -0.5f64..0.5, any::<bool>()), sources.len()).prop_map(move |v| {
        let entries = sources
            .iter()
            .zip(&targets)
            .zip(v)
            .map(|((s, t), (g, o, neg))| MapEntry::affine(s.clone(), t.clone(), if neg { -g } else { g }, o))
            .collect();
        HomomorphismMap { entries }
    })
}

