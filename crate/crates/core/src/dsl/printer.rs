use std::fmt::Write;

use super::ast::{BinaryOp, Expr, RewardProgram, UnaryOp};

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_UNARY: u8 = 3;
const PREC_ATOM: u8 = 4;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => PREC_SUM,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => PREC_PRODUCT,
        Expr::Unary(UnaryOp::Neg, _) => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

fn number(out: &mut String, v: f64) {
    // `{}` on f64 prints the shortest string that parses back to the same value.
    if v.is_sign_negative() {
        let _ = write!(out, "-{}", -v);
    } else {
        let _ = write!(out, "{v}");
    }
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let wrap = precedence(e) < min_prec;
    if wrap {
        out.push('(');
    }
    match e {
        Expr::Num(v) => number(out, *v),
        Expr::Signal { name, index } => {
            out.push_str(name);
            if let Some(i) = index {
                let _ = write!(out, "[{i}]");
            }
        }
        Expr::Unary(UnaryOp::Neg, a) => {
            out.push('-');
            write_expr(out, a, PREC_UNARY);
        }
        Expr::Unary(op, a) => {
            out.push_str(op.function_name().expect("function op"));
            out.push('(');
            write_expr(out, a, 0);
            out.push(')');
        }
        Expr::Binary(op @ (BinaryOp::Min | BinaryOp::Max), a, b) => {
            out.push_str(op.symbol());
            out.push('(');
            write_expr(out, a, 0);
            out.push_str(", ");
            write_expr(out, b, 0);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            let p = precedence(e);
            write_expr(out, a, p);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, b, p + 1);
        }
        Expr::Clamp(a, lo, hi) => {
            out.push_str("clamp(");
            write_expr(out, a, 0);
            out.push_str(", ");
            write_expr(out, lo, 0);
            out.push_str(", ");
            write_expr(out, hi, 0);
            out.push(')');
        }
    }
    if wrap {
        out.push(')');
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

/// Canonical text: a schema directive, then `name: scale * expr` per line.
pub fn pretty_print(p: &RewardProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@schema {}", p.schema_name);
    for t in &p.terms {
        let _ = write!(out, "{}: ", t.name);
        number(&mut out, t.scale);
        out.push_str(" * ");
        write_expr(&mut out, &t.expr, PREC_UNARY);
        out.push('\n');
    }
    out
}

/// Programs serialize as their canonical text.
impl serde::Serialize for RewardProgram {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&pretty_print(self))
    }
}

impl<'de> serde::Deserialize<'de> for RewardProgram {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        super::parser::parse_program(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    #[test]
    fn one_term_canonical_form() {
        let p = parse_program("track: exp(-norm2(base_lin_vel - cmd_lin_vel)/0.25)").unwrap();
        assert_eq!(pretty_print(&p), "@schema walker\ntrack: 1 * exp(-norm2(base_lin_vel - cmd_lin_vel) / 0.25)\n");
    }

    #[test]
    fn nested_products_keep_scale_unambiguous() {
        for src in ["a: 3 * x", "a: 1 * (3 * x)", "a: 2 * (3 * x) * y", "a: -2 * -x", "a: x - (y - z)", "a: -0 * 1"] {
            let p = parse_program(src).unwrap();
            let again = parse_program(&pretty_print(&p)).unwrap();
            assert_eq!(p, again, "{src}");
        }
    }
}
