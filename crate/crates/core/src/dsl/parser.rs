//! Line-oriented reward program syntax.
//!
//! ```text
//! # comment
//! @schema walker
//! track_lin_vel: 1.0 * exp(-norm2(base_lin_vel - cmd_lin_vel) / 0.25)
//! survival: survival_dt
//! ```
//!
//! One term per line, `name: [scale *] expr`. A leading numeric literal
//! (optionally negated) multiplied onto the rest of the expression is taken
//! as the term scale; otherwise the scale is 1. The `@schema` directive is
//! optional and defaults to [`DEFAULT_SCHEMA`].

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use super::ast::{BinaryOp, Expr, RewardProgram, RewardTerm, UnaryOp};

pub const DEFAULT_SCHEMA: &str = "walker";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Lex,
    Parse,
    DuplicateTerm,
    NoTerms,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Lex => "lex error",
            ParseErrorKind::Parse => "parse error",
            ParseErrorKind::DuplicateTerm => "duplicate term",
            ParseErrorKind::NoTerms => "parse error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at {line}:{column}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, pos: Pos, message: impl Into<String>) -> Self {
        Self { kind, line: pos.line, column: pos.column, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    column: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Colon,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    At,
    Newline,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Num(v) => write!(f, "number `{v}`"),
            Tok::Colon => f.write_str("`:`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Slash => f.write_str("`/`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::At => f.write_str("`@`"),
            Tok::Newline => f.write_str("end of line"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(source: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = source.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        match c {
            '\n' => {
                out.push((Tok::Newline, pos));
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                    col += 1;
                }
                continue;
            }
            ':' => out.push((Tok::Colon, pos)),
            '+' => out.push((Tok::Plus, pos)),
            '-' => out.push((Tok::Minus, pos)),
            '*' => out.push((Tok::Star, pos)),
            '/' => out.push((Tok::Slash, pos)),
            '(' => out.push((Tok::LParen, pos)),
            ')' => out.push((Tok::RParen, pos)),
            '[' => out.push((Tok::LBracket, pos)),
            ']' => out.push((Tok::RBracket, pos)),
            ',' => out.push((Tok::Comma, pos)),
            '@' => out.push((Tok::At, pos)),
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i < chars.len() && chars[i] == '.' {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value: f64 = text
                    .parse()
                    .map_err(|_| ParseError::new(ParseErrorKind::Lex, pos, format!("malformed number `{text}`")))?;
                if !value.is_finite() {
                    return Err(ParseError::new(ParseErrorKind::Lex, pos, format!("number `{text}` out of range")));
                }
                col += i - start;
                out.push((Tok::Num(value), pos));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                col += i - start;
                out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
                continue;
            }
            other => {
                return Err(ParseError::new(ParseErrorKind::Lex, pos, format!("unexpected character `{other}`")));
            }
        }
        i += 1;
        col += 1;
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, Pos) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError::new(ParseErrorKind::Parse, self.pos(), message)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {want}, found {}", self.peek())))
        }
    }

    fn end_of_line(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            other => Err(self.err(format!("expected end of line, found {other}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinaryOp::Add,
                Tok::Minus => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinaryOp::Mul,
                Tok::Slash => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::unary(UnaryOp::Neg, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.bump();
                    self.call(name, pos)
                } else if *self.peek() == Tok::LBracket {
                    self.bump();
                    let index = match self.bump() {
                        (Tok::Num(v), _) if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 => v as usize,
                        (_, p) => {
                            return Err(ParseError::new(
                                ParseErrorKind::Parse,
                                p,
                                "index must be a non-negative integer literal",
                            ))
                        }
                    };
                    self.expect(Tok::RBracket)?;
                    Ok(Expr::Signal { name, index: Some(index) })
                } else {
                    Ok(Expr::Signal { name, index: None })
                }
            }
            other => Err(ParseError::new(ParseErrorKind::Parse, pos, format!("expected expression, found {other}"))),
        }
    }

    fn call(&mut self, name: String, pos: Pos) -> Result<Expr, ParseError> {
        let mut args = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                args.push(self.expr()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        let arity_err = |want: usize| {
            ParseError::new(
                ParseErrorKind::Parse,
                pos,
                format!("function `{name}` takes {want} argument(s), got {}", args.len()),
            )
        };
        if let Some(op) = UnaryOp::FUNCTIONS.iter().copied().find(|op| op.function_name() == Some(name.as_str())) {
            if args.len() != 1 {
                return Err(arity_err(1));
            }
            return Ok(Expr::unary(op, args.pop().expect("one arg")));
        }
        match name.as_str() {
            "min" | "max" => {
                if args.len() != 2 {
                    return Err(arity_err(2));
                }
                let b = args.pop().expect("two args");
                let a = args.pop().expect("two args");
                let op = if name == "min" { BinaryOp::Min } else { BinaryOp::Max };
                Ok(Expr::binary(op, a, b))
            }
            "clamp" => {
                if args.len() != 3 {
                    return Err(arity_err(3));
                }
                let hi = args.pop().expect("three args");
                let lo = args.pop().expect("three args");
                let e = args.pop().expect("three args");
                Ok(Expr::Clamp(Box::new(e), Box::new(lo), Box::new(hi)))
            }
            _ => Err(ParseError::new(ParseErrorKind::Parse, pos, format!("unknown function `{name}`"))),
        }
    }
}

/// Splits `k * rest` into `(k, rest)` when the leftmost factor is a literal.
fn split_scale(expr: Expr) -> (f64, Expr) {
    match expr {
        Expr::Binary(BinaryOp::Mul, lhs, rhs) => match *lhs {
            Expr::Num(k) => (k, *rhs),
            Expr::Unary(UnaryOp::Neg, inner) if matches!(*inner, Expr::Num(_)) => {
                let Expr::Num(k) = *inner else { unreachable!() };
                (-k, *rhs)
            }
            lhs => (1.0, Expr::Binary(BinaryOp::Mul, Box::new(lhs), rhs)),
        },
        e => (1.0, e),
    }
}

pub fn parse_program(source: &str) -> Result<RewardProgram, ParseError> {
    let mut p = Parser { toks: lex(source)?, at: 0 };
    let mut schema_name: Option<String> = None;
    let mut terms = Vec::new();
    let mut names = HashSet::new();
    loop {
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Newline => {
                p.bump();
            }
            Tok::At => {
                let pos = p.pos();
                p.bump();
                match p.bump() {
                    (Tok::Ident(d), _) if d == "schema" => {}
                    (t, tp) => {
                        return Err(ParseError::new(ParseErrorKind::Parse, tp, format!("unknown directive {t}")))
                    }
                }
                let name = match p.bump() {
                    (Tok::Ident(n), _) => n,
                    (t, tp) => {
                        return Err(ParseError::new(
                            ParseErrorKind::Parse,
                            tp,
                            format!("expected schema name, found {t}"),
                        ))
                    }
                };
                if schema_name.is_some() {
                    return Err(ParseError::new(ParseErrorKind::Parse, pos, "schema declared twice"));
                }
                schema_name = Some(name);
                p.end_of_line()?;
            }
            Tok::Ident(name) => {
                let pos = p.pos();
                p.bump();
                p.expect(Tok::Colon)?;
                let (scale, expr) = split_scale(p.expr()?);
                p.end_of_line()?;
                if !names.insert(name.clone()) {
                    return Err(ParseError::new(
                        ParseErrorKind::DuplicateTerm,
                        pos,
                        format!("term `{name}` defined more than once"),
                    ));
                }
                terms.push(RewardTerm { name, scale, expr });
            }
            other => return Err(p.err(format!("expected term name, found {other}"))),
        }
    }
    if terms.is_empty() {
        return Err(ParseError::new(ParseErrorKind::NoTerms, p.pos(), "no terms"));
    }
    Ok(RewardProgram { terms, schema_name: schema_name.unwrap_or_else(|| DEFAULT_SCHEMA.to_string()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracking_term_shape() {
        let p = parse_program("track_lin_vel: 1.0 * exp(-norm2(base_lin_vel - cmd_lin_vel)/0.25)").unwrap();
        assert_eq!(p.terms.len(), 1);
        let t = &p.terms[0];
        assert_eq!(t.name, "track_lin_vel");
        assert_eq!(t.scale, 1.0);
        let Expr::Unary(UnaryOp::Exp, inner) = &t.expr else { panic!("expected exp, got {:?}", t.expr) };
        let Expr::Binary(BinaryOp::Div, num, den) = inner.as_ref() else { panic!() };
        assert_eq!(**den, Expr::Num(0.25));
        let Expr::Unary(UnaryOp::Neg, n2) = num.as_ref() else { panic!() };
        assert!(matches!(n2.as_ref(), Expr::Unary(UnaryOp::Norm2, _)));
        assert_eq!(p.schema_name, DEFAULT_SCHEMA);
    }

    #[test]
    fn empty_source_has_no_terms() {
        let e = parse_program("").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NoTerms);
        assert!(e.to_string().contains("no terms"));
        assert_eq!(parse_program("# only a comment\n\n").unwrap_err().kind, ParseErrorKind::NoTerms);
    }

    #[test]
    fn leading_literal_becomes_scale() {
        let p = parse_program("x: 2*(3+4)").unwrap();
        assert_eq!(p.terms[0].scale, 2.0);
        let p = parse_program("y: -0.5 * pitch").unwrap();
        assert_eq!(p.terms[0].scale, -0.5);
        let p = parse_program("z: pitch * 3").unwrap();
        assert_eq!(p.terms[0].scale, 1.0);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_program("a: 1\nb: exp(pitch\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Parse);
        assert_eq!(e.line, 2);
        let e = parse_program("a: 1\n  b: 2 $ 3").unwrap_err();
        assert_eq!((e.kind, e.line, e.column), (ParseErrorKind::Lex, 2, 8));
        let e = parse_program("a: 1\na: 2").unwrap_err();
        assert_eq!((e.kind, e.line, e.column), (ParseErrorKind::DuplicateTerm, 2, 1));
        let e = parse_program("a: foo(1)").unwrap_err();
        assert!(e.message.contains("unknown function"));
        let e = parse_program("a: clamp(1, 2)").unwrap_err();
        assert!(e.message.contains("takes 3"));
    }

    #[test]
    fn schema_directive_and_indexing() {
        let p = parse_program("@schema deploy\nv: odom[1] + 1e-3").unwrap();
        assert_eq!(p.schema_name, "deploy");
        let Expr::Binary(_, lhs, rhs) = &p.terms[0].expr else { panic!() };
        assert_eq!(**lhs, Expr::Signal { name: "odom".into(), index: Some(1) });
        assert_eq!(**rhs, Expr::Num(1e-3));
        assert!(parse_program("v: odom[1.5]").is_err());
    }

    #[test]
    fn overflowing_literal_is_lex_error() {
        assert_eq!(parse_program("a: 1e999").unwrap_err().kind, ParseErrorKind::Lex);
    }
}
