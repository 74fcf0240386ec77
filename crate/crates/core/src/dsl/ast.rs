use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    Exp,
    Sqrt,
    Tanh,
    Square,
    /// Squared Euclidean norm; reduces any arity to a scalar.
    Norm2,
}

impl UnaryOp {
    pub const FUNCTIONS: [UnaryOp; 6] =
        [UnaryOp::Abs, UnaryOp::Exp, UnaryOp::Sqrt, UnaryOp::Tanh, UnaryOp::Square, UnaryOp::Norm2];

    pub fn function_name(self) -> Option<&'static str> {
        Some(match self {
            UnaryOp::Neg => return None,
            UnaryOp::Abs => "abs",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Square => "square",
            UnaryOp::Norm2 => "norm2",
        })
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Neg => -x,
            UnaryOp::Abs => x.abs(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Square => x * x,
            UnaryOp::Norm2 => x * x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

impl BinaryOp {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Min => a.min(b),
            BinaryOp::Max => a.max(b),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Min => "min",
            BinaryOp::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Signal { name: String, index: Option<usize> },
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Clamp(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn signal(name: impl Into<String>) -> Self {
        Expr::Signal { name: name.into(), index: None }
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Self {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    /// True when the subtree references no signal.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Signal { .. } => false,
            Expr::Unary(_, e) => e.is_constant(),
            Expr::Binary(_, a, b) => a.is_constant() && b.is_constant(),
            Expr::Clamp(e, lo, hi) => e.is_constant() && lo.is_constant() && hi.is_constant(),
        }
    }

    /// Signal names in first-occurrence order.
    pub fn signals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.visit_signals(&mut |name| {
            if !out.contains(&name) {
                out.push(name);
            }
        });
        out
    }

    fn visit_signals<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Num(_) => {}
            Expr::Signal { name, .. } => f(name),
            Expr::Unary(_, e) => e.visit_signals(f),
            Expr::Binary(_, a, b) => {
                a.visit_signals(f);
                b.visit_signals(f);
            }
            Expr::Clamp(e, lo, hi) => {
                e.visit_signals(f);
                lo.visit_signals(f);
                hi.visit_signals(f);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Signal { .. } => 1,
            Expr::Unary(_, e) => 1 + e.depth(),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
            Expr::Clamp(e, lo, hi) => 1 + e.depth().max(lo.depth()).max(hi.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTerm {
    pub name: String,
    pub scale: f64,
    pub expr: Expr,
}

/// Ordered, uniquely named reward terms bound to a schema by name.
/// Total reward is the scale-weighted sum of the term values.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardProgram {
    pub terms: Vec<RewardTerm>,
    pub schema_name: String,
}

impl RewardProgram {
    pub fn term(&self, name: &str) -> Option<&RewardTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn term_names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.name.as_str()).collect()
    }

    /// Every signal referenced by any term, first-occurrence order.
    pub fn signals(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            for s in t.expr.signals() {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out
    }
}

impl fmt::Display for RewardProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::printer::pretty_print(self))
    }
}
