//! Syntax tree for phenotype programs.
//!
//! Structural equality (`PartialEq`) ignores spans and the original source
//! text, so a parsed program equals its re-rendered round trip.

use std::fmt;

/// 1-based source position (columns count characters, not bytes).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "or",
            BinaryOp::And => "and",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Min,
    Max,
    Clamp,
    Abs,
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Min => "min",
            Builtin::Max => "max",
            Builtin::Clamp => "clamp",
            Builtin::Abs => "abs",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Min | Builtin::Max => 2,
            Builtin::Clamp => 3,
            Builtin::Abs => 1,
        }
    }

    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "min" => Some(Builtin::Min),
            "max" => Some(Builtin::Max),
            "clamp" => Some(Builtin::Clamp),
            "abs" => Some(Builtin::Abs),
            _ => None,
        }
    }
}

/// How an identifier was resolved at parse time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdentTarget {
    /// A `let`-bound program variable.
    Variable,
    /// A feature column from the schema the program was parsed against.
    Feature,
}

#[derive(Clone, Debug)]
pub enum Expr {
    Number {
        value: f64,
        span: Span,
    },
    Ident {
        name: String,
        target: IdentTarget,
        span: Span,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
        span: Span,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    Call {
        builtin: Builtin,
        args: Vec<Expr>,
        span: Span,
    },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Number { span, .. }
            | Expr::Ident { span, .. }
            | Expr::Unary { span, .. }
            | Expr::Binary { span, .. }
            | Expr::Call { span, .. } => *span,
        }
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Expr::Number { value: a, .. }, Expr::Number { value: b, .. }) => a == b,
            (
                Expr::Ident { name: a, target: ta, .. },
                Expr::Ident { name: b, target: tb, .. },
            ) => a == b && ta == tb,
            (
                Expr::Unary { op: oa, operand: a, .. },
                Expr::Unary { op: ob, operand: b, .. },
            ) => oa == ob && a == b,
            (
                Expr::Binary { op: oa, lhs: la, rhs: ra, .. },
                Expr::Binary { op: ob, lhs: lb, rhs: rb, .. },
            ) => oa == ob && la == lb && ra == rb,
            (
                Expr::Call { builtin: ba, args: aa, .. },
                Expr::Call { builtin: bb, args: ab, .. },
            ) => ba == bb && aa == ab,
            _ => false,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Stmt {
    Let {
        name: String,
        value: Expr,
        span: Span,
    },
    Assign {
        name: String,
        value: Expr,
        span: Span,
    },
    If {
        cond: Expr,
        then_block: Vec<Stmt>,
        else_block: Option<Vec<Stmt>>,
        span: Span,
    },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Let { span, .. } | Stmt::Assign { span, .. } | Stmt::If { span, .. } => *span,
        }
    }
}

impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                Stmt::Let { name: na, value: va, .. },
                Stmt::Let { name: nb, value: vb, .. },
            ) => na == nb && va == vb,
            (
                Stmt::Assign { name: na, value: va, .. },
                Stmt::Assign { name: nb, value: vb, .. },
            ) => na == nb && va == vb,
            (
                Stmt::If { cond: ca, then_block: ta, else_block: ea, .. },
                Stmt::If { cond: cb, then_block: tb, else_block: eb, .. },
            ) => ca == cb && ta == tb && ea == eb,
            _ => false,
        }
    }
}

/// A parsed phenotype program: ordered statements followed by one return
/// expression whose value (clamped to [0, 1]) is the predicted probability.
#[derive(Clone, Debug)]
pub struct Program {
    pub name: String,
    pub body: Vec<Stmt>,
    pub result: Expr,
    pub source_text: String,
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.body == other.body && self.result == other.result
    }
}
