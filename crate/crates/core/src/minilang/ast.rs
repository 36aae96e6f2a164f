use std::fmt;

use serde::{Deserialize, Serialize};

/// Dense index of a source statement, assigned in source order across the
/// whole program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StmtId(pub u32);

impl StmtId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Neg,
    Not,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Not => "!",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    /// Builtin `len(array)`.
    Len(Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    ArrayLit(Vec<Expr>),
}

impl Expr {
    /// Literal values as they may appear for test inputs: integers, booleans
    /// and negated integers.
    pub fn is_literal(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Bool(_) => true,
            Expr::Unary(UnOp::Neg, inner) => matches!(**inner, Expr::Int(_)),
            _ => false,
        }
    }

    /// Expressions that forward an existing runtime value without computing a
    /// new one.
    pub fn is_pass_through(&self) -> bool {
        matches!(self, Expr::Var(_) | Expr::Call(..))
    }

    pub fn root_op(&self) -> RootOp {
        match self {
            Expr::Int(_) => RootOp::IntLit,
            Expr::Bool(_) => RootOp::BoolLit,
            Expr::Var(_) => RootOp::Var,
            Expr::Unary(op, _) => RootOp::Unary(*op),
            Expr::Binary(op, _, _) => RootOp::Binary(*op),
            Expr::Call(..) => RootOp::Call,
            Expr::Len(_) => RootOp::Len,
            Expr::Index(..) => RootOp::Index,
            Expr::ArrayLit(_) => RootOp::ArrayLit,
        }
    }

    /// Visits sub-expressions in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => {}
            Expr::Unary(_, e) | Expr::Len(e) => e.walk(f),
            Expr::Binary(_, l, r) | Expr::Index(l, r) => {
                l.walk(f);
                r.walk(f);
            }
            Expr::Call(_, args) | Expr::ArrayLit(args) => {
                for a in args {
                    a.walk(f);
                }
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Expr)) {
        f(self);
        match self {
            Expr::Int(_) | Expr::Bool(_) | Expr::Var(_) => {}
            Expr::Unary(_, e) | Expr::Len(e) => e.walk_mut(f),
            Expr::Binary(_, l, r) | Expr::Index(l, r) => {
                l.walk_mut(f);
                r.walk_mut(f);
            }
            Expr::Call(_, args) | Expr::ArrayLit(args) => {
                for a in args {
                    a.walk_mut(f);
                }
            }
        }
    }
}

/// Operator at the root of the expression a statement evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RootOp {
    IntLit,
    BoolLit,
    Var,
    Unary(UnOp),
    Binary(BinOp),
    Call,
    Len,
    Index,
    ArrayLit,
    /// Statement evaluates no expression (`try`, bare `return`).
    None,
}

impl fmt::Display for RootOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RootOp::IntLit => f.write_str("int"),
            RootOp::BoolLit => f.write_str("bool"),
            RootOp::Var => f.write_str("var"),
            RootOp::Unary(op) => f.write_str(op.symbol()),
            RootOp::Binary(op) => f.write_str(op.symbol()),
            RootOp::Call => f.write_str("call"),
            RootOp::Len => f.write_str("len"),
            RootOp::Index => f.write_str("index"),
            RootOp::ArrayLit => f.write_str("array"),
            RootOp::None => f.write_str("none"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub id: StmtId,
    pub line: u32,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Let {
        name: String,
        value: Expr,
    },
    Assign {
        name: String,
        value: Expr,
    },
    IndexAssign {
        array: String,
        index: Expr,
        value: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Assert(Expr),
    Throw(Expr),
    Try {
        body: Vec<Stmt>,
        catch_name: String,
        handler: Vec<Stmt>,
    },
    Expr(Expr),
}

/// Coarse statement classification stored in the statement table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StmtTag {
    Let,
    Assign,
    IndexAssign,
    If,
    While,
    Return,
    Assert,
    Throw,
    Try,
    Expr,
}

impl StmtTag {
    pub fn is_branch(self) -> bool {
        matches!(self, StmtTag::If | StmtTag::While)
    }

    pub fn name(self) -> &'static str {
        match self {
            StmtTag::Let => "let",
            StmtTag::Assign => "assign",
            StmtTag::IndexAssign => "index-assign",
            StmtTag::If => "if",
            StmtTag::While => "while",
            StmtTag::Return => "return",
            StmtTag::Assert => "assert",
            StmtTag::Throw => "throw",
            StmtTag::Try => "try",
            StmtTag::Expr => "expr",
        }
    }
}

impl StmtKind {
    pub fn tag(&self) -> StmtTag {
        match self {
            StmtKind::Let { .. } => StmtTag::Let,
            StmtKind::Assign { .. } => StmtTag::Assign,
            StmtKind::IndexAssign { .. } => StmtTag::IndexAssign,
            StmtKind::If { .. } => StmtTag::If,
            StmtKind::While { .. } => StmtTag::While,
            StmtKind::Return(_) => StmtTag::Return,
            StmtKind::Assert(_) => StmtTag::Assert,
            StmtKind::Throw(_) => StmtTag::Throw,
            StmtKind::Try { .. } => StmtTag::Try,
            StmtKind::Expr(_) => StmtTag::Expr,
        }
    }

    /// The expression whose value the statement produces.
    pub fn main_expr(&self) -> Option<&Expr> {
        match self {
            StmtKind::Let { value, .. }
            | StmtKind::Assign { value, .. }
            | StmtKind::IndexAssign { value, .. } => Some(value),
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => Some(cond),
            StmtKind::Return(e) => e.as_ref(),
            StmtKind::Assert(e) | StmtKind::Throw(e) | StmtKind::Expr(e) => Some(e),
            StmtKind::Try { .. } => None,
        }
    }

    /// All expressions evaluated directly by this statement, in evaluation
    /// order.
    pub fn exprs(&self) -> Vec<&Expr> {
        match self {
            StmtKind::IndexAssign { index, value, .. } => vec![index, value],
            other => other.main_expr().into_iter().collect(),
        }
    }

    pub fn exprs_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => vec![value],
            StmtKind::IndexAssign { index, value, .. } => vec![index, value],
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
            StmtKind::Return(e) => e.iter_mut().collect(),
            StmtKind::Assert(e) | StmtKind::Throw(e) | StmtKind::Expr(e) => vec![e],
            StmtKind::Try { .. } => vec![],
        }
    }

    pub fn children(&self) -> Vec<&[Stmt]> {
        match self {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => vec![then_body, else_body],
            StmtKind::While { body, .. } => vec![body],
            StmtKind::Try { body, handler, .. } => vec![body, handler],
            _ => vec![],
        }
    }
}

impl Stmt {
    /// Visits this statement and all nested statements in source order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        for block in self.kind.children() {
            for s in block {
                s.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut dyn FnMut(&mut Stmt)) {
        f(self);
        match &mut self.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                for s in then_body.iter_mut().chain(else_body.iter_mut()) {
                    s.walk_mut(f);
                }
            }
            StmtKind::While { body, .. } => {
                for s in body {
                    s.walk_mut(f);
                }
            }
            StmtKind::Try { body, handler, .. } => {
                for s in body.iter_mut().chain(handler.iter_mut()) {
                    s.walk_mut(f);
                }
            }
            _ => {}
        }
    }
}
