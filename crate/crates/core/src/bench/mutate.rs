use std::fmt;

use crate::minilang::{BinOp, Expr, FunctionDef, Program, Stmt, StmtId, StmtKind, UnOp};

/// One operator substitution at a pre-order node position of a statement's
/// own expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mutation {
    pub stmt: StmtId,
    pub node: usize,
    pub rewrite: Rewrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rewrite {
    Op { from: BinOp, to: BinOp },
    Const { from: i64, to: i64 },
}

impl fmt::Display for Rewrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rewrite::Op { from, to } => write!(f, "{} -> {}", from.symbol(), to.symbol()),
            Rewrite::Const { from, to } => write!(f, "{from} -> {to}"),
        }
    }
}

fn swapped(op: BinOp) -> Option<BinOp> {
    use BinOp::*;
    Some(match op {
        Le => Lt,
        Lt => Le,
        Ge => Gt,
        Gt => Ge,
        Eq => Ne,
        Ne => Eq,
        Add => Sub,
        Sub => Add,
        Mul => Div,
        Div => Mul,
        And => Or,
        Or => And,
        Rem => return None,
    })
}

fn constant(e: &Expr) -> Option<i64> {
    match e {
        Expr::Int(v) => Some(*v),
        Expr::Unary(UnOp::Neg, inner) => match **inner {
            Expr::Int(v) => Some(v.wrapping_neg()),
            _ => None,
        },
        _ => None,
    }
}

/// Source-level form of an integer: negatives are negated literals.
fn literal(v: i64) -> Expr {
    if v < 0 {
        Expr::Unary(UnOp::Neg, Box::new(Expr::Int(v.wrapping_neg())))
    } else {
        Expr::Int(v)
    }
}

fn own_exprs(s: &Stmt) -> Vec<&Expr> {
    match &s.kind {
        StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => vec![value],
        StmtKind::IndexAssign { index, value, .. } => vec![index, value],
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
        StmtKind::Return(Some(e)) | StmtKind::Assert(e) | StmtKind::Throw(e) | StmtKind::Expr(e) => {
            vec![e]
        }
        StmtKind::Return(None) | StmtKind::Try { .. } => Vec::new(),
    }
}

fn own_exprs_mut(s: &mut Stmt) -> Vec<&mut Expr> {
    match &mut s.kind {
        StmtKind::Let { value, .. } | StmtKind::Assign { value, .. } => vec![value],
        StmtKind::IndexAssign { index, value, .. } => vec![index, value],
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => vec![cond],
        StmtKind::Return(Some(e)) | StmtKind::Assert(e) | StmtKind::Throw(e) | StmtKind::Expr(e) => {
            vec![e]
        }
        StmtKind::Return(None) | StmtKind::Try { .. } => Vec::new(),
    }
}

/// Every applicable mutation of the candidate statements, in statement and
/// node order.
pub fn mutation_sites(program: &Program) -> Vec<Mutation> {
    let mut out = Vec::new();
    for id in program.candidates() {
        let Some(s) = program.find_stmt(id) else { continue };
        let mut node = 0;
        for e in own_exprs(s) {
            let mut under_neg = false;
            e.walk(&mut |x| {
                let here = node;
                node += 1;
                if std::mem::take(&mut under_neg) {
                    return;
                }
                if let Some(v) = constant(x) {
                    under_neg = matches!(x, Expr::Unary(..));
                    for to in [v.wrapping_add(1), v.wrapping_sub(1)] {
                        out.push(Mutation {
                            stmt: id,
                            node: here,
                            rewrite: Rewrite::Const { from: v, to },
                        });
                    }
                } else if let Expr::Binary(op, ..) = x {
                    if let Some(to) = swapped(*op) {
                        out.push(Mutation {
                            stmt: id,
                            node: here,
                            rewrite: Rewrite::Op { from: *op, to },
                        });
                    }
                }
            });
        }
    }
    out
}

fn find_mut(body: &mut [Stmt], id: StmtId) -> Option<&mut Stmt> {
    for s in body {
        if s.id == id {
            return Some(s);
        }
        let found = match &mut s.kind {
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => find_mut(then_body, id).or_else(|| find_mut(else_body, id)),
            StmtKind::While { body, .. } => find_mut(body, id),
            StmtKind::Try { body, handler, .. } => {
                find_mut(body, id).or_else(|| find_mut(handler, id))
            }
            _ => None,
        };
        if found.is_some() {
            return found;
        }
    }
    None
}

/// The program with `m` applied, or `None` if the site does not match.
pub fn apply(program: &Program, m: &Mutation) -> Option<Program> {
    let mut functions: Vec<FunctionDef> = program.functions.clone();
    let f = program.stmt(m.stmt)?.function;
    let s = find_mut(&mut functions[f].body, m.stmt)?;
    let mut node = 0;
    let mut applied = false;
    for e in own_exprs_mut(s) {
        e.walk_mut(&mut |x| {
            if node == m.node && !applied {
                match m.rewrite {
                    Rewrite::Op { from, to } => {
                        if let Expr::Binary(op, ..) = x {
                            if *op == from {
                                *op = to;
                                applied = true;
                            }
                        }
                    }
                    Rewrite::Const { from, to } => {
                        if constant(x) == Some(from) {
                            *x = literal(to);
                            applied = true;
                        }
                    }
                }
            }
            node += 1;
        });
    }
    applied.then(|| program.with_edited_functions(functions))
}
