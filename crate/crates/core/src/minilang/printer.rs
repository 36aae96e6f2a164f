use super::ast::{Expr, Stmt, StmtKind, UnOp};
use super::Program;

/// Renders a program back to MiniImp source. Statements are placed on their
/// recorded line numbers, so re-parsing yields the same statement table.
pub fn pretty_print(program: &Program) -> String {
    let mut w = Writer {
        out: String::new(),
        line: 1,
        indent: 0,
    };
    for f in &program.functions {
        w.goto_line(f.line);
        w.emit(&format!("fn {}({}) {{", f.name, f.params.join(", ")));
        w.indent += 1;
        w.block_body(&f.body);
        w.indent -= 1;
        w.emit(" }");
    }
    w.out.push('\n');
    w.out
}

struct Writer {
    out: String,
    line: u32,
    indent: usize,
}

impl Writer {
    fn goto_line(&mut self, line: u32) {
        if self.out.is_empty() && self.line == line {
            return;
        }
        if self.line >= line {
            self.out.push(' ');
            return;
        }
        while self.line < line {
            self.out.push('\n');
            self.line += 1;
        }
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
    }

    fn emit(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn block_body(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        self.emit("{");
        self.indent += 1;
        self.block_body(stmts);
        self.indent -= 1;
        self.emit(" }");
    }

    fn stmt(&mut self, s: &Stmt) {
        self.goto_line(s.line);
        match &s.kind {
            StmtKind::Let { name, value } => self.emit(&format!("let {name} = {};", expr(value))),
            StmtKind::Assign { name, value } => self.emit(&format!("{name} = {};", expr(value))),
            StmtKind::IndexAssign {
                array,
                index,
                value,
            } => self.emit(&format!("{array}[{}] = {};", expr(index), expr(value))),
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                self.emit(&format!("if ({}) ", expr(cond)));
                self.block(then_body);
                if !else_body.is_empty() {
                    self.emit(" else ");
                    self.block(else_body);
                }
            }
            StmtKind::While { cond, body } => {
                self.emit(&format!("while ({}) ", expr(cond)));
                self.block(body);
            }
            StmtKind::Return(None) => self.emit("return;"),
            StmtKind::Return(Some(e)) => self.emit(&format!("return {};", expr(e))),
            StmtKind::Assert(e) => self.emit(&format!("assert({});", expr(e))),
            StmtKind::Throw(e) => self.emit(&format!("throw {};", expr(e))),
            StmtKind::Try {
                body,
                catch_name,
                handler,
            } => {
                self.emit("try ");
                self.block(body);
                self.emit(&format!(" catch ({catch_name}) "));
                self.block(handler);
            }
            StmtKind::Expr(e) => self.emit(&format!("{};", expr(e))),
        }
    }
}

/// Fully parenthesised rendering of an expression.
pub fn expr(e: &Expr) -> String {
    match e {
        Expr::Int(v) if *v < 0 => format!("(-{})", v.unsigned_abs()),
        Expr::Int(v) => v.to_string(),
        Expr::Bool(b) => b.to_string(),
        Expr::Var(n) => n.clone(),
        Expr::Unary(UnOp::Neg, inner) => format!("-{}", atom(inner)),
        Expr::Unary(UnOp::Not, inner) => format!("!{}", atom(inner)),
        Expr::Binary(op, l, r) => format!("{} {} {}", atom(l), op.symbol(), atom(r)),
        Expr::Call(name, args) => format!("{name}({})", list(args)),
        Expr::Len(inner) => format!("len({})", expr(inner)),
        Expr::Index(a, i) => format!("{}[{}]", atom(a), expr(i)),
        Expr::ArrayLit(items) => format!("[{}]", list(items)),
    }
}

fn atom(e: &Expr) -> String {
    match e {
        Expr::Binary(..) | Expr::Unary(..) => format!("({})", expr(e)),
        _ => expr(e),
    }
}

fn list(items: &[Expr]) -> String {
    items.iter().map(expr).collect::<Vec<_>>().join(", ")
}
