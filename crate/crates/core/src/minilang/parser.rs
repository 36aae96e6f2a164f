use std::collections::{HashMap, HashSet};

use super::ast::{BinOp, Expr, Stmt, StmtId, StmtKind, UnOp};
use super::lexer::{tokenize, Tok, Token};
use super::MiniError;

/// Function as produced by the parser, before CFG construction.
pub(crate) struct RawFunction {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub line: u32,
}

pub(crate) fn parse_functions(src: &str) -> Result<Vec<RawFunction>, MiniError> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        next_id: 0,
    };
    let mut functions = Vec::new();
    while p.peek() != &Tok::Eof {
        functions.push(p.function()?);
    }
    resolve(&functions)?;
    Ok(functions)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    next_id: u32,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let idx = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[idx].tok
    }

    fn here(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, MiniError> {
        let t = self.here();
        Err(MiniError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, MiniError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            self.error(format!("expected {what}, found {:?}", self.peek()))
        }
    }

    fn ident(&mut self) -> Result<String, MiniError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => self.error(format!("expected identifier, found {other:?}")),
        }
    }

    fn fresh_id(&mut self) -> StmtId {
        let id = StmtId(self.next_id);
        self.next_id += 1;
        id
    }

    fn function(&mut self) -> Result<RawFunction, MiniError> {
        let line = self.expect(Tok::Fn, "`fn`")?.line;
        let name = self.ident()?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                params.push(self.ident()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        let body = self.block()?;
        Ok(RawFunction {
            name,
            params,
            body,
            line,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, MiniError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.error("unexpected end of input, expected `}`");
            }
            stmts.push(self.statement()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn statement(&mut self) -> Result<Stmt, MiniError> {
        let line = self.here().line;
        let id = self.fresh_id();
        let kind = match self.peek().clone() {
            Tok::Let => {
                self.bump();
                let name = self.ident()?;
                self.expect(Tok::Assign, "`=`")?;
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Let { name, value }
            }
            Tok::If => {
                self.bump();
                let cond = self.expr()?;
                let then_body = self.block()?;
                let else_body = if *self.peek() == Tok::Else {
                    self.bump();
                    if *self.peek() == Tok::If {
                        vec![self.statement()?]
                    } else {
                        self.block()?
                    }
                } else {
                    Vec::new()
                };
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                }
            }
            Tok::While => {
                self.bump();
                let cond = self.expr()?;
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            Tok::Return => {
                self.bump();
                let value = if *self.peek() == Tok::Semi {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Return(value)
            }
            Tok::Assert => {
                self.bump();
                self.expect(Tok::LParen, "`(`")?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Assert(e)
            }
            Tok::Throw => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Throw(e)
            }
            Tok::Try => {
                self.bump();
                let body = self.block()?;
                self.expect(Tok::Catch, "`catch`")?;
                self.expect(Tok::LParen, "`(`")?;
                let catch_name = self.ident()?;
                self.expect(Tok::RParen, "`)`")?;
                let handler = self.block()?;
                StmtKind::Try {
                    body,
                    catch_name,
                    handler,
                }
            }
            Tok::Ident(name) if *self.peek_at(1) == Tok::Assign => {
                self.bump();
                self.bump();
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Assign { name, value }
            }
            Tok::Ident(name) if *self.peek_at(1) == Tok::LBracket && self.is_index_assign() => {
                self.bump();
                self.bump();
                let index = self.expr()?;
                self.expect(Tok::RBracket, "`]`")?;
                self.expect(Tok::Assign, "`=`")?;
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::IndexAssign {
                    array: name,
                    index,
                    value,
                }
            }
            _ => {
                let e = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Expr(e)
            }
        };
        Ok(Stmt { id, line, kind })
    }

    /// Looks ahead over a balanced `[...]` to see whether `=` follows.
    fn is_index_assign(&self) -> bool {
        let mut depth = 0i32;
        let mut i = self.pos + 1;
        while i < self.tokens.len() {
            match self.tokens[i].tok {
                Tok::LBracket => depth += 1,
                Tok::RBracket => {
                    depth -= 1;
                    if depth == 0 {
                        return matches!(self.tokens.get(i + 1).map(|t| &t.tok), Some(Tok::Assign));
                    }
                }
                Tok::Semi | Tok::Eof => return false,
                _ => {}
            }
            i += 1;
        }
        false
    }

    fn expr(&mut self) -> Result<Expr, MiniError> {
        self.binary(1)
    }

    fn binary_op(tok: &Tok) -> Option<BinOp> {
        Some(match tok {
            Tok::OrOr => BinOp::Or,
            Tok::AndAnd => BinOp::And,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            Tok::Plus => BinOp::Add,
            Tok::Minus => BinOp::Sub,
            Tok::Star => BinOp::Mul,
            Tok::Slash => BinOp::Div,
            Tok::Percent => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, MiniError> {
        let mut lhs = self.unary()?;
        while let Some(op) = Self::binary_op(self.peek()) {
            if op.precedence() < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, MiniError> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)))
            }
            Tok::Bang => {
                self.bump();
                Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, MiniError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::LBracket {
            self.bump();
            let idx = self.expr()?;
            self.expect(Tok::RBracket, "`]`")?;
            e = Expr::Index(Box::new(e), Box::new(idx));
        }
        Ok(e)
    }

    fn args(&mut self, close: Tok, what: &str) -> Result<Vec<Expr>, MiniError> {
        let mut args = Vec::new();
        if *self.peek() != close {
            loop {
                args.push(self.expr()?);
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(close, what)?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, MiniError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::True => {
                self.bump();
                Ok(Expr::Bool(true))
            }
            Tok::False => {
                self.bump();
                Ok(Expr::Bool(false))
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = self.args(Tok::RParen, "`)`")?;
                    if name == "len" {
                        if args.len() != 1 {
                            return self.error("`len` takes exactly one argument");
                        }
                        return Ok(Expr::Len(Box::new(args.remove(0))));
                    }
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::LBracket => {
                self.bump();
                Ok(Expr::ArrayLit(self.args(Tok::RBracket, "`]`")?))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            other => self.error(format!("expected expression, found {other:?}")),
        }
    }
}

/// Scope and arity checks over the parsed functions.
fn resolve(functions: &[RawFunction]) -> Result<(), MiniError> {
    let mut arity: HashMap<&str, usize> = HashMap::new();
    for f in functions {
        if f.name == "len" {
            return Err(MiniError::Syntax {
                line: f.line,
                col: 1,
                message: "`len` is reserved".into(),
            });
        }
        if arity.insert(&f.name, f.params.len()).is_some() {
            return Err(MiniError::DuplicateFunction {
                name: f.name.clone(),
            });
        }
        let mut seen = HashSet::new();
        for p in &f.params {
            if !seen.insert(p) {
                return Err(MiniError::DuplicateParam {
                    function: f.name.clone(),
                    name: p.clone(),
                });
            }
        }
        if f.name.starts_with("test_") && !f.params.is_empty() {
            return Err(MiniError::Syntax {
                line: f.line,
                col: 1,
                message: format!("test function `{}` must take no parameters", f.name),
            });
        }
    }
    for f in functions {
        let mut scopes: Vec<HashSet<String>> = vec![f.params.iter().cloned().collect()];
        resolve_block(&f.body, &mut scopes, &arity)?;
    }
    Ok(())
}

fn in_scope(scopes: &[HashSet<String>], name: &str) -> bool {
    scopes.iter().any(|s| s.contains(name))
}

fn resolve_block(
    stmts: &[Stmt],
    scopes: &mut Vec<HashSet<String>>,
    arity: &HashMap<&str, usize>,
) -> Result<(), MiniError> {
    scopes.push(HashSet::new());
    for s in stmts {
        for e in s.kind.exprs() {
            resolve_expr(e, s.line, scopes, arity)?;
        }
        match &s.kind {
            StmtKind::Let { name, .. } => {
                scopes.last_mut().unwrap().insert(name.clone());
            }
            StmtKind::Assign { name, .. } | StmtKind::IndexAssign { array: name, .. } => {
                if !in_scope(scopes, name) {
                    return Err(MiniError::UndefinedName {
                        name: name.clone(),
                        line: s.line,
                    });
                }
            }
            StmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                resolve_block(then_body, scopes, arity)?;
                resolve_block(else_body, scopes, arity)?;
            }
            StmtKind::While { body, .. } => resolve_block(body, scopes, arity)?,
            StmtKind::Try {
                body,
                catch_name,
                handler,
            } => {
                resolve_block(body, scopes, arity)?;
                scopes.push(HashSet::from([catch_name.clone()]));
                resolve_block(handler, scopes, arity)?;
                scopes.pop();
            }
            _ => {}
        }
    }
    scopes.pop();
    Ok(())
}

fn resolve_expr(
    e: &Expr,
    line: u32,
    scopes: &[HashSet<String>],
    arity: &HashMap<&str, usize>,
) -> Result<(), MiniError> {
    let mut err = None;
    e.walk(&mut |sub| {
        if err.is_some() {
            return;
        }
        match sub {
            Expr::Var(name) if !in_scope(scopes, name) => {
                err = Some(MiniError::UndefinedName {
                    name: name.clone(),
                    line,
                });
            }
            Expr::Call(name, args) => match arity.get(name.as_str()) {
                None => {
                    err = Some(MiniError::UndefinedName {
                        name: name.clone(),
                        line,
                    })
                }
                Some(&n) if n != args.len() => {
                    err = Some(MiniError::ArityMismatch {
                        function: name.clone(),
                        expected: n,
                        found: args.len(),
                        line,
                    })
                }
                _ => {}
            },
            _ => {}
        }
    });
    err.map_or(Ok(()), Err)
}
