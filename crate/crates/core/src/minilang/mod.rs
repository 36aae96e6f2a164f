//! MiniImp frontend: lexing, parsing, statement table, control-flow graphs
//! and post-dominator based control regions.
//!
//! MiniImp has integer and boolean scalars, arrays, `let`/assignment,
//! `if`/`else`, `while`, first-order calls, `return`, `assert`, `throw` and
//! `try`/`catch`. Functions named `test_*` with no parameters are tests.

mod ast;
mod cfg;
mod lexer;
mod parser;
mod printer;

use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use ast::{BinOp, Expr, RootOp, Stmt, StmtId, StmtKind, StmtTag, UnOp};
pub use cfg::ControlFlowGraph;
pub use printer::{expr as render_expr, pretty_print};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MiniError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("duplicate function `{name}`")]
    DuplicateFunction { name: String },
    #[error("duplicate parameter `{name}` in `{function}`")]
    DuplicateParam { function: String, name: String },
    #[error("undefined name `{name}` at line {line}")]
    UndefinedName { name: String, line: u32 },
    #[error("`{function}` expects {expected} arguments, found {found} at line {line}")]
    ArityMismatch {
        function: String,
        expected: usize,
        found: usize,
        line: u32,
    },
}

#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub line: u32,
    pub cfg: ControlFlowGraph,
}

impl FunctionDef {
    pub fn is_test(&self) -> bool {
        self.name.starts_with("test_")
    }
}

/// One row of the statement table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StmtInfo {
    pub id: StmtId,
    pub function: usize,
    pub line: u32,
    pub tag: StmtTag,
    pub root: RootOp,
}

#[derive(Debug, Clone)]
pub struct Program {
    pub functions: Vec<FunctionDef>,
    pub source_path: String,
    statements: Vec<StmtInfo>,
    by_name: HashMap<String, usize>,
    loop_bodies: HashMap<StmtId, BTreeSet<StmtId>>,
    hash: String,
}

pub fn parse(source: &str) -> Result<Program, MiniError> {
    Program::parse(source, "<memory>")
}

impl Program {
    pub fn parse(source: &str, source_path: &str) -> Result<Program, MiniError> {
        let raw = parser::parse_functions(source)?;
        let functions = raw
            .into_iter()
            .map(|f| FunctionDef {
                cfg: ControlFlowGraph::build(&f.body),
                name: f.name,
                params: f.params,
                body: f.body,
                line: f.line,
            })
            .collect();
        let hash = hex_digest(source);
        Ok(Program::assemble(functions, source_path.to_string(), hash))
    }

    fn assemble(functions: Vec<FunctionDef>, source_path: String, hash: String) -> Program {
        let mut statements = Vec::new();
        let mut loop_bodies = HashMap::new();
        for (fi, f) in functions.iter().enumerate() {
            for s in &f.body {
                s.walk(&mut |s| {
                    statements.push(StmtInfo {
                        id: s.id,
                        function: fi,
                        line: s.line,
                        tag: s.kind.tag(),
                        root: s.kind.main_expr().map_or(RootOp::None, Expr::root_op),
                    });
                    if let StmtKind::While { body, .. } = &s.kind {
                        let mut inner = BTreeSet::new();
                        for b in body {
                            b.walk(&mut |b| {
                                inner.insert(b.id);
                            });
                        }
                        loop_bodies.insert(s.id, inner);
                    }
                });
            }
        }
        statements.sort_by_key(|s| s.id);
        debug_assert!(statements
            .iter()
            .enumerate()
            .all(|(i, s)| s.id.index() == i));
        let by_name = functions
            .iter()
            .enumerate()
            .map(|(i, f)| (f.name.clone(), i))
            .collect();
        Program {
            functions,
            source_path,
            statements,
            by_name,
            loop_bodies,
            hash,
        }
    }

    /// Rebuilds derived tables after the AST was edited in place (mutation).
    /// Statement ids and lines must be unchanged.
    pub fn with_edited_functions(&self, functions: Vec<FunctionDef>) -> Program {
        let source = pretty_print(&Program::assemble(
            functions.clone(),
            self.source_path.clone(),
            String::new(),
        ));
        Program::assemble(functions, self.source_path.clone(), hex_digest(&source))
    }

    pub fn statement_table(&self) -> &[StmtInfo] {
        &self.statements
    }

    pub fn stmt(&self, id: StmtId) -> Option<&StmtInfo> {
        self.statements.get(id.index())
    }

    pub fn num_statements(&self) -> usize {
        self.statements.len()
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.by_name.get(name).map(|&i| &self.functions[i])
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn function_of(&self, id: StmtId) -> Option<&FunctionDef> {
        self.stmt(id).map(|s| &self.functions[s.function])
    }

    pub fn tests(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self
            .functions
            .iter()
            .filter(|f| f.is_test())
            .map(|f| f.name.as_str())
            .collect();
        names.sort();
        names
    }

    /// Statements that may hold a fault: everything outside test functions
    /// except structural `try` blocks.
    pub fn candidates(&self) -> Vec<StmtId> {
        self.statements
            .iter()
            .filter(|s| s.tag != StmtTag::Try && !self.functions[s.function].is_test())
            .map(|s| s.id)
            .collect()
    }

    /// For a `while` statement, every statement lexically inside its body.
    pub fn loop_body(&self, id: StmtId) -> Option<&BTreeSet<StmtId>> {
        self.loop_bodies.get(&id)
    }

    /// For a branching statement, the statements it controls.
    pub fn ctrl_region(&self, id: StmtId) -> Option<&BTreeSet<StmtId>> {
        self.function_of(id)?.cfg.ctrl_region.get(&id)
    }

    pub fn find_stmt(&self, id: StmtId) -> Option<&Stmt> {
        let f = self.function_of(id)?;
        let mut found = None;
        for s in &f.body {
            s.walk(&mut |s| {
                if s.id == id {
                    found = Some(s);
                }
            });
        }
        found
    }

    /// Hex SHA-256 of the source text.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn location(&self, id: StmtId) -> String {
        match self.stmt(id) {
            Some(s) => format!("{}:{}", self.source_path, s.line),
            None => format!("{}:?", self.source_path),
        }
    }
}

fn hex_digest(source: &str) -> String {
    Sha256::digest(source.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const COND_TEST: &str = "\
fn foo(a) {
    if (a <= 2) { // buggy, should be a < 2
        a = a + 1;
    }
    return a <= 2;
}
fn test_pass() {
    assert(foo(1));
}
fn test_fail() {
    assert(foo(2));
}
";

    #[test]
    fn cond_test_has_three_candidates_in_foo() {
        let p = parse(COND_TEST).unwrap();
        let cands = p.candidates();
        assert_eq!(cands.len(), 3);
        let lines: Vec<u32> = cands.iter().map(|&s| p.stmt(s).unwrap().line).collect();
        assert_eq!(lines, vec![2, 3, 5]);
        assert_eq!(p.tests(), vec!["test_fail", "test_pass"]);
        let root = p.stmt(cands[0]).unwrap().root;
        assert_eq!(root, RootOp::Binary(BinOp::Le));
    }

    #[test]
    fn empty_source_has_no_functions() {
        let p = parse("").unwrap();
        assert!(p.functions.is_empty());
        assert_eq!(p.num_statements(), 0);
    }

    #[test]
    fn missing_expression_is_syntax_error() {
        let err = parse("fn f(){ let x = ; }").unwrap_err();
        match err {
            MiniError::Syntax { line, col, .. } => assert_eq!((line, col), (1, 17)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_function_rejected() {
        assert!(matches!(
            parse("fn f() {} fn f() {}"),
            Err(MiniError::DuplicateFunction { .. })
        ));
    }

    #[test]
    fn undefined_names_rejected() {
        assert!(matches!(
            parse("fn f() { return y; }"),
            Err(MiniError::UndefinedName { .. })
        ));
        assert!(matches!(
            parse("fn f() { return g(); }"),
            Err(MiniError::UndefinedName { .. })
        ));
        assert!(matches!(
            parse("fn f() { if (true) { let x = 1; } return x; }"),
            Err(MiniError::UndefinedName { .. })
        ));
        assert!(matches!(
            parse("fn g(a) { return a; } fn f() { return g(); }"),
            Err(MiniError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn precedence_follows_c_conventions() {
        let p = parse("fn f(a, b) { return a + b * 2 < 3 && !(a == b) || false; }").unwrap();
        let s = p.find_stmt(StmtId(0)).unwrap();
        let e = s.kind.main_expr().unwrap();
        assert_eq!(render_expr(e), "(((a + (b * 2)) < 3) && (!(a == b))) || false");
    }

    #[test]
    fn ids_are_dense_in_source_order() {
        let p = parse(COND_TEST).unwrap();
        for (i, s) in p.statement_table().iter().enumerate() {
            assert_eq!(s.id.index(), i);
        }
        assert_eq!(p.num_statements(), 5);
    }

    #[test]
    fn corpus_style_round_trip() {
        let src = "fn f(xs) {\n  let i = 0; let t = [1, 2, -3];\n  while (i < len(xs)) {\n    if (xs[i] % 2 == 0) { t[0] = t[0] + xs[i]; } else if (xs[i] > 7) { throw i; }\n    i = i + 1;\n  }\n  try { let q = 10 / i; } catch (e) { return -1; }\n  return t[0];\n}\nfn test_a() { assert(f([2, 4]) == 9); }\n";
        let p = parse(src).unwrap();
        let printed = pretty_print(&p);
        let q = parse(&printed).unwrap();
        assert_eq!(p.statement_table(), q.statement_table());
        assert_eq!(pretty_print(&q), printed);
    }
}
