//! Bayesian network over statement and value correctness: one Bernoulli
//! variable per graph node, a noisy-conjunction factor per produced value,
//! and test outcomes as evidence.

use std::fmt::Write as _;

use thiserror::Error;

use crate::ddg::DepGraph;
use crate::minilang::{BinOp, Program, RootOp, StmtId, StmtTag, UnOp};
use crate::tracer::ValueId;

pub const DEFAULT_P0_MODERATE: f64 = 0.5;
pub const DEFAULT_P0_LOW: f64 = 0.01;
pub const DEFAULT_STATEMENT_PRIOR: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("value t{trace}:{value} observed both true and false")]
    ConflictingEvidence { trace: usize, value: ValueId },
    #[error("probability parameter {name} = {value} outside (0, 1]")]
    InvalidParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub p0_moderate: f64,
    pub p0_low: f64,
    pub statement_prior: f64,
    /// Classify returns and throws by their expression instead of always
    /// giving them `p0_low`.
    pub moderate_returns: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            p0_moderate: DEFAULT_P0_MODERATE,
            p0_low: DEFAULT_P0_LOW,
            statement_prior: DEFAULT_STATEMENT_PRIOR,
            moderate_returns: false,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [
            ("p0_moderate", self.p0_moderate),
            ("p0_low", self.p0_low),
            ("statement_prior", self.statement_prior),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Statement(StmtId),
    Value { trace: usize, id: ValueId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    /// Probability of being correct, for variables without a factor.
    pub prior: Option<f64>,
    pub evidence: Option<bool>,
}

/// `P(child correct | all parents correct) = 1`, otherwise `p0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyConj {
    pub child: usize,
    pub parents: Vec<usize>,
    pub p0: f64,
}

impl NoisyConj {
    /// Factor value for a full assignment of the child and its parents.
    pub fn value(&self, child: bool, parents_all_true: bool) -> f64 {
        match (parents_all_true, child) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            (false, true) => self.p0,
            (false, false) => 1.0 - self.p0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FaultNet {
    pub variables: Vec<Variable>,
    pub factors: Vec<NoisyConj>,
}

impl FaultNet {
    pub fn add_variable(&mut self, kind: VarKind, prior: Option<f64>) -> usize {
        self.variables.push(Variable {
            kind,
            prior,
            evidence: None,
        });
        self.variables.len() - 1
    }

    pub fn add_factor(&mut self, child: usize, parents: Vec<usize>, p0: f64) {
        self.factors.push(NoisyConj { child, parents, p0 });
    }

    pub fn statement_var(&self, stmt: StmtId) -> Option<usize> {
        self.variables
            .iter()
            .position(|v| v.kind == VarKind::Statement(stmt))
    }

    pub fn max_degree(&self) -> usize {
        self.factors
            .iter()
            .map(|f| f.parents.len() + 1)
            .max()
            .unwrap_or(0)
    }

    /// Same net with all evidence removed.
    pub fn without_evidence(&self) -> FaultNet {
        let mut n = self.clone();
        for v in &mut n.variables {
            v.evidence = None;
        }
        n
    }

    /// Text dump of variables and factors.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, v) in self.variables.iter().enumerate() {
            let kind = match v.kind {
                VarKind::Statement(s) => format!("stmt {s}"),
                VarKind::Value { trace, id } => format!("value t{trace}:{id}"),
            };
            let prior = v.prior.map_or("-".to_string(), |p| format!("{p}"));
            let ev = v.evidence.map_or("-".to_string(), |e| e.to_string());
            let _ = writeln!(out, "var {i} {kind} prior {prior} evidence {ev}");
        }
        for f in &self.factors {
            let ps: Vec<String> = f.parents.iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "factor {} <- [{}] p0 {}", f.child, ps.join(", "), f.p0);
        }
        out
    }
}

/// Whether a statement's produced value is insensitive to faulty inputs:
/// boolean-range values (comparisons, boolean operators, remainders and
/// branch or assertion conditions), judged by the statement's expression.
pub fn is_moderate(program: &Program, stmt: StmtId) -> bool {
    let Some(info) = program.stmt(stmt) else {
        return false;
    };
    match info.tag {
        StmtTag::If | StmtTag::While | StmtTag::Assert => true,
        _ => matches!(
            info.root,
            RootOp::BoolLit
                | RootOp::Unary(UnOp::Not)
                | RootOp::Binary(
                    BinOp::Lt
                        | BinOp::Le
                        | BinOp::Gt
                        | BinOp::Ge
                        | BinOp::Eq
                        | BinOp::Ne
                        | BinOp::Rem
                        | BinOp::And
                        | BinOp::Or
                )
        ),
    }
}

pub fn classify_p0(stmt: StmtId, program: &Program, params: &ModelParams) -> f64 {
    let forwards = program
        .stmt(stmt)
        .is_some_and(|s| matches!(s.tag, StmtTag::Return | StmtTag::Throw));
    if forwards && !params.moderate_returns {
        return params.p0_low;
    }
    if is_moderate(program, stmt) {
        params.p0_moderate
    } else {
        params.p0_low
    }
}

/// Converts a dependency graph into a fault network. Statement variables come
/// first, in the graph's statement order, followed by one variable per value
/// node in the same order.
pub fn build_net(
    ddg: &DepGraph,
    program: &Program,
    params: &ModelParams,
) -> Result<FaultNet, ModelError> {
    params.validate()?;
    let mut net = FaultNet::default();
    let mut stmt_var = std::collections::HashMap::new();
    for &s in &ddg.statements {
        let v = net.add_variable(VarKind::Statement(s), Some(params.statement_prior));
        stmt_var.insert(s, v);
    }
    let base = net.variables.len();
    for v in &ddg.values {
        let prior = v.is_input().then_some(1.0);
        net.add_variable(
            VarKind::Value {
                trace: v.trace,
                id: v.id,
            },
            prior,
        );
    }
    for (i, v) in ddg.values.iter().enumerate() {
        let Some(s) = v.stmt else { continue };
        let mut parents = vec![stmt_var[&s]];
        parents.extend(v.value_parents().map(|p| base + p));
        net.add_factor(base + i, parents, classify_p0(s, program, params));
    }
    for t in &ddg.traces {
        for &(v, observed) in &t.evidence {
            let var = &mut net.variables[base + v];
            match var.evidence {
                Some(prev) if prev != observed => {
                    return Err(ModelError::ConflictingEvidence {
                        trace: ddg.values[v].trace,
                        value: ddg.values[v].id,
                    })
                }
                _ => var.evidence = Some(observed),
            }
        }
    }
    Ok(net)
}

/// Hand-built network of the conditional-test example: statements at lines
/// 3, 4 and 6, parameter `a` as the input, one passing and one failing run.
/// Returns the net and the statement variables for lines 3, 4 and 6.
pub fn cond_test_fixture() -> (FaultNet, [usize; 3]) {
    let mut net = FaultNet::default();
    let stmts = [3u32, 4, 6].map(|l| net.add_variable(VarKind::Statement(StmtId(l)), Some(0.5)));
    for (trace, outcome) in [(0usize, true), (1, false)] {
        let val = |net: &mut FaultNet, line: u32, prior| {
            net.add_variable(
                VarKind::Value {
                    trace,
                    id: ValueId(line),
                },
                prior,
            )
        };
        let v2 = val(&mut net, 2, Some(1.0));
        let v3 = val(&mut net, 3, None);
        let v4 = val(&mut net, 4, None);
        let v6 = val(&mut net, 6, None);
        net.add_factor(v3, vec![stmts[0], v2], 0.5);
        net.add_factor(v4, vec![stmts[1], v2, v3], 0.01);
        net.add_factor(v6, vec![stmts[2], v4], 0.01);
        net.variables[v6].evidence = Some(outcome);
    }
    (net, stmts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ddg::build_ddg;
    use crate::minilang::parse;
    use crate::tracer::{trace, Trace, TraceOptions};

    fn stmt_with_root(src: &str) -> (Program, StmtId) {
        let p = parse(src).unwrap();
        let id = p.function("f").unwrap().body[0].id;
        (p, id)
    }

    #[test]
    fn operator_classes() {
        let d = ModelParams::default();
        let cases = [
            ("fn f(a) { let x = a <= 2; }", 0.5),
            ("fn f(a) { a = a + 1; }", 0.01),
            ("fn f(a) { let x = a % 3; }", 0.5),
            ("fn f(a) { if (a) { } }", 0.5),
            ("fn f(a) { return a <= 2; }", 0.01),
            ("fn f(a) { let x = !a; }", 0.5),
            ("fn f(a) { let x = a; }", 0.01),
        ];
        for (src, want) in cases {
            let (p, s) = stmt_with_root(src);
            assert_eq!(classify_p0(s, &p, &d), want, "{src}");
        }
        let by_expr = ModelParams {
            moderate_returns: true,
            ..d
        };
        for (src, want) in [
            ("fn f(a) { return a <= 2; }", 0.5),
            ("fn f(a) { return a + 2; }", 0.01),
            ("fn f(a) { throw a == 1; }", 0.5),
        ] {
            let (p, s) = stmt_with_root(src);
            assert_eq!(classify_p0(s, &p, &by_expr), want, "{src}");
        }
    }

    fn cond_traces(p: &Program) -> Vec<Trace> {
        ["test_pass", "test_fail"]
            .iter()
            .map(|t| trace(p, t, &["foo"], TraceOptions::default()).unwrap())
            .collect()
    }

    #[test]
    fn pipeline_net_equals_fixture() {
        let p = parse(corpus::COND_TEST).unwrap();
        let g = build_ddg(&p, &cond_traces(&p)).unwrap();
        let net = build_net(&g, &p, &ModelParams::default()).unwrap();
        let (fixture, _) = cond_test_fixture();
        assert_eq!(net.variables.len(), fixture.variables.len());
        assert_eq!(net.factors.len(), fixture.factors.len());
        for (a, b) in net.factors.iter().zip(&fixture.factors) {
            assert_eq!(a.child, b.child);
            assert_eq!(a.parents, b.parents);
            assert_eq!(a.p0, b.p0);
        }
        // Classifying the return at line 6 by its comparison moves only its
        // factors to the moderate constant.
        let by_expr = ModelParams {
            moderate_returns: true,
            ..ModelParams::default()
        };
        let line6 = p.function("foo").unwrap().body[1].id;
        let alt = build_net(&g, &p, &by_expr).unwrap();
        for (a, b) in alt.factors.iter().zip(&fixture.factors) {
            let from_return = alt.variables[a.parents[0]].kind == VarKind::Statement(line6);
            assert_eq!(a.p0, if from_return { 0.5 } else { b.p0 });
        }
        for (a, b) in net.variables.iter().zip(&fixture.variables) {
            assert_eq!(a.prior, b.prior);
            assert_eq!(a.evidence, b.evidence);
        }
    }

    #[test]
    fn structure_mirrors_graph() {
        let p = parse(corpus::DRIVER).unwrap();
        let t = trace(&p, "test_driver", &["callback"], TraceOptions::default()).unwrap();
        let g = build_ddg(&p, &[t]).unwrap();
        let net = build_net(&g, &p, &ModelParams::default()).unwrap();
        assert_eq!(net.variables.len(), g.node_count());
        let edges: usize = net.factors.iter().map(|f| f.parents.len()).sum();
        assert_eq!(edges, g.edge_count());
    }

    #[test]
    fn lone_input_is_clamped_variable() {
        let g = DepGraph {
            statements: Vec::new(),
            values: vec![crate::ddg::ValueNode {
                trace: 0,
                id: ValueId(0),
                stmt: None,
                data: Vec::new(),
                control: None,
            }],
            traces: Vec::new(),
        };
        let p = parse("").unwrap();
        let net = build_net(&g, &p, &ModelParams::default()).unwrap();
        assert_eq!(net.variables.len(), 1);
        assert_eq!(net.variables[0].prior, Some(1.0));
        assert!(net.factors.is_empty());
    }

    #[test]
    fn two_passing_assertions_both_true() {
        let src = "fn f(a) { return a + 1; }\nfn test_t() { assert(f(1) == 2); assert(f(2) == 3); }";
        let p = parse(src).unwrap();
        let t = trace(&p, "test_t", &["f"], TraceOptions::default()).unwrap();
        let g = build_ddg(&p, &[t]).unwrap();
        let net = build_net(&g, &p, &ModelParams::default()).unwrap();
        let clamped: Vec<_> = net.variables.iter().filter_map(|v| v.evidence).collect();
        assert_eq!(clamped, vec![true, true]);
    }

    #[test]
    fn conflicting_evidence_rejected() {
        let p = parse(corpus::COND_TEST).unwrap();
        let mut g = build_ddg(&p, &cond_traces(&p)).unwrap();
        let (v, b) = g.traces[0].evidence[0];
        g.traces[0].evidence.push((v, !b));
        assert!(matches!(
            build_net(&g, &p, &ModelParams::default()),
            Err(ModelError::ConflictingEvidence { .. })
        ));
    }

    #[test]
    fn parameters_validated() {
        let bad = ModelParams {
            p0_low: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
