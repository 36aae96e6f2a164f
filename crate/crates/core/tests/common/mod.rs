//! Generators and net builders shared by the integration targets.
#![allow(dead_code)]

use probfl::ddg::{build_ddg, DepGraph};
use probfl::inference::Message;
use probfl::minilang::{parse, Program, StmtId};
use probfl::model::{build_net, FaultNet, ModelParams, NoisyConj, VarKind};
use probfl::tracer::{trace, Trace, TraceOptions, ValueId};
use rand::Rng;

pub const P0S: [f64; 2] = [0.01, 0.5];

/// Normalized message with both components bounded away from zero.
pub fn random_message(rng: &mut impl Rng) -> Message {
    let t: f64 = rng.gen_range(0.001..0.999);
    Message::new(t, 1.0 - t)
}

/// Factor over variables `0..degree`, child at 0.
pub fn random_factor(rng: &mut impl Rng, degree: usize) -> NoisyConj {
    NoisyConj {
        child: 0,
        parents: (1..degree).collect(),
        p0: P0S[rng.gen_range(0..2)],
    }
}

fn stmt_var(net: &mut FaultNet, n: usize, prior: f64) -> usize {
    net.add_variable(VarKind::Statement(StmtId(n as u32)), Some(prior))
}

fn value_var(net: &mut FaultNet, n: usize) -> usize {
    net.add_variable(
        VarKind::Value {
            trace: 0,
            id: ValueId(n as u32),
        },
        None,
    )
}

/// Random net whose factor graph is a forest: every factor joins a fresh
/// child to parents taken from distinct components.
pub fn random_tree_net(rng: &mut impl Rng, max_vars: usize) -> FaultNet {
    let mut net = FaultNet::default();
    let mut comp: Vec<usize> = Vec::new();
    for i in 0..rng.gen_range(1..=4.min(max_vars - 1)) {
        stmt_var(&mut net, i, rng.gen_range(0.05..0.95));
        comp.push(i);
    }
    while net.variables.len() < max_vars {
        let mut parents: Vec<usize> = Vec::new();
        for _ in 0..rng.gen_range(1..=3) {
            let p = rng.gen_range(0..net.variables.len());
            if parents.iter().all(|&q| comp[q] != comp[p]) {
                parents.push(p);
            }
        }
        if net.variables.len() + 2 <= max_vars && rng.gen_bool(0.3) {
            let n = net.variables.len();
            parents.push(stmt_var(&mut net, n, rng.gen_range(0.05..0.95)));
            comp.push(n);
        }
        let child = net.variables.len();
        value_var(&mut net, child);
        let joined: Vec<usize> = parents.iter().map(|&p| comp[p]).collect();
        for c in comp.iter_mut() {
            if joined.contains(c) {
                *c = child;
            }
        }
        comp.push(child);
        net.add_factor(child, parents, P0S[rng.gen_range(0..2)]);
    }
    for v in &mut net.variables {
        if v.prior.is_none() && rng.gen_bool(0.3) {
            v.evidence = Some(rng.gen_bool(0.5));
        }
    }
    net
}

/// Random net with shared parents, so its factor graph has cycles.
pub fn random_loopy_net(rng: &mut impl Rng, stmts: usize, values: usize) -> FaultNet {
    let mut net = FaultNet::default();
    for i in 0..stmts {
        stmt_var(&mut net, i, 0.5);
    }
    for _ in 0..values {
        let n = net.variables.len();
        let mut parents = vec![rng.gen_range(0..stmts)];
        for _ in 0..rng.gen_range(0..3) {
            let p = rng.gen_range(0..n);
            if !parents.contains(&p) {
                parents.push(p);
            }
        }
        let child = value_var(&mut net, n);
        net.add_factor(child, parents, P0S[rng.gen_range(0..2)]);
        if rng.gen_bool(0.25) {
            net.variables[child].evidence = Some(rng.gen_bool(0.6));
        }
    }
    net
}

/// Traces every test of `program` with every function traced.
pub fn trace_all(program: &Program) -> Vec<Trace> {
    let all: Vec<&str> = program.functions.iter().map(|f| f.name.as_str()).collect();
    program
        .tests()
        .into_iter()
        .map(|t| trace(program, t, &all, TraceOptions::default()).expect("trace"))
        .collect()
}

/// Graph and default-parameter net over all tests of the program.
pub fn corpus_net(program: &Program) -> (DepGraph, FaultNet) {
    let ddg = build_ddg(program, &trace_all(program)).expect("ddg");
    let net = build_net(&ddg, program, &ModelParams::default()).expect("net");
    (ddg, net)
}

/// Counting loop over `n` iterations, each producing distinct values.
pub fn counting_program(n: usize) -> Program {
    parse(&format!(
        "fn sum(n) {{
    let s = 0;
    let i = 0;
    while (i < n) {{
        s = s + i * 3;
        i = i + 1;
    }}
    return s;
}}
fn test_sum() {{
    assert(sum({n}) == {});
}}
",
        3 * n * (n.max(1) - 1) / 2
    ))
    .expect("generated program parses")
}
