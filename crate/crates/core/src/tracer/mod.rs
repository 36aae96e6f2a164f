//! Test execution: coverage profiling and value-level tracing with partial
//! tracing of untraced callees.

mod event;
mod interp;
pub mod tree;

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::minilang::{Program, StmtId};

pub use event::{
    read_trace, write_trace, FailReason, FnIdx, TestStatus, Trace, TraceEvent, ValueId,
};
pub use interp::{ERR_DIV_ZERO, ERR_OUT_OF_BOUNDS, ERR_STACK_OVERFLOW, ERR_TYPE, MAX_CALL_DEPTH};

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;
pub const DEFAULT_TRACE_LIMIT: usize = 1_200_000;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("program has no tests")]
    NoTests,
    #[error("unknown test `{0}`")]
    UnknownTest(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("trace file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("trace was recorded for a different program")]
    ProgramMismatch,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct TestCoverage {
    pub test: String,
    #[serde(serialize_with = "status_label")]
    pub status: TestStatus,
    pub functions: BTreeSet<String>,
    pub statements: BTreeSet<StmtId>,
}

fn status_label<S: serde::Serializer>(s: &TestStatus, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(s.label())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageProfile {
    /// One entry per test, sorted by test name.
    pub tests: Vec<TestCoverage>,
}

impl CoverageProfile {
    pub fn failing(&self) -> usize {
        self.tests.iter().filter(|t| t.status.is_fail()).count()
    }

    pub fn passing(&self) -> usize {
        self.tests.len() - self.failing()
    }

    pub fn get(&self, test: &str) -> Option<&TestCoverage> {
        self.tests.iter().find(|t| t.test == test)
    }

    /// Union of functions covered by failing tests.
    pub fn failing_functions(&self) -> BTreeSet<String> {
        self.tests
            .iter()
            .filter(|t| t.status.is_fail())
            .flat_map(|t| t.functions.iter().cloned())
            .collect()
    }

    /// One JSON record per test.
    pub fn write_jsonl(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for t in &self.tests {
            writeln!(out, "{}", serde_json::to_string(t)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceOptions {
    pub step_budget: u64,
    /// Event count above which a trace is flagged oversized.
    pub trace_limit: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            step_budget: DEFAULT_STEP_BUDGET,
            trace_limit: DEFAULT_TRACE_LIMIT,
        }
    }
}

/// Runs every test once, recording status and coverage.
pub fn profile(program: &Program) -> Result<CoverageProfile, TraceError> {
    profile_with(program, DEFAULT_STEP_BUDGET)
}

pub fn profile_with(program: &Program, step_budget: u64) -> Result<CoverageProfile, TraceError> {
    let tests = program.tests();
    if tests.is_empty() {
        return Err(TraceError::NoTests);
    }
    let tests = tests
        .par_iter()
        .map(|name| {
            let fi = program.function_index(name).expect("test exists");
            let r = interp::Interp::new(program, None, step_budget).run_test(fi);
            TestCoverage {
                test: name.to_string(),
                status: r.status,
                functions: r
                    .covered_functions
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c)
                    .map(|(i, _)| program.functions[i].name.clone())
                    .collect(),
                statements: r
                    .covered_stmts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c)
                    .map(|(i, _)| StmtId(i as u32))
                    .collect(),
            }
        })
        .collect();
    Ok(CoverageProfile { tests })
}

/// Records a value-level trace of one test. The test function itself is
/// always traced; calls into functions outside `traced_functions` collapse to
/// summaries.
pub fn trace<S: AsRef<str>>(
    program: &Program,
    test: &str,
    traced_functions: &[S],
    opts: TraceOptions,
) -> Result<Trace, TraceError> {
    let fi = program
        .function_index(test)
        .filter(|&i| program.functions[i].is_test())
        .ok_or_else(|| TraceError::UnknownTest(test.to_string()))?;
    let mut traced = vec![false; program.functions.len()];
    traced[fi] = true;
    for name in traced_functions {
        let name = name.as_ref();
        let i = program
            .function_index(name)
            .ok_or_else(|| TraceError::UnknownFunction(name.to_string()))?;
        traced[i] = true;
    }
    let mut it = interp::Interp::new(program, Some(traced), opts.step_budget);
    let r = it.run_test(fi);
    let rec = it.rec.take().expect("recording");
    let oversized = rec.events.len() > opts.trace_limit;
    if oversized {
        log::warn!(
            "trace of {test} has {} events, above the limit of {}",
            rec.events.len(),
            opts.trace_limit
        );
    }
    Ok(Trace {
        test: test.to_string(),
        status: r.status,
        events: rec.events,
        inputs: rec.inputs,
        next_value: rec.next,
        oversized,
    })
}

#[cfg(test)]
mod tests;
