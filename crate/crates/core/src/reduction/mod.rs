//! Scalability reducers applied between tracing and modeling: passing-test
//! selection, loop-iteration deduplication, adaptive folding of large
//! methods, and the model-size budget.

mod fold;
mod loops;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::tracer::{CoverageProfile, Trace};

pub use fold::{adaptive_fold, FoldOutcome};
pub use loops::{compress_loops, compress_loops_counted};

pub const DEFAULT_MAX_PASSING_TESTS: usize = 50;
pub const DEFAULT_TRACE_LIMIT: usize = 1_200_000;
pub const DEFAULT_MODEL_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReductionError {
    #[error("no failing tests")]
    NoFailingTests,
    #[error("invalid reduction config: {0}")]
    InvalidConfig(&'static str),
    #[error("malformed trace at event {event}: {message}")]
    MalformedTrace { event: usize, message: &'static str },
}

impl From<crate::tracer::tree::Malformed> for ReductionError {
    fn from(m: crate::tracer::tree::Malformed) -> Self {
        ReductionError::MalformedTrace {
            event: m.event,
            message: m.message,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionConfig {
    pub max_passing_tests: usize,
    pub trace_limit: usize,
    pub model_limit: usize,
    pub loop_compression: bool,
    pub adaptive_folding: bool,
    pub test_reduction: bool,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            max_passing_tests: DEFAULT_MAX_PASSING_TESTS,
            trace_limit: DEFAULT_TRACE_LIMIT,
            model_limit: DEFAULT_MODEL_LIMIT,
            loop_compression: true,
            adaptive_folding: true,
            test_reduction: true,
        }
    }
}

impl ReductionConfig {
    pub fn validate(&self) -> Result<(), ReductionError> {
        if self.max_passing_tests == 0 {
            return Err(ReductionError::InvalidConfig("max_passing_tests must be positive"));
        }
        if self.trace_limit == 0 {
            return Err(ReductionError::InvalidConfig("trace_limit must be positive"));
        }
        if self.model_limit == 0 {
            return Err(ReductionError::InvalidConfig("model_limit must be positive"));
        }
        Ok(())
    }
}

/// Orders the tests to trace: every failing test by name, then passing tests
/// by how many failing-covered functions they also cover.
pub fn select_tests(
    profile: &CoverageProfile,
    cfg: &ReductionConfig,
) -> Result<Vec<String>, ReductionError> {
    let mut failing: Vec<&str> = profile
        .tests
        .iter()
        .filter(|t| t.status.is_fail())
        .map(|t| t.test.as_str())
        .collect();
    if failing.is_empty() {
        return Err(ReductionError::NoFailingTests);
    }
    failing.sort();
    let passing = profile.tests.iter().filter(|t| !t.status.is_fail());
    let mut ranked: Vec<(usize, &str)> = if cfg.test_reduction {
        let hot = profile.failing_functions();
        passing
            .map(|t| (t.functions.intersection(&hot).count(), t.test.as_str()))
            .filter(|&(overlap, _)| overlap > 0)
            .collect()
    } else {
        passing.map(|t| (0, t.test.as_str())).collect()
    };
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    if cfg.test_reduction {
        ranked.truncate(cfg.max_passing_tests);
    }
    Ok(failing
        .into_iter()
        .chain(ranked.into_iter().map(|(_, n)| n))
        .map(str::to_string)
        .collect())
}

/// Keeps every failing trace. Passing traces are added smallest first while
/// the running total stays within the model limit.
pub fn budget_traces(traces: Vec<Trace>, cfg: &ReductionConfig) -> Vec<Trace> {
    let (failing, mut passing): (Vec<Trace>, Vec<Trace>) =
        traces.into_iter().partition(|t| t.status.is_fail());
    let mut total: usize = failing.iter().map(Trace::len).sum();
    let mut out = failing;
    if total > cfg.model_limit {
        return out;
    }
    passing.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.test.cmp(&b.test)));
    for t in passing {
        if total + t.len() > cfg.model_limit {
            break;
        }
        total += t.len();
        out.push(t);
    }
    out
}

/// What the reducers removed, for the run log.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReductionLog {
    /// Passing tests not selected for tracing.
    pub dropped_tests: Vec<String>,
    /// Removed loop iterations per test.
    pub removed_iterations: BTreeMap<String, usize>,
    /// Folded methods per test, in folding order.
    pub folded: BTreeMap<String, Vec<String>>,
    pub truncated: Vec<String>,
    /// Passing traces dropped for exceeding the trace limit.
    pub oversized_passing: Vec<String>,
    /// Passing traces left out by the model budget.
    pub over_budget: Vec<String>,
}

impl fmt::Display for ReductionLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dropped tests: {}", list(&self.dropped_tests))?;
        for (t, n) in &self.removed_iterations {
            writeln!(f, "loop iterations removed from {t}: {n}")?;
        }
        for (t, ms) in &self.folded {
            writeln!(f, "folded in {t}: {}", list(ms))?;
        }
        writeln!(f, "truncated traces: {}", list(&self.truncated))?;
        writeln!(f, "oversized passing traces: {}", list(&self.oversized_passing))?;
        writeln!(f, "passing traces over budget: {}", list(&self.over_budget))
    }
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        "-".to_string()
    } else {
        items.join(", ")
    }
}
