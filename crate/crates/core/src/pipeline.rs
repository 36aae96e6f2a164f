//! End-to-end localization: profile, select, trace, reduce, model, infer,
//! rank.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::ddg::{build_ddg_with, DdgError, DdgOptions};
use crate::inference::{run_lbp, InferenceConfig, InferenceError, InferenceMode};
use crate::minilang::Program;
use crate::model::{build_net, ModelError, ModelParams};
use crate::ranking::{attach_baselines, rank, Report};
use crate::reduction::{
    adaptive_fold, budget_traces, compress_loops_counted, select_tests, ReductionConfig,
    ReductionError, ReductionLog,
};
use crate::tracer::{
    profile_with, trace, CoverageProfile, Trace, TraceError, TraceOptions, DEFAULT_STEP_BUDGET,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no failing tests")]
    NoFailingTests,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Reduction(ReductionError),
    #[error(transparent)]
    Ddg(#[from] DdgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

impl From<ReductionError> for PipelineError {
    fn from(e: ReductionError) -> Self {
        match e {
            ReductionError::NoFailingTests => PipelineError::NoFailingTests,
            e => PipelineError::Reduction(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub reduction: ReductionConfig,
    pub inference: InferenceConfig,
    pub model: ModelParams,
    pub ddg: DdgOptions,
    pub step_budget: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            reduction: ReductionConfig::default(),
            inference: InferenceConfig::default(),
            model: ModelParams::default(),
            ddg: DdgOptions::default(),
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.reduction.validate()?;
        self.inference.validate()?;
        self.model.validate()?;
        Ok(())
    }

    /// Settings as key/value pairs, for report headers.
    pub fn describe(&self) -> BTreeMap<String, String> {
        let r = &self.reduction;
        let i = &self.inference;
        let mode = match i.mode {
            InferenceMode::Naive => "naive",
            InferenceMode::Optimized => "optimized",
            InferenceMode::Exact => "exact",
        };
        [
            ("p0_moderate", self.model.p0_moderate.to_string()),
            ("p0_low", self.model.p0_low.to_string()),
            ("statement_prior", self.model.statement_prior.to_string()),
            ("moderate_returns", self.model.moderate_returns.to_string()),
            ("max_passing_tests", r.max_passing_tests.to_string()),
            ("trace_limit", r.trace_limit.to_string()),
            ("model_limit", r.model_limit.to_string()),
            ("loop_compression", r.loop_compression.to_string()),
            ("adaptive_folding", r.adaptive_folding.to_string()),
            ("test_reduction", r.test_reduction.to_string()),
            ("virtual_call_edges", self.ddg.virtual_call_edges.to_string()),
            ("exception_control", self.ddg.exception_control.to_string()),
            ("max_iterations", i.max_iterations.to_string()),
            ("convergence_eps", i.convergence_eps.to_string()),
            ("inference", mode.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Wall time of profiling, tracing (with reduction) and modeling.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub profiling: Duration,
    pub tracing: Duration,
    pub modeling: Duration,
}

#[derive(Debug, Clone)]
pub struct Localization {
    pub report: Report,
    pub profile: CoverageProfile,
    pub log: ReductionLog,
    /// Tests whose traces entered the model, in model order.
    pub modeled_tests: Vec<String>,
    pub timings: StageTimings,
}

pub fn localize(program: &Program, cfg: &RunConfig) -> Result<Localization, PipelineError> {
    cfg.validate()?;
    let t0 = Instant::now();
    let profile = profile_with(program, cfg.step_budget)?;
    let profiling = t0.elapsed();
    let mut out = localize_profiled(program, profile, cfg)?;
    out.timings.profiling = profiling;
    Ok(out)
}

/// Runs every stage after profiling.
pub fn localize_profiled(
    program: &Program,
    profile: CoverageProfile,
    cfg: &RunConfig,
) -> Result<Localization, PipelineError> {
    cfg.validate()?;
    let t1 = Instant::now();
    let (traces, log) = reduced_traces(program, &profile, cfg)?;
    let tracing = t1.elapsed();

    let t2 = Instant::now();
    let modeled_tests: Vec<String> = traces.iter().map(|t| t.test.clone()).collect();
    let trace_events = traces.iter().map(Trace::len).sum();
    let ddg = build_ddg_with(program, &traces, cfg.ddg)?;
    drop(traces);
    let net = build_net(&ddg, program, &cfg.model)?;
    drop(ddg);
    let marginals = run_lbp(&net, &cfg.inference)?;
    let mut report = rank(&marginals, &net, program);
    let modeling = t2.elapsed();

    attach_baselines(&mut report, &profile, program);
    report.meta.trace_events = trace_events;
    report.meta.config = cfg.describe();
    Ok(Localization {
        report,
        profile,
        log,
        modeled_tests,
        timings: StageTimings {
            profiling: Duration::ZERO,
            tracing,
            modeling,
        },
    })
}

/// Selects, traces and reduces the tests that enter the model.
pub fn reduced_traces(
    program: &Program,
    profile: &CoverageProfile,
    cfg: &RunConfig,
) -> Result<(Vec<Trace>, ReductionLog), PipelineError> {
    let rc = &cfg.reduction;
    let selected = select_tests(profile, rc)?;
    let mut log = ReductionLog::default();
    let chosen: BTreeSet<&str> = selected.iter().map(String::as_str).collect();
    log.dropped_tests = profile
        .tests
        .iter()
        .filter(|t| !chosen.contains(t.test.as_str()))
        .map(|t| t.test.clone())
        .collect();
    let traced: Vec<String> = profile
        .failing_functions()
        .into_iter()
        .filter(|f| program.function(f).is_some_and(|d| !d.is_test()))
        .collect();
    let opts = TraceOptions {
        step_budget: cfg.step_budget,
        trace_limit: rc.trace_limit,
    };
    let reduced: Vec<Result<(Trace, Reduced), PipelineError>> = selected
        .par_iter()
        .map(|test| {
            let t = trace(program, test, &traced, opts)?;
            reduce(t, program, rc)
        })
        .collect();
    let mut kept = Vec::new();
    for r in reduced {
        let (t, info) = r?;
        if info.removed > 0 {
            log.removed_iterations.insert(t.test.clone(), info.removed);
        }
        if !info.folded.is_empty() {
            log.folded.insert(t.test.clone(), info.folded);
        }
        if info.truncated {
            log.truncated.push(t.test.clone());
        }
        if info.discard {
            log.oversized_passing.push(t.test.clone());
        } else {
            kept.push(t);
        }
    }
    let names: Vec<String> = kept.iter().map(|t| t.test.clone()).collect();
    let budgeted = budget_traces(kept, rc);
    let used: BTreeSet<&str> = budgeted.iter().map(|t| t.test.as_str()).collect();
    log.over_budget = names
        .into_iter()
        .filter(|n| !used.contains(n.as_str()))
        .collect();
    Ok((budgeted, log))
}

#[derive(Default)]
struct Reduced {
    removed: usize,
    folded: Vec<String>,
    truncated: bool,
    discard: bool,
}

fn reduce(
    t: Trace,
    program: &Program,
    rc: &ReductionConfig,
) -> Result<(Trace, Reduced), PipelineError> {
    let mut info = Reduced::default();
    let mut t = if rc.loop_compression {
        let (c, removed) = compress_loops_counted(&t, program)?;
        info.removed = removed;
        c
    } else {
        t
    };
    t.oversized = t.len() > rc.trace_limit;
    if !t.oversized {
        return Ok((t, info));
    }
    if !t.status.is_fail() {
        info.discard = true;
    } else if rc.adaptive_folding {
        let f = adaptive_fold(&t, program, rc)?;
        info.folded = f.folded;
        info.truncated = f.truncated;
        t = f.trace;
    }
    Ok((t, info))
}
