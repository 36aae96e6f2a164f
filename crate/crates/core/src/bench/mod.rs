//! Seeded-fault benchmark: operator mutants of bundled programs, localized
//! under a set of configurations and scored against the spectrum baselines.

mod mutate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::minilang::{MiniError, Program, StmtId};
use crate::pipeline::{localize_profiled, RunConfig};
use crate::ranking::{sbfl_report, topk_eval, SbflFormula, TopK, DEFAULT_KS};
use crate::tracer::{profile, profile_with, TraceError};

pub use mutate::{apply, mutation_sites, Mutation, Rewrite};

/// Values of the moderate constant in the parameter sweep.
pub const SWEEP_MODERATE: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
/// Values of the low constant in the parameter sweep.
pub const SWEEP_LOW: [f64; 5] = [0.001, 0.005, 0.01, 0.05, 0.1];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no viable mutants of {0}")]
    NoViableMutants(String),
    #[error("{program}: base version fails {test}")]
    BaseFails { program: String, test: String },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{path}: {source}")]
    Syntax { path: String, source: MiniError },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// A mutant with its single faulty statement.
#[derive(Debug, Clone)]
pub struct FaultSeed {
    pub program: String,
    pub mutation: Mutation,
    pub line: u32,
    pub function: String,
    pub rng_seed: u64,
    pub mutant: Program,
}

impl FaultSeed {
    pub fn id(&self) -> String {
        format!(
            "{}:{} {} ({})",
            self.program, self.line, self.mutation.rewrite, self.mutation.stmt
        )
    }

    pub fn ground_truth(&self) -> BTreeSet<StmtId> {
        [self.mutation.stmt].into_iter().collect()
    }
}

/// Up to `n` mutants whose tests have mixed outcomes, drawn in an order
/// fixed by `rng_seed`.
pub fn seed_faults(program: &Program, n: usize, rng_seed: u64) -> Result<Vec<FaultSeed>, BenchError> {
    let base = profile(program)?;
    if let Some(t) = base.tests.iter().find(|t| t.status.is_fail()) {
        return Err(BenchError::BaseFails {
            program: program.source_path.clone(),
            test: t.test.clone(),
        });
    }
    let mut sites = mutation_sites(program);
    sites.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let mut out = Vec::new();
    for chunk in sites.chunks(n.max(1).saturating_mul(2)) {
        let viable: Vec<Option<FaultSeed>> = chunk
            .par_iter()
            .map(|m| {
                let mutant = apply(program, m)?;
                let prof = profile(&mutant).ok()?;
                let fails = prof.failing();
                (fails > 0 && fails < prof.tests.len()).then(|| FaultSeed {
                    program: program.source_path.clone(),
                    mutation: *m,
                    line: program.stmt(m.stmt).map_or(0, |s| s.line),
                    function: program
                        .function_of(m.stmt)
                        .map_or_else(String::new, |f| f.name.clone()),
                    rng_seed,
                    mutant,
                })
            })
            .collect();
        out.extend(viable.into_iter().flatten());
        if out.len() >= n {
            break;
        }
    }
    out.truncate(n);
    if out.is_empty() {
        return Err(BenchError::NoViableMutants(program.source_path.clone()));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct Manifest {
    programs: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    path: String,
    tests: Vec<String>,
}

/// Programs listed by a manifest, parsed, with their listed tests checked.
pub fn load_manifest(manifest: &str, dir: &Path) -> Result<Vec<Program>, BenchError> {
    let m: Manifest =
        serde_json::from_str(manifest).map_err(|e| BenchError::Manifest(e.to_string()))?;
    m.programs
        .iter()
        .map(|e| {
            let path: PathBuf = dir.join(&e.path);
            let src = std::fs::read_to_string(&path).map_err(|source| BenchError::Io {
                path: path.display().to_string(),
                source,
            })?;
            parse_listed(&src, e)
        })
        .collect()
}

/// Bundled manifest and programs.
pub fn bundled_programs() -> Result<Vec<Program>, BenchError> {
    let m: Manifest = serde_json::from_str(crate::corpus::BENCH_MANIFEST)
        .map_err(|e| BenchError::Manifest(e.to_string()))?;
    m.programs
        .iter()
        .map(|e| {
            let src = crate::corpus::BENCH_PROGRAMS
                .iter()
                .find(|(n, _)| *n == e.path)
                .map(|(_, s)| *s)
                .ok_or_else(|| BenchError::Manifest(format!("{} is not bundled", e.path)))?;
            parse_listed(src, e)
        })
        .collect()
}

fn parse_listed(src: &str, e: &ManifestEntry) -> Result<Program, BenchError> {
    let p = Program::parse(src, &e.path).map_err(|source| BenchError::Syntax {
        path: e.path.clone(),
        source,
    })?;
    let tests: BTreeSet<&str> = p.tests().into_iter().collect();
    for t in &e.tests {
        if !tests.contains(t.as_str()) {
            return Err(BenchError::Manifest(format!("{} has no test {t}", e.path)));
        }
    }
    Ok(p)
}

/// Mutants of every program, `per_program` each.
pub fn seed_corpus(
    programs: &[Program],
    per_program: usize,
    rng_seed: u64,
) -> Result<Vec<FaultSeed>, BenchError> {
    let mut out = Vec::new();
    for p in programs {
        out.extend(seed_faults(p, per_program, rng_seed)?);
    }
    Ok(out)
}

/// The default configuration followed by one configuration per disabled
/// reducer or modeling feature.
pub fn ablation_configs(base: &RunConfig) -> Vec<(String, RunConfig)> {
    let mut out = vec![("default".to_string(), *base)];
    let mut add = |name: &str, f: &dyn Fn(&mut RunConfig)| {
        let mut c = *base;
        f(&mut c);
        out.push((name.to_string(), c));
    };
    add("no-adaptive-folding", &|c| c.reduction.adaptive_folding = false);
    add("no-loop-compression", &|c| c.reduction.loop_compression = false);
    add("naive-inference", &|c| {
        c.inference.mode = crate::inference::InferenceMode::Naive
    });
    add("no-virtual-call-edges", &|c| c.ddg.virtual_call_edges = false);
    add("no-exception-control", &|c| c.ddg.exception_control = false);
    add("no-test-reduction", &|c| c.reduction.test_reduction = false);
    out
}

/// One configuration per `(p0_moderate, p0_low)` pair.
pub fn sweep_configs(base: &RunConfig, moderate: &[f64], low: &[f64]) -> Vec<(String, RunConfig)> {
    let mut out = Vec::new();
    for &m in moderate {
        for &l in low {
            let mut c = *base;
            c.model.p0_moderate = m;
            c.model.p0_low = l;
            out.push((format!("moderate={m} low={l}"), c));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseScores {
    pub probabilistic: TopK,
    pub ochiai: TopK,
    pub dstar: TopK,
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub case: String,
    pub config: String,
    pub outcome: Result<CaseScores, String>,
    pub profiling: Duration,
    pub tracing: Duration,
    pub modeling: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct BenchResults {
    pub rows: Vec<BenchRow>,
}

/// Top-k hit counts of one technique under one configuration.
pub type HitCounts = BTreeMap<usize, usize>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigSummary {
    pub cases: usize,
    pub failures: usize,
    pub probabilistic: HitCounts,
    pub ochiai: HitCounts,
    pub dstar: HitCounts,
}

impl BenchResults {
    /// Hit counts per configuration, in first-appearance order.
    pub fn summary(&self) -> Vec<(String, ConfigSummary)> {
        let mut out: Vec<(String, ConfigSummary)> = Vec::new();
        for r in &self.rows {
            let i = match out.iter().position(|(c, _)| *c == r.config) {
                Some(i) => i,
                None => {
                    out.push((r.config.clone(), ConfigSummary::default()));
                    out.len() - 1
                }
            };
            let s = &mut out[i].1;
            s.cases += 1;
            match &r.outcome {
                Ok(c) => {
                    for &k in &DEFAULT_KS {
                        let count = |h: &mut HitCounts, t: &TopK| {
                            *h.entry(k).or_default() += usize::from(t.hits[&k]);
                        };
                        count(&mut s.probabilistic, &c.probabilistic);
                        count(&mut s.ochiai, &c.ochiai);
                        count(&mut s.dstar, &c.dstar);
                    }
                }
                Err(_) => s.failures += 1,
            }
        }
        out
    }

    /// One JSON record per (case, configuration); timings are left out so
    /// that identical runs give identical files.
    pub fn write_jsonl(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for r in &self.rows {
            let rec = match &r.outcome {
                Ok(c) => json!({
                    "case": r.case,
                    "config": r.config,
                    "probabilistic": topk_json(&c.probabilistic),
                    "ochiai": topk_json(&c.ochiai),
                    "dstar": topk_json(&c.dstar),
                }),
                Err(e) => json!({"case": r.case, "config": r.config, "error": e}),
            };
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }

    /// Stage wall times per row, in seconds.
    pub fn write_timings(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "case\tconfig\tprofiling\ttracing\tmodeling")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                r.case,
                r.config,
                r.profiling.as_secs_f64(),
                r.tracing.as_secs_f64(),
                r.modeling.as_secs_f64()
            )?;
        }
        Ok(())
    }

    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        let ks: Vec<String> = DEFAULT_KS.iter().map(|k| format!("top-{k}")).collect();
        let _ = writeln!(
            out,
            "{:<28} {:<14} {:>6} {}",
            "config",
            "technique",
            "cases",
            ks.iter().map(|k| format!("{k:>7}")).collect::<String>()
        );
        for (config, s) in self.summary() {
            for (name, h) in [
                ("probabilistic", &s.probabilistic),
                ("ochiai", &s.ochiai),
                ("dstar", &s.dstar),
            ] {
                let cells: String = DEFAULT_KS
                    .iter()
                    .map(|k| format!("{:>7}", h.get(k).copied().unwrap_or(0)))
                    .collect();
                let _ = writeln!(out, "{config:<28} {name:<14} {:>6} {cells}", s.cases);
            }
            if s.failures > 0 {
                let _ = writeln!(out, "{config:<28} failed cases: {}", s.failures);
            }
        }
        out
    }
}

fn topk_json(t: &TopK) -> serde_json::Value {
    let hits: serde_json::Map<String, serde_json::Value> = t
        .hits
        .iter()
        .map(|(k, h)| (format!("top{k}"), json!(h)))
        .collect();
    json!({"rank": t.best_rank, "average_rank": t.best_average_rank, "hits": hits})
}

/// Localizes every case under every configuration. A failing case is
/// recorded in its row and does not stop the batch.
pub fn run_benchmark(cases: &[FaultSeed], configs: &[(String, RunConfig)]) -> BenchResults {
    if configs.is_empty() {
        return BenchResults::default();
    }
    let per_case: Vec<Vec<BenchRow>> = cases
        .par_iter()
        .map(|case| run_case(case, configs))
        .collect();
    BenchResults {
        rows: per_case.into_iter().flatten().collect(),
    }
}

fn run_case(case: &FaultSeed, configs: &[(String, RunConfig)]) -> Vec<BenchRow> {
    let id = case.id();
    let gt = case.ground_truth();
    let row = |config: &str, outcome, timings: [Duration; 3]| BenchRow {
        case: id.clone(),
        config: config.to_string(),
        outcome,
        profiling: timings[0],
        tracing: timings[1],
        modeling: timings[2],
    };
    configs
        .iter()
        .map(|(name, cfg)| {
            let t0 = Instant::now();
            let prof = match profile_with(&case.mutant, cfg.step_budget) {
                Ok(p) => p,
                Err(e) => return row(name, Err(e.to_string()), [t0.elapsed(); 3]),
            };
            let profiling = t0.elapsed();
            let baseline = |f| {
                topk_eval(&sbfl_report(&prof, &case.mutant, f), &gt, &DEFAULT_KS)
                    .expect("ground truth is one statement")
            };
            let ochiai = baseline(SbflFormula::Ochiai);
            let dstar = baseline(SbflFormula::DStar);
            match localize_profiled(&case.mutant, prof, cfg) {
                Ok(l) => {
                    let probabilistic = topk_eval(&l.report, &gt, &DEFAULT_KS)
                        .expect("ground truth is one statement");
                    row(
                        name,
                        Ok(CaseScores {
                            probabilistic,
                            ochiai,
                            dstar,
                        }),
                        [profiling, l.timings.tracing, l.timings.modeling],
                    )
                }
                Err(e) => row(name, Err(e.to_string()), [profiling, Duration::ZERO, Duration::ZERO]),
            }
        })
        .collect()
}
