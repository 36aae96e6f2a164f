//! Fault reports: statements ordered by posterior fault probability, the
//! spectrum-based baselines, top-k evaluation and method-level aggregation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use serde_json::json;
use thiserror::Error;

use crate::inference::Marginals;
use crate::minilang::{Program, StmtId};
use crate::model::{FaultNet, VarKind};
use crate::tracer::CoverageProfile;

pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankingError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub stmt: StmtId,
    pub line: u32,
    pub function: String,
    pub fault_probability: f64,
    /// 1-based position in the total order.
    pub rank: usize,
    /// Mean position over the entries tied with this one.
    pub average_rank: f64,
    /// False for the tail of statements no considered trace reached.
    pub executed: bool,
    pub ochiai: Option<f64>,
    pub dstar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportMeta {
    pub converged: bool,
    pub iterations: usize,
    pub trace_events: usize,
    pub model_variables: usize,
    pub model_factors: usize,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub entries: Vec<ReportEntry>,
    pub meta: ReportMeta,
}

impl Report {
    pub fn entry(&self, stmt: StmtId) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.stmt == stmt)
    }

    pub fn order(&self) -> Vec<StmtId> {
        self.entries.iter().map(|e| e.stmt).collect()
    }

    /// Best rank of any of `stmts`, by the total order and by tie averages.
    pub fn best_rank(&self, stmts: &BTreeSet<StmtId>) -> Option<(usize, f64)> {
        self.entries
            .iter()
            .filter(|e| stmts.contains(&e.stmt))
            .map(|e| (e.rank, e.average_rank))
            .min_by(|a, b| a.0.cmp(&b.0))
    }
}

/// Orders scored statements by descending score with ties broken by id,
/// then appends every remaining candidate statement with score 0.
pub fn order_scores(
    scores: &BTreeMap<StmtId, f64>,
    program: &Program,
) -> Report {
    let mut ranked: Vec<(StmtId, f64)> = scores.iter().map(|(&s, &p)| (s, p)).collect();
    ranked.sort_by(|a, b| desc(a.1, b.1).then(a.0.cmp(&b.0)));
    let tail = program
        .candidates()
        .into_iter()
        .filter(|s| !scores.contains_key(s));
    let rows: Vec<(StmtId, f64, bool)> = ranked
        .into_iter()
        .map(|(s, p)| (s, p, true))
        .chain(tail.map(|s| (s, 0.0, false)))
        .collect();
    let mut entries: Vec<ReportEntry> = rows
        .iter()
        .enumerate()
        .map(|(i, &(stmt, p, executed))| ReportEntry {
            stmt,
            line: program.stmt(stmt).map_or(0, |s| s.line),
            function: program
                .function_of(stmt)
                .map_or_else(String::new, |f| f.name.clone()),
            fault_probability: p,
            rank: i + 1,
            average_rank: (i + 1) as f64,
            executed,
            ochiai: None,
            dstar: None,
        })
        .collect();
    let mut i = 0;
    while i < entries.len() {
        let mut j = i + 1;
        while j < entries.len()
            && entries[j].executed == entries[i].executed
            && entries[j].fault_probability == entries[i].fault_probability
        {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for e in &mut entries[i..j] {
            e.average_rank = avg;
        }
        i = j;
    }
    Report {
        entries,
        meta: ReportMeta::default(),
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Ranks the candidate statements of the net by `P(faulty)`.
pub fn rank(marginals: &Marginals, net: &FaultNet, program: &Program) -> Report {
    let candidates: BTreeSet<StmtId> = program.candidates().into_iter().collect();
    let scores: BTreeMap<StmtId, f64> = net
        .variables
        .iter()
        .enumerate()
        .filter_map(|(i, v)| match v.kind {
            VarKind::Statement(s) if candidates.contains(&s) => Some((s, marginals.p_faulty(i))),
            _ => None,
        })
        .collect();
    let mut r = order_scores(&scores, program);
    r.meta.converged = marginals.converged;
    r.meta.iterations = marginals.iterations;
    r.meta.model_variables = net.variables.len();
    r.meta.model_factors = net.factors.len();
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SbflFormula {
    Ochiai,
    /// Exponent 2. A zero denominator scores `f64::INFINITY`.
    DStar,
}

/// Spectrum-based suspiciousness of every covered candidate statement.
pub fn sbfl_scores(
    profile: &CoverageProfile,
    program: &Program,
    formula: SbflFormula,
) -> BTreeMap<StmtId, f64> {
    let candidates: BTreeSet<StmtId> = program.candidates().into_iter().collect();
    let total_failed = profile.failing() as f64;
    let mut counts: BTreeMap<StmtId, (f64, f64)> = BTreeMap::new();
    for t in &profile.tests {
        for s in t.statements.iter().filter(|s| candidates.contains(s)) {
            let c = counts.entry(*s).or_default();
            if t.status.is_fail() {
                c.0 += 1.0;
            } else {
                c.1 += 1.0;
            }
        }
    }
    counts
        .into_iter()
        .map(|(s, (ef, ep))| (s, sbfl_formula(formula, ef, ep, total_failed)))
        .collect()
}

pub fn sbfl_formula(formula: SbflFormula, ef: f64, ep: f64, total_failed: f64) -> f64 {
    match formula {
        SbflFormula::Ochiai => {
            let d = (total_failed * (ef + ep)).sqrt();
            if d == 0.0 {
                0.0
            } else {
                ef / d
            }
        }
        SbflFormula::DStar => {
            let d = ep + (total_failed - ef);
            if ef == 0.0 {
                0.0
            } else if d == 0.0 {
                f64::INFINITY
            } else {
                ef * ef / d
            }
        }
    }
}

/// Report ordered by a baseline formula alone.
pub fn sbfl_report(profile: &CoverageProfile, program: &Program, formula: SbflFormula) -> Report {
    let mut r = order_scores(&sbfl_scores(profile, program, formula), program);
    attach_baselines(&mut r, profile, program);
    r
}

/// Fills the Ochiai and DStar columns of every entry.
pub fn attach_baselines(report: &mut Report, profile: &CoverageProfile, program: &Program) {
    let och = sbfl_scores(profile, program, SbflFormula::Ochiai);
    let ds = sbfl_scores(profile, program, SbflFormula::DStar);
    for e in &mut report.entries {
        e.ochiai = Some(och.get(&e.stmt).copied().unwrap_or(0.0));
        e.dstar = Some(ds.get(&e.stmt).copied().unwrap_or(0.0));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    pub hits: BTreeMap<usize, bool>,
    pub best_rank: usize,
    pub best_average_rank: f64,
}

pub fn topk_eval(
    report: &Report,
    ground_truth: &BTreeSet<StmtId>,
    ks: &[usize],
) -> Result<TopK, RankingError> {
    if ground_truth.is_empty() {
        return Err(RankingError::EmptyGroundTruth);
    }
    let (best_rank, best_average_rank) = report
        .best_rank(ground_truth)
        .unwrap_or((usize::MAX, f64::INFINITY));
    Ok(TopK {
        hits: ks.iter().map(|&k| (k, best_rank <= k)).collect(),
        best_rank,
        best_average_rank,
    })
}

/// Functions scored by their most suspicious statement, descending, ties by
/// name.
pub fn method_level(report: &Report) -> Vec<(String, f64)> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for e in &report.entries {
        let b = best.entry(&e.function).or_insert(f64::NEG_INFINITY);
        *b = b.max(e.fault_probability);
    }
    let mut out: Vec<(String, f64)> = best.into_iter().map(|(f, p)| (f.to_string(), p)).collect();
    out.sort_by(|a, b| desc(a.1, b.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Rank-derived suspiciousness: the i-th of n entries scores (n - i + 1) / n.
pub fn export_combine_scores(report: &Report) -> Vec<(StmtId, f64)> {
    let n = report.entries.len() as f64;
    report
        .entries
        .iter()
        .map(|e| (e.stmt, (n - e.rank as f64 + 1.0) / n))
        .collect()
}

fn score_json(v: Option<f64>) -> serde_json::Value {
    match v {
        Some(x) if x.is_infinite() => json!("inf"),
        Some(x) => json!(x),
        None => serde_json::Value::Null,
    }
}

/// One JSON record per statement.
pub fn write_report_jsonl(
    report: &Report,
    program: &Program,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    for e in &report.entries {
        let rec = json!({
            "stmt": e.stmt.0,
            "location": program.location(e.stmt),
            "function": e.function,
            "probability": e.fault_probability,
            "rank": e.rank,
            "average_rank": e.average_rank,
            "executed": e.executed,
            "ochiai": score_json(e.ochiai),
            "dstar": score_json(e.dstar),
        });
        writeln!(out, "{rec}")?;
    }
    Ok(())
}

pub fn render_table(report: &Report, program: &Program) -> String {
    let mut out = String::new();
    let m = &report.meta;
    let _ = writeln!(
        out,
        "# converged {} after {} iterations; {} trace events, {} variables, {} factors",
        m.converged, m.iterations, m.trace_events, m.model_variables, m.model_factors
    );
    for (k, v) in &m.config {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(
        out,
        "{:>5}  {:<24} {:<16} {:>12} {:>9} {:>9}",
        "rank", "location", "function", "probability", "ochiai", "dstar"
    );
    for e in &report.entries {
        let fmt = |v: Option<f64>| match v {
            Some(x) if x.is_infinite() => "inf".to_string(),
            Some(x) => format!("{x:.4}"),
            None => "-".to_string(),
        };
        let loc = program.location(e.stmt);
        let mark = if e.executed { "" } else { " (not executed)" };
        let _ = writeln!(
            out,
            "{:>5}  {:<24} {:<16} {:>12.6} {:>9} {:>9}{}",
            e.rank,
            loc,
            e.function,
            e.fault_probability,
            fmt(e.ochiai),
            fmt(e.dstar),
            mark
        );
    }
    out
}

pub fn write_combine_scores(report: &Report, out: &mut dyn Write) -> std::io::Result<()> {
    for (s, score) in export_combine_scores(report) {
        writeln!(out, "{}\t{score}", s.0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
