use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::minilang::{Program, StmtId};
use crate::tracer::TraceError;

/// Identity of one runtime value within a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueId(pub u32);

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailReason {
    Assertion,
    Exception,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestStatus {
    Pass,
    Fail(FailReason),
}

impl TestStatus {
    pub fn is_fail(self) -> bool {
        matches!(self, TestStatus::Fail(_))
    }

    pub fn label(self) -> &'static str {
        match self {
            TestStatus::Pass => "pass",
            TestStatus::Fail(FailReason::Assertion) => "fail:assertion",
            TestStatus::Fail(FailReason::Exception) => "fail:exception",
            TestStatus::Fail(FailReason::Timeout) => "fail:timeout",
        }
    }

    pub fn from_label(s: &str) -> Option<TestStatus> {
        Some(match s {
            "pass" => TestStatus::Pass,
            "fail:assertion" => TestStatus::Fail(FailReason::Assertion),
            "fail:exception" => TestStatus::Fail(FailReason::Exception),
            "fail:timeout" => TestStatus::Fail(FailReason::Timeout),
            _ => return None,
        })
    }
}

/// Index of a function in [`Program::functions`].
pub type FnIdx = u32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    /// One statement instance producing exactly one value.
    Exec {
        stmt: StmtId,
        reads: Vec<ValueId>,
        write: ValueId,
    },
    /// Entry into a traced invocation, or (with `summary`) the opening of an
    /// untraced invocation that has traced calls nested inside it.
    ///
    /// `args` are the caller-side argument values. `params` is non-empty only
    /// for traced invocations entered from untraced code: the fresh parameter
    /// values attributed to the enclosing summary.
    CallEnter {
        stmt: StmtId,
        callee: FnIdx,
        args: Vec<ValueId>,
        params: Vec<ValueId>,
        summary: bool,
    },
    CallExit {
        stmt: StmtId,
        callee: FnIdx,
        ret: Option<ValueId>,
    },
    /// An untraced invocation collapsed to one atomic statement instance.
    /// With `nested`, it closes the matching `CallEnter { summary: true, .. }`.
    CallSummary {
        stmt: StmtId,
        callee: FnIdx,
        reads: Vec<ValueId>,
        writes: Vec<ValueId>,
        nested: bool,
    },
    ExceptionCatch {
        stmt: StmtId,
        thrown: Option<ValueId>,
        unwound: u32,
    },
    AssertOutcome {
        stmt: StmtId,
        value: ValueId,
        outcome: bool,
    },
}

impl TraceEvent {
    pub fn stmt(&self) -> StmtId {
        match self {
            TraceEvent::Exec { stmt, .. }
            | TraceEvent::CallEnter { stmt, .. }
            | TraceEvent::CallExit { stmt, .. }
            | TraceEvent::CallSummary { stmt, .. }
            | TraceEvent::ExceptionCatch { stmt, .. }
            | TraceEvent::AssertOutcome { stmt, .. } => *stmt,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            TraceEvent::Exec { .. } => "exec",
            TraceEvent::CallEnter { summary: false, .. } => "enter",
            TraceEvent::CallEnter { summary: true, .. } => "enter-summary",
            TraceEvent::CallExit { .. } => "exit",
            TraceEvent::CallSummary { .. } => "summary",
            TraceEvent::ExceptionCatch { .. } => "catch",
            TraceEvent::AssertOutcome { .. } => "assert",
        }
    }

    /// Values this event consumes.
    pub fn reads(&self) -> Vec<ValueId> {
        match self {
            TraceEvent::Exec { reads, .. } | TraceEvent::CallSummary { reads, .. } => reads.clone(),
            TraceEvent::CallEnter { args, .. } => args.clone(),
            TraceEvent::CallExit { ret, .. } => ret.iter().copied().collect(),
            TraceEvent::ExceptionCatch { thrown, .. } => thrown.iter().copied().collect(),
            TraceEvent::AssertOutcome { value, .. } => vec![*value],
        }
    }

    /// Values this event produces.
    pub fn writes(&self) -> Vec<ValueId> {
        match self {
            TraceEvent::Exec { write, .. } => vec![*write],
            TraceEvent::CallSummary { writes, .. } => writes.clone(),
            TraceEvent::CallEnter { params, .. } => params.clone(),
            _ => Vec::new(),
        }
    }

    /// Applies `f` to every consumed value id in place.
    pub fn map_reads(&mut self, mut f: impl FnMut(ValueId) -> ValueId) {
        match self {
            TraceEvent::Exec { reads, .. } | TraceEvent::CallSummary { reads, .. } => {
                reads.iter_mut().for_each(|r| *r = f(*r))
            }
            TraceEvent::CallEnter { args, .. } => args.iter_mut().for_each(|r| *r = f(*r)),
            TraceEvent::CallExit { ret, .. } => {
                if let Some(r) = ret {
                    *r = f(*r)
                }
            }
            TraceEvent::ExceptionCatch { thrown, .. } => {
                if let Some(r) = thrown {
                    *r = f(*r)
                }
            }
            TraceEvent::AssertOutcome { value, .. } => *value = f(*value),
        }
    }
}

/// Execution trace of one test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub test: String,
    pub status: TestStatus,
    pub events: Vec<TraceEvent>,
    /// Root values with no producer: literal test inputs.
    pub inputs: Vec<ValueId>,
    /// Next unused value id.
    pub next_value: u32,
    /// Event count exceeded the configured trace limit when recorded.
    pub oversized: bool,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn fresh_value(&mut self) -> ValueId {
        let v = ValueId(self.next_value);
        self.next_value += 1;
        v
    }

    /// Statement-id sequence, for inspection and tests.
    pub fn statement_sequence(&self) -> Vec<StmtId> {
        self.events.iter().map(TraceEvent::stmt).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    test: String,
    status: String,
    program: String,
    inputs: Vec<ValueId>,
    values: u32,
    oversized: bool,
}

#[derive(Serialize, Deserialize)]
struct Record {
    kind: String,
    stmt: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    reads: Vec<ValueId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    writes: Vec<ValueId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    callee: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unwound: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome: Option<bool>,
    #[serde(default, skip_serializing_if = "is_false")]
    nested: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Writes a trace as line-delimited JSON: one header, then one event per
/// line.
pub fn write_trace(trace: &Trace, program: &Program, out: &mut dyn Write) -> std::io::Result<()> {
    let header = Header {
        test: trace.test.clone(),
        status: trace.status.label().to_string(),
        program: program.hash().to_string(),
        inputs: trace.inputs.clone(),
        values: trace.next_value,
        oversized: trace.oversized,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    let name = |f: FnIdx| Some(program.functions[f as usize].name.clone());
    for e in &trace.events {
        let mut rec = Record {
            kind: e.kind_name().to_string(),
            stmt: e.stmt().0,
            reads: Vec::new(),
            writes: Vec::new(),
            callee: None,
            unwound: None,
            outcome: None,
            nested: false,
        };
        match e {
            TraceEvent::Exec { reads, write, .. } => {
                rec.reads = reads.clone();
                rec.writes = vec![*write];
            }
            TraceEvent::CallEnter {
                callee,
                args,
                params,
                ..
            } => {
                rec.callee = name(*callee);
                rec.reads = args.clone();
                rec.writes = params.clone();
            }
            TraceEvent::CallExit { callee, ret, .. } => {
                rec.callee = name(*callee);
                rec.reads = ret.iter().copied().collect();
            }
            TraceEvent::CallSummary {
                callee,
                reads,
                writes,
                nested,
                ..
            } => {
                rec.callee = name(*callee);
                rec.reads = reads.clone();
                rec.writes = writes.clone();
                rec.nested = *nested;
            }
            TraceEvent::ExceptionCatch {
                thrown, unwound, ..
            } => {
                rec.reads = thrown.iter().copied().collect();
                rec.unwound = Some(*unwound);
            }
            TraceEvent::AssertOutcome { value, outcome, .. } => {
                rec.reads = vec![*value];
                rec.outcome = Some(*outcome);
            }
        }
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    Ok(())
}

pub fn read_trace(program: &Program, input: &mut dyn BufRead) -> Result<Trace, TraceError> {
    let bad = |line: usize, msg: String| TraceError::Format { line, message: msg };
    let mut lines = input.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| bad(1, "empty trace file".into()))?;
    let first = first.map_err(|e| bad(1, e.to_string()))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| bad(1, e.to_string()))?;
    if header.program != program.hash() {
        return Err(TraceError::ProgramMismatch);
    }
    let status =
        TestStatus::from_label(&header.status).ok_or_else(|| bad(1, "unknown status".into()))?;
    let mut events = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| bad(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| bad(lineno, e.to_string()))?;
        let stmt = StmtId(rec.stmt);
        if program.stmt(stmt).is_none() {
            return Err(bad(lineno, format!("unknown statement {}", rec.stmt)));
        }
        let callee = || -> Result<FnIdx, TraceError> {
            let n = rec.callee.as_deref().unwrap_or("");
            program
                .function_index(n)
                .map(|i| i as FnIdx)
                .ok_or_else(|| bad(lineno, format!("unknown function `{n}`")))
        };
        let one = |v: &[ValueId]| -> Result<ValueId, TraceError> {
            v.first()
                .copied()
                .ok_or_else(|| bad(lineno, "missing value".into()))
        };
        let ev = match rec.kind.as_str() {
            "exec" => TraceEvent::Exec {
                stmt,
                reads: rec.reads.clone(),
                write: one(&rec.writes)?,
            },
            "enter" | "enter-summary" => TraceEvent::CallEnter {
                stmt,
                callee: callee()?,
                args: rec.reads.clone(),
                params: rec.writes.clone(),
                summary: rec.kind == "enter-summary",
            },
            "exit" => TraceEvent::CallExit {
                stmt,
                callee: callee()?,
                ret: rec.reads.first().copied(),
            },
            "summary" => TraceEvent::CallSummary {
                stmt,
                callee: callee()?,
                reads: rec.reads.clone(),
                writes: rec.writes.clone(),
                nested: rec.nested,
            },
            "catch" => TraceEvent::ExceptionCatch {
                stmt,
                thrown: rec.reads.first().copied(),
                unwound: rec.unwound.unwrap_or(0),
            },
            "assert" => TraceEvent::AssertOutcome {
                stmt,
                value: one(&rec.reads)?,
                outcome: rec.outcome.unwrap_or(false),
            },
            other => return Err(bad(lineno, format!("unknown event kind `{other}`"))),
        };
        events.push(ev);
    }
    Ok(Trace {
        test: header.test,
        status,
        events,
        inputs: header.inputs,
        next_value: header.values,
        oversized: header.oversized,
    })
}
