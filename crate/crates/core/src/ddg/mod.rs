//! Dynamic dependency graph: statement nodes shared across traces, one value
//! node per produced runtime value, data and control edges between values.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::minilang::{Program, StmtId};
use crate::tracer::tree::{self, Node};
use crate::tracer::{TestStatus, Trace, TraceEvent, ValueId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DdgError {
    #[error("malformed trace {test} at event {event}: {message}")]
    MalformedTrace {
        test: String,
        event: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DdgOptions {
    pub virtual_call_edges: bool,
    pub exception_control: bool,
}

impl Default for DdgOptions {
    fn default() -> Self {
        DdgOptions {
            virtual_call_edges: true,
            exception_control: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueNode {
    pub trace: usize,
    pub id: ValueId,
    /// Producing statement; `None` for root inputs.
    pub stmt: Option<StmtId>,
    /// Data parents, as indices into [`DepGraph::values`].
    pub data: Vec<usize>,
    /// Control parent, never also a data parent.
    pub control: Option<usize>,
}

impl ValueNode {
    pub fn is_input(&self) -> bool {
        self.stmt.is_none()
    }

    /// Value parents in edge order: data first, then control.
    pub fn value_parents(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().copied().chain(self.control)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceSlice {
    pub test: String,
    pub status: TestStatus,
    pub values: Range<usize>,
    /// Asserted values and their observed outcomes.
    pub evidence: Vec<(usize, bool)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    StmtToValue,
    Data,
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepGraph {
    /// Statements producing at least one value, sorted.
    pub statements: Vec<StmtId>,
    /// Value nodes; every parent index is smaller than its child's.
    pub values: Vec<ValueNode>,
    pub traces: Vec<TraceSlice>,
}

impl DepGraph {
    pub fn node_count(&self) -> usize {
        self.statements.len() + self.values.len()
    }

    pub fn edge_count(&self) -> usize {
        self.values
            .iter()
            .map(|v| v.stmt.is_some() as usize + v.data.len() + v.control.is_some() as usize)
            .sum()
    }

    /// Checks by topological sort that the value graph has no cycle.
    pub fn is_acyclic(&self) -> bool {
        let n = self.values.len();
        let mut indeg = vec![0usize; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, v) in self.values.iter().enumerate() {
            for p in v.value_parents() {
                if p >= n {
                    return false;
                }
                indeg[i] += 1;
                children[p].push(i);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(u) = ready.pop() {
            seen += 1;
            for &c in &children[u] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        seen == n
    }

    /// Edges projected to statements: (producer of the source, producer of
    /// the target, kind). Sources that are root inputs project to `None`.
    pub fn projected_edges(&self) -> BTreeSet<(Option<StmtId>, Option<StmtId>, EdgeKind)> {
        let mut out = BTreeSet::new();
        for v in &self.values {
            if let Some(s) = v.stmt {
                out.insert((Some(s), Some(s), EdgeKind::StmtToValue));
            }
            for &p in &v.data {
                out.insert((self.values[p].stmt, v.stmt, EdgeKind::Data));
            }
            if let Some(c) = v.control {
                out.insert((self.values[c].stmt, v.stmt, EdgeKind::Control));
            }
        }
        out
    }

    /// Adjacency-list text dump.
    pub fn dump(&self, program: &Program) -> String {
        let mut out = String::new();
        for s in &self.statements {
            let _ = writeln!(out, "stmt {s} {}", program.location(*s));
        }
        let name = |i: usize| {
            let v = &self.values[i];
            format!("t{}:{}", v.trace, v.id)
        };
        for (i, v) in self.values.iter().enumerate() {
            let _ = write!(out, "value {}", name(i));
            match v.stmt {
                Some(s) => {
                    let _ = write!(out, " <- {s}");
                }
                None => out.push_str(" input"),
            }
            if !v.data.is_empty() {
                let parents: Vec<String> = v.data.iter().map(|&p| name(p)).collect();
                let _ = write!(out, " data [{}]", parents.join(", "));
            }
            if let Some(c) = v.control {
                let _ = write!(out, " ctrl {}", name(c));
            }
            out.push('\n');
        }
        for (ti, t) in self.traces.iter().enumerate() {
            let _ = write!(out, "trace t{ti} {} {}", t.test, t.status.label());
            for (v, b) in &t.evidence {
                let _ = write!(out, " {}={}", name(*v), b);
            }
            out.push('\n');
        }
        out
    }
}

struct Entry {
    /// Branch statement, `None` for a caught exception.
    stmt: Option<StmtId>,
    value: usize,
}

#[derive(Default)]
struct FrameState {
    predicates: Vec<Entry>,
}

struct Builder<'a> {
    program: &'a Program,
    opts: DdgOptions,
    trace: usize,
    test: &'a str,
    values: Vec<ValueNode>,
    ids: HashMap<ValueId, usize>,
    evidence: Vec<(usize, bool)>,
    statements: BTreeSet<StmtId>,
}

/// Builds one graph from all considered traces.
pub fn build_ddg(program: &Program, traces: &[Trace]) -> Result<DepGraph, DdgError> {
    build_ddg_with(program, traces, DdgOptions::default())
}

pub fn build_ddg_with(
    program: &Program,
    traces: &[Trace],
    opts: DdgOptions,
) -> Result<DepGraph, DdgError> {
    let mut values = Vec::new();
    let mut statements = BTreeSet::new();
    let mut slices = Vec::new();
    for (ti, t) in traces.iter().enumerate() {
        let nodes = tree::build(t.events.clone()).map_err(|m| DdgError::MalformedTrace {
            test: t.test.clone(),
            event: m.event,
            message: m.message.to_string(),
        })?;
        let start = values.len();
        let mut b = Builder {
            program,
            opts,
            trace: ti,
            test: &t.test,
            values: std::mem::take(&mut values),
            ids: HashMap::new(),
            evidence: Vec::new(),
            statements: std::mem::take(&mut statements),
        };
        for &input in &t.inputs {
            b.new_value(input, None, Vec::new(), None)?;
        }
        let mut root = FrameState::default();
        b.body(&nodes, &mut root)?;
        slices.push(TraceSlice {
            test: t.test.clone(),
            status: t.status,
            values: start..b.values.len(),
            evidence: b.evidence,
        });
        values = b.values;
        statements = b.statements;
    }
    Ok(DepGraph {
        statements: statements.into_iter().collect(),
        values,
        traces: slices,
    })
}

impl Builder<'_> {
    fn malformed(&self, message: String) -> DdgError {
        DdgError::MalformedTrace {
            test: self.test.to_string(),
            event: 0,
            message,
        }
    }

    fn lookup(&self, v: ValueId) -> Result<usize, DdgError> {
        self.ids
            .get(&v)
            .copied()
            .ok_or_else(|| self.malformed(format!("read of unknown value {v}")))
    }

    fn new_value(
        &mut self,
        id: ValueId,
        stmt: Option<StmtId>,
        mut data: Vec<usize>,
        control: Option<usize>,
    ) -> Result<usize, DdgError> {
        if self.ids.contains_key(&id) {
            return Err(self.malformed(format!("value {id} produced twice")));
        }
        if let Some(s) = stmt {
            if self.program.stmt(s).is_none() {
                return Err(self.malformed(format!("unknown statement {s}")));
            }
            self.statements.insert(s);
        }
        let mut seen = BTreeSet::new();
        data.retain(|d| seen.insert(*d));
        let control = control.filter(|c| !seen.contains(c));
        let idx = self.values.len();
        self.values.push(ValueNode {
            trace: self.trace,
            id,
            stmt,
            data,
            control,
        });
        self.ids.insert(id, idx);
        Ok(idx)
    }

    fn reads(&self, rs: &[ValueId]) -> Result<Vec<usize>, DdgError> {
        rs.iter().map(|&r| self.lookup(r)).collect()
    }

    /// Pops predicates the statement has left and returns the control parent.
    fn enter_stmt(&self, frame: &mut FrameState, s: StmtId) -> Option<usize> {
        while let Some(top) = frame.predicates.last() {
            let Some(b) = top.stmt else { break };
            let inside = b == s || self.program.ctrl_region(b).is_some_and(|r| r.contains(&s));
            if inside {
                break;
            }
            frame.predicates.pop();
        }
        frame.predicates.last().map(|e| e.value)
    }

    fn push_branch(&self, frame: &mut FrameState, s: StmtId, value: usize) {
        let is_branch = self.program.stmt(s).is_some_and(|i| i.tag.is_branch());
        if !is_branch {
            return;
        }
        if frame.predicates.last().is_some_and(|e| e.stmt == Some(s)) {
            frame.predicates.pop();
        }
        frame.predicates.push(Entry {
            stmt: Some(s),
            value,
        });
    }

    fn body(&mut self, nodes: &[Node], frame: &mut FrameState) -> Result<(), DdgError> {
        for n in nodes {
            match n {
                Node::Leaf(e) => self.leaf(e, frame)?,
                Node::Frame { enter, body, .. } => {
                    if let TraceEvent::CallEnter { stmt, .. } = enter {
                        self.enter_stmt(frame, *stmt);
                    }
                    let mut inner = FrameState::default();
                    self.body(body, &mut inner)?;
                }
                Node::Region { enter, body, close } => self.region(enter, body, close, frame)?,
            }
        }
        Ok(())
    }

    fn leaf(&mut self, e: &TraceEvent, frame: &mut FrameState) -> Result<(), DdgError> {
        match e {
            TraceEvent::Exec { stmt, reads, write } => {
                let ctrl = self.enter_stmt(frame, *stmt);
                let data = self.reads(reads)?;
                let v = self.new_value(*write, Some(*stmt), data, ctrl)?;
                self.push_branch(frame, *stmt, v);
            }
            TraceEvent::CallSummary {
                stmt,
                reads,
                writes,
                ..
            } => {
                let ctrl = self.enter_stmt(frame, *stmt);
                let data = self.reads(reads)?;
                for &w in writes {
                    self.new_value(w, Some(*stmt), data.clone(), ctrl)?;
                }
            }
            TraceEvent::ExceptionCatch { stmt, thrown, .. } => {
                self.enter_stmt(frame, *stmt);
                if let (true, Some(t)) = (self.opts.exception_control, thrown) {
                    let value = self.lookup(*t)?;
                    frame.predicates.push(Entry { stmt: None, value });
                }
            }
            TraceEvent::AssertOutcome { value, outcome, .. } => {
                let v = self.lookup(*value)?;
                self.evidence.push((v, *outcome));
            }
            TraceEvent::CallEnter { .. } | TraceEvent::CallExit { .. } => {
                return Err(self.malformed("unpaired call event".into()))
            }
        }
        Ok(())
    }

    /// An untraced invocation with traced calls nested inside it.
    fn region(
        &mut self,
        enter: &TraceEvent,
        body: &[Node],
        close: &Option<TraceEvent>,
        frame: &mut FrameState,
    ) -> Result<(), DdgError> {
        let TraceEvent::CallEnter { stmt, args, .. } = enter else {
            unreachable!("regions open on call entry")
        };
        let ctrl = self.enter_stmt(frame, *stmt);
        let args = self.reads(args)?;
        let mut returns: Vec<usize> = Vec::new();
        for n in body {
            let Node::Frame { enter, body, exit } = n else {
                // Catches inside untraced code carry no statement values.
                continue;
            };
            let TraceEvent::CallEnter { params, .. } = enter else {
                unreachable!("frames open on call entry")
            };
            for &p in params {
                if self.opts.virtual_call_edges {
                    let mut data = args.clone();
                    data.extend(&returns);
                    self.new_value(p, Some(*stmt), data, ctrl)?;
                } else {
                    self.new_value(p, None, Vec::new(), None)?;
                }
            }
            let mut inner = FrameState::default();
            self.body(body, &mut inner)?;
            if let Some(TraceEvent::CallExit { ret: Some(r), .. }) = exit {
                returns.push(self.lookup(*r)?);
            }
        }
        if let Some(TraceEvent::CallSummary { reads, writes, .. }) = close {
            self.enter_stmt(frame, *stmt);
            let mut data = self.reads(reads)?;
            if self.opts.virtual_call_edges {
                data.extend(&returns);
            }
            for &w in writes {
                self.new_value(w, Some(*stmt), data.clone(), ctrl)?;
            }
        }
        Ok(())
    }
}
