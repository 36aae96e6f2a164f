use std::collections::HashMap;

use crate::minilang::{BinOp, Expr, Program, Stmt, StmtId, StmtKind, UnOp};
use crate::tracer::event::{FailReason, FnIdx, TestStatus, TraceEvent, ValueId};

/// Thrown value for division or remainder by zero.
pub const ERR_DIV_ZERO: i64 = 1001;
/// Thrown value for an array index outside the array.
pub const ERR_OUT_OF_BOUNDS: i64 = 1002;
/// Thrown value for an operation applied to the wrong kind of value.
pub const ERR_TYPE: i64 = 1003;
/// Thrown value when the call depth limit is hit.
pub const ERR_STACK_OVERFLOW: i64 = 1004;

pub const MAX_CALL_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Value {
    Int(i64),
    Bool(bool),
    /// Heap address of an array.
    Array(usize),
    Unit,
}

#[derive(Debug)]
pub(crate) enum Abort {
    Exception { value: Value, id: Option<ValueId> },
    AssertFailed,
    Timeout,
}

enum Flow {
    Normal,
    Return(Value, Option<ValueId>),
}

#[derive(Clone, Copy)]
struct Slot {
    value: Value,
    id: Option<ValueId>,
}

struct Frame {
    traced: bool,
    is_test: bool,
    /// Visible-frame depth of this frame in the recorded event stream.
    visible: u32,
    scopes: Vec<HashMap<String, Slot>>,
}

impl Frame {
    fn lookup(&self, name: &str) -> Slot {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name))
            .copied()
            .expect("names resolved at parse time")
    }

    fn define(&mut self, name: &str, slot: Slot) {
        self.scopes
            .last_mut()
            .expect("scope open")
            .insert(name.to_string(), slot);
    }

    fn assign(&mut self, name: &str, slot: Slot) {
        for s in self.scopes.iter_mut().rev() {
            if let Some(v) = s.get_mut(name) {
                *v = slot;
                return;
            }
        }
        unreachable!("names resolved at parse time")
    }
}

#[derive(Default)]
pub(crate) struct Recorder {
    pub events: Vec<TraceEvent>,
    pub inputs: Vec<ValueId>,
    pub next: u32,
    depth: u32,
}

impl Recorder {
    fn fresh(&mut self) -> ValueId {
        let v = ValueId(self.next);
        self.next += 1;
        v
    }
}

pub(crate) struct RunResult {
    pub status: TestStatus,
    pub covered_functions: Vec<bool>,
    pub covered_stmts: Vec<bool>,
}

pub(crate) struct Interp<'p> {
    program: &'p Program,
    traced: Vec<bool>,
    heap: Vec<Vec<Value>>,
    heap_version: Vec<Option<ValueId>>,
    steps: u64,
    budget: u64,
    call_depth: usize,
    covered_functions: Vec<bool>,
    covered_stmts: Vec<bool>,
    pub rec: Option<Recorder>,
}

impl<'p> Interp<'p> {
    /// `traced` is `None` for coverage-only runs.
    pub fn new(program: &'p Program, traced: Option<Vec<bool>>, budget: u64) -> Self {
        let recording = traced.is_some();
        Interp {
            program,
            traced: traced.unwrap_or_else(|| vec![false; program.functions.len()]),
            heap: Vec::new(),
            heap_version: Vec::new(),
            steps: 0,
            budget,
            call_depth: 0,
            covered_functions: vec![false; program.functions.len()],
            covered_stmts: vec![false; program.num_statements()],
            rec: recording.then(Recorder::default),
        }
    }

    pub fn run_test(&mut self, test: usize) -> RunResult {
        let program = self.program;
        let f = &program.functions[test];
        self.covered_functions[test] = true;
        let mut frame = Frame {
            traced: self.rec.is_some(),
            is_test: true,
            visible: 1,
            scopes: vec![HashMap::new()],
        };
        if let Some(r) = self.rec.as_mut() {
            r.depth = 1;
        }
        let status = match self.exec_block(&mut frame, &f.body) {
            Ok(_) => TestStatus::Pass,
            Err(Abort::AssertFailed) => TestStatus::Fail(FailReason::Assertion),
            Err(Abort::Timeout) => TestStatus::Fail(FailReason::Timeout),
            Err(Abort::Exception { id, .. }) => {
                if let (Some(r), Some(id)) = (self.rec.as_mut(), id) {
                    let stmt = last_stmt(&r.events).unwrap_or(StmtId(0));
                    r.events.push(TraceEvent::AssertOutcome {
                        stmt,
                        value: id,
                        outcome: false,
                    });
                }
                TestStatus::Fail(FailReason::Exception)
            }
        };
        RunResult {
            status,
            covered_functions: std::mem::take(&mut self.covered_functions),
            covered_stmts: std::mem::take(&mut self.covered_stmts),
        }
    }

    fn emit(&mut self, e: TraceEvent) {
        if let Some(r) = self.rec.as_mut() {
            r.events.push(e);
        }
    }

    fn fresh(&mut self) -> ValueId {
        self.rec.as_mut().expect("recording").fresh()
    }

    fn tick(&mut self) -> Result<(), Abort> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(Abort::Timeout)
        } else {
            Ok(())
        }
    }

    fn exec_block(&mut self, frame: &mut Frame, stmts: &[Stmt]) -> Result<Flow, Abort> {
        frame.scopes.push(HashMap::new());
        let mut flow = Ok(Flow::Normal);
        for s in stmts {
            flow = self.exec_stmt(frame, s);
            if !matches!(flow, Ok(Flow::Normal)) {
                break;
            }
        }
        frame.scopes.pop();
        flow
    }

    /// Evaluates the statement's expression and, in traced frames, records the
    /// produced value. Runtime errors raised directly by this statement are
    /// recorded as the statement producing the exception value.
    fn produce(
        &mut self,
        frame: &mut Frame,
        stmt: StmtId,
        e: &Expr,
    ) -> Result<(Value, Option<ValueId>), Abort> {
        let mut reads = Vec::new();
        match self.eval(frame, stmt, e, &mut reads) {
            Ok(v) => {
                if frame.traced {
                    let w = self.fresh();
                    self.emit(TraceEvent::Exec {
                        stmt,
                        reads,
                        write: w,
                    });
                    if let Value::Array(a) = v {
                        self.heap_version[a] = Some(w);
                    }
                    Ok((v, Some(w)))
                } else {
                    Ok((v, None))
                }
            }
            Err(err) => Err(self.attribute(frame, stmt, reads, err)),
        }
    }

    fn attribute(&mut self, frame: &Frame, stmt: StmtId, reads: Vec<ValueId>, err: Abort) -> Abort {
        match err {
            Abort::Exception { value, id: None } if frame.traced => {
                let w = self.fresh();
                self.emit(TraceEvent::Exec {
                    stmt,
                    reads,
                    write: w,
                });
                Abort::Exception {
                    value,
                    id: Some(w),
                }
            }
            other => other,
        }
    }

    fn exec_stmt(&mut self, frame: &mut Frame, s: &Stmt) -> Result<Flow, Abort> {
        self.tick()?;
        self.covered_stmts[s.id.index()] = true;
        match &s.kind {
            StmtKind::Let { name, value } => {
                let (v, id) = self.produce(frame, s.id, value)?;
                frame.define(name, Slot { value: v, id });
                Ok(Flow::Normal)
            }
            StmtKind::Assign { name, value } => {
                let (v, id) = self.produce(frame, s.id, value)?;
                frame.assign(name, Slot { value: v, id });
                Ok(Flow::Normal)
            }
            StmtKind::IndexAssign {
                array,
                index,
                value,
            } => {
                let mut reads = Vec::new();
                let r = self.index_assign(frame, s.id, array, index, value, &mut reads);
                match r {
                    Ok(addr) => {
                        if frame.traced {
                            let w = self.fresh();
                            self.emit(TraceEvent::Exec {
                                stmt: s.id,
                                reads,
                                write: w,
                            });
                            self.heap_version[addr] = Some(w);
                        }
                        Ok(Flow::Normal)
                    }
                    Err(e) => Err(self.attribute(frame, s.id, reads, e)),
                }
            }
            StmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let (v, _) = self.produce(frame, s.id, cond)?;
                match v {
                    Value::Bool(true) => self.exec_block(frame, then_body),
                    Value::Bool(false) => self.exec_block(frame, else_body),
                    _ => Err(self.raise_after(frame, s.id, ERR_TYPE)),
                }
            }
            StmtKind::While { cond, body } => loop {
                let (v, _) = self.produce(frame, s.id, cond)?;
                match v {
                    Value::Bool(true) => match self.exec_block(frame, body)? {
                        Flow::Normal => {
                            self.tick()?;
                            self.covered_stmts[s.id.index()] = true;
                        }
                        ret => return Ok(ret),
                    },
                    Value::Bool(false) => return Ok(Flow::Normal),
                    _ => return Err(self.raise_after(frame, s.id, ERR_TYPE)),
                }
            },
            StmtKind::Return(None) => Ok(Flow::Return(Value::Unit, None)),
            StmtKind::Return(Some(e)) => {
                let (v, id) = self.produce(frame, s.id, e)?;
                Ok(Flow::Return(v, id))
            }
            StmtKind::Assert(e) => {
                let (v, id) = if e.is_pass_through() {
                    let mut reads = Vec::new();
                    let v = self
                        .eval(frame, s.id, e, &mut reads)
                        .map_err(|err| self.attribute(frame, s.id, Vec::new(), err))?;
                    (v, reads.first().copied())
                } else {
                    self.produce(frame, s.id, e)?
                };
                let outcome = match v {
                    Value::Bool(b) => b,
                    _ => return Err(self.raise_after(frame, s.id, ERR_TYPE)),
                };
                if let (true, Some(id)) = (frame.traced, id) {
                    self.emit(TraceEvent::AssertOutcome {
                        stmt: s.id,
                        value: id,
                        outcome,
                    });
                }
                if outcome {
                    Ok(Flow::Normal)
                } else {
                    Err(Abort::AssertFailed)
                }
            }
            StmtKind::Throw(e) => {
                let (v, id) = self.produce(frame, s.id, e)?;
                Err(Abort::Exception { value: v, id })
            }
            StmtKind::Try {
                body,
                catch_name,
                handler,
            } => match self.exec_block(frame, body) {
                Err(Abort::Exception { value, id }) => {
                    let unwound = match self.rec.as_mut() {
                        Some(r) => {
                            let u = r.depth.saturating_sub(frame.visible);
                            r.depth = frame.visible;
                            u
                        }
                        None => 0,
                    };
                    if frame.traced || unwound > 0 {
                        self.emit(TraceEvent::ExceptionCatch {
                            stmt: s.id,
                            thrown: id,
                            unwound,
                        });
                    }
                    frame.scopes.push(HashMap::new());
                    frame.define(catch_name, Slot { value, id });
                    let r = self.exec_block(frame, handler);
                    frame.scopes.pop();
                    r
                }
                other => other,
            },
            StmtKind::Expr(e) => {
                if let Expr::Call(name, args) = e {
                    self.call(frame, s.id, name, args)?;
                } else {
                    self.produce(frame, s.id, e)?;
                }
                Ok(Flow::Normal)
            }
        }
    }

    /// A runtime error detected after the statement's value was recorded:
    /// the error value depends on that recorded value.
    fn raise_after(&mut self, frame: &Frame, stmt: StmtId, code: i64) -> Abort {
        let reads = match self.rec.as_ref().and_then(|r| r.events.last()) {
            Some(TraceEvent::Exec { write, stmt: s, .. }) if frame.traced && *s == stmt => {
                vec![*write]
            }
            _ => Vec::new(),
        };
        self.attribute(
            frame,
            stmt,
            reads,
            Abort::Exception {
                value: Value::Int(code),
                id: None,
            },
        )
    }

    fn index_assign(
        &mut self,
        frame: &mut Frame,
        stmt: StmtId,
        array: &str,
        index: &Expr,
        value: &Expr,
        reads: &mut Vec<ValueId>,
    ) -> Result<usize, Abort> {
        let slot = frame.lookup(array);
        let addr = match slot.value {
            Value::Array(a) => a,
            _ => return Err(runtime(ERR_TYPE)),
        };
        if let Some(v) = self.heap_version[addr] {
            reads.push(v);
        }
        let i = self.eval(frame, stmt, index, reads)?;
        let v = self.eval(frame, stmt, value, reads)?;
        let i = as_int(i)?;
        let cell = usize::try_from(i)
            .ok()
            .filter(|&i| i < self.heap[addr].len())
            .ok_or_else(|| runtime(ERR_OUT_OF_BOUNDS))?;
        self.heap[addr][cell] = v;
        Ok(addr)
    }

    fn read_slot(&self, slot: Slot, reads: &mut Vec<ValueId>) {
        let id = match slot.value {
            Value::Array(a) => self.heap_version[a],
            _ => slot.id,
        };
        if let Some(id) = id {
            reads.push(id);
        }
    }

    fn eval(
        &mut self,
        frame: &mut Frame,
        stmt: StmtId,
        e: &Expr,
        reads: &mut Vec<ValueId>,
    ) -> Result<Value, Abort> {
        Ok(match e {
            Expr::Int(v) => Value::Int(*v),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Var(name) => {
                let slot = frame.lookup(name);
                self.read_slot(slot, reads);
                slot.value
            }
            Expr::Unary(op, inner) => {
                let v = self.eval(frame, stmt, inner, reads)?;
                match (op, v) {
                    (UnOp::Neg, Value::Int(i)) => Value::Int(i.wrapping_neg()),
                    (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    _ => return Err(runtime(ERR_TYPE)),
                }
            }
            Expr::Binary(op @ (BinOp::And | BinOp::Or), l, r) => {
                let lv = as_bool(self.eval(frame, stmt, l, reads)?)?;
                if (*op == BinOp::And) != lv {
                    Value::Bool(lv)
                } else {
                    Value::Bool(as_bool(self.eval(frame, stmt, r, reads)?)?)
                }
            }
            Expr::Binary(op, l, r) => {
                let lv = self.eval(frame, stmt, l, reads)?;
                let rv = self.eval(frame, stmt, r, reads)?;
                binary(*op, lv, rv)?
            }
            Expr::Call(name, args) => {
                let (v, id) = self.call(frame, stmt, name, args)?;
                if let Some(id) = id {
                    reads.push(id);
                }
                v
            }
            Expr::Len(inner) => match self.eval(frame, stmt, inner, reads)? {
                Value::Array(a) => Value::Int(self.heap[a].len() as i64),
                _ => return Err(runtime(ERR_TYPE)),
            },
            Expr::Index(a, i) => {
                let av = self.eval(frame, stmt, a, reads)?;
                let iv = as_int(self.eval(frame, stmt, i, reads)?)?;
                let addr = match av {
                    Value::Array(addr) => addr,
                    _ => return Err(runtime(ERR_TYPE)),
                };
                usize::try_from(iv)
                    .ok()
                    .and_then(|i| self.heap[addr].get(i).copied())
                    .ok_or_else(|| runtime(ERR_OUT_OF_BOUNDS))?
            }
            Expr::ArrayLit(items) => {
                let mut vals = Vec::with_capacity(items.len());
                for it in items {
                    vals.push(self.eval(frame, stmt, it, reads)?);
                }
                self.heap.push(vals);
                self.heap_version.push(None);
                Value::Array(self.heap.len() - 1)
            }
        })
    }

    /// Evaluates an argument at a call site, returning its value and the id
    /// the callee receives.
    fn argument(
        &mut self,
        frame: &mut Frame,
        stmt: StmtId,
        arg: &Expr,
    ) -> Result<(Value, Option<ValueId>), Abort> {
        if !frame.traced {
            let mut sink = Vec::new();
            return Ok((self.eval(frame, stmt, arg, &mut sink)?, None));
        }
        match arg {
            Expr::Var(_) | Expr::Call(..) => {
                let mut reads = Vec::new();
                let v = self
                    .eval(frame, stmt, arg, &mut reads)
                    .map_err(|e| self.attribute(frame, stmt, Vec::new(), e))?;
                Ok((v, reads.first().copied()))
            }
            _ if frame.is_test && arg.is_literal() => {
                let mut sink = Vec::new();
                let v = self.eval(frame, stmt, arg, &mut sink)?;
                let id = self.fresh();
                self.rec.as_mut().expect("recording").inputs.push(id);
                Ok((v, Some(id)))
            }
            _ => self.produce(frame, stmt, arg),
        }
    }

    fn call(
        &mut self,
        frame: &mut Frame,
        stmt: StmtId,
        name: &str,
        args: &[Expr],
    ) -> Result<(Value, Option<ValueId>), Abort> {
        let fi = self
            .program
            .function_index(name)
            .expect("calls resolved at parse time");
        let mut vals = Vec::with_capacity(args.len());
        let mut ids = Vec::with_capacity(args.len());
        for a in args {
            let (v, id) = self.argument(frame, stmt, a)?;
            vals.push(v);
            ids.extend(id);
        }
        self.tick()?;
        if self.call_depth >= MAX_CALL_DEPTH {
            return Err(self.attribute(frame, stmt, ids, runtime(ERR_STACK_OVERFLOW)));
        }
        self.covered_functions[fi] = true;
        let callee = fi as FnIdx;
        let recording = self.rec.is_some();
        let callee_traced = recording && self.traced[fi];

        if !recording || (!frame.traced && !callee_traced) {
            let mut inner = self.new_frame(fi, false, frame.visible, &vals, &[]);
            return self.invoke(fi, &mut inner).map(|(v, _)| (v, None));
        }

        if callee_traced {
            let params = if frame.traced {
                Vec::new()
            } else {
                (0..vals.len()).map(|_| self.fresh()).collect()
            };
            let param_ids: Vec<ValueId> = if frame.traced { ids.clone() } else { params.clone() };
            if !frame.traced {
                for (v, &p) in vals.iter().zip(&params) {
                    if let Value::Array(a) = v {
                        self.heap_version[*a] = Some(p);
                    }
                }
            }
            self.emit(TraceEvent::CallEnter {
                stmt,
                callee,
                args: if frame.traced { ids } else { Vec::new() },
                params,
                summary: false,
            });
            let visible = self.enter_visible();
            let mut inner = self.new_frame(fi, true, visible, &vals, &param_ids);
            let v = self.invoke(fi, &mut inner)?;
            let ret = match v.0 {
                Value::Unit => None,
                _ => v.1,
            };
            self.emit(TraceEvent::CallExit { stmt, callee, ret });
            self.leave_visible();
            let id = if frame.traced { ret } else { None };
            return Ok((v.0, id));
        }

        // Traced caller, untraced callee: summarize.
        let opened = self.rec.as_ref().map_or(0, |r| r.events.len());
        self.emit(TraceEvent::CallEnter {
            stmt,
            callee,
            args: ids.clone(),
            params: Vec::new(),
            summary: true,
        });
        let base = self.enter_visible();
        let mut inner = self.new_frame(fi, false, base, &vals, &[]);
        let result = self.invoke(fi, &mut inner);
        let nested = {
            let r = self.rec.as_mut().expect("recording");
            r.depth = base - 1;
            if r.events.len() == opened + 1 {
                r.events.pop();
                false
            } else {
                true
            }
        };
        let mut reads = ids;
        reads.dedup();
        let mut writes = Vec::new();
        let (out, out_id, exc) = match result {
            Ok((v, _)) => {
                if v == Value::Unit {
                    (v, None, false)
                } else {
                    let w = self.fresh();
                    writes.push(w);
                    if let Value::Array(a) = v {
                        self.heap_version[a] = Some(w);
                    }
                    (v, Some(w), false)
                }
            }
            Err(Abort::Exception { value, .. }) => {
                let w = self.fresh();
                writes.push(w);
                (value, Some(w), true)
            }
            Err(other) => return Err(other),
        };
        let mut seen = Vec::new();
        for v in &vals {
            if let Value::Array(a) = v {
                if !seen.contains(a) && Some(*a) != array_of(out) {
                    seen.push(*a);
                    let w = self.fresh();
                    writes.push(w);
                    self.heap_version[*a] = Some(w);
                }
            }
        }
        self.emit(TraceEvent::CallSummary {
            stmt,
            callee,
            reads,
            writes,
            nested,
        });
        if exc {
            Err(Abort::Exception {
                value: out,
                id: out_id,
            })
        } else {
            Ok((out, out_id))
        }
    }

    fn enter_visible(&mut self) -> u32 {
        let r = self.rec.as_mut().expect("recording");
        r.depth += 1;
        r.depth
    }

    fn leave_visible(&mut self) {
        let r = self.rec.as_mut().expect("recording");
        r.depth -= 1;
    }

    fn new_frame(
        &self,
        fi: usize,
        traced: bool,
        visible: u32,
        vals: &[Value],
        ids: &[ValueId],
    ) -> Frame {
        let f = &self.program.functions[fi];
        let mut scope = HashMap::new();
        for (i, (p, v)) in f.params.iter().zip(vals).enumerate() {
            let id = if traced { ids.get(i).copied() } else { None };
            scope.insert(p.clone(), Slot { value: *v, id });
        }
        Frame {
            traced,
            is_test: false,
            visible,
            scopes: vec![scope],
        }
    }

    fn invoke(&mut self, fi: usize, frame: &mut Frame) -> Result<(Value, Option<ValueId>), Abort> {
        let program = self.program;
        let body = &program.functions[fi].body;
        self.call_depth += 1;
        let r = self.exec_block(frame, body);
        self.call_depth -= 1;
        match r? {
            Flow::Normal => Ok((Value::Unit, None)),
            Flow::Return(v, id) => Ok((v, id)),
        }
    }
}

fn array_of(v: Value) -> Option<usize> {
    match v {
        Value::Array(a) => Some(a),
        _ => None,
    }
}

fn last_stmt(events: &[TraceEvent]) -> Option<StmtId> {
    events.last().map(TraceEvent::stmt)
}

fn runtime(code: i64) -> Abort {
    Abort::Exception {
        value: Value::Int(code),
        id: None,
    }
}

fn as_int(v: Value) -> Result<i64, Abort> {
    match v {
        Value::Int(i) => Ok(i),
        _ => Err(runtime(ERR_TYPE)),
    }
}

fn as_bool(v: Value) -> Result<bool, Abort> {
    match v {
        Value::Bool(b) => Ok(b),
        _ => Err(runtime(ERR_TYPE)),
    }
}

fn binary(op: BinOp, l: Value, r: Value) -> Result<Value, Abort> {
    use BinOp::*;
    Ok(match (op, l, r) {
        (Eq, a, b) => Value::Bool(a == b),
        (Ne, a, b) => Value::Bool(a != b),
        (_, Value::Int(a), Value::Int(b)) => match op {
            Add => Value::Int(a.wrapping_add(b)),
            Sub => Value::Int(a.wrapping_sub(b)),
            Mul => Value::Int(a.wrapping_mul(b)),
            Div if b == 0 => return Err(runtime(ERR_DIV_ZERO)),
            Div => Value::Int(a.wrapping_div(b)),
            Rem if b == 0 => return Err(runtime(ERR_DIV_ZERO)),
            Rem => Value::Int(a.wrapping_rem(b)),
            Lt => Value::Bool(a < b),
            Le => Value::Bool(a <= b),
            Gt => Value::Bool(a > b),
            Ge => Value::Bool(a >= b),
            _ => return Err(runtime(ERR_TYPE)),
        },
        _ => return Err(runtime(ERR_TYPE)),
    })
}
