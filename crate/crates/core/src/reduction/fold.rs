use std::collections::{HashMap, HashSet};

use crate::minilang::Program;
use crate::reduction::{ReductionConfig, ReductionError};
use crate::tracer::tree::{self, Node};
use crate::tracer::{FnIdx, Trace, TraceEvent, ValueId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldOutcome {
    pub trace: Trace,
    /// Methods folded, in folding order.
    pub folded: Vec<String>,
    /// Folding every method still exceeded the limit; the trace was cut.
    pub truncated: bool,
}

/// Folds the methods with the most statement instances into call summaries,
/// one method at a time, until the trace fits `cfg.trace_limit`. The test
/// function is never folded. Traced calls nested inside a folded invocation
/// are kept, entered with fresh parameter values.
pub fn adaptive_fold(
    trace: &Trace,
    program: &Program,
    cfg: &ReductionConfig,
) -> Result<FoldOutcome, ReductionError> {
    let mut out = FoldOutcome {
        trace: trace.clone(),
        folded: Vec::new(),
        truncated: false,
    };
    if trace.len() <= cfg.trace_limit {
        return Ok(out);
    }
    let test = program.function_index(&trace.test).map(|i| i as FnIdx);
    let mut nodes = tree::build(trace.events.clone())?;
    let mut counts: HashMap<FnIdx, usize> = HashMap::new();
    count_execs(&nodes, test, &mut counts);
    let mut order: Vec<(usize, FnIdx)> = counts
        .into_iter()
        .filter(|&(f, n)| Some(f) != test && n > 0)
        .map(|(f, n)| (n, f))
        .collect();
    order.sort_by(|a, b| {
        b.0.cmp(&a.0).then_with(|| {
            program.functions[a.1 as usize]
                .name
                .cmp(&program.functions[b.1 as usize].name)
        })
    });
    let mut next_value = trace.next_value;
    let mut size = trace.len();
    for (_, m) in order {
        if size <= cfg.trace_limit {
            break;
        }
        let mut folder = Folder {
            program,
            method: m,
            next_value: &mut next_value,
        };
        nodes = folder.nodes(nodes, false);
        size = nodes.iter().map(Node::event_count).sum();
        out.folded.push(program.functions[m as usize].name.clone());
        log::info!(
            "folded {} in {}: {} events remain",
            program.functions[m as usize].name,
            trace.test,
            size
        );
    }
    let mut events = Vec::with_capacity(size);
    tree::flatten(nodes, &mut events);
    let (events, inputs, next) = normalize(events, &trace.inputs);
    out.trace.events = events;
    out.trace.inputs = inputs;
    out.trace.next_value = next;
    if out.trace.len() > cfg.trace_limit {
        log::warn!(
            "{} still has {} events after folding every method; truncating to {}",
            trace.test,
            out.trace.len(),
            cfg.trace_limit
        );
        out.trace.events.truncate(cfg.trace_limit);
        out.truncated = true;
    }
    out.trace.oversized = false;
    Ok(out)
}

fn count_execs(nodes: &[Node], owner: Option<FnIdx>, counts: &mut HashMap<FnIdx, usize>) {
    for n in nodes {
        match n {
            Node::Leaf(TraceEvent::Exec { .. }) => {
                if let Some(o) = owner {
                    *counts.entry(o).or_default() += 1;
                }
            }
            Node::Leaf(_) => {}
            Node::Frame { body, .. } => count_execs(body, n.callee(), counts),
            Node::Region { body, .. } => count_execs(body, None, counts),
        }
    }
}

struct Folder<'a> {
    program: &'a Program,
    method: FnIdx,
    next_value: &'a mut u32,
}

impl Folder<'_> {
    fn fresh(&mut self) -> ValueId {
        let v = ValueId(*self.next_value);
        *self.next_value += 1;
        v
    }

    /// `untraced` tells whether the nodes belong to an untraced frame.
    fn nodes(&mut self, nodes: Vec<Node>, untraced: bool) -> Vec<Node> {
        let mut out = Vec::with_capacity(nodes.len());
        for n in nodes {
            match n {
                Node::Frame { .. } if n.callee() == Some(self.method) => {
                    let TraceEvent::CallEnter {
                        stmt, callee, args, ..
                    } = n.head().clone()
                    else {
                        unreachable!("frames open on call entry")
                    };
                    let mut kept = Vec::new();
                    let mut dropped = Vec::new();
                    self.dissolve(n, &mut kept, &mut dropped);
                    if untraced {
                        out.extend(kept);
                        continue;
                    }
                    let summary = TraceEvent::CallSummary {
                        stmt,
                        callee,
                        reads: args.clone(),
                        writes: dropped,
                        nested: !kept.is_empty(),
                    };
                    if kept.is_empty() {
                        out.push(Node::Leaf(summary));
                    } else {
                        out.push(Node::Region {
                            enter: TraceEvent::CallEnter {
                                stmt,
                                callee,
                                args,
                                params: Vec::new(),
                                summary: true,
                            },
                            body: kept,
                            close: Some(summary),
                        });
                    }
                }
                Node::Frame { enter, body, exit } => out.push(Node::Frame {
                    enter,
                    body: self.nodes(body, false),
                    exit,
                }),
                Node::Region { enter, body, close } => out.push(Node::Region {
                    enter,
                    body: self.nodes(body, true),
                    close,
                }),
                leaf => out.push(leaf),
            }
        }
        out
    }

    /// Splits a folded subtree into the traced frames of other methods found
    /// inside it and the values its dropped events produced.
    fn dissolve(&mut self, n: Node, kept: &mut Vec<Node>, dropped: &mut Vec<ValueId>) {
        match n {
            Node::Leaf(e) => dropped.extend(e.writes()),
            Node::Frame { .. } if n.callee() != Some(self.method) => {
                let folded = self.nodes(vec![n], true).pop().expect("one node");
                kept.push(self.reenter(folded));
            }
            Node::Frame { enter, body, exit } | Node::Region {
                enter,
                body,
                close: exit,
            } => {
                dropped.extend(enter.writes());
                for c in body {
                    self.dissolve(c, kept, dropped);
                }
                if let Some(x) = exit {
                    dropped.extend(x.writes());
                }
            }
        }
    }

    /// Turns a traced invocation into one entered from untraced code: fresh
    /// parameter values replace the caller's arguments inside its subtree.
    fn reenter(&mut self, mut n: Node) -> Node {
        let Node::Frame { enter, .. } = &mut n else {
            return n;
        };
        let TraceEvent::CallEnter {
            callee,
            args,
            params,
            ..
        } = enter
        else {
            return n;
        };
        if !params.is_empty() || args.is_empty() {
            args.clear();
            return n;
        }
        let arity = self.program.functions[*callee as usize].params.len();
        let old = std::mem::take(args);
        let fresh: Vec<ValueId> = (0..arity).map(|_| self.fresh()).collect();
        let rename: HashMap<ValueId, ValueId> = old.iter().copied().zip(fresh.iter().copied()).collect();
        *params = fresh;
        let Node::Frame { body, exit, .. } = &mut n else {
            unreachable!()
        };
        for c in body.iter_mut() {
            c.for_each_event_mut(&mut |e| {
                e.map_reads(|v| rename.get(&v).copied().unwrap_or(v))
            });
        }
        if let Some(x) = exit {
            x.map_reads(|v| rename.get(&v).copied().unwrap_or(v));
        }
        n
    }
}

/// Drops reads of values with no earlier producer, trims summary writes to
/// values read later, and renumbers values in production order.
fn normalize(
    mut events: Vec<TraceEvent>,
    inputs: &[ValueId],
) -> (Vec<TraceEvent>, Vec<ValueId>, u32) {
    let mut defined: HashSet<ValueId> = inputs.iter().copied().collect();
    let mut keep = vec![true; events.len()];
    for (i, e) in events.iter_mut().enumerate() {
        match e {
            TraceEvent::Exec { reads, .. }
            | TraceEvent::CallSummary { reads, .. }
            | TraceEvent::CallEnter { args: reads, .. } => reads.retain(|r| defined.contains(r)),
            TraceEvent::CallExit { ret, .. } | TraceEvent::ExceptionCatch { thrown: ret, .. } => {
                if ret.is_some_and(|r| !defined.contains(&r)) {
                    *ret = None;
                }
            }
            TraceEvent::AssertOutcome { value, .. } => keep[i] = defined.contains(value),
        }
        defined.extend(e.writes());
    }
    let mut read_later: HashSet<ValueId> = HashSet::new();
    for e in events.iter_mut().rev() {
        if let TraceEvent::CallSummary { writes, .. } = e {
            writes.retain(|w| read_later.contains(w));
        }
        read_later.extend(e.reads());
    }
    let mut events: Vec<TraceEvent> = events
        .into_iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then_some(e))
        .collect();

    let mut ids: HashMap<ValueId, ValueId> = HashMap::new();
    let mut next = 0u32;
    let mut assign = |v: ValueId, ids: &mut HashMap<ValueId, ValueId>| {
        let n = ValueId(next);
        next += 1;
        ids.insert(v, n);
        n
    };
    let new_inputs = inputs.iter().map(|&v| assign(v, &mut ids)).collect();
    for e in &mut events {
        e.map_reads(|v| ids[&v]);
        match e {
            TraceEvent::Exec { write, .. } => *write = assign(*write, &mut ids),
            TraceEvent::CallSummary { writes: ws, .. } | TraceEvent::CallEnter { params: ws, .. } => {
                for w in ws.iter_mut() {
                    *w = assign(*w, &mut ids);
                }
            }
            _ => {}
        }
    }
    (events, new_inputs, next)
}
