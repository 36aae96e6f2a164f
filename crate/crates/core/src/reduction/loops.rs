use std::collections::HashMap;

use crate::minilang::{Program, StmtId, StmtTag};
use crate::reduction::ReductionError;
use crate::tracer::tree::{self, Node};
use crate::tracer::{Trace, TraceEvent, ValueId};

/// Removes adjacent identical iterations of every loop activation, inner
/// loops first. Values produced by a removed iteration are rebound to the
/// corresponding values of the retained copy.
pub fn compress_loops(trace: &Trace, program: &Program) -> Result<Trace, ReductionError> {
    compress_loops_counted(trace, program).map(|(t, _)| t)
}

/// Like [`compress_loops`], also returning how many iterations were removed.
pub fn compress_loops_counted(
    trace: &Trace,
    program: &Program,
) -> Result<(Trace, usize), ReductionError> {
    let nodes = tree::build(trace.events.clone())?;
    let mut producer = HashMap::new();
    for e in &trace.events {
        for w in e.writes() {
            producer.insert(w, e.stmt());
        }
    }
    let mut c = Compressor {
        program,
        producer,
        remap: HashMap::new(),
        removed: 0,
    };
    let nodes = c.body(nodes);
    let mut events = Vec::with_capacity(trace.events.len());
    tree::flatten(nodes, &mut events);
    if !c.remap.is_empty() {
        let remap = &c.remap;
        for e in &mut events {
            e.map_reads(|v| resolve(remap, v));
        }
    }
    let mut out = trace.clone();
    out.events = events;
    Ok((out, c.removed))
}

fn resolve(remap: &HashMap<ValueId, ValueId>, mut v: ValueId) -> ValueId {
    while let Some(&next) = remap.get(&v) {
        v = next;
    }
    v
}

#[derive(Debug, PartialEq, Eq)]
struct SigItem {
    kind: &'static str,
    stmt: StmtId,
    /// Producing statement of each read, `None` for root inputs.
    producers: Vec<Option<StmtId>>,
    detail: i64,
}

struct Compressor<'p> {
    program: &'p Program,
    producer: HashMap<ValueId, StmtId>,
    remap: HashMap<ValueId, ValueId>,
    removed: usize,
}

impl Compressor<'_> {
    fn body(&mut self, nodes: Vec<Node>) -> Vec<Node> {
        let nodes = nodes
            .into_iter()
            .map(|n| match n {
                Node::Leaf(_) => n,
                Node::Frame { enter, body, exit } => Node::Frame {
                    enter,
                    body: self.body(body),
                    exit,
                },
                Node::Region { enter, body, close } => Node::Region {
                    enter,
                    body: self.body(body),
                    close,
                },
            })
            .collect();
        self.level(nodes)
    }

    fn loop_head(&self, n: &Node) -> Option<StmtId> {
        match n {
            Node::Leaf(TraceEvent::Exec { stmt, .. })
                if self.program.stmt(*stmt).map(|s| s.tag) == Some(StmtTag::While) =>
            {
                Some(*stmt)
            }
            _ => None,
        }
    }

    /// Compresses loop activations within one frame's node sequence.
    fn level(&mut self, nodes: Vec<Node>) -> Vec<Node> {
        let mut out = Vec::with_capacity(nodes.len());
        let mut it = nodes.into_iter().peekable();
        while let Some(n) = it.next() {
            let Some(w) = self.loop_head(&n) else {
                out.push(n);
                continue;
            };
            let body = self.program.loop_body(w).expect("while has a body");
            let mut iterations: Vec<Vec<Node>> = vec![vec![n]];
            while let Some(next) = it.peek() {
                let s = next.head().stmt();
                if s == w && matches!(next, Node::Leaf(_)) {
                    iterations.push(vec![it.next().expect("peeked")]);
                } else if body.contains(&s) {
                    iterations
                        .last_mut()
                        .expect("non-empty")
                        .push(it.next().expect("peeked"));
                } else {
                    break;
                }
            }
            let iterations: Vec<Vec<Node>> = iterations
                .into_iter()
                .map(|mut iter| {
                    let rest = iter.split_off(1);
                    iter.extend(self.level(rest));
                    iter
                })
                .collect();
            self.dedup(iterations, &mut out);
        }
        out
    }

    fn dedup(&mut self, iterations: Vec<Vec<Node>>, out: &mut Vec<Node>) {
        let mut kept_sig: Option<Vec<SigItem>> = None;
        let mut kept_writes: Vec<ValueId> = Vec::new();
        for iter in iterations {
            let sig = self.signature(&iter);
            let mut writes = Vec::new();
            iter.iter().for_each(|n| n.writes(&mut writes));
            if kept_sig.as_ref() == Some(&sig) {
                debug_assert_eq!(writes.len(), kept_writes.len());
                for (w, k) in writes.into_iter().zip(&kept_writes) {
                    self.remap.insert(w, *k);
                }
                self.removed += 1;
                continue;
            }
            kept_sig = Some(sig);
            kept_writes = writes;
            out.extend(iter);
        }
    }

    fn signature(&self, nodes: &[Node]) -> Vec<SigItem> {
        let mut sig = Vec::new();
        for n in nodes {
            self.sign(n, &mut sig);
        }
        sig
    }

    fn sign(&self, n: &Node, sig: &mut Vec<SigItem>) {
        let item = |e: &TraceEvent| SigItem {
            kind: e.kind_name(),
            stmt: e.stmt(),
            producers: e
                .reads()
                .iter()
                .map(|r| self.producer.get(r).copied())
                .collect(),
            detail: match e {
                TraceEvent::CallEnter { callee, .. }
                | TraceEvent::CallExit { callee, .. }
                | TraceEvent::CallSummary { callee, .. } => *callee as i64,
                TraceEvent::ExceptionCatch { unwound, .. } => *unwound as i64,
                TraceEvent::AssertOutcome { outcome, .. } => *outcome as i64,
                TraceEvent::Exec { .. } => 0,
            },
        };
        match n {
            Node::Leaf(e) => sig.push(item(e)),
            Node::Frame { enter, body, exit } | Node::Region {
                enter,
                body,
                close: exit,
            } => {
                sig.push(item(enter));
                for c in body {
                    self.sign(c, sig);
                }
                match exit {
                    Some(x) => sig.push(item(x)),
                    None => sig.push(SigItem {
                        kind: "open",
                        stmt: enter.stmt(),
                        producers: Vec::new(),
                        detail: -1,
                    }),
                }
            }
        }
    }
}
