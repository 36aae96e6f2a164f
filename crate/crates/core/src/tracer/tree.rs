//! Nested view of a flat event stream: traced invocations and summary
//! regions become containers holding the events recorded inside them.

use crate::tracer::{FnIdx, TraceEvent, ValueId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Leaf(TraceEvent),
    /// A traced invocation. `exit` is `None` when it ended by an exception or
    /// the trace stopped inside it.
    Frame {
        enter: TraceEvent,
        body: Vec<Node>,
        exit: Option<TraceEvent>,
    },
    /// An untraced invocation with traced calls nested inside it.
    Region {
        enter: TraceEvent,
        body: Vec<Node>,
        close: Option<TraceEvent>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Malformed {
    pub event: usize,
    pub message: &'static str,
}

impl Node {
    pub fn head(&self) -> &TraceEvent {
        match self {
            Node::Leaf(e) => e,
            Node::Frame { enter, .. } | Node::Region { enter, .. } => enter,
        }
    }

    pub fn callee(&self) -> Option<FnIdx> {
        match self.head() {
            TraceEvent::CallEnter { callee, .. } => Some(*callee),
            _ => None,
        }
    }

    /// Visits every event of the subtree in stream order.
    pub fn for_each_event<'a>(&'a self, f: &mut dyn FnMut(&'a TraceEvent)) {
        match self {
            Node::Leaf(e) => f(e),
            Node::Frame { enter, body, exit } => {
                f(enter);
                body.iter().for_each(|n| n.for_each_event(f));
                if let Some(x) = exit {
                    f(x);
                }
            }
            Node::Region { enter, body, close } => {
                f(enter);
                body.iter().for_each(|n| n.for_each_event(f));
                if let Some(x) = close {
                    f(x);
                }
            }
        }
    }

    pub fn for_each_event_mut(&mut self, f: &mut dyn FnMut(&mut TraceEvent)) {
        match self {
            Node::Leaf(e) => f(e),
            Node::Frame { enter, body, exit } => {
                f(enter);
                body.iter_mut().for_each(|n| n.for_each_event_mut(f));
                if let Some(x) = exit {
                    f(x);
                }
            }
            Node::Region { enter, body, close } => {
                f(enter);
                body.iter_mut().for_each(|n| n.for_each_event_mut(f));
                if let Some(x) = close {
                    f(x);
                }
            }
        }
    }

    pub fn event_count(&self) -> usize {
        let mut n = 0;
        self.for_each_event(&mut |_| n += 1);
        n
    }

    /// Produced values of the subtree in stream order.
    pub fn writes(&self, out: &mut Vec<ValueId>) {
        self.for_each_event(&mut |e| out.extend(e.writes()));
    }
}

struct Open {
    enter: TraceEvent,
    region: bool,
    body: Vec<Node>,
}

fn close(stack: &mut Vec<Open>, root: &mut Vec<Node>, end: Option<TraceEvent>) {
    let o = stack.pop().expect("open container");
    let node = if o.region {
        Node::Region {
            enter: o.enter,
            body: o.body,
            close: end,
        }
    } else {
        Node::Frame {
            enter: o.enter,
            body: o.body,
            exit: end,
        }
    };
    match stack.last_mut() {
        Some(p) => p.body.push(node),
        None => root.push(node),
    }
}

pub fn build(events: Vec<TraceEvent>) -> Result<Vec<Node>, Malformed> {
    let mut root = Vec::new();
    let mut stack: Vec<Open> = Vec::new();
    for (i, e) in events.into_iter().enumerate() {
        let bad = |message| Malformed { event: i, message };
        match &e {
            TraceEvent::CallEnter { summary, .. } => {
                let region = *summary;
                stack.push(Open {
                    enter: e,
                    region,
                    body: Vec::new(),
                });
            }
            TraceEvent::CallExit { callee, .. } => match stack.last() {
                Some(o) if !o.region && o.enter_callee() == *callee => {
                    close(&mut stack, &mut root, Some(e))
                }
                _ => return Err(bad("call exit without matching entry")),
            },
            TraceEvent::CallSummary { nested: true, .. } => {
                while matches!(stack.last(), Some(o) if !o.region) {
                    close(&mut stack, &mut root, None);
                }
                if stack.is_empty() {
                    return Err(bad("summary closes no open region"));
                }
                close(&mut stack, &mut root, Some(e));
            }
            TraceEvent::ExceptionCatch { unwound, .. } => {
                for _ in 0..*unwound {
                    match stack.last() {
                        Some(o) if !o.region => close(&mut stack, &mut root, None),
                        _ => return Err(bad("catch unwinds past a traced frame")),
                    }
                }
                push_leaf(&mut stack, &mut root, e);
            }
            _ => push_leaf(&mut stack, &mut root, e),
        }
    }
    while !stack.is_empty() {
        close(&mut stack, &mut root, None);
    }
    Ok(root)
}

impl Open {
    fn enter_callee(&self) -> FnIdx {
        match &self.enter {
            TraceEvent::CallEnter { callee, .. } => *callee,
            _ => unreachable!("containers open on call entry"),
        }
    }
}

fn push_leaf(stack: &mut [Open], root: &mut Vec<Node>, e: TraceEvent) {
    match stack.last_mut() {
        Some(p) => p.body.push(Node::Leaf(e)),
        None => root.push(Node::Leaf(e)),
    }
}

/// Serializes nodes back to a stream, recomputing the unwound-frame count of
/// every catch from the containers left open before it.
pub fn flatten(nodes: Vec<Node>, out: &mut Vec<TraceEvent>) {
    flatten_into(nodes, out);
}

fn flatten_into(nodes: Vec<Node>, out: &mut Vec<TraceEvent>) -> u32 {
    let mut open = 0;
    for n in nodes {
        open = match n {
            Node::Leaf(mut e) => {
                if let TraceEvent::ExceptionCatch { unwound, .. } = &mut e {
                    *unwound = open;
                }
                out.push(e);
                0
            }
            Node::Frame { enter, body, exit } | Node::Region {
                enter,
                body,
                close: exit,
            } => {
                out.push(enter);
                let inner = flatten_into(body, out);
                match exit {
                    Some(x) => {
                        out.push(x);
                        0
                    }
                    None => 1 + inner,
                }
            }
        };
    }
    open
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::minilang::parse;
    use crate::tracer::{trace, TraceOptions};

    #[test]
    fn build_then_flatten_is_identity() {
        let src = "fn g(a) { return 10 / a; }\nfn h(a) { try { return g(a); } catch (e) { return e; } }\nfn test_t() { assert(h(0) == 1001); assert(h(2) == 5); }";
        let p = parse(src).unwrap();
        for traced in [vec!["g", "h"], vec!["g"], vec!["h"]] {
            let t = trace(&p, "test_t", &traced, TraceOptions::default()).unwrap();
            let nodes = build(t.events.clone()).unwrap();
            let mut back = Vec::new();
            flatten(nodes, &mut back);
            assert_eq!(back, t.events, "{traced:?}");
        }
        let p = parse(corpus::DRIVER).unwrap();
        let t = trace(&p, "test_driver", &["callback"], TraceOptions::default()).unwrap();
        let nodes = build(t.events.clone()).unwrap();
        assert!(matches!(nodes[0], Node::Region { .. }));
        let mut back = Vec::new();
        flatten(nodes, &mut back);
        assert_eq!(back, t.events);
    }

    #[test]
    fn unmatched_exit_is_malformed() {
        let e = TraceEvent::CallExit {
            stmt: crate::minilang::StmtId(0),
            callee: 0,
            ret: None,
        };
        assert!(build(vec![e]).is_err());
    }
}
