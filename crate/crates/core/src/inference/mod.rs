//! Posterior marginals of a fault network: loopy belief propagation with
//! either enumerated or closed-form factor messages, and an exact oracle.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::FaultNet;

mod exact;
mod messages;

pub use exact::{exact_marginals, DEFAULT_EXACT_CAP};
pub use messages::{
    factor_to_child, factor_to_child_raw, factor_to_parent, factor_to_parent_raw,
    factor_to_var_naive, factor_to_var_naive_raw, var_to_factor, Message, MESSAGE_FLOOR,
};

pub const DEFAULT_MAX_ITERATIONS: usize = 100;
pub const DEFAULT_CONVERGENCE_EPS: f64 = 1e-6;
pub const DEFAULT_DEGREE_CAP: usize = 20;

const ZERO: Message = Message { t: 0.0, f: 0.0 };

#[derive(Debug, Error, PartialEq)]
pub enum InferenceError {
    #[error("factor of degree {degree} exceeds the enumeration cap {cap}")]
    DegreeTooLarge { degree: usize, cap: usize },
    #[error("{variables} free variables exceed the exact-inference cap {cap}")]
    TooLarge { variables: usize, cap: usize },
    #[error("evidence has probability zero")]
    ImpossibleEvidence,
    #[error("invalid inference configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InferenceMode {
    Naive,
    #[default]
    Optimized,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub max_iterations: usize,
    /// Max-norm threshold on the change of any message between iterations.
    pub convergence_eps: f64,
    pub mode: InferenceMode,
    /// Largest factor degree the naive mode enumerates.
    pub degree_cap: usize,
    /// Largest free-variable count the exact mode enumerates.
    pub exact_cap: usize,
    /// Weight of the previous factor message in each update; 0 disables.
    pub damping: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            convergence_eps: DEFAULT_CONVERGENCE_EPS,
            mode: InferenceMode::Optimized,
            degree_cap: DEFAULT_DEGREE_CAP,
            exact_cap: DEFAULT_EXACT_CAP,
            damping: 0.0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.max_iterations == 0 {
            return Err(InferenceError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.convergence_eps.is_nan() || self.convergence_eps <= 0.0 {
            return Err(InferenceError::InvalidConfig(
                "convergence_eps must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(InferenceError::InvalidConfig(
                "damping must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    /// `(P(correct), P(faulty))` per variable, in net order.
    pub posteriors: Vec<Message>,
    pub converged: bool,
    pub iterations: usize,
    /// Variable messages whose product vanished and were reset to uniform.
    pub zero_resets: usize,
}

impl Marginals {
    pub fn p_faulty(&self, var: usize) -> f64 {
        self.posteriors[var].f
    }

    pub fn dump(&self, net: &FaultNet) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "converged {} iterations {}",
            self.converged, self.iterations
        );
        for (i, (m, v)) in self.posteriors.iter().zip(&net.variables).enumerate() {
            let kind = match v.kind {
                crate::model::VarKind::Statement(s) => format!("stmt {s}"),
                crate::model::VarKind::Value { trace, id } => format!("value t{trace}:{id}"),
            };
            let _ = writeln!(out, "var {i} {kind} true {:.9} false {:.9}", m.t, m.f);
        }
        out
    }
}

/// Runs inference in the configured mode.
pub fn run_lbp(net: &FaultNet, cfg: &InferenceConfig) -> Result<Marginals, InferenceError> {
    cfg.validate()?;
    if cfg.mode == InferenceMode::Exact {
        return exact_marginals(net, cfg.exact_cap);
    }
    let mut lbp = Lbp::new(net, cfg)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        if lbp.step()? < cfg.convergence_eps {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "belief propagation stopped after {iterations} iterations without converging"
        );
    }
    let mut m = lbp.marginals();
    m.converged = converged;
    m.iterations = iterations;
    Ok(m)
}

/// Synchronous flooding state. Messages live on factor edges; edge
/// `start[a] + k` joins factor `a` to its child (`k = 0`) or `k`-th parent.
pub struct Lbp<'a> {
    net: &'a FaultNet,
    cfg: InferenceConfig,
    start: Vec<usize>,
    edge_var: Vec<usize>,
    var_edges: Vec<Vec<usize>>,
    unary: Vec<Message>,
    v2f: Vec<Message>,
    f2v: Vec<Message>,
    zero_resets: usize,
}

impl<'a> Lbp<'a> {
    pub fn new(net: &'a FaultNet, cfg: &InferenceConfig) -> Result<Self, InferenceError> {
        cfg.validate()?;
        let mut start = Vec::with_capacity(net.factors.len() + 1);
        let mut edge_var = Vec::new();
        let mut var_edges = vec![Vec::new(); net.variables.len()];
        for f in &net.factors {
            if cfg.mode == InferenceMode::Naive && f.parents.len() + 1 > cfg.degree_cap {
                return Err(InferenceError::DegreeTooLarge {
                    degree: f.parents.len() + 1,
                    cap: cfg.degree_cap,
                });
            }
            start.push(edge_var.len());
            for v in std::iter::once(f.child).chain(f.parents.iter().copied()) {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
            }
        }
        start.push(edge_var.len());
        let unary = net
            .variables
            .iter()
            .map(|v| v.prior.map_or(Message::ONE, |p| Message::new(p, 1.0 - p)))
            .collect();
        let edges = edge_var.len();
        Ok(Lbp {
            net,
            cfg: *cfg,
            start,
            edge_var,
            var_edges,
            unary,
            v2f: vec![Message::UNIFORM; edges],
            f2v: vec![Message::UNIFORM; edges],
            zero_resets: 0,
        })
    }

    /// Variable-to-factor and factor-to-variable messages, by edge.
    pub fn messages(&self) -> (&[Message], &[Message]) {
        (&self.v2f, &self.f2v)
    }

    pub fn edge_variable(&self, edge: usize) -> usize {
        self.edge_var[edge]
    }

    /// One synchronous iteration. Returns the largest message change.
    pub fn step(&mut self) -> Result<f64, InferenceError> {
        let mut delta: f64 = 0.0;
        let mut prefix = Vec::new();
        for (v, edges) in self.var_edges.iter().enumerate() {
            let var = &self.net.variables[v];
            if let Some(e) = var.evidence {
                let m = Message::clamped(e);
                for &ed in edges {
                    delta = delta.max(self.v2f[ed].max_diff(m));
                    self.v2f[ed] = m;
                }
                continue;
            }
            // prefix[i] = unary times messages of edges[..i]
            prefix.clear();
            let mut acc = self.unary[v];
            for &ed in edges {
                prefix.push(acc);
                acc = (acc * self.f2v[ed]).try_normalized().unwrap_or(ZERO);
            }
            let mut suffix = Message::ONE;
            for (i, &ed) in edges.iter().enumerate().rev() {
                let m = match var_to_factor(prefix[i], [suffix], None) {
                    Some(m) => m,
                    None => {
                        self.zero_resets += 1;
                        log::warn!("message from variable {v} vanished; reset to uniform");
                        Message::UNIFORM
                    }
                };
                delta = delta.max(self.v2f[ed].max_diff(m));
                self.v2f[ed] = m;
                suffix = (suffix * self.f2v[ed]).try_normalized().unwrap_or(ZERO);
            }
        }
        let mut fresh = Vec::new();
        let mut suffix_t = Vec::new();
        for (a, f) in self.net.factors.iter().enumerate() {
            let (lo, hi) = (self.start[a], self.start[a + 1]);
            let inbox = &self.v2f[lo..hi];
            fresh.clear();
            match self.cfg.mode {
                InferenceMode::Naive => {
                    for k in 0..inbox.len() {
                        fresh.push(factor_to_var_naive(f, k, inbox, self.cfg.degree_cap)?);
                    }
                }
                _ => {
                    fresh.push(factor_to_child(f.p0, inbox[1..].iter().copied()));
                    // suffix_t[k] = product of parent m(true) over positions k..
                    suffix_t.clear();
                    suffix_t.resize(inbox.len() + 1, 1.0);
                    for k in (1..inbox.len()).rev() {
                        suffix_t[k] = suffix_t[k + 1] * inbox[k].t;
                    }
                    let mut before = 1.0;
                    for k in 1..inbox.len() {
                        let others = before * suffix_t[k + 1];
                        fresh.push(factor_to_parent(f.p0, inbox[0], others));
                        before *= inbox[k].t;
                    }
                }
            }
            for (k, m) in fresh.iter().enumerate() {
                let old = self.f2v[lo + k];
                let m = if self.cfg.damping > 0.0 {
                    let d = self.cfg.damping;
                    Message::new(
                        (1.0 - d) * m.t + d * old.t,
                        (1.0 - d) * m.f + d * old.f,
                    )
                    .normalized()
                } else {
                    *m
                };
                delta = delta.max(old.max_diff(m));
                self.f2v[lo + k] = m;
            }
        }
        Ok(delta)
    }

    /// Normalized product of the unary term and all incoming factor messages.
    pub fn marginals(&self) -> Marginals {
        let mut zero_resets = self.zero_resets;
        let posteriors = self
            .var_edges
            .iter()
            .enumerate()
            .map(|(v, edges)| {
                if let Some(e) = self.net.variables[v].evidence {
                    return Message::clamped(e);
                }
                var_to_factor(self.unary[v], edges.iter().map(|&e| self.f2v[e]), None)
                    .unwrap_or_else(|| {
                        zero_resets += 1;
                        Message::UNIFORM
                    })
            })
            .collect();
        Marginals {
            posteriors,
            converged: false,
            iterations: 0,
            zero_resets,
        }
    }
}
