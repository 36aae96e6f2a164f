use crate::inference::InferenceError;
use crate::model::NoisyConj;

/// Underflow threshold below which a message carries no information.
pub const MESSAGE_FLOOR: f64 = 1e-300;

/// Unnormalized or normalized pair `(m(true), m(false))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Message {
    pub t: f64,
    pub f: f64,
}

impl Message {
    pub const UNIFORM: Message = Message { t: 0.5, f: 0.5 };
    pub const TRUE: Message = Message { t: 1.0, f: 0.0 };
    pub const FALSE: Message = Message { t: 0.0, f: 1.0 };
    pub const ONE: Message = Message { t: 1.0, f: 1.0 };

    pub fn new(t: f64, f: f64) -> Message {
        Message { t, f }
    }

    pub fn clamped(value: bool) -> Message {
        if value {
            Message::TRUE
        } else {
            Message::FALSE
        }
    }

    /// Scales to unit sum. `None` when both components underflowed.
    pub fn try_normalized(self) -> Option<Message> {
        let s = self.t + self.f;
        if s.is_finite() && s >= MESSAGE_FLOOR {
            Some(Message {
                t: self.t / s,
                f: self.f / s,
            })
        } else {
            None
        }
    }

    pub fn normalized(self) -> Message {
        self.try_normalized().unwrap_or(Message::UNIFORM)
    }

    pub fn max_diff(self, o: Message) -> f64 {
        (self.t - o.t).abs().max((self.f - o.f).abs())
    }

    fn rescaled(self) -> Message {
        let m = self.t.max(self.f);
        if m > 0.0 && m.is_finite() {
            Message {
                t: self.t / m,
                f: self.f / m,
            }
        } else {
            self
        }
    }
}

impl std::ops::Mul for Message {
    type Output = Message;

    /// Componentwise product.
    fn mul(self, o: Message) -> Message {
        Message {
            t: self.t * o.t,
            f: self.f * o.f,
        }
    }
}

/// Variable-to-factor message: the unary term times every incoming factor
/// message except the target's. Evidence overrides the product.
/// Returns `None` when the product vanished.
pub fn var_to_factor(
    unary: Message,
    others: impl IntoIterator<Item = Message>,
    evidence: Option<bool>,
) -> Option<Message> {
    if let Some(e) = evidence {
        return Some(Message::clamped(e));
    }
    others
        .into_iter()
        .fold(unary, |acc, m| (acc * m).rescaled())
        .try_normalized()
}

/// Unnormalized factor-to-variable message by enumerating every assignment of
/// the other incident variables. Position 0 is the child, `1..` the parents;
/// `inbox[k]` is the message from position `k` and is ignored at `target`.
pub fn factor_to_var_naive_raw(
    factor: &NoisyConj,
    target: usize,
    inbox: &[Message],
    degree_cap: usize,
) -> Result<Message, InferenceError> {
    let degree = factor.parents.len() + 1;
    if degree > degree_cap {
        return Err(InferenceError::DegreeTooLarge {
            degree,
            cap: degree_cap,
        });
    }
    debug_assert_eq!(inbox.len(), degree);
    let others: Vec<usize> = (0..degree).filter(|&k| k != target).collect();
    let mut out = [0.0f64; 2];
    for (slot, x) in [true, false].into_iter().enumerate() {
        let child = if target == 0 { Some(x) } else { None };
        let parents_true = target == 0 || x;
        out[slot] = enumerate(factor, inbox, &others, child, parents_true, 1.0);
    }
    Ok(Message::new(out[0], out[1]))
}

/// Sum over assignments of `rest`, sharing prefix products between them.
fn enumerate(
    factor: &NoisyConj,
    inbox: &[Message],
    rest: &[usize],
    child: Option<bool>,
    parents_true: bool,
    w: f64,
) -> f64 {
    let Some((&k, tail)) = rest.split_first() else {
        let c = child.expect("child assigned");
        return w * factor.value(c, parents_true);
    };
    if w == 0.0 {
        return 0.0;
    }
    [true, false]
        .into_iter()
        .map(|v| {
            let m = if v { inbox[k].t } else { inbox[k].f };
            let (c, p) = if k == 0 {
                (Some(v), parents_true)
            } else {
                (child, parents_true && v)
            };
            enumerate(factor, inbox, tail, c, p, w * m)
        })
        .sum()
}

pub fn factor_to_var_naive(
    factor: &NoisyConj,
    target: usize,
    inbox: &[Message],
    degree_cap: usize,
) -> Result<Message, InferenceError> {
    factor_to_var_naive_raw(factor, target, inbox, degree_cap).map(Message::normalized)
}

/// Unnormalized message to the child from normalized parent messages.
pub fn factor_to_child_raw(p0: f64, parents: impl IntoIterator<Item = Message>) -> Message {
    let all_true: f64 = parents.into_iter().map(|m| m.t).product();
    Message::new((1.0 - p0) * all_true + p0, (1.0 - p0) * (1.0 - all_true))
}

pub fn factor_to_child(p0: f64, parents: impl IntoIterator<Item = Message>) -> Message {
    factor_to_child_raw(p0, parents).normalized()
}

/// Unnormalized message to one parent, given the child's message and the
/// product of the other parents' `m(true)` components.
pub fn factor_to_parent_raw(p0: f64, child: Message, others_true: f64) -> Message {
    let b = p0 * child.t + (1.0 - p0) * child.f;
    Message::new((child.t - b) * others_true + b, b)
}

pub fn factor_to_parent(p0: f64, child: Message, others_true: f64) -> Message {
    factor_to_parent_raw(p0, child, others_true).normalized()
}
