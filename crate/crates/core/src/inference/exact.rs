use crate::inference::{InferenceError, Marginals, Message};
use crate::model::FaultNet;

pub const DEFAULT_EXACT_CAP: usize = 20;

/// Posterior marginals by enumerating every assignment of the variables not
/// fixed by evidence or a deterministic prior. `cap` bounds that count.
pub fn exact_marginals(net: &FaultNet, cap: usize) -> Result<Marginals, InferenceError> {
    let n = net.variables.len();
    let domain: Vec<&'static [bool]> = net
        .variables
        .iter()
        .map(|v| match (v.evidence, v.prior) {
            (Some(true), _) => &[true][..],
            (Some(false), _) => &[false][..],
            (None, Some(p)) if p >= 1.0 => &[true][..],
            (None, Some(p)) if p <= 0.0 => &[false][..],
            _ => &[true, false][..],
        })
        .collect();
    let free = domain.iter().filter(|d| d.len() == 2).count();
    if free > cap {
        return Err(InferenceError::TooLarge {
            variables: free,
            cap,
        });
    }
    // Each factor is scored at its highest-numbered variable.
    let mut completes: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, f) in net.factors.iter().enumerate() {
        let last = f.parents.iter().copied().chain([f.child]).max().expect("child");
        completes[last].push(i);
    }
    let mut e = Enumerator {
        net,
        domain,
        completes,
        assign: vec![true; n],
        acc: vec![[0.0; 2]; n],
    };
    let z = e.walk(0, 1.0);
    if z.is_nan() || z <= 0.0 {
        return Err(InferenceError::ImpossibleEvidence);
    }
    let posteriors = e
        .acc
        .iter()
        .map(|a| Message::new(a[0] / z, a[1] / z))
        .collect();
    Ok(Marginals {
        posteriors,
        converged: true,
        iterations: 0,
        zero_resets: 0,
    })
}

struct Enumerator<'a> {
    net: &'a FaultNet,
    domain: Vec<&'static [bool]>,
    completes: Vec<Vec<usize>>,
    assign: Vec<bool>,
    acc: Vec<[f64; 2]>,
}

impl Enumerator<'_> {
    /// Total weight of all completions of the first `d` assigned variables.
    fn walk(&mut self, d: usize, w: f64) -> f64 {
        if d == self.assign.len() {
            return w;
        }
        let mut total = 0.0;
        for &x in self.domain[d] {
            self.assign[d] = x;
            let v = &self.net.variables[d];
            let mut local = match v.prior {
                Some(p) if v.evidence.is_none() => {
                    if x {
                        p
                    } else {
                        1.0 - p
                    }
                }
                _ => 1.0,
            };
            for &fi in &self.completes[d] {
                let f = &self.net.factors[fi];
                let all_true = f.parents.iter().all(|&p| self.assign[p]);
                local *= f.value(self.assign[f.child], all_true);
            }
            let s = if local == 0.0 {
                0.0
            } else {
                self.walk(d + 1, w * local)
            };
            self.acc[d][usize::from(!x)] += s;
            total += s;
        }
        total
    }
}
