//! Reference solvers: greedy construction, rounding of a fractional point, and
//! exhaustive enumeration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{BinaryPoint, Instance};

pub const DEFAULT_BRUTE_FORCE_CAP: usize = 24;

/// A chosen subset together with its cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetSolution {
    /// Sorted indices `i` with `x_i = 1`.
    pub chosen: Vec<usize>,
    pub cost: f64,
    #[serde(skip)]
    n: usize,
}

impl SetSolution {
    fn new(inst: &Instance, mut chosen: Vec<usize>) -> Self {
        chosen.sort_unstable();
        let cost = inst.set_cost(&chosen);
        SetSolution { chosen, cost, n: inst.n() }
    }

    pub fn bits(&self) -> BinaryPoint {
        BinaryPoint::from_set(self.n, &self.chosen)
    }
}

/// Adds, one at a time, the element that lowers the cost the most, while some
/// addition still lowers it. Ties go to the lowest index.
pub fn greedy(inst: &Instance) -> SetSolution {
    let n = inst.n();
    let mut chosen = Vec::new();
    let mut taken = vec![false; n];
    let c = inst.c();
    let (p, half_gamma, p_ref) = (inst.p(), 0.5 * inst.gamma(), inst.p_ref());
    let mut base = inst.d().iter().sum::<f64>();
    let mut output = 0.0;
    let mut cost = base + half_gamma * p_ref * p_ref;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let r = output + p[i] - p_ref;
            let trial = base + c[i] + half_gamma * r * r;
            if best.is_none_or(|(_, b)| trial < b) {
                best = Some((i, trial));
            }
        }
        match best {
            Some((i, trial)) if trial < cost => {
                chosen.push(i);
                taken[i] = true;
                base += c[i];
                output += p[i];
                cost = trial;
            }
            _ => break,
        }
    }
    SetSolution::new(inst, chosen)
}

/// Visits indices by decreasing fractional value (lowest index first among equal
/// values) and adds each while doing so strictly lowers the cost; stops at the
/// first index that does not.
pub fn round_relaxed(x_frac: &[f64], inst: &Instance) -> Result<SetSolution> {
    if x_frac.len() != inst.n() {
        return Err(Error::Shape(format!("fractional point has {} entries, instance {}", x_frac.len(), inst.n())));
    }
    if let Some(&v) = x_frac.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain { value: v, domain: "[0, 1]" });
    }
    let mut order: Vec<usize> = (0..inst.n()).collect();
    order.sort_by(|&i, &j| x_frac[j].total_cmp(&x_frac[i]));
    let mut chosen = Vec::new();
    let mut cost = inst.set_cost(&chosen);
    for i in order {
        chosen.push(i);
        let c = inst.set_cost(&chosen);
        if c < cost {
            cost = c;
        } else {
            chosen.pop();
            break;
        }
    }
    Ok(SetSolution::new(inst, chosen))
}

/// Global minimizer over all `2^n` corners. Among equal costs the lexicographically
/// smallest bit vector `(x_0, x_1, ...)` wins.
pub fn brute_force(inst: &Instance, cap: usize) -> Result<SetSolution> {
    let n = inst.n();
    if n > cap || n >= 64 {
        return Err(Error::TooLarge { n, cap });
    }
    // Bit k of `mask` is x_{n-1-k}, so increasing masks are lexicographic order.
    let total = 1u64 << n;
    let mut best_mask = 0u64;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(n);
    for mask in 0..total {
        chosen.clear();
        chosen.extend((0..n).filter(|&i| mask >> (n - 1 - i) & 1 == 1));
        let c = inst.set_cost(&chosen);
        if c < best {
            best = c;
            best_mask = mask;
        }
    }
    let chosen = (0..n).filter(|&i| best_mask >> (n - 1 - i) & 1 == 1).collect();
    Ok(SetSolution::new(inst, chosen))
}
