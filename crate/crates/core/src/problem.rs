//! Problem instances for binary resource allocation.
//!
//! Each agent `i` carries a quadratic cost `f_i(x) = (a_i/2)(x - b_i)^2 - a_i b_i^2 / 2 + d_i`
//! whose values at the corners are `f_i(0) = d_i` and `f_i(1) = c_i + d_i`. The global
//! objective adds the mismatch penalty `(gamma/2)(p^T x - P_r)^2`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// How the quadratic coefficients `a` are designed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    /// `a_i = -(gamma ||p||^2 + 4 T0 / tau0)(1 + margin)`, which makes the energy
    /// concave at the cube center.
    Centralized,
    /// `a_i = -(gamma p_i^2 + 4 T0 / tau0)(1 + margin)`, computable by agent `i` alone.
    Distributed,
}

/// Problem data shared by the centralized and distributed formulations.
///
/// `(a, b, d)` are stored as given; the incremental cost `c` is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    a: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
    p: Vec<f64>,
    gamma: f64,
    p_ref: f64,
}

impl Instance {
    pub fn new(a: Vec<f64>, b: Vec<f64>, d: Vec<f64>, p: Vec<f64>, gamma: f64, p_ref: f64) -> Result<Self> {
        let n = p.len();
        if a.len() != n || b.len() != n || d.len() != n {
            return Err(Error::Shape(format!(
                "coefficient lengths a={}, b={}, d={} do not match p={}",
                a.len(),
                b.len(),
                d.len(),
                n
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
        }
        if !p_ref.is_finite() {
            return Err(Error::InvalidParameter("p_ref must be finite".into()));
        }
        for i in 0..n {
            let c = 0.5 * a[i] * (1.0 - 2.0 * b[i]);
            if !c.is_finite() || !d[i].is_finite() || !p[i].is_finite() {
                return Err(Error::InvalidCoefficient { index: i, reason: "non-finite coefficient".into() });
            }
        }
        Ok(Instance { a, b, d, p, gamma, p_ref })
    }

    /// Builds an instance from incremental costs `c`, fitting `b` for the given `a`.
    pub fn from_costs(c: &[f64], a: Vec<f64>, d: Vec<f64>, p: Vec<f64>, gamma: f64, p_ref: f64) -> Result<Self> {
        if c.len() != a.len() || c.len() != d.len() {
            return Err(Error::Shape(format!("c has length {}, a {}, d {}", c.len(), a.len(), d.len())));
        }
        let (a, b, d) = fit_coefficients(c, &a, &d)?;
        Instance::new(a, b, d, p, gamma, p_ref)
    }

    /// Same corner costs, new curvature design `a`.
    pub fn with_design(&self, a: Vec<f64>) -> Result<Self> {
        let c = self.c();
        Instance::from_costs(&c, a, self.d.clone(), self.p.clone(), self.gamma, self.p_ref)
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p_ref(&self) -> f64 {
        self.p_ref
    }

    /// Incremental costs `c_i = (a_i/2)(1 - 2 b_i)`.
    pub fn c(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(&a, &b)| 0.5 * a * (1.0 - 2.0 * b)).collect()
    }

    /// Local cost `f_i(x)`, evaluated in the expanded form `x (a x / 2 - a b) + d`
    /// which avoids cancellation when `|b|` is large.
    pub fn local_cost(&self, i: usize, x: f64) -> f64 {
        let a = self.a[i];
        x * (0.5 * a * x - a * self.b[i]) + self.d[i]
    }

    /// Derivative `f_i'(x) = a_i (x - b_i)`.
    pub fn local_cost_slope(&self, i: usize, x: f64) -> f64 {
        self.a[i] * (x - self.b[i])
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.p.iter().zip(x).map(|(p, x)| p * x).sum()
    }

    pub fn p_norm_sq(&self) -> f64 {
        self.p.iter().map(|p| p * p).sum()
    }

    fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::Shape(format!("{what} has length {len}, expected {}", self.n())));
        }
        Ok(())
    }

    /// Centralized objective `sum_i f_i(x_i) + (gamma/2)(p^T x - P_r)^2`.
    pub fn eval_p1(&self, x: &[f64]) -> Result<f64> {
        self.check_len("x", x.len())?;
        let local: f64 = (0..self.n()).map(|i| self.local_cost(i, x[i])).sum();
        let mismatch = self.output(x) - self.p_ref;
        Ok(local + 0.5 * self.gamma * mismatch * mismatch)
    }

    /// Distributed residual `sigma = (p_i x_i)_i + L y - (P_r / n) 1`.
    pub fn sigma(&self, graph: &Graph, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_len("x", x.len())?;
        self.check_len("y", y.len())?;
        self.check_len("graph", graph.n())?;
        let ly = graph.apply_laplacian(y);
        let share = self.p_ref / self.n() as f64;
        Ok((0..self.n()).map(|i| self.p[i] * x[i] + ly[i] - share).collect())
    }

    /// Distributed objective `sum_i f_i(x_i) + (gamma/2) sigma^T sigma`.
    pub fn eval_p2(&self, graph: &Graph, x: &[f64], y: &[f64]) -> Result<f64> {
        let sigma = self.sigma(graph, x, y)?;
        let local: f64 = (0..self.n()).map(|i| self.local_cost(i, x[i])).sum();
        let sq: f64 = sigma.iter().map(|s| s * s).sum();
        Ok(local + 0.5 * self.gamma * sq)
    }

    /// Set-function form of the objective: cost of switching on exactly `chosen`.
    pub fn set_cost(&self, chosen: &[usize]) -> f64 {
        let mut x = vec![0.0; self.n()];
        for &i in chosen {
            x[i] = 1.0;
        }
        self.eval_p1(&x).expect("indicator has instance length")
    }
}

/// Fits `b_i = 1/2 - c_i / a_i` so that `f_i(1) - f_i(0) = c_i` and `f_i(0) = d_i`.
pub fn fit_coefficients(c: &[f64], a: &[f64], d: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if c.len() != a.len() || c.len() != d.len() {
        return Err(Error::Shape("c, a, d must have equal lengths".into()));
    }
    let mut b = Vec::with_capacity(c.len());
    for (i, (&ci, &ai)) in c.iter().zip(a).enumerate() {
        if ai == 0.0 || !ai.is_finite() {
            return Err(Error::InvalidCoefficient {
                index: i,
                reason: format!("a must be finite and nonzero, got {ai}"),
            });
        }
        b.push(0.5 - ci / ai);
    }
    Ok((a.to_vec(), b, d.to_vec()))
}

/// Curvature design satisfying `a_i < -gamma ||p||^2 - 4 T0 / tau0` (centralized) or its
/// per-agent analogue (distributed), inflated by `margin`.
pub fn default_a(p: &[f64], gamma: f64, t0: f64, tau0: f64, margin: f64, mode: DesignMode) -> Vec<f64> {
    assert!(margin >= 0.0 && t0 > 0.0 && tau0 > 0.0, "default_a: invalid parameters");
    let barrier = 4.0 * t0 / tau0;
    match mode {
        DesignMode::Centralized => {
            let norm_sq: f64 = p.iter().map(|v| v * v).sum();
            vec![-(gamma * norm_sq + barrier) * (1.0 + margin); p.len()]
        }
        DesignMode::Distributed => p.iter().map(|pi| -(gamma * pi * pi + barrier) * (1.0 + margin)).collect(),
    }
}

/// Strict 0/1 decision vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryPoint(Vec<bool>);

impl BinaryPoint {
    pub fn new(bits: Vec<bool>) -> Self {
        BinaryPoint(bits)
    }

    pub fn from_set(n: usize, chosen: &[usize]) -> Self {
        let mut bits = vec![false; n];
        for &i in chosen {
            bits[i] = true;
        }
        BinaryPoint(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn support(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }
}

impl fmt::Display for BinaryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// `bit_i = 1` iff `x_i >= threshold`.
pub fn round_to_binary(x: &[f64], threshold: f64) -> BinaryPoint {
    BinaryPoint(x.iter().map(|&v| v >= threshold).collect())
}

/// Random instance generator parameters. Defaults follow the reference campaign:
/// `p_i ~ U[1, 50]`, `c_i = p_i^e` with `e ~ U[2, 3]`, `P_r = 1500`, `gamma = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub p_range: (f64, f64),
    pub exponent_range: (f64, f64),
    pub p_ref: f64,
    pub gamma: f64,
    pub t0: f64,
    pub tau0: f64,
    pub margin: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 50,
            p_range: (1.0, 50.0),
            exponent_range: (2.0, 3.0),
            p_ref: 1500.0,
            gamma: 1.0,
            t0: 1.0,
            tau0: 0.1,
            margin: 0.1,
        }
    }
}

impl GeneratorConfig {
    /// Reference distribution at size `n`, with `P_r` scaled to keep `P_r / n = 30`.
    pub fn scaled(n: usize) -> Self {
        GeneratorConfig { n, p_ref: 30.0 * n as f64, ..Default::default() }
    }
}

/// Draws a seeded instance; `a` uses the centralized design and `d = 0`.
pub fn random_instance(cfg: &GeneratorConfig, seed: u64) -> Result<Instance> {
    let (plo, phi) = cfg.p_range;
    let (elo, ehi) = cfg.exponent_range;
    if plo > phi || elo > ehi {
        return Err(Error::InvalidParameter("generator ranges must satisfy low <= high".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Vec::with_capacity(cfg.n);
    let mut c = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let pi: f64 = rng.random_range(plo..=phi);
        let e: f64 = rng.random_range(elo..=ehi);
        p.push(pi);
        c.push(pi.powf(e));
    }
    let a = default_a(&p, cfg.gamma, cfg.t0, cfg.tau0, cfg.margin, DesignMode::Centralized);
    Instance::from_costs(&c, a, vec![0.0; cfg.n], p, cfg.gamma, cfg.p_ref)
}

/// Two-agent instance with `c = (2, 1)`, `p = (3, 1)`, `P_r = 2.8`, `gamma = 4`, `a = -(10, 10)`.
pub fn two_agent_instance() -> Instance {
    Instance::from_costs(&[2.0, 1.0], vec![-10.0, -10.0], vec![0.0, 0.0], vec![3.0, 1.0], 4.0, 2.8)
        .expect("valid constant instance")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn fit_coefficients_examples() {
        let (_, b, _) = fit_coefficients(&[2.0], &[-10.0], &[0.0]).unwrap();
        assert!(close(b[0], 0.7, 1e-15));
        let (_, b, _) = fit_coefficients(&[0.0], &[-10.0], &[0.0]).unwrap();
        assert_eq!(b[0], 0.5);
        let (_, b, d) = fit_coefficients(&[1.0], &[-10.0], &[5.0]).unwrap();
        assert!(close(b[0], 0.6, 1e-15));
        assert_eq!(d[0], 5.0);
    }

    #[test]
    fn fit_rejects_zero_a() {
        match fit_coefficients(&[1.0, 2.0], &[-1.0, 0.0], &[0.0, 0.0]) {
            Err(Error::InvalidCoefficient { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn default_a_examples() {
        let a = default_a(&[3.0, 1.0], 4.0, 1.0, 0.1, 0.0, DesignMode::Centralized);
        assert!(a.iter().all(|&v| close(v, -80.0, 1e-14)));
        let a = default_a(&[1.0], 1.0, 1.0, 1.0, 0.0, DesignMode::Centralized);
        assert_eq!(a, vec![-5.0]);
        let a = default_a(&[3.0, 1.0], 4.0, 1.0, 0.1, 0.0, DesignMode::Distributed);
        assert!(close(a[0], -76.0, 1e-14) && close(a[1], -44.0, 1e-14));
    }

    #[test]
    fn eval_p1_two_agent() {
        let inst = two_agent_instance();
        assert!(close(inst.eval_p1(&[1.0, 0.0]).unwrap(), 2.08, 1e-12));
        assert!(close(inst.eval_p1(&[0.0, 0.0]).unwrap(), 15.68, 1e-12));
        assert!(close(inst.eval_p1(&[0.0, 1.0]).unwrap(), 7.48, 1e-12));
        assert!(close(inst.eval_p1(&[1.0, 1.0]).unwrap(), 5.88, 1e-12));
        assert!(matches!(inst.eval_p1(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn eval_p1_zero_reference_vanishes() {
        let inst =
            Instance::from_costs(&[3.0, -7.0], vec![-2.0, -9.0], vec![0.0; 2], vec![1.0, 4.0], 2.0, 0.0).unwrap();
        assert_eq!(inst.eval_p1(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_p2_two_agent() {
        let inst = two_agent_instance();
        let g = Graph::complete(2);
        assert!(close(inst.eval_p2(&g, &[1.0, 0.0], &[-0.75, 0.75]).unwrap(), 2.04, 1e-12));
        assert!(close(inst.eval_p2(&g, &[1.0, 0.0], &[0.0, 0.0]).unwrap(), 11.04, 1e-12));
        let zero = Instance::from_costs(&[1.0, 2.0], vec![-3.0, -3.0], vec![0.0; 2], vec![1.0, 1.0], 1.0, 0.0).unwrap();
        assert_eq!(zero.eval_p2(&g, &[0.0, 0.0], &[4.0, 4.0]).unwrap(), 0.0);
        assert!(matches!(inst.eval_p2(&Graph::complete(3), &[1.0, 0.0], &[0.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_to_binary(&[0.99, 0.01], 0.5).to_string(), "10");
        assert_eq!(round_to_binary(&[0.5, 0.5], 0.5).to_string(), "11");
        assert_eq!(round_to_binary(&[0.3], 0.25).to_string(), "1");
    }

    #[test]
    fn random_instance_is_deterministic() {
        let cfg = GeneratorConfig::default();
        let a = random_instance(&cfg, 11).unwrap();
        let b = random_instance(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 50);
        assert!(a.p().iter().all(|&p| (1.0..=50.0).contains(&p)));
        assert_eq!(a.p_ref(), 1500.0);
        assert_ne!(a, random_instance(&cfg, 12).unwrap());
    }

    #[test]
    fn random_instance_degenerate_ranges() {
        let cfg = GeneratorConfig { n: 1, p_range: (2.0, 2.0), exponent_range: (2.0, 2.0), ..Default::default() };
        let inst = random_instance(&cfg, 3).unwrap();
        assert_eq!(inst.p(), &[2.0]);
        assert!(close(inst.c()[0], 4.0, 1e-12));
    }

    #[test]
    fn with_design_keeps_corner_costs() {
        let inst = random_instance(&GeneratorConfig::scaled(6), 5).unwrap();
        let a = default_a(inst.p(), inst.gamma(), 1.0, 0.1, 0.1, DesignMode::Distributed);
        let other = inst.with_design(a).unwrap();
        for bits in 0..64u32 {
            let x: Vec<f64> = (0..6).map(|i| ((bits >> i) & 1) as f64).collect();
            let (u, v) = (inst.eval_p1(&x).unwrap(), other.eval_p1(&x).unwrap());
            assert!(close(u, v, 1e-11), "{u} vs {v}");
        }
    }

    #[test]
    fn binary_point_display_and_support() {
        let bp = BinaryPoint::from_set(4, &[0, 2]);
        assert_eq!(bp.to_string(), "1010");
        assert_eq!(bp.support(), vec![0, 2]);
        assert_eq!(bp.to_f64(), vec![1.0, 0.0, 1.0, 0.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn fitted_corner_values(c in -1e4f64..1e4, a in -1e4f64..-1e-2, d in -1e3f64..1e3) {
                let inst = Instance::from_costs(&[c], vec![a], vec![d], vec![1.0], 1.0, 0.0).unwrap();
                let f0 = inst.local_cost(0, 0.0);
                let f1 = inst.local_cost(0, 1.0);
                prop_assert_eq!(f0, d);
                prop_assert!((f1 - f0 - c).abs() <= 1e-12 * c.abs().max(a.abs()));
            }

            #[test]
            fn binary_eval_matches_set_function(seed in 0u64..500, mask in 0u32..256) {
                let inst = random_instance(&GeneratorConfig::scaled(8), seed).unwrap();
                let chosen: Vec<usize> = (0..8).filter(|i| mask >> i & 1 == 1).collect();
                let x = BinaryPoint::from_set(8, &chosen).to_f64();
                // Direct evaluation from corner values: f_i(1) = c_i + d_i, f_i(0) = d_i.
                let c = inst.c();
                let direct: f64 = chosen.iter().map(|&i| c[i]).sum::<f64>()
                    + 0.5 * inst.gamma() * (inst.output(&x) - inst.p_ref()).powi(2);
                let value = inst.eval_p1(&x).unwrap();
                prop_assert!((value - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
                prop_assert_eq!(value, inst.set_cost(&chosen));
            }

            #[test]
            fn eval_p2_shift_invariant(seed in 0u64..200, theta in -50.0f64..50.0) {
                let inst = random_instance(&GeneratorConfig::scaled(5), seed).unwrap();
                let g = Graph::random_connected(5, 0.3, seed);
                let x = [0.1, 0.5, 0.9, 0.3, 0.7];
                let y = [1.0, -2.0, 0.5, 3.0, 0.0];
                let ys: Vec<f64> = y.iter().map(|v| v + theta).collect();
                let e0 = inst.eval_p2(&g, &x, &y).unwrap();
                let e1 = inst.eval_p2(&g, &x, &ys).unwrap();
                prop_assert!((e0 - e1).abs() <= 1e-9 * (1.0 + e0.abs()));
            }

            #[test]
            fn rounding_idempotent(bits in proptest::collection::vec(any::<bool>(), 0..20)) {
                let bp = BinaryPoint::new(bits);
                prop_assert_eq!(round_to_binary(&bp.to_f64(), 0.5), bp);
            }
        }
    }
}
