//! Logistic activation, barrier integrals, the energies `E` (centralized) and
//! `E~` (distributed) with their derivatives, and the PT-inverse.
//!
//! All derivatives are taken with respect to `x`, the activation output; the flows
//! never integrate the pre-activation `u`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::problem::Instance;

/// Inputs closer than this to 0 or 1 get the endpoint barrier value.
const ENDPOINT_GUARD: f64 = 1e-12;

/// Symmetry tolerance accepted by [`pt_inverse`].
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Temperature `T`, time constant `tau` and PT truncation floor `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermo {
    pub t: f64,
    pub tau: f64,
    pub m: f64,
}

impl Thermo {
    pub fn new(t: f64, tau: f64, m: f64) -> Result<Self> {
        for (name, v) in [("T", t), ("tau", tau), ("m", m)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Thermo { t, tau, m })
    }

    /// Barrier weight `T / tau`.
    pub fn ratio(&self) -> f64 {
        self.t / self.tau
    }
}

impl Default for Thermo {
    fn default() -> Self {
        Thermo { t: 1.0, tau: 0.1, m: 0.1 }
    }
}

/// `g(u) = 1 / (1 + exp(-u / T))`.
pub fn activation(u: f64, t: f64) -> f64 {
    1.0 / (1.0 + (-u / t).exp())
}

/// `g^{-1}(x) = -T log(1/x - 1)` for `x` in `(0, 1)`.
pub fn activation_inv(x: f64, t: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain { value: x, domain: "(0, 1)" });
    }
    Ok(-t * log_odds(x))
}

/// `log(1/x - 1)`, evaluated as `log(1 - x) - log(x)`.
#[inline]
pub fn log_odds(x: f64) -> f64 {
    (-x).ln_1p() - x.ln()
}

/// `x - x^2`.
#[inline]
fn spread(x: f64) -> f64 {
    x * (1.0 - x)
}

/// `int_0^z g^{-1}(v) dv = T (log(1 - z) - z log(1/z - 1))`, zero at the endpoints.
///
/// Evaluated in the equivalent form `T ((1 - z) log(1 - z) + z log z)`.
pub fn barrier_integral(z: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::Domain { value: z, domain: "[0, 1]" });
    }
    if !(ENDPOINT_GUARD..=1.0 - ENDPOINT_GUARD).contains(&z) {
        return Ok(0.0);
    }
    let w = 1.0 - z;
    Ok(t * (w * (-z).ln_1p() + z * z.ln()))
}

fn barrier_sum(x: &[f64], thermo: &Thermo) -> Result<f64> {
    x.iter().map(|&z| barrier_integral(z, thermo.t)).sum::<Result<f64>>().map(|s| s / thermo.tau)
}

fn check_interior(x: &[f64]) -> Result<()> {
    match x.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        Some(&v) => Err(Error::Domain { value: v, domain: "(0, 1)" }),
        None => Ok(()),
    }
}

/// `sum_i [f_i(x_i') - f_i(x_i)] + (1/tau) sum_i [B(x_i') - B(x_i)]`, the shared
/// separable part of both energy increments, in factored form.
fn separable_increment(inst: &Instance, thermo: &Thermo, x0: &[f64], x1: &[f64]) -> Result<f64> {
    let a = inst.a();
    let b = inst.b();
    let mut local = 0.0;
    let mut barrier = 0.0;
    for i in 0..inst.n() {
        let dx = x1[i] - x0[i];
        if dx == 0.0 {
            continue;
        }
        local += dx * (0.5 * a[i] * (x1[i] + x0[i]) - a[i] * b[i]);
        barrier += barrier_integral(x1[i], thermo.t)? - barrier_integral(x0[i], thermo.t)?;
    }
    Ok(local + barrier / thermo.tau)
}

/// Cached `W = -diag(a) - gamma p p^T` and `v = (a_i b_i)_i + gamma P_r p`.
#[derive(Debug, Clone)]
pub struct CentralizedEnergy {
    pub w: DMatrix<f64>,
    pub v: DVector<f64>,
}

impl CentralizedEnergy {
    pub fn new(inst: &Instance) -> Self {
        let n = inst.n();
        let p = DVector::from_column_slice(inst.p());
        let mut w = &p * p.transpose() * (-inst.gamma());
        for i in 0..n {
            w[(i, i)] -= inst.a()[i];
        }
        let v = DVector::from_fn(n, |i, _| inst.a()[i] * inst.b()[i] + inst.gamma() * inst.p_ref() * inst.p()[i]);
        CentralizedEnergy { w, v }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// `E(x) = f(x) + (1/tau) sum_i B(x_i)`.
    pub fn energy(&self, inst: &Instance, thermo: &Thermo, x: &[f64]) -> Result<f64> {
        Ok(inst.eval_p1(x)? + barrier_sum(x, thermo)?)
    }

    /// `E(x1) - E(x0)` computed without subtracting two large energies.
    pub fn energy_increment(&self, inst: &Instance, thermo: &Thermo, x0: &[f64], x1: &[f64]) -> Result<f64> {
        if x0.len() != inst.n() || x1.len() != inst.n() {
            return Err(Error::Shape("energy_increment: length mismatch".into()));
        }
        let sep = separable_increment(inst, thermo, x0, x1)?;
        let ds: f64 = inst.p().iter().zip(x0.iter().zip(x1)).map(|(p, (u, v))| p * (v - u)).sum();
        let s0 = inst.output(x0);
        let s1 = inst.output(x1);
        Ok(sep + 0.5 * inst.gamma() * ds * (s0 + s1 - 2.0 * inst.p_ref()))
    }

    /// `-grad E(x) = W x + v + (T/tau) log(1/x - 1)`.
    pub fn neg_grad(&self, thermo: &Thermo, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.n() {
            return Err(Error::Shape(format!("x has length {}, expected {}", x.len(), self.n())));
        }
        check_interior(x)?;
        let xv = DVector::from_column_slice(x);
        let mut r = &self.w * xv + &self.v;
        let k = thermo.ratio();
        for (ri, &xi) in r.iter_mut().zip(x) {
            *ri += k * log_odds(xi);
        }
        Ok(r)
    }

    /// `grad E(x) = -W x - v - (T/tau) log(1/x - 1)`.
    pub fn grad(&self, thermo: &Thermo, x: &[f64]) -> Result<DVector<f64>> {
        self.neg_grad(thermo, x).map(|r| -r)
    }

    /// `H(x) = -W + (T/tau) diag(1 / (x - x^2))`.
    pub fn hessian(&self, thermo: &Thermo, x: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.n() {
            return Err(Error::Shape(format!("x has length {}, expected {}", x.len(), self.n())));
        }
        check_interior(x)?;
        let mut h = -&self.w;
        let k = thermo.ratio();
        for (i, &xi) in x.iter().enumerate() {
            h[(i, i)] += k / spread(xi);
        }
        Ok(h)
    }
}

/// Distributed energy data: `W~ = -diag(a + gamma p^2)` (stored as its diagonal) and the
/// `y`-independent part of `v~`.
#[derive(Debug, Clone)]
pub struct DistributedEnergy {
    pub w_diag: Vec<f64>,
    pub ab: Vec<f64>,
    pub share: f64,
}

impl DistributedEnergy {
    pub fn new(inst: &Instance) -> Self {
        let g = inst.gamma();
        let w_diag = inst.a().iter().zip(inst.p()).map(|(a, p)| -(a + g * p * p)).collect();
        let ab = inst.a().iter().zip(inst.b()).map(|(a, b)| a * b).collect();
        DistributedEnergy { w_diag, ab, share: inst.p_ref() / inst.n() as f64 }
    }

    /// `v~(y)_i = a_i b_i + gamma p_i (P_r/n - (L y)_i)`.
    pub fn v_tilde(&self, inst: &Instance, graph: &Graph, y: &[f64]) -> Vec<f64> {
        let ly = graph.apply_laplacian(y);
        (0..inst.n()).map(|i| self.ab[i] + inst.gamma() * inst.p()[i] * (self.share - ly[i])).collect()
    }

    /// `E~(x, y) = f~(x, y) + (1/tau) sum_i B(x_i)`.
    pub fn energy(&self, inst: &Instance, graph: &Graph, thermo: &Thermo, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(inst.eval_p2(graph, x, y)? + barrier_sum(x, thermo)?)
    }

    /// `E~(x1, y1) - E~(x0, y0)` in factored form.
    pub fn energy_increment(
        &self,
        inst: &Instance,
        graph: &Graph,
        thermo: &Thermo,
        (x0, y0): (&[f64], &[f64]),
        (x1, y1): (&[f64], &[f64]),
    ) -> Result<f64> {
        let sep = separable_increment(inst, thermo, x0, x1)?;
        let s0 = inst.sigma(graph, x0, y0)?;
        let s1 = inst.sigma(graph, x1, y1)?;
        let dy: Vec<f64> = y1.iter().zip(y0).map(|(u, v)| u - v).collect();
        let ldy = graph.apply_laplacian(&dy);
        let p = inst.p();
        let quad: f64 = (0..inst.n()).map(|i| (p[i] * (x1[i] - x0[i]) + ldy[i]) * (s1[i] + s0[i])).sum();
        Ok(sep + 0.5 * inst.gamma() * quad)
    }

    /// `-grad_x E~ = W~ x + v~(y) + (T/tau) log(1/x - 1)`.
    pub fn neg_grad_x(
        &self,
        inst: &Instance,
        graph: &Graph,
        thermo: &Thermo,
        x: &[f64],
        y: &[f64],
    ) -> Result<Vec<f64>> {
        check_interior(x)?;
        let v = self.v_tilde(inst, graph, y);
        let k = thermo.ratio();
        Ok((0..inst.n()).map(|i| self.w_diag[i] * x[i] + v[i] + k * log_odds(x[i])).collect())
    }

    pub fn grad_x(&self, inst: &Instance, graph: &Graph, thermo: &Thermo, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.neg_grad_x(inst, graph, thermo, x, y)?.into_iter().map(|v| -v).collect())
    }

    /// `grad_y E~ = gamma L ((p_i x_i)_i + L y)`.
    pub fn grad_y(&self, inst: &Instance, graph: &Graph, x: &[f64], y: &[f64]) -> Vec<f64> {
        let ly = graph.apply_laplacian(y);
        let z: Vec<f64> = (0..inst.n()).map(|i| inst.p()[i] * x[i] + ly[i]).collect();
        graph.apply_laplacian(&z).into_iter().map(|v| inst.gamma() * v).collect()
    }

    /// Diagonal of `H~(x) = -W~ + (T/tau) diag(1/(x - x^2))`, i.e.
    /// `a_i + gamma p_i^2 + (T/tau) / (x_i - x_i^2)`.
    pub fn hessian_x(&self, thermo: &Thermo, x: &[f64]) -> Result<Vec<f64>> {
        check_interior(x)?;
        let k = thermo.ratio();
        Ok(x.iter().zip(&self.w_diag).map(|(&xi, &w)| -w + k / spread(xi)).collect())
    }
}

/// Scalar PT-inverse: `1/|h|` when `|h| >= m`, else `1/m`.
#[inline]
pub fn pt_inverse_scalar(h: f64, m: f64) -> f64 {
    1.0 / h.abs().max(m)
}

/// Eigendecomposition of a symmetric matrix after symmetrizing away roundoff.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if !a.is_square() {
        return Err(Error::Shape(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    let scale = 1.0 + a.abs().max();
    let asym = (a - a.transpose()).abs().max();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Shape(format!("matrix is not symmetric (max asymmetry {asym:e})")));
    }
    Ok(SymmetricEigen::new((a + a.transpose()) * 0.5))
}

/// Diagonal entries of a square matrix with an exactly zero off-diagonal part.
fn diagonal_of(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = a.nrows();
    if !a.is_square() {
        return None;
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                return None;
            }
        }
    }
    Some((0..n).map(|i| a[(i, i)]).collect())
}

/// `(|A|_m)^{-1} = Q diag(1 / max(|lambda|, m)) Q^T`.
pub fn pt_inverse(a: &DMatrix<f64>, m: f64) -> Result<DMatrix<f64>> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("m must be positive, got {m}")));
    }
    if let Some(d) = diagonal_of(a) {
        return Ok(DMatrix::from_diagonal(&DVector::from_iterator(
            d.len(),
            d.iter().map(|&h| pt_inverse_scalar(h, m)),
        )));
    }
    let eig = symmetric_eigen(a)?;
    let inv = eig.eigenvalues.map(|l| pt_inverse_scalar(l, m));
    let q = &eig.eigenvectors;
    let out = q * DMatrix::from_diagonal(&inv) * q.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// `(|A|_m)^{-1} z` without forming the inverse.
pub fn pt_inverse_apply(a: &DMatrix<f64>, m: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(d) = diagonal_of(a) {
        if z.len() != d.len() {
            return Err(Error::Shape(format!("vector has length {}, expected {}", z.len(), d.len())));
        }
        return Ok(DVector::from_iterator(d.len(), d.iter().zip(z.iter()).map(|(&h, &v)| pt_inverse_scalar(h, m) * v)));
    }
    let eig = symmetric_eigen(a)?;
    let q = &eig.eigenvectors;
    let mut coords = q.tr_mul(z);
    for (c, &l) in coords.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= pt_inverse_scalar(l, m);
    }
    Ok(q * coords)
}
