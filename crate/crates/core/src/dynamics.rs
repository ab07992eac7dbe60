//! Time integration of the HNN, BinNN-C and BinNN-D flows and the deterministic
//! annealing schedule.
//!
//! All flows live in `x`-space on the open cube `(0, 1)^n`:
//!
//! * HNN:     `x' = D(x) r(x)`
//! * BinNN-C: `x' = (|H(x)|_m)^{-1} D(x) r(x)`
//! * BinNN-D: `x_i' = (|H~_ii|_m)^{-1} D_ii r~_i(x, y)`, `y' = -alpha gamma L((p_i x_i)_i + L y)`
//!
//! where `D(x) = diag((x_i - x_i^2) / T)` and `r = -grad_x` of the relevant energy.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::energy::{log_odds, pt_inverse_apply, pt_inverse_scalar, CentralizedEnergy, DistributedEnergy, Thermo};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::problem::{round_to_binary, BinaryPoint, Instance};

/// Interior clamp used by the stand-alone step functions.
pub const DEFAULT_EPS_CLIP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowKind {
    /// Centralized PT-Newton flow.
    BinnnC,
    /// Classic gradient-like Hopfield flow.
    Hnn,
    /// Distributed PT-Newton flow with auxiliary `y`.
    BinnnD,
}

impl FlowKind {
    pub fn is_distributed(self) -> bool {
        matches!(self, FlowKind::BinnnD)
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowKind::BinnnC => "binnn-c",
            FlowKind::Hnn => "hnn",
            FlowKind::BinnnD => "binnn-d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    Euler,
    Midpoint,
}

/// Which parameter an annealing round adjusts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnnealKnob {
    /// `tau <- beta tau`
    TauUp,
    /// `T <- T / beta`
    TDown,
}

impl FromStr for AnnealKnob {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau-up" => Ok(AnnealKnob::TauUp),
            "t-down" => Ok(AnnealKnob::TDown),
            other => Err(Error::Parse(format!("unknown annealing knob `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub beta: f64,
    /// Simulated flow time per round.
    pub t_d: f64,
    pub steps: usize,
    pub knob: AnnealKnob,
}

impl AnnealSchedule {
    pub fn new(beta: f64, t_d: f64, steps: usize, knob: AnnealKnob) -> Result<Self> {
        if !(beta > 1.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("annealing beta must exceed 1, got {beta}")));
        }
        if !(t_d > 0.0 && t_d.is_finite()) {
            return Err(Error::InvalidParameter(format!("annealing t_d must be positive, got {t_d}")));
        }
        Ok(AnnealSchedule { beta, t_d, steps, knob })
    }

    fn apply(&self, thermo: &mut Thermo) {
        match self.knob {
            AnnealKnob::TauUp => thermo.tau *= self.beta,
            AnnealKnob::TDown => thermo.t /= self.beta,
        }
    }
}

impl Default for AnnealSchedule {
    /// Ten rounds with `beta = 1.4`, raising `tau`.
    fn default() -> Self {
        AnnealSchedule { beta: 1.4, t_d: 10.0, steps: 10, knob: AnnealKnob::TauUp }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub thermo: Thermo,
    /// Gain on the `y` flow.
    pub alpha: f64,
    /// Integration step in simulated time.
    pub h: f64,
    pub eps_init: f64,
    pub eps_clip: f64,
    pub tol_x: f64,
    pub tol_y: f64,
    /// When set, convergence additionally requires `||grad E||_inf < tol_grad`.
    pub tol_grad: Option<f64>,
    pub t_max: f64,
    pub anneal: Option<AnnealSchedule>,
    /// Half-width of the multiplicative jitter applied to `T` and `tau`; `0` disables it.
    pub jitter: f64,
    pub seed: u64,
    /// Record every `sample_stride`-th step in the trajectory; `0` records nothing.
    pub sample_stride: usize,
    pub integrator: Integrator,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            thermo: Thermo::default(),
            alpha: 1.0,
            h: 1e-2,
            eps_init: 0.05,
            eps_clip: DEFAULT_EPS_CLIP,
            tol_x: 1e-6,
            tol_y: 1e-6,
            tol_grad: None,
            t_max: 1e3,
            anneal: None,
            jitter: 1e-3,
            seed: 0,
            sample_stride: 10,
            integrator: Integrator::Euler,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        Thermo::new(self.thermo.t, self.thermo.tau, self.thermo.m)?;
        let checks = [
            ("h", self.h > 0.0),
            ("alpha", self.alpha > 0.0),
            ("tol_x", self.tol_x > 0.0),
            ("tol_y", self.tol_y > 0.0),
            ("eps_init", self.eps_init > 0.0 && self.eps_init < 0.5),
            ("eps_clip", (0.0..0.5).contains(&self.eps_clip)),
            ("t_max", self.t_max >= 0.0),
            ("jitter", (0.0..1.0).contains(&self.jitter)),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::InvalidParameter(format!("invalid solver setting `{name}`")));
            }
        }
        if let Some(s) = &self.anneal {
            AnnealSchedule::new(s.beta, s.t_d, s.steps, s.knob)?;
        }
        Ok(())
    }

    /// Caps `h` so the explicit `y` update stays inside its stability region,
    /// using `lambda_max(L) <= max_{ij in E} (d_i + d_j)`.
    pub fn stabilized_for(&self, graph: &Graph, gamma: f64) -> SolverConfig {
        let bound = graph.edges().iter().map(|&(i, j)| graph.degree(i) + graph.degree(j)).max().unwrap_or(0) as f64;
        let mut cfg = self.clone();
        if bound > 0.0 {
            cfg.h = cfg.h.min(1.0 / (self.alpha * gamma * bound * bound));
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub t: f64,
    /// `1^T y(0)`.
    pub kappa: f64,
}

impl FlowState {
    pub fn centralized(x: Vec<f64>) -> Self {
        FlowState { x, y: None, t: 0.0, kappa: 0.0 }
    }

    pub fn distributed(x: Vec<f64>, y: Vec<f64>) -> Self {
        let kappa = y.iter().sum();
        FlowState { x, y: Some(y), t: 0.0, kappa }
    }

    /// `|1^T y - kappa|`, zero for centralized states.
    pub fn conservation_error(&self) -> f64 {
        self.y.as_ref().map(|y| (y.iter().sum::<f64>() - self.kappa).abs()).unwrap_or(0.0)
    }
}

/// Uniform draw from the closed ball of radius `eps_init` around `0.5 * 1`.
/// Distributed states start from `y = 0`.
pub fn init_state(n: usize, eps_init: f64, seed: u64, distributed: bool) -> FlowState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = eps_init * rng.random::<f64>().powf(1.0 / n.max(1) as f64);
    let x = dir.iter().map(|d| if norm > 0.0 { 0.5 + radius * d / norm } else { 0.5 }).collect();
    if distributed {
        FlowState::distributed(x, vec![0.0; n])
    } else {
        FlowState::centralized(x)
    }
}

/// Multiplicative jitter of `(T, tau)` by factors in `[1 - width, 1 + width]`.
pub fn jitter_thermo(thermo: &Thermo, width: f64, seed: u64) -> Thermo {
    if width == 0.0 {
        return *thermo;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    Thermo {
        t: thermo.t * rng.random_range(1.0 - width..=1.0 + width),
        tau: thermo.tau * rng.random_range(1.0 - width..=1.0 + width),
        m: thermo.m,
    }
}

#[inline]
fn spread(x: f64) -> f64 {
    x * (1.0 - x)
}

/// HNN rate `D(x) (W x + v + (T/tau) log(1/x - 1))`.
pub fn hnn_rate(ctx: &CentralizedEnergy, thermo: &Thermo, x: &[f64]) -> Result<DVector<f64>> {
    let mut r = ctx.neg_grad(thermo, x)?;
    for (ri, &xi) in r.iter_mut().zip(x) {
        *ri *= spread(xi) / thermo.t;
    }
    Ok(r)
}

/// BinNN-C rate `(|H(x)|_m)^{-1} D(x) (W x + v + (T/tau) log(1/x - 1))`.
pub fn binnn_c_rate(ctx: &CentralizedEnergy, thermo: &Thermo, x: &[f64]) -> Result<DVector<f64>> {
    let z = hnn_rate(ctx, thermo, x)?;
    let h = ctx.hessian(thermo, x)?;
    pt_inverse_apply(&h, thermo.m, &z)
}

/// Read access to the node-local quantities one agent can see.
pub trait NodeData {
    fn x(&self, j: usize) -> f64;
    fn y(&self, j: usize) -> f64;
    fn p(&self, j: usize) -> f64;
}

/// Plain slice-backed [`NodeData`].
pub struct SliceNodes<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub p: &'a [f64],
}

impl NodeData for SliceNodes<'_> {
    fn x(&self, j: usize) -> f64 {
        self.x[j]
    }
    fn y(&self, j: usize) -> f64 {
        self.y[j]
    }
    fn p(&self, j: usize) -> f64 {
        self.p[j]
    }
}

/// Agent `i`'s own constants for the distributed flow.
#[derive(Debug, Clone, Copy)]
pub struct AgentParams {
    /// `W~_ii = -(a_i + gamma p_i^2)`.
    pub w: f64,
    pub ab: f64,
    pub gamma: f64,
    /// `P_r / n`.
    pub share: f64,
}

impl AgentParams {
    pub fn of(ctx: &DistributedEnergy, inst: &Instance, i: usize) -> Self {
        AgentParams { w: ctx.w_diag[i], ab: ctx.ab[i], gamma: inst.gamma(), share: ctx.share }
    }
}

fn local_laplacian(graph: &Graph, i: usize, value: impl Fn(usize) -> f64) -> f64 {
    let vi = value(i);
    graph.neighbors(i).iter().map(|&j| vi - value(j)).sum()
}

/// `x_i'` for agent `i`; reads `x_i`, `p_i` and `y_j` for `j` in `{i} + N_i`.
pub fn agent_x_rate(graph: &Graph, i: usize, nodes: &impl NodeData, params: &AgentParams, thermo: &Thermo) -> f64 {
    let xi = nodes.x(i);
    let ly = local_laplacian(graph, i, |j| nodes.y(j));
    let v = params.ab + params.gamma * nodes.p(i) * (params.share - ly);
    let k = thermo.ratio();
    let r = params.w * xi + v + k * log_odds(xi);
    let s = spread(xi);
    let hess = -params.w + k / s;
    pt_inverse_scalar(hess, thermo.m) * (s / thermo.t) * r
}

/// `y_i'` for agent `i`; reads `x_j`, `p_j` for `j` in `{i} + N_i` and `y` over two hops.
pub fn agent_y_rate(graph: &Graph, i: usize, nodes: &impl NodeData, gamma: f64, alpha: f64) -> f64 {
    let z = |j: usize| nodes.p(j) * nodes.x(j) + local_laplacian(graph, j, |k| nodes.y(k));
    -alpha * gamma * local_laplacian(graph, i, z)
}

/// Network-wide BinNN-D rates, identical agent by agent to [`agent_x_rate`] and
/// [`agent_y_rate`] but sharing the `L y` products.
pub fn binnn_d_rates(
    inst: &Instance,
    graph: &Graph,
    ctx: &DistributedEnergy,
    thermo: &Thermo,
    alpha: f64,
    x: &[f64],
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = inst.n();
    if x.len() != n || y.len() != n || graph.n() != n {
        return Err(Error::Shape("binnn_d_rates: dimension mismatch".into()));
    }
    if let Some(&bad) = x.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Domain { value: bad, domain: "(0, 1)" });
    }
    let p = inst.p();
    let gamma = inst.gamma();
    let k = thermo.ratio();
    let ly = graph.apply_laplacian(y);
    let mut dx = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x[i];
        let v = ctx.ab[i] + gamma * p[i] * (ctx.share - ly[i]);
        let r = ctx.w_diag[i] * xi + v + k * log_odds(xi);
        let s = spread(xi);
        let hess = -ctx.w_diag[i] + k / s;
        dx.push(pt_inverse_scalar(hess, thermo.m) * (s / thermo.t) * r);
    }
    let z: Vec<f64> = (0..n).map(|i| p[i] * x[i] + ly[i]).collect();
    let dy = graph.apply_laplacian(&z).into_iter().map(|v| -alpha * gamma * v).collect();
    Ok((dx, dy))
}

fn clamp_into(x: &mut [f64], eps: f64) -> usize {
    let (lo, hi) = (eps, 1.0 - eps);
    let mut hits = 0;
    for v in x.iter_mut() {
        if *v < lo || *v > hi || v.is_nan() {
            *v = if v.is_nan() { 0.5 } else { v.clamp(lo, hi) };
            hits += 1;
        }
    }
    hits
}

fn check_finite(state: &FlowState, dx: &[f64], dy: Option<&[f64]>) -> Result<()> {
    let bad = dx.iter().chain(dy.into_iter().flatten()).any(|v| !v.is_finite());
    if bad {
        return Err(Error::Numeric(Box::new(NumericFailure {
            t: state.t,
            reason: "non-finite flow rate".into(),
            x: state.x.clone(),
            y: state.y.clone(),
            trajectory: Vec::new(),
        })));
    }
    Ok(())
}

fn euler(state: &FlowState, dx: &[f64], dy: Option<&[f64]>, h: f64, eps_clip: f64) -> (FlowState, usize) {
    let mut x: Vec<f64> = state.x.iter().zip(dx).map(|(x, d)| x + h * d).collect();
    let hits = clamp_into(&mut x, eps_clip);
    let y = match (&state.y, dy) {
        (Some(y), Some(dy)) => Some(y.iter().zip(dy).map(|(y, d)| y + h * d).collect()),
        (y, _) => y.clone(),
    };
    (FlowState { x, y, t: state.t + h, kappa: state.kappa }, hits)
}

/// One explicit Euler step of BinNN-C.
pub fn step_binnn_c(state: &FlowState, ctx: &CentralizedEnergy, thermo: &Thermo, h: f64) -> Result<FlowState> {
    let dx = binnn_c_rate(ctx, thermo, &state.x)?;
    check_finite(state, dx.as_slice(), None)?;
    Ok(euler(state, dx.as_slice(), None, h, DEFAULT_EPS_CLIP).0)
}

/// One explicit Euler step of the HNN flow.
pub fn step_hnn(state: &FlowState, ctx: &CentralizedEnergy, thermo: &Thermo, h: f64) -> Result<FlowState> {
    let dx = hnn_rate(ctx, thermo, &state.x)?;
    check_finite(state, dx.as_slice(), None)?;
    Ok(euler(state, dx.as_slice(), None, h, DEFAULT_EPS_CLIP).0)
}

/// One simultaneous explicit Euler step of BinNN-D in `(x, y)`.
pub fn step_binnn_d(
    state: &FlowState,
    inst: &Instance,
    graph: &Graph,
    ctx: &DistributedEnergy,
    thermo: &Thermo,
    alpha: f64,
    h: f64,
) -> Result<FlowState> {
    let y = state.y.as_deref().ok_or_else(|| Error::InvalidParameter("distributed step needs y".into()))?;
    let (dx, dy) = binnn_d_rates(inst, graph, ctx, thermo, alpha, &state.x, y)?;
    check_finite(state, &dx, Some(&dy))?;
    Ok(euler(state, &dx, Some(&dy), h, DEFAULT_EPS_CLIP).0)
}

/// Energy and rate evaluation for one flow on one problem.
enum System<'a> {
    Centralized { inst: &'a Instance, ctx: CentralizedEnergy, newton: bool },
    Distributed { inst: &'a Instance, graph: &'a Graph, ctx: DistributedEnergy, alpha: f64 },
}

impl<'a> System<'a> {
    fn new(kind: FlowKind, inst: &'a Instance, graph: Option<&'a Graph>, alpha: f64) -> Result<Self> {
        match kind {
            FlowKind::BinnnC | FlowKind::Hnn => {
                Ok(System::Centralized { inst, ctx: CentralizedEnergy::new(inst), newton: kind == FlowKind::BinnnC })
            }
            FlowKind::BinnnD => {
                let graph = graph.ok_or_else(|| Error::InvalidParameter("distributed flow needs a graph".into()))?;
                if graph.n() != inst.n() {
                    return Err(Error::Shape(format!("graph has {} nodes, instance {}", graph.n(), inst.n())));
                }
                if !graph.is_connected() {
                    return Err(Error::Disconnected);
                }
                Ok(System::Distributed { inst, graph, ctx: DistributedEnergy::new(inst), alpha })
            }
        }
    }

    fn rates(&self, thermo: &Thermo, state: &FlowState) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        match self {
            System::Centralized { ctx, newton, .. } => {
                let dx = if *newton { binnn_c_rate(ctx, thermo, &state.x)? } else { hnn_rate(ctx, thermo, &state.x)? };
                Ok((dx.as_slice().to_vec(), None))
            }
            System::Distributed { inst, graph, ctx, alpha } => {
                let y = state.y.as_deref().expect("distributed state carries y");
                let (dx, dy) = binnn_d_rates(inst, graph, ctx, thermo, *alpha, &state.x, y)?;
                Ok((dx, Some(dy)))
            }
        }
    }

    fn energy(&self, thermo: &Thermo, state: &FlowState) -> f64 {
        let value = match self {
            System::Centralized { inst, ctx, .. } => ctx.energy(inst, thermo, &state.x),
            System::Distributed { inst, graph, ctx, .. } => {
                ctx.energy(inst, graph, thermo, &state.x, state.y.as_deref().expect("y"))
            }
        };
        value.unwrap_or(f64::NAN)
    }

    fn grad_norm(&self, thermo: &Thermo, state: &FlowState) -> Result<f64> {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        match self {
            System::Centralized { ctx, .. } => Ok(inf(ctx.neg_grad(thermo, &state.x)?.as_slice())),
            System::Distributed { inst, graph, ctx, .. } => {
                let y = state.y.as_deref().expect("y");
                let gx = ctx.neg_grad_x(inst, graph, thermo, &state.x, y)?;
                let gy = ctx.grad_y(inst, graph, &state.x, y);
                Ok(inf(&gx).max(inf(&gy)))
            }
        }
    }

    /// Hessian used to certify a local minimum: `H(x)` for centralized flows, and for
    /// BinNN-D the Schur complement of `grad^2 E~` over `y` restricted to `1^T y = kappa`,
    /// which is `diag(a + (T/tau)/(x - x^2)) + (gamma / n) p p^T`.
    fn certificate_hessian(&self, thermo: &Thermo, state: &FlowState) -> Result<DMatrix<f64>> {
        match self {
            System::Centralized { ctx, .. } => ctx.hessian(thermo, &state.x),
            System::Distributed { inst, .. } => {
                let n = inst.n();
                let p = DVector::from_column_slice(inst.p());
                let mut h = &p * p.transpose() * (inst.gamma() / n as f64);
                let k = thermo.ratio();
                for i in 0..n {
                    let xi = state.x[i];
                    if !(xi > 0.0 && xi < 1.0) {
                        return Err(Error::Domain { value: xi, domain: "(0, 1)" });
                    }
                    h[(i, i)] += inst.a()[i] + k / spread(xi);
                }
                Ok(h)
            }
        }
    }
}

/// Failure details for a run that produced a non-finite rate.
#[derive(Debug, Clone)]
pub struct NumericFailure {
    pub t: f64,
    pub reason: String,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub trajectory: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub energy: f64,
}

/// One accepted integration step, as seen by a [`StepObserver`].
pub struct StepEvent<'s> {
    pub before: &'s FlowState,
    pub after: &'s FlowState,
    pub thermo: &'s Thermo,
    /// Number of coordinates the interior clamp moved.
    pub clamped: usize,
}

pub trait StepObserver {
    fn on_step(&mut self, event: &StepEvent<'_>);
}

impl<F: FnMut(&StepEvent<'_>)> StepObserver for F {
    fn on_step(&mut self, event: &StepEvent<'_>) {
        self(event)
    }
}

struct NoObserver;

impl StepObserver for NoObserver {
    fn on_step(&mut self, _: &StepEvent<'_>) {}
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub kind: FlowKind,
    pub x_final: Vec<f64>,
    pub y_final: Option<Vec<f64>>,
    pub kappa: f64,
    pub bits: BinaryPoint,
    pub cost: f64,
    pub trajectory: Vec<TrajectorySample>,
    pub iterations: usize,
    pub wall_time: f64,
    pub converged: bool,
    /// `(T, tau, m)` in effect at the final iterate.
    pub thermo: Thermo,
    /// Terminal `x` of each annealing round.
    pub round_equilibria: Vec<Vec<f64>>,
    pub clamp_events: usize,
    pub t_final: f64,
}

struct Integration<'o> {
    iterations: usize,
    clamp_events: usize,
    trajectory: Vec<TrajectorySample>,
    observer: &'o mut dyn StepObserver,
}

struct Segment {
    converged: bool,
}

impl Integration<'_> {
    fn sample(&mut self, sys: &System<'_>, thermo: &Thermo, state: &FlowState) {
        self.trajectory.push(TrajectorySample {
            t: state.t,
            x: state.x.clone(),
            y: state.y.clone(),
            energy: sys.energy(thermo, state),
        });
    }

    fn fail(&mut self, err: Error) -> Error {
        match err {
            Error::Numeric(mut f) => {
                f.trajectory = std::mem::take(&mut self.trajectory);
                Error::Numeric(f)
            }
            other => other,
        }
    }

    /// Integrates until convergence or `max_steps` steps.
    fn segment(
        &mut self,
        sys: &System<'_>,
        cfg: &SolverConfig,
        thermo: &Thermo,
        state: &mut FlowState,
        max_steps: usize,
    ) -> Result<Segment> {
        let stride = cfg.sample_stride;
        let mut taken = 0;
        let t_start = state.t;
        loop {
            if taken >= max_steps {
                return Ok(Segment { converged: false });
            }
            let (dx, dy) = sys.rates(thermo, state).map_err(|e| self.fail(e))?;
            check_finite(state, &dx, dy.as_deref()).map_err(|e| self.fail(e))?;
            let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let small_x = inf(&dx) < cfg.tol_x;
            let small_y = dy.as_deref().is_none_or(|d| inf(d) < cfg.tol_y);
            if small_x && small_y {
                let grad_ok = match cfg.tol_grad {
                    Some(tol) => sys.grad_norm(thermo, state).map(|g| g < tol).unwrap_or(false),
                    None => true,
                };
                if grad_ok {
                    return Ok(Segment { converged: true });
                }
            }
            let (mut next, mut hits) = match cfg.integrator {
                Integrator::Euler => euler(state, &dx, dy.as_deref(), cfg.h, cfg.eps_clip),
                Integrator::Midpoint => {
                    let (half, _) = euler(state, &dx, dy.as_deref(), 0.5 * cfg.h, cfg.eps_clip);
                    let (dx2, dy2) = sys.rates(thermo, &half).map_err(|e| self.fail(e))?;
                    check_finite(&half, &dx2, dy2.as_deref()).map_err(|e| self.fail(e))?;
                    euler(state, &dx2, dy2.as_deref(), cfg.h, cfg.eps_clip)
                }
            };
            taken += 1;
            self.iterations += 1;
            // Keep t an exact multiple of h within the segment.
            next.t = t_start + taken as f64 * cfg.h;
            if cfg.eps_clip == 0.0 {
                hits += next.x.iter().filter(|&&v| !(v > 0.0 && v < 1.0)).count();
            }
            self.clamp_events += hits;
            self.observer.on_step(&StepEvent { before: state, after: &next, thermo, clamped: hits });
            *state = next;
            if stride > 0 && taken % stride == 0 {
                self.sample(sys, thermo, state);
            }
        }
    }
}

fn finish(
    kind: FlowKind,
    inst: &Instance,
    state: FlowState,
    thermo: Thermo,
    work: Integration<'_>,
    converged: bool,
    round_equilibria: Vec<Vec<f64>>,
    started: Instant,
) -> Result<RunResult> {
    let bits = round_to_binary(&state.x, 0.5);
    let cost = inst.eval_p1(&bits.to_f64())?;
    Ok(RunResult {
        kind,
        kappa: state.kappa,
        x_final: state.x,
        y_final: state.y,
        bits,
        cost,
        trajectory: work.trajectory,
        iterations: work.iterations,
        wall_time: started.elapsed().as_secs_f64(),
        converged,
        thermo,
        round_equilibria,
        clamp_events: work.clamp_events,
        t_final: state.t,
    })
}

fn steps_for(duration: f64, h: f64) -> usize {
    // Tolerate roundoff in duration / h before taking the ceiling.
    let q = duration / h;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.max(1.0) {
        r as usize
    } else {
        q.ceil() as usize
    }
}

/// Integrates one flow from a seeded start until the rates fall below tolerance or
/// the horizon `t_max` is reached.
pub fn run(kind: FlowKind, inst: &Instance, graph: Option<&Graph>, cfg: &SolverConfig) -> Result<RunResult> {
    run_observed(kind, inst, graph, cfg, &mut NoObserver)
}

pub fn run_observed(
    kind: FlowKind,
    inst: &Instance,
    graph: Option<&Graph>,
    cfg: &SolverConfig,
    observer: &mut dyn StepObserver,
) -> Result<RunResult> {
    cfg.validate()?;
    let started = Instant::now();
    let sys = System::new(kind, inst, graph, cfg.alpha)?;
    let thermo = jitter_thermo(&cfg.thermo, cfg.jitter, cfg.seed);
    let mut state = init_state(inst.n(), cfg.eps_init, cfg.seed, kind.is_distributed());
    let mut work = Integration { iterations: 0, clamp_events: 0, trajectory: Vec::new(), observer };
    if cfg.sample_stride > 0 {
        work.sample(&sys, &thermo, &state);
    }
    let seg = work.segment(&sys, cfg, &thermo, &mut state, steps_for(cfg.t_max, cfg.h))?;
    if cfg.sample_stride > 0 && work.trajectory.last().map(|s| s.t) != Some(state.t) {
        work.sample(&sys, &thermo, &state);
    }
    finish(kind, inst, state, thermo, work, seg.converged, Vec::new(), started)
}

/// Deterministic annealing: `steps` rounds of `t_d` simulated time each, adjusting
/// `tau` or `T` by `beta` between rounds while `x` carries over.
pub fn anneal(kind: FlowKind, inst: &Instance, graph: Option<&Graph>, cfg: &SolverConfig) -> Result<RunResult> {
    anneal_observed(kind, inst, graph, cfg, &mut NoObserver)
}

pub fn anneal_observed(
    kind: FlowKind,
    inst: &Instance,
    graph: Option<&Graph>,
    cfg: &SolverConfig,
    observer: &mut dyn StepObserver,
) -> Result<RunResult> {
    cfg.validate()?;
    let schedule = cfg.anneal.ok_or_else(|| Error::InvalidParameter("annealing schedule missing".into()))?;
    let started = Instant::now();
    let sys = System::new(kind, inst, graph, cfg.alpha)?;
    let mut thermo = jitter_thermo(&cfg.thermo, cfg.jitter, cfg.seed);
    let mut state = init_state(inst.n(), cfg.eps_init, cfg.seed, kind.is_distributed());
    let mut work = Integration { iterations: 0, clamp_events: 0, trajectory: Vec::new(), observer };
    if cfg.sample_stride > 0 {
        work.sample(&sys, &thermo, &state);
    }
    let per_round = steps_for(schedule.t_d, cfg.h);
    let mut equilibria = Vec::with_capacity(schedule.steps);
    let mut converged = false;
    let mut last_thermo = thermo;
    for _ in 0..schedule.steps {
        let seg = work.segment(&sys, cfg, &thermo, &mut state, per_round)?;
        converged = seg.converged;
        equilibria.push(state.x.clone());
        last_thermo = thermo;
        schedule.apply(&mut thermo);
    }
    if cfg.sample_stride > 0 && work.trajectory.last().map(|s| s.t) != Some(state.t) {
        work.sample(&sys, &last_thermo, &state);
    }
    finish(kind, inst, state, last_thermo, work, converged, equilibria, started)
}

/// Runs [`anneal`] when the config carries a schedule, otherwise [`run`].
pub fn solve(kind: FlowKind, inst: &Instance, graph: Option<&Graph>, cfg: &SolverConfig) -> Result<RunResult> {
    if cfg.anneal.is_some() {
        anneal(kind, inst, graph, cfg)
    } else {
        run(kind, inst, graph, cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub grad_norm: f64,
    pub min_hessian_eigenvalue: f64,
    pub local_min_certified: bool,
}

/// Gradient norm and curvature at the terminal point of a run.
pub fn terminal_diagnostics(
    result: &RunResult,
    inst: &Instance,
    graph: Option<&Graph>,
    tol_x: f64,
) -> Result<Diagnostics> {
    let sys = System::new(result.kind, inst, graph, 1.0)?;
    let state =
        FlowState { x: result.x_final.clone(), y: result.y_final.clone(), t: result.t_final, kappa: result.kappa };
    let grad_norm = sys.grad_norm(&result.thermo, &state)?;
    let h = sys.certificate_hessian(&result.thermo, &state)?;
    let min_eig = SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Diagnostics {
        grad_norm,
        min_hessian_eigenvalue: min_eig,
        local_min_certified: result.converged && grad_norm < 10.0 * tol_x && min_eig > 0.0,
    })
}
