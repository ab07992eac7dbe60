//! Randomized trial campaigns, the rank-based quality score `Q`, and runtime sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force, greedy, DEFAULT_BRUTE_FORCE_CAP};
use crate::dynamics::{anneal, run, AnnealSchedule, FlowKind, SolverConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::io::fmt_float;
use crate::problem::{default_a, random_instance, BinaryPoint, DesignMode, GeneratorConfig, Instance};

/// Costs closer than this share their placement points.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Extra-edge fraction of the random communication graph used in campaigns.
pub const CAMPAIGN_EDGE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    BinnnC,
    BinnnCDa,
    BinnnD,
    BinnnDDa,
    Hnn,
    Greedy,
    Brute,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::BinnnC,
        Method::BinnnCDa,
        Method::BinnnD,
        Method::BinnnDDa,
        Method::Hnn,
        Method::Greedy,
        Method::Brute,
    ];

    /// The six methods of a default campaign.
    pub const CAMPAIGN: [Method; 6] =
        [Method::BinnnC, Method::BinnnCDa, Method::BinnnD, Method::BinnnDDa, Method::Hnn, Method::Greedy];

    pub fn name(self) -> &'static str {
        match self {
            Method::BinnnC => "binnn-c",
            Method::BinnnCDa => "binnn-c-da",
            Method::BinnnD => "binnn-d",
            Method::BinnnDDa => "binnn-d-da",
            Method::Hnn => "hnn",
            Method::Greedy => "greedy",
            Method::Brute => "brute",
        }
    }

    pub fn flow(self) -> Option<FlowKind> {
        match self {
            Method::BinnnC | Method::BinnnCDa => Some(FlowKind::BinnnC),
            Method::BinnnD | Method::BinnnDDa => Some(FlowKind::BinnnD),
            Method::Hnn => Some(FlowKind::Hnn),
            Method::Greedy | Method::Brute => None,
        }
    }

    pub fn is_annealed(self) -> bool {
        matches!(self, Method::BinnnCDa | Method::BinnnDDa)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(Method::from_str).collect()
}

/// Outcome of one method on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub bits: BinaryPoint,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solver settings a method actually runs with, derived from `base`.
///
/// Annealed methods get the default schedule when `base` has none; plain flows run
/// without one. Distributed flows have their step capped for the `y` dynamics.
pub fn method_config(method: Method, base: &SolverConfig, graph: Option<&Graph>, gamma: f64) -> SolverConfig {
    let mut cfg = base.clone();
    if method.is_annealed() {
        cfg.anneal = Some(base.anneal.unwrap_or_default());
    } else {
        cfg.anneal = None;
    }
    if method.flow() == Some(FlowKind::BinnnD) {
        if let Some(g) = graph {
            cfg = cfg.stabilized_for(g, gamma);
        }
    }
    cfg
}

/// Instance a method is run on. BinNN-D uses the per-agent curvature design with
/// the same corner costs, which leaves every binary cost unchanged.
pub fn method_instance(method: Method, inst: &Instance, cfg: &SolverConfig, margin: f64) -> Result<Instance> {
    if method.flow() == Some(FlowKind::BinnnD) {
        let a = default_a(inst.p(), inst.gamma(), cfg.thermo.t, cfg.thermo.tau, margin, DesignMode::Distributed);
        // Keep the original design if it is already stronger for every agent.
        if inst.a().iter().zip(&a).all(|(cur, new)| cur <= new) {
            return Ok(inst.clone());
        }
        return inst.with_design(a);
    }
    Ok(inst.clone())
}

/// Runs `method` with a fully resolved config; the reported cost is always the
/// objective of `inst` at the returned bits.
pub fn run_method(
    method: Method,
    inst: &Instance,
    graph: Option<&Graph>,
    cfg: &SolverConfig,
    brute_cap: usize,
) -> Result<MethodOutcome> {
    match method {
        Method::Greedy => {
            let s = greedy(inst);
            Ok(MethodOutcome { bits: s.bits(), cost: s.cost, iterations: s.chosen.len(), converged: true })
        }
        Method::Brute => {
            let s = brute_force(inst, brute_cap)?;
            Ok(MethodOutcome { bits: s.bits(), cost: s.cost, iterations: 1usize << inst.n(), converged: true })
        }
        _ => {
            let kind = method.flow().expect("flow method");
            let r = if method.is_annealed() { anneal(kind, inst, graph, cfg)? } else { run(kind, inst, graph, cfg)? };
            let cost = inst.eval_p1(&r.bits.to_f64())?;
            Ok(MethodOutcome { bits: r.bits, cost, iterations: r.iterations, converged: r.converged })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    pub cost: f64,
    pub wall_time: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub generator: GeneratorConfig,
    pub solver: SolverConfig,
    pub overrides: BTreeMap<Method, SolverConfig>,
    pub extra_edge_fraction: f64,
    pub brute_cap: usize,
    /// Worker threads; `0` uses all cores.
    pub jobs: usize,
}

impl CampaignConfig {
    /// Reference campaign on `n` agents with `P_r = 30 n`.
    pub fn new(n: usize, trials: usize, seed: u64) -> Self {
        CampaignConfig {
            n,
            trials,
            seed,
            methods: Method::CAMPAIGN.to_vec(),
            generator: GeneratorConfig { n, ..GeneratorConfig::scaled(n) },
            solver: SolverConfig::default(),
            overrides: BTreeMap::new(),
            extra_edge_fraction: CAMPAIGN_EDGE_FRACTION,
            brute_cap: DEFAULT_BRUTE_FORCE_CAP,
            jobs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("campaign needs at least one trial".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("campaign needs at least one method".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("campaign needs n >= 1".into()));
        }
        Ok(())
    }

    fn base_config(&self, method: Method) -> &SolverConfig {
        self.overrides.get(&method).unwrap_or(&self.solver)
    }
}

/// Seed of trial `k` in a campaign seeded with `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(trial as u64)
}

fn run_trial(cfg: &CampaignConfig, trial: usize) -> Result<Vec<TrialRecord>> {
    let seed = trial_seed(cfg.seed, trial);
    let generator = GeneratorConfig { n: cfg.n, ..cfg.generator.clone() };
    let inst = random_instance(&generator, seed)?;
    let graph = Graph::random_connected(cfg.n, cfg.extra_edge_fraction, seed);
    let mut out = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let mut solver = method_config(method, cfg.base_config(method), Some(&graph), inst.gamma());
        solver.seed = seed;
        solver.sample_stride = 0;
        let started = Instant::now();
        let outcome = method_instance(method, &inst, &solver, generator.margin)
            .and_then(|local| run_method(method, &local, Some(&graph), &solver, cfg.brute_cap))
            .and_then(|o| Ok(MethodOutcome { cost: inst.eval_p1(&o.bits.to_f64())?, ..o }));
        let wall_time = started.elapsed().as_secs_f64();
        out.push(match outcome {
            Ok(o) => {
                TrialRecord { trial, method, cost: o.cost, wall_time, iterations: o.iterations, converged: o.converged }
            }
            Err(_) => TrialRecord { trial, method, cost: f64::INFINITY, wall_time, iterations: 0, converged: false },
        });
    }
    Ok(out)
}

/// Runs every method on each seeded trial; records are ordered by `(trial, method
/// position)` regardless of scheduling.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let per_trial: Vec<Result<Vec<TrialRecord>>> =
        pool.install(|| (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect());
    let mut records = Vec::with_capacity(cfg.trials * cfg.methods.len());
    for r in per_trial {
        records.extend(r?);
    }
    Ok(records)
}

/// Rank score for each method in order of first appearance.
///
/// Within a trial the `k` methods earn `k-1, ..., 0` points by ascending cost, tied
/// costs share the mean of their points, and totals are divided by `(k-1) * trials`.
pub fn q_metric(records: &[TrialRecord]) -> Result<Vec<(Method, f64)>> {
    let mut methods: Vec<Method> = Vec::new();
    let mut by_trial: BTreeMap<usize, BTreeMap<Method, f64>> = BTreeMap::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
        if by_trial.entry(r.trial).or_default().insert(r.method, r.cost).is_some() {
            return Err(Error::IncompleteCampaign(format!(
                "duplicate record for trial {} method {}",
                r.trial, r.method
            )));
        }
    }
    q_from_table(&methods, &by_trial)
}

fn q_from_table(methods: &[Method], table: &BTreeMap<usize, BTreeMap<Method, f64>>) -> Result<Vec<(Method, f64)>> {
    let k = methods.len();
    let mut points = vec![0.0; k];
    for (trial, row) in table {
        let mut costs = Vec::with_capacity(k);
        for (idx, m) in methods.iter().enumerate() {
            let c =
                row.get(m).ok_or_else(|| Error::IncompleteCampaign(format!("trial {trial} has no record for {m}")))?;
            costs.push((idx, *c));
        }
        let awarded = rank_points(&costs.iter().map(|c| c.1).collect::<Vec<_>>());
        for (idx, pts) in awarded.into_iter().enumerate() {
            points[idx] += pts;
        }
    }
    let trials = table.len();
    let norm = (k.saturating_sub(1) * trials) as f64;
    Ok(methods.iter().zip(points).map(|(&m, p)| (m, if norm > 0.0 { p / norm } else { 0.0 })).collect())
}

/// Placement points for one trial's costs, with ties sharing the mean.
pub fn rank_points(costs: &[f64]) -> Vec<f64> {
    let k = costs.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| costs[i].total_cmp(&costs[j]));
    let tied = |u: f64, v: f64| u == v || (v - u).abs() <= TIE_TOLERANCE;
    let mut out = vec![0.0; k];
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k && tied(costs[order[end - 1]], costs[order[end]]) {
            end += 1;
        }
        // Places start..end earn k-1-start down to k-end.
        let mean = (start..end).map(|pos| (k - 1 - pos) as f64).sum::<f64>() / (end - start) as f64;
        for &i in &order[start..end] {
            out[i] = mean;
        }
        start = end;
    }
    out
}

pub fn campaign_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("trial,method,cost,wall_time,iterations,converged\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.trial,
            r.method,
            fmt_float(r.cost),
            fmt_float(r.wall_time),
            r.iterations,
            r.converged
        ));
    }
    out
}

pub fn q_csv(scores: &[(Method, f64)]) -> String {
    let mut out = String::from("method,Q\n");
    for (m, q) in scores {
        out.push_str(&format!("{},{}\n", m, fmt_float(*q)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_grid: Vec<usize>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Caps each flow run at this many integration steps.
    pub max_steps: Option<usize>,
    pub extra_edge_fraction: f64,
    pub brute_cap: usize,
}

impl SweepConfig {
    pub fn new(n_grid: Vec<usize>, methods: Vec<Method>, trials: usize, seed: u64) -> Self {
        SweepConfig {
            n_grid,
            methods,
            trials,
            seed,
            solver: SolverConfig::default(),
            max_steps: None,
            extra_edge_fraction: CAMPAIGN_EDGE_FRACTION,
            brute_cap: DEFAULT_BRUTE_FORCE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub method: Method,
    pub median_seconds: f64,
    /// Median of per-run `wall_time / iterations`.
    pub median_step_seconds: f64,
    pub trials: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median wall time per `(n, method)`, measured sequentially. Brute force is
/// skipped above its cap.
pub fn runtime_sweep(cfg: &SweepConfig) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &n in &cfg.n_grid {
        let instances: Vec<(Instance, Graph, u64)> = (0..cfg.trials)
            .map(|t| {
                let seed = trial_seed(cfg.seed, t);
                let gen = GeneratorConfig::scaled(n);
                Ok((random_instance(&gen, seed)?, Graph::random_connected(n, cfg.extra_edge_fraction, seed), seed))
            })
            .collect::<Result<_>>()?;
        for &method in &cfg.methods {
            if method == Method::Brute && n > cfg.brute_cap {
                continue;
            }
            let mut times = Vec::with_capacity(cfg.trials);
            let mut step_times = Vec::with_capacity(cfg.trials);
            for (inst, graph, seed) in &instances {
                let mut solver = method_config(method, &cfg.solver, Some(graph), inst.gamma());
                solver.seed = *seed;
                solver.sample_stride = 0;
                if let Some(steps) = cfg.max_steps {
                    solver.t_max = solver.t_max.min(steps as f64 * solver.h);
                    if let Some(s) = solver.anneal.as_mut() {
                        s.t_d = s.t_d.min((steps / s.steps.max(1)).max(1) as f64 * solver.h);
                    }
                }
                let local = method_instance(method, inst, &solver, GeneratorConfig::default().margin)?;
                let started = Instant::now();
                let outcome = run_method(method, &local, Some(graph), &solver, cfg.brute_cap)?;
                let secs = started.elapsed().as_secs_f64();
                times.push(secs);
                step_times.push(secs / outcome.iterations.max(1) as f64);
            }
            rows.push(ScalingRow {
                n,
                method,
                median_seconds: median(times),
                median_step_seconds: median(step_times),
                trials: cfg.trials,
            });
        }
    }
    Ok(rows)
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = String::from("n,method,median_seconds,median_step_seconds,trials\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.n,
            r.method,
            fmt_float(r.median_seconds),
            fmt_float(r.median_step_seconds),
            r.trials
        ));
    }
    out
}

/// Convenience for building the annealed variant of a solver config.
pub fn with_schedule(cfg: &SolverConfig, schedule: AnnealSchedule) -> SolverConfig {
    SolverConfig { anneal: Some(schedule), ..cfg.clone() }
}
