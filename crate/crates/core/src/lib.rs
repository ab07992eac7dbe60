//! Hopfield-type neural flows for binary resource allocation with a global
//! mismatch penalty.
//!
//! The crate provides the problem model ([`problem`]), communication graphs
//! ([`graph`]), the energy functions and PT-inverse ([`energy`]), the HNN, BinNN-C and
//! BinNN-D flows with deterministic annealing ([`dynamics`]), reference solvers
//! ([`baselines`]), trial campaigns ([`bench`]) and file formats ([`io`]).

pub mod baselines;
pub mod bench;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod graph;
pub mod io;
pub mod problem;

pub use baselines::{brute_force, greedy, round_relaxed, SetSolution, DEFAULT_BRUTE_FORCE_CAP};
pub use bench::{
    q_metric, run_campaign, runtime_sweep, CampaignConfig, Method, MethodOutcome, ScalingRow, SweepConfig, TrialRecord,
};
pub use dynamics::{
    anneal, init_state, run, solve, terminal_diagnostics, AnnealKnob, AnnealSchedule, Diagnostics, FlowKind, FlowState,
    Integrator, RunResult, SolverConfig, TrajectorySample,
};
pub use energy::{pt_inverse, pt_inverse_scalar, CentralizedEnergy, DistributedEnergy, Thermo};
pub use error::{Error, Result};
pub use graph::{Graph, Topology};
pub use problem::{
    default_a, random_instance, round_to_binary, two_agent_instance, BinaryPoint, DesignMode, GeneratorConfig, Instance,
};
