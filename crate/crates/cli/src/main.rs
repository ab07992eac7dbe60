use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use binnn_core::bench::{campaign_csv, method_config, parse_methods, q_csv, run_method, scaling_csv};
use binnn_core::io::{read_fractional_point, read_instance, trajectory_csv, write_instance};
use binnn_core::{
    anneal, random_instance, round_relaxed, run, run_campaign, runtime_sweep, terminal_diagnostics, AnnealKnob,
    AnnealSchedule, CampaignConfig, FlowKind, GeneratorConfig, Graph, Integrator, Method, SolverConfig, SweepConfig,
    Thermo, Topology, DEFAULT_BRUTE_FORCE_CAP,
};

#[derive(Parser)]
#[command(name = "binnn", version, about = "Hopfield-type flows for binary resource allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance file.
    Gen(GenArgs),
    /// Solve one instance file.
    Solve(SolveArgs),
    /// Run a randomized campaign and report Q scores.
    Bench(BenchArgs),
    /// Measure runtime against problem size.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1500.0)]
    p_ref: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    p_min: f64,
    #[arg(long, default_value_t = 50.0)]
    p_max: f64,
    #[arg(long, default_value_t = 2.0)]
    e_min: f64,
    #[arg(long, default_value_t = 3.0)]
    e_max: f64,
    /// Temperature the curvature design targets.
    #[arg(long, default_value_t = 1.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.1)]
    tau0: f64,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
    /// Also write a communication graph.
    #[arg(long)]
    topology: Option<Topology>,
    #[arg(long, default_value_t = 0.2)]
    edge_frac: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    BinnnC,
    BinnnD,
    Hnn,
    Greedy,
    Brute,
    Round,
}

#[derive(Clone, Copy, ValueEnum)]
enum KnobArg {
    TauUp,
    TDown,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegratorArg {
    Euler,
    Midpoint,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.1)]
    tau0: f64,
    #[arg(long, default_value_t = 0.1)]
    m: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-2)]
    h: f64,
    #[arg(long, default_value_t = 1e3)]
    t_max: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_x: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_y: f64,
    /// Additionally require the energy gradient to fall below this before stopping.
    #[arg(long)]
    tol_grad: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    eps_init: f64,
    #[arg(long, default_value_t = 1e-3)]
    jitter: f64,
    #[arg(long, value_enum, default_value_t = IntegratorArg::Euler)]
    integrator: IntegratorArg,
    #[arg(long, default_value_t = 1.4)]
    beta: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Simulated time per annealing round.
    #[arg(long, default_value_t = 10.0)]
    td: f64,
    #[arg(long, value_enum, default_value_t = KnobArg::TauUp)]
    knob: KnobArg,
}

impl SolverArgs {
    fn config(&self, seed: u64, annealed: bool) -> Result<SolverConfig> {
        let knob = match self.knob {
            KnobArg::TauUp => AnnealKnob::TauUp,
            KnobArg::TDown => AnnealKnob::TDown,
        };
        let cfg = SolverConfig {
            thermo: Thermo::new(self.t0, self.tau0, self.m)?,
            alpha: self.alpha,
            h: self.h,
            eps_init: self.eps_init,
            tol_x: self.tol_x,
            tol_y: self.tol_y,
            tol_grad: self.tol_grad,
            t_max: self.t_max,
            anneal: if annealed { Some(AnnealSchedule::new(self.beta, self.td, self.steps, knob)?) } else { None },
            jitter: self.jitter,
            seed,
            integrator: match self.integrator {
                IntegratorArg::Euler => Integrator::Euler,
                IntegratorArg::Midpoint => Integrator::Midpoint,
            },
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn schedule(&self) -> Result<AnnealSchedule> {
        Ok(self.config(0, true)?.anneal.expect("schedule requested"))
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: SolveMethod,
    /// Run the deterministic annealing schedule.
    #[arg(long)]
    anneal: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Graph used when the instance file lists no edges.
    #[arg(long, default_value = "random")]
    topology: Topology,
    #[arg(long, default_value_t = 0.2)]
    edge_frac: f64,
    /// Write the sampled trajectory as CSV.
    #[arg(long)]
    traj_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Fractional point for `round`.
    #[arg(long)]
    frac_point: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BRUTE_FORCE_CAP)]
    brute_cap: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated method list; defaults to the six campaign methods.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    with_brute: bool,
    /// Instance `P_r`; defaults to `30 n`.
    #[arg(long)]
    p_ref: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.2)]
    edge_frac: f64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated problem sizes.
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,80")]
    grid: Vec<usize>,
    #[arg(long, default_value = "greedy,binnn-c,binnn-d,hnn,brute")]
    methods: String,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on integration steps per flow run.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    edge_frac: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let n = args.n as usize;
    let cfg = GeneratorConfig {
        n,
        p_range: (args.p_min, args.p_max),
        exponent_range: (args.e_min, args.e_max),
        p_ref: args.p_ref,
        gamma: args.gamma,
        t0: args.t0,
        tau0: args.tau0,
        margin: args.margin,
    };
    let inst = random_instance(&cfg, args.seed)?;
    let graph = args.topology.map(|t| Graph::from_topology(t, n, args.edge_frac, args.seed));
    write_instance(&args.out, &inst, graph.as_ref()).with_context(|| format!("writing {}", args.out.display()))?;
    println!("n = {}", inst.n());
    println!("|p| = {:.6}", inst.p_norm_sq().sqrt());
    println!("P_r = {}", inst.p_ref());
    if let Some(g) = &graph {
        println!("edges = {}", g.edges().len());
    }
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let (inst, file_graph) =
        read_instance(&args.instance).with_context(|| format!("reading {}", args.instance.display()))?;
    let n = inst.n();
    let seed = args.seed;
    let label;
    let (bits, iterations, wall, converged, diagnostics, trajectory) = match args.method {
        SolveMethod::Greedy | SolveMethod::Brute => {
            let method = if matches!(args.method, SolveMethod::Greedy) { Method::Greedy } else { Method::Brute };
            label = method.name().to_string();
            let started = std::time::Instant::now();
            let o = run_method(method, &inst, None, &SolverConfig::default(), args.brute_cap)?;
            (o.bits, o.iterations, started.elapsed().as_secs_f64(), o.converged, None, None)
        }
        SolveMethod::Round => {
            label = "round".to_string();
            let path = args.frac_point.as_ref().context("`round` needs --frac-point")?;
            let x = read_fractional_point(path).with_context(|| format!("reading {}", path.display()))?;
            let started = std::time::Instant::now();
            let s = round_relaxed(&x, &inst)?;
            (s.bits(), s.chosen.len(), started.elapsed().as_secs_f64(), true, None, None)
        }
        SolveMethod::BinnnC | SolveMethod::BinnnD | SolveMethod::Hnn => {
            let kind = match args.method {
                SolveMethod::BinnnC => FlowKind::BinnnC,
                SolveMethod::BinnnD => FlowKind::BinnnD,
                _ => FlowKind::Hnn,
            };
            let graph = match (&file_graph, kind.is_distributed()) {
                (Some(g), _) => Some(g.clone()),
                (None, true) => Some(Graph::from_topology(args.topology, n, args.edge_frac, seed)),
                (None, false) => None,
            };
            let method = match (kind, args.anneal) {
                (FlowKind::BinnnC, false) => Method::BinnnC,
                (FlowKind::BinnnC, true) => Method::BinnnCDa,
                (FlowKind::BinnnD, false) => Method::BinnnD,
                (FlowKind::BinnnD, true) => Method::BinnnDDa,
                (FlowKind::Hnn, _) => Method::Hnn,
            };
            let mut cfg = method_config(method, &args.solver.config(seed, args.anneal)?, graph.as_ref(), inst.gamma());
            if matches!(kind, FlowKind::Hnn) && args.anneal {
                cfg.anneal = Some(args.solver.schedule()?);
            }
            cfg.sample_stride = if args.traj_out.is_some() { args.stride } else { 0 };
            label = format!("{kind}{}", if args.anneal { "-da" } else { "" });
            let r = if args.anneal {
                anneal(kind, &inst, graph.as_ref(), &cfg)?
            } else {
                run(kind, &inst, graph.as_ref(), &cfg)?
            };
            let d = terminal_diagnostics(&r, &inst, graph.as_ref(), cfg.tol_x)?;
            (r.bits.clone(), r.iterations, r.wall_time, r.converged, Some(d), Some(r.trajectory))
        }
    };
    let cost = inst.eval_p1(&bits.to_f64())?;
    println!("method: {label}");
    println!("bits: {bits}");
    println!("cost: {}", binnn_core::io::fmt_float(cost));
    println!("iterations: {iterations}");
    println!("wall_time: {:.6}", wall);
    println!("converged: {converged}");
    if let Some(d) = diagnostics {
        println!("grad_norm: {:.3e}", d.grad_norm);
        println!("min_hessian_eigenvalue: {:.6e}", d.min_hessian_eigenvalue);
        println!("local_min_certified: {}", d.local_min_certified);
    }
    if let (Some(path), Some(traj)) = (&args.traj_out, trajectory) {
        fs::write(path, trajectory_csv(&traj)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_report(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let n = args.n as usize;
    let mut cfg = CampaignConfig::new(n, args.trials as usize, args.seed);
    if let Some(list) = &args.methods {
        cfg.methods = parse_methods(list)?;
    }
    if args.with_brute && !cfg.methods.contains(&Method::Brute) {
        cfg.methods.push(Method::Brute);
    }
    if cfg.methods.contains(&Method::Brute) && n > cfg.brute_cap {
        bail!("brute force is limited to n <= {}", cfg.brute_cap);
    }
    cfg.generator.gamma = args.gamma;
    if let Some(p_ref) = args.p_ref {
        cfg.generator.p_ref = p_ref;
    }
    cfg.extra_edge_fraction = args.edge_frac;
    cfg.jobs = args.jobs;
    cfg.solver = args.solver.config(args.seed, false)?;
    cfg.solver.anneal = Some(args.solver.schedule()?);
    let records = run_campaign(&cfg)?;
    let scores = binnn_core::q_metric(&records)?;
    write_report(&args.out_dir, "campaign.csv", &campaign_csv(&records))?;
    write_report(&args.out_dir, "q.csv", &q_csv(&scores))?;
    println!("{:<12} {:>8}", "method", "Q");
    for (m, q) in &scores {
        println!("{:<12} {:>8.4}", m.name(), q);
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let methods = parse_methods(&args.methods)?;
    let mut cfg = SweepConfig::new(args.grid.clone(), methods, args.trials as usize, args.seed);
    cfg.solver = args.solver.config(args.seed, false)?;
    cfg.solver.anneal = Some(args.solver.schedule()?);
    cfg.max_steps = args.max_steps;
    cfg.extra_edge_fraction = args.edge_frac;
    let rows = runtime_sweep(&cfg)?;
    let csv = scaling_csv(&rows);
    write_report(&args.out_dir, "scaling.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_config_keeps_plain_flows_unannealed() {
        let args = SolverArgs::parse_from_defaults();
        let cfg = args.config(1, false).unwrap();
        assert!(method_config(Method::BinnnC, &cfg, None, 1.0).anneal.is_none());
        assert!(method_config(Method::BinnnCDa, &cfg, None, 1.0).anneal.is_some());
    }

    impl SolverArgs {
        fn parse_from_defaults() -> Self {
            #[derive(Parser)]
            struct Wrap {
                #[command(flatten)]
                s: SolverArgs,
            }
            Wrap::parse_from(["x"]).s
        }
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
