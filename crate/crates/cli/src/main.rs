use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedmesh::net_model::{self, CapacityScenario};
use fedmesh::netgen::{self, GenParams, Preset};
use fedmesh::sim::{self, ExperimentConfig, SimError, Topology};

/// Multigraph topology design for cross-silo federated learning.
#[derive(Debug, Parser)]
#[command(name = "fedmesh", version, about)]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the overlay, multiplicities and state schedule of a network.
    Inspect {
        /// Network file (JSON).
        #[arg(long)]
        network: PathBuf,
        /// star, mst, ring or multigraph.
        #[arg(long, default_value = "multigraph")]
        topology: Topology,
        /// Maximum parallel edges per silo pair.
        #[arg(long, default_value_t = 5)]
        t: u32,
        /// as-file, homogeneous:<gbps> or orchestrator:<hub>:<gbps>.
        #[arg(long)]
        capacity_scenario: Option<CapacityScenario>,
        /// Directory for the schedule file.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run one experiment.
    Run(RunArgs),
    /// Run several topologies on the same network, task and seed.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Topologies to compare.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "star,mst,ring,multigraph"
        )]
        topologies: Vec<Topology>,
    },
    /// Run the multigraph for several values of t.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Values of t to sweep.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        ts: Vec<u32>,
    },
    /// Write a synthetic network file.
    GenNetwork {
        /// Silo/link counts of a named topology.
        #[arg(long, conflicts_with = "nodes")]
        preset: Option<Preset>,
        /// Number of silos (ignored with --preset).
        #[arg(long, default_value_t = 11)]
        nodes: usize,
        /// Fraction of all silo pairs that get a link.
        #[arg(long, default_value_t = 1.0)]
        density: f64,
        /// Shortest and longest link latency in ms.
        #[arg(long, value_parser = parse_range, default_value = "1,50")]
        latency_range: (f64, f64),
        /// Fastest and slowest local update in ms.
        #[arg(long, value_parser = parse_range, default_value = "1,3")]
        compute_range: (f64, f64),
        /// Number of geographic clusters silos are drawn around.
        #[arg(long, default_value_t = 1)]
        clusters: usize,
        /// Model size in Mbit.
        #[arg(long, default_value_t = 4.62)]
        model_size_mbit: f64,
        /// Local updates per communication round.
        #[arg(long, default_value_t = 1)]
        local_updates: u32,
        /// as-file, homogeneous:<gbps> or orchestrator:<hub>:<gbps>.
        #[arg(long)]
        capacity_scenario: Option<CapacityScenario>,
        /// Network name stored in the file.
        #[arg(long)]
        name: Option<String>,
        /// Generator seed.
        #[arg(long, env = "FEDMESH_SEED", default_value_t = 0)]
        seed: u64,
        /// Output network file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (JSON). Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network file (JSON); required without --config.
    #[arg(long)]
    network: Option<PathBuf>,
    /// star, mst, ring or multigraph [default: multigraph].
    #[arg(long)]
    topology: Option<Topology>,
    /// Maximum parallel edges per silo pair [default: 5].
    #[arg(long)]
    t: Option<u32>,
    /// Communication rounds [default: 100].
    #[arg(long)]
    rounds: Option<usize>,
    /// Seed; falls back to FEDMESH_SEED, then the config, then 0.
    #[arg(long, env = "FEDMESH_SEED")]
    seed: Option<u64>,
    /// as-file, homogeneous:<gbps> or orchestrator:<hub>:<gbps>.
    #[arg(long)]
    capacity_scenario: Option<CapacityScenario>,
    /// Output directory; each run gets a subdirectory named by its config hash.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// `lo,hi` pair of milliseconds.
fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((num(lo)?, num(hi)?))
}

const DEFAULT_ROUNDS: usize = 100;

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("cannot write {}: {e}", path.display()))
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match (&self.config, &self.network) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(net)) => {
                ExperimentConfig::new(net.clone(), Topology::Multigraph, DEFAULT_ROUNDS, 0)
            }
            (None, None) => {
                return Err(Failure::Validation(
                    "either --config or --network is required".into(),
                ))
            }
        };
        if let (Some(_), Some(net)) = (&self.config, &self.network) {
            cfg.network = net.clone();
        }
        if let Some(t) = self.topology {
            cfg.topology = t;
        }
        if let Some(t) = self.t {
            cfg.t = t;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = self.capacity_scenario {
            cfg.capacity_scenario = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

/// `<out>/<config hash>/` with the config echo and the result file.
fn write_run(out: &Path, run: &sim::TrainRun) -> Result<PathBuf, Failure> {
    let dir = out.join(run.config.digest());
    write_file(&dir.join("config.json"), &(run.config.to_json() + "\n"))?;
    let result = dir.join("result.txt");
    write_file(&result, &sim::render_result(run))?;
    Ok(result)
}

fn cmd_inspect(
    network: &Path,
    topology: Topology,
    t: u32,
    scenario: Option<CapacityScenario>,
    out: &Path,
) -> Result<(), Failure> {
    let base = net_model::load_network(network).map_err(SimError::from)?;
    let spec = scenario
        .unwrap_or_default()
        .apply(&base)
        .map_err(SimError::from)?;
    let plan = sim::plan_topology(&spec, topology, t)?;
    println!(
        "network: {} ({} silos, {} links)",
        spec.name(),
        spec.silo_count(),
        spec.link_count()
    );
    match topology {
        Topology::Multigraph => println!("topology: multigraph (t={t})"),
        other => println!("topology: {other}"),
    }
    if plan.overlay.metric_warning() {
        println!("warning: connectivity delays violate the triangle inequality");
    }
    println!("overlay edges:");
    for e in plan.overlay.edges() {
        let n = plan
            .multigraph
            .as_ref()
            .and_then(|mg| mg.multiplicity(*e))
            .unwrap_or(1);
        println!("  {e}  delay={:.3} ms  n={n}", plan.delays[e]);
    }
    let states = plan.schedule.states();
    let any_isolated = states.iter().any(|s| !s.isolated_nodes().is_empty());
    if any_isolated {
        println!("s_max={}", plan.schedule.s_max());
        for (i, s) in states.iter().enumerate() {
            let iso: Vec<String> = s.isolated_nodes().iter().map(|v| v.to_string()).collect();
            if iso.is_empty() {
                println!("  state {i}: no isolated nodes");
            } else {
                println!("  state {i}: isolated {{{}}}", iso.join(", "));
            }
        }
    } else {
        println!("s_max={}, no isolated nodes", plan.schedule.s_max());
    }
    let path = out.join("schedule.csv");
    write_file(&path, &sim::render_schedule(&plan.schedule))?;
    println!("schedule written to {}", path.display());
    Ok(())
}

fn cmd_run(args: &RunArgs, verbose: bool) -> Result<(), Failure> {
    let cfg = args.config()?;
    let base = net_model::load_network(&cfg.network).map_err(SimError::from)?;
    if verbose {
        eprintln!("running {} for {} rounds", cfg.label(), cfg.rounds);
    }
    let run = sim::run_on_network(&cfg, &base)?;
    let ring = sim::ring_baseline_if_possible(&cfg, &base)?;
    let path = write_run(&args.out, &run)?;
    println!("topology: {}", cfg.label());
    println!("rounds: {}", run.records.len());
    println!("mean cycle: {:.3} ms", run.cycle.mean_ms);
    println!("total time: {:.3} ms", run.total_time_ms);
    println!("final loss: {:.6}", run.final_loss());
    match ring {
        Some(ring) => println!("reduction vs ring: {:.2}", ring / run.cycle.mean_ms),
        None => println!("reduction vs ring: n/a (network cannot host a ring)"),
    }
    println!("result: {}", path.display());
    Ok(())
}

fn cmd_compare(args: &RunArgs, topologies: &[Topology], verbose: bool) -> Result<(), Failure> {
    let base = args.config()?;
    let configs: Vec<ExperimentConfig> = topologies
        .iter()
        .map(|&topology| ExperimentConfig {
            topology,
            ..base.clone()
        })
        .collect();
    if verbose {
        eprintln!("comparing {} topologies", configs.len());
    }
    let cmp = sim::compare_topologies(&configs)?;
    for run in &cmp.runs {
        write_run(&args.out, run)?;
    }
    let csv = cmp.to_csv();
    let path = args.out.join(format!("compare-{}.csv", base.digest()));
    write_file(&path, &csv)?;
    println!(
        "{:<16} {:>14} {:>16} {:>12} {:>8}",
        "topology", "mean_cycle_ms", "total_time_ms", "final_loss", "factor"
    );
    for r in &cmp.rows {
        println!(
            "{:<16} {:>14.3} {:>16.3} {:>12.6} {:>8}",
            r.label,
            r.mean_cycle_ms,
            r.total_time_ms,
            r.final_loss,
            r.reduction_vs_ring
                .map(|f| format!("{f:.2}"))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    println!("table: {}", path.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs, ts: &[u32], verbose: bool) -> Result<(), Failure> {
    let base = args.config()?;
    if verbose {
        eprintln!("sweeping t over {ts:?}");
    }
    let rows = sim::sweep_t(&base, ts)?;
    let path = args.out.join(format!("sweep-{}.csv", base.digest()));
    write_file(&path, &sim::sweep_to_csv(&rows))?;
    println!("{:>4} {:>14} {:>12}", "t", "mean_cycle_ms", "final_loss");
    for r in &rows {
        println!(
            "{:>4} {:>14.3} {:>12.6}",
            r.t, r.mean_cycle_ms, r.final_loss
        );
    }
    println!("table: {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose > 0;
    let result = match &cli.command {
        Command::Inspect {
            network,
            topology,
            t,
            capacity_scenario,
            out,
        } => cmd_inspect(network, *topology, *t, *capacity_scenario, out),
        Command::Run(args) => cmd_run(args, verbose),
        Command::Compare { run, topologies } => cmd_compare(run, topologies, verbose),
        Command::Sweep { run, ts } => cmd_sweep(run, ts, verbose),
        Command::GenNetwork {
            preset,
            nodes,
            density,
            latency_range,
            compute_range,
            clusters,
            model_size_mbit,
            local_updates,
            capacity_scenario,
            name,
            seed,
            out,
        } => {
            let mut p = match preset {
                Some(p) => GenParams::from_preset(*p, *seed),
                None => GenParams::complete(*nodes, *seed).with_density(*density),
            };
            p.latency_ms = *latency_range;
            p.compute_ms = *compute_range;
            p.clusters = *clusters;
            p.model_size_mbit = *model_size_mbit;
            p.local_updates = *local_updates;
            p.capacity = capacity_scenario.unwrap_or_default();
            if let Some(n) = name {
                p.name = n.clone();
            }
            netgen::generate_network(&p)
                .map_err(|e| Failure::Validation(e.to_string()))
                .and_then(|spec| {
                    write_file(out, &net_model::network_to_string(&spec))?;
                    println!(
                        "wrote {} ({} silos, {} links)",
                        out.display(),
                        spec.silo_count(),
                        spec.link_count()
                    );
                    Ok(())
                })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
