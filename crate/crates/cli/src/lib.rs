//! Command implementations for the `slicemap` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use slicemap::config::ExperimentConfig;
use slicemap::metrics::{request_cost, validate_constraints};
use slicemap::model::{BlockReason, MappingResult, SliceRequest, Topology};
use slicemap::sim::{summarize, sweep, CapacityProfile, SweepPoint, SweepSpec};
use slicemap::strategy::{StrategyRegistry, Trace};

/// Bumped whenever the column set or order changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 13] = [
    "schema_version",
    "strategy",
    "arrival_rate_per_min",
    "seeds",
    "blocking_mean",
    "blocking_sd",
    "utilization_mean",
    "final_utilization_mean",
    "cost_mean",
    "blocked_no_path",
    "blocked_reach",
    "blocked_no_spectrum",
    "blocked_no_compute",
];

#[derive(Debug, Parser)]
#[command(name = "slicemap", version, about = "Network-slice embedding simulator for multi-core elastic optical networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a strategy x arrival-rate x seed sweep and write a CSV table.
    Run(RunArgs),
    /// Check a config and its topology without running anything.
    Validate(ValidateArgs),
    /// Explain how one strategy maps one request on a fresh substrate.
    Trace(TraceArgs),
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    /// Comma-separated arrival rates in requests per minute.
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    /// Use seeds 1..=N.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Requests per run.
    #[arg(long)]
    pub requests: Option<usize>,
    /// Compute capacity per node: high (4000) or limited (400).
    #[arg(long)]
    pub compute_profile: Option<CapacityProfile>,
    /// Weight of the segment-length spread in balanced ranking.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Forbid splitting one request's compute across nodes.
    #[arg(long)]
    pub no_colocation: bool,
    /// Disable the fallback of balanced variants to their standard variant.
    #[arg(long)]
    pub no_fallback: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = &self.strategies {
            cfg.strategies = s.iter().map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
        }
        if let Some(r) = &self.rates {
            cfg.arrival_rates = r.clone();
        }
        if let Some(n) = self.seeds {
            cfg.seeds = (1..=n).collect();
        }
        if let Some(n) = self.requests {
            cfg.n_requests = n;
        }
        if let Some(p) = self.compute_profile {
            cfg.compute_profile = p;
        }
        if let Some(l) = self.lambda {
            cfg.strategy.lambda = l;
        }
        if self.no_colocation {
            cfg.strategy.allow_colocation = false;
        }
        if self.no_fallback {
            cfg.strategy.fallback_enabled = false;
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML). Defaults to the bundled NSFNET-14 setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output CSV path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Topology file to check instead of the one named by the config.
    #[arg(long)]
    pub topology: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Topology file to use instead of the one named by the config.
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long)]
    pub strategy: String,
    /// Source node name.
    #[arg(long)]
    pub from: String,
    /// Destination node name.
    #[arg(long)]
    pub to: String,
    /// Bandwidth in Gbps.
    #[arg(long)]
    pub bandwidth: u32,
    /// Compute units.
    #[arg(long)]
    pub compute: u32,
    /// Seed for drawing compute-capable nodes when the topology lists none.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub overrides: Overrides,
}

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn with_topology(mut cfg: ExperimentConfig, topology: Option<&Path>) -> Result<ExperimentConfig> {
    if let Some(t) = topology {
        let abs = std::path::absolute(t).with_context(|| format!("resolving {}", t.display()))?;
        cfg.topology = abs.display().to_string();
    }
    Ok(cfg)
}

/// Sweep points as CSV with fixed six-decimal formatting.
pub fn write_csv<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in points {
        let f = |x: f64| format!("{x:.6}");
        let reasons: Vec<String> = p.blocked_by_mean.iter().map(|&x| f(x)).collect();
        let mut row = vec![
            SCHEMA_VERSION.to_string(),
            p.strategy.clone(),
            f(p.arrival_rate_per_min),
            p.seeds.to_string(),
            f(p.blocking_mean),
            f(p.blocking_sd),
            f(p.utilization_mean),
            f(p.final_utilization_mean),
            f(p.cost_mean),
        ];
        row.extend(reasons);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<Vec<SweepPoint>> {
    let mut cfg = load_config(args.config.as_deref())?;
    args.overrides.apply(&mut cfg);
    let spec = SweepSpec::from_config(&cfg)?;
    let records = sweep(&spec)?;
    let points = summarize(&records);
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(file, &points)?;
        }
        None => write_csv(std::io::stdout().lock(), &points)?,
    }
    Ok(points)
}

/// Returns the printed report and whether every check passed.
pub fn cmd_validate(args: &ValidateArgs) -> Result<(String, bool)> {
    let cfg = with_topology(load_config(args.config.as_deref())?, args.topology.as_deref())?;
    let mut text = String::new();
    let experiment = cfg.check();
    text.push_str(&experiment.to_string());
    let topo_ok = match cfg.load_topology() {
        Ok(file) => {
            let report = file.check();
            text.push_str(&format!("topology `{}`\n", file.name));
            text.push_str(&report.to_string());
            report.passed()
        }
        Err(e) => {
            text.push_str(&format!("FAIL topology: {e}\n"));
            false
        }
    };
    let ok = experiment.passed() && topo_ok;
    text.push_str(if ok { "result: pass\n" } else { "result: FAIL\n" });
    Ok((text, ok))
}

pub fn cmd_trace(args: &TraceArgs) -> Result<String> {
    let mut cfg = with_topology(load_config(args.config.as_deref())?, args.topology.as_deref())?;
    args.overrides.apply(&mut cfg);
    let spec = SweepSpec::from_config(&cfg)?;
    let topo: Topology = spec.topology(args.seed)?;
    let graph = topo.graph();
    let node = |name: &str| graph.node_by_name(name).with_context(|| format!("unknown node `{name}`"));
    let request = SliceRequest::new(1, node(&args.from)?, node(&args.to)?, args.bandwidth, args.compute);
    request.validate()?;
    let strategy = StrategyRegistry::builtin().create(&args.strategy, &cfg.strategy)?;

    let mut out = String::new();
    out.push_str(&format!(
        "request {} -> {}: {} Gbps, {} compute units\n",
        args.from, args.to, args.bandwidth, args.compute
    ));
    let listed: Vec<String> = topo.compute_nodes().map(|n| format!("{}:{}", graph.name(n), topo.residual_or_zero(n))).collect();
    out.push_str(&format!("compute nodes: {}\n", listed.join(" ")));
    let mut trace = Trace::on();
    let result = strategy.map(&request, &topo, &mut trace);
    for line in trace.lines() {
        out.push_str(line);
        out.push('\n');
    }
    match result {
        MappingResult::Accepted(m) => {
            out.push_str(&format!("result: accepted by {}\n", strategy.name()));
            for seg in &m.segments {
                out.push_str(&format!(
                    "  segment {}: {} core {} slots {}..{}\n",
                    seg.path.describe(graph),
                    seg.modulation,
                    seg.core + 1,
                    seg.slots.start,
                    seg.slots.end()
                ));
            }
            for p in &m.placements {
                out.push_str(&format!("  compute {} units at {}\n", p.units, graph.name(p.node)));
            }
            out.push_str(&format!("  slot-links {}, cost {:.0}\n", m.slot_links(), request_cost(&m, &cfg.cost)));
            let report = validate_constraints(&topo, &request, &m);
            if !report.all_passed() {
                bail!("strategy produced an invalid mapping:\n{report}");
            }
        }
        MappingResult::Blocked(reason) => {
            out.push_str(&format!("result: blocked by {} ({})\n", strategy.name(), describe_block(reason)));
        }
    }
    Ok(out)
}

fn describe_block(reason: BlockReason) -> &'static str {
    match reason {
        BlockReason::NoPath => "no_path: no route between the endpoints",
        BlockReason::ReachExceeded => "reach_exceeded: C1 reach fails on every candidate",
        BlockReason::NoSpectrum => "no_spectrum: no contiguous, continuous block in an allowed core (C2, C3, C5)",
        BlockReason::NoCompute => "no_compute: C4 compute capacity is insufficient",
    }
}

/// Applies `SLICEMAP_THREADS` to the global worker pool.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SLICEMAP_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("SLICEMAP_THREADS must be a number, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    Ok(())
}
