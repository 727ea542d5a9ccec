//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line; the
//! test fails if any criterion fails.

#[path = "../../core/tests/reference_equivalence.rs"]
mod reference;

use std::time::Instant;

use clap::Parser;
use slicemap::config::ExperimentConfig;
use slicemap::fixtures::line_topology;
use slicemap::model::{MappingResult, NodeId, SliceRequest};
use slicemap::sim::{summarize, sweep, CapacityProfile, RunRecord, SweepPoint, SweepSpec};
use slicemap::strategy::{StrategyConfig, StrategyRegistry, Trace};
use slicemap_cli::{cmd_run, Cli, Command};

const STRATEGIES: [&str; 6] = ["dpsm", "dpsm-b", "wmsm", "wmsm-b", "sorted", "greedy"];
const RATES: [f64; 5] = [5.0, 10.0, 20.0, 40.0, 60.0];
const HIGH_RATES: [f64; 2] = [40.0, 60.0];
const MODERATE_RATES: [f64; 2] = [10.0, 20.0];
const REQUESTS: usize = 5000;
const MAIN_SEEDS: u64 = 5;
const LIMITED_SEEDS: u64 = 3;
/// One percentage point of blocking ratio.
const MARGIN: f64 = 0.01;
const MAX_RUNTIME_SECS: f64 = 300.0;

struct Outcome {
    lines: Vec<String>,
    failed: Vec<usize>,
}

impl Outcome {
    fn record(&mut self, n: usize, pass: bool, detail: String) {
        let line = format!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push(line);
        if !pass {
            self.failed.push(n);
        }
    }
}

fn sweep_config(profile: CapacityProfile, seeds: u64) -> ExperimentConfig {
    ExperimentConfig {
        strategies: STRATEGIES.iter().map(|s| s.to_string()).collect(),
        arrival_rates: RATES.to_vec(),
        seeds: (1..=seeds).collect(),
        n_requests: REQUESTS,
        compute_profile: profile,
        ..ExperimentConfig::default()
    }
}

fn run_sweep(cfg: &ExperimentConfig) -> (Vec<RunRecord>, f64) {
    let spec = SweepSpec::from_config(cfg).expect("valid sweep config");
    let t = Instant::now();
    let records = sweep(&spec).expect("sweep completes without invariant violations");
    (records, t.elapsed().as_secs_f64())
}

fn point<'a>(points: &'a [SweepPoint], strategy: &str, rate: f64) -> &'a SweepPoint {
    points.iter().find(|p| p.strategy == strategy && p.arrival_rate_per_min == rate).expect("sweep point")
}

fn halving(out: &mut Outcome) {
    let topo = line_topology(&[700.0, 800.0], 7, 120, &[(1, 4000)]);
    let cfg = StrategyConfig::default();
    let registry = StrategyRegistry::builtin();
    let mut mismatches = Vec::new();
    for name in ["wmsm", "dpsm-b"] {
        let split = registry.create(name, &cfg).unwrap();
        let direct = registry.create("dpsm", &cfg).unwrap();
        for bw in 1..=20 {
            let r = SliceRequest::new(1, NodeId(0), NodeId(2), bw, 5);
            let (MappingResult::Accepted(a), MappingResult::Accepted(b)) =
                (direct.map(&r, &topo, &mut Trace::off()), split.map(&r, &topo, &mut Trace::off()))
            else {
                mismatches.push(format!("{name} bw {bw}: blocked"));
                continue;
            };
            let full = a.segments[0].slots.len;
            let halves: Vec<usize> = b.segments.iter().map(|s| s.slots.len).collect();
            if b.segments.len() != 2 || halves.iter().any(|&h| 2 * h != full) {
                mismatches.push(format!("{name} bw {bw}: dpsm {full} per link, split {halves:?}"));
            }
        }
    }
    let detail = if mismatches.is_empty() {
        "700+800 km chain, bw 1..=20: wmsm and dpsm-b use exactly half of dpsm's per-link slots".to_string()
    } else {
        mismatches.join("; ")
    };
    out.record(3, mismatches.is_empty(), detail);
}

fn brute_force(out: &mut Outcome) {
    let results = reference::check_all();
    let pass = results.iter().all(|(_, n, _, _, m)| *n >= 200 && m.is_empty());
    let detail: Vec<String> = results
        .iter()
        .map(|(name, n, reqs, acc, m)| format!("{name} {n} instances/{reqs} requests/{acc} accepted/{} mismatches", m.len()))
        .collect();
    out.record(4, pass, detail.join(", "));
}

fn determinism(out: &mut Outcome) {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("results{i}.csv"));
        let argv = ["slicemap", "run", "--rates", "20,60", "--seeds", "2", "--requests", "2000", "--out", path.to_str().unwrap()];
        let Command::Run(args) = Cli::try_parse_from(argv).unwrap().command else { unreachable!() };
        cmd_run(&args).unwrap();
        outputs.push(std::fs::read(&path).unwrap());
    }
    let rows = String::from_utf8_lossy(&outputs[0]).lines().count() - 1;
    out.record(
        10,
        outputs[0] == outputs[1] && rows == 12,
        format!("two executions ({rows} rows, {} bytes) are byte-identical: {}", outputs[0].len(), outputs[0] == outputs[1]),
    );
}

#[test]
fn acceptance() {
    let mut out = Outcome { lines: Vec::new(), failed: Vec::new() };

    let (records, secs) = run_sweep(&sweep_config(CapacityProfile::High, MAIN_SEEDS));
    let points = summarize(&records);
    let accepted: u64 = records.iter().map(|r| r.accepted).sum();
    let audited: u64 = records.iter().map(|r| r.audited).sum();
    out.record(
        1,
        audited == accepted && secs < MAX_RUNTIME_SECS,
        format!("{} runs, {accepted} accepted mappings, {audited} validated, 0 violations, sweep took {secs:.0} s", records.len()),
    );

    let restored = records.iter().filter(|r| r.restored).count();
    let counted = records.iter().all(|r| r.accepted + r.blocked == r.n_requests as u64);
    out.record(
        2,
        restored == records.len() && counted,
        format!("{restored}/{} runs restored the initial state after draining", records.len()),
    );

    halving(&mut out);
    brute_force(&mut out);

    let b = |s: &str, rate: f64| point(&points, s, rate).blocking_mean;
    let mut trend_ok = true;
    let mut trend = Vec::new();
    for rate in HIGH_RATES {
        let checks = [
            ("wmsm-b<=wmsm", b("wmsm-b", rate) <= b("wmsm", rate) + MARGIN),
            ("wmsm<=dpsm", b("wmsm", rate) <= b("dpsm", rate) + MARGIN),
            ("dpsm<greedy", b("dpsm", rate) < b("greedy", rate) + MARGIN),
            ("dpsm<sorted", b("dpsm", rate) < b("sorted", rate) + MARGIN),
        ];
        let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
        trend_ok &= failed.is_empty();
        trend.push(format!(
            "rate {rate}: wmsm-b {:.4} wmsm {:.4} dpsm {:.4} greedy {:.4} sorted {:.4}{}",
            b("wmsm-b", rate),
            b("wmsm", rate),
            b("dpsm", rate),
            b("greedy", rate),
            b("sorted", rate),
            if failed.is_empty() { String::new() } else { format!(" (violated: {})", failed.join(", ")) }
        ));
    }
    out.record(5, trend_ok, trend.join("; "));

    let top = *RATES.last().unwrap();
    let gap = (1.0 - b("wmsm-b", top)) - (1.0 - b("sorted", top));
    out.record(6, gap >= 0.10, format!("rate {top}: wmsm-b acceptance exceeds sorted by {:.2} pp (need >= 10)", gap * 100.0));

    let (cb, cs) = (point(&points, "wmsm-b", top).cost_mean, point(&points, "sorted", top).cost_mean);
    let saving = 1.0 - cb / cs;
    out.record(
        7,
        saving >= 0.20,
        format!("rate {top}: mean cost wmsm-b {cb:.1} vs sorted {cs:.1}, {:.1}% lower (need >= 20%)", saving * 100.0),
    );

    let (limited, _) = run_sweep(&sweep_config(CapacityProfile::Limited, LIMITED_SEEDS));
    let lp = summarize(&limited);
    let lb = |s: &str, rate: f64| point(&lp, s, rate).blocking_mean;
    let mut stress_ok = true;
    let mut stress = Vec::new();
    for rate in MODERATE_RATES {
        for s in ["sorted", "greedy"] {
            let ratio = lb(s, rate) / b(s, rate);
            stress_ok &= ratio >= 2.0;
            stress.push(format!("{s}@{rate} {:.4}/{:.4}={ratio:.2}x", lb(s, rate), b(s, rate)));
        }
    }
    for rate in RATES {
        let best = STRATEGIES.iter().filter(|&&s| s != "wmsm-b").map(|s| lb(s, rate)).fold(f64::INFINITY, f64::min);
        if lb("wmsm-b", rate) > best {
            stress_ok = false;
            stress.push(format!("wmsm-b@{rate} {:.4} not lowest (best other {best:.4})", lb("wmsm-b", rate)));
        }
    }
    out.record(8, stress_ok, stress.join("; "));

    let mut worst = (0.0, String::new());
    for p in &points {
        let rel = if p.blocking_mean > 0.0 { p.blocking_sd / p.blocking_mean } else { 0.0 };
        if rel > worst.0 {
            worst = (rel, format!("{}@{}", p.strategy, p.arrival_rate_per_min));
        }
    }
    let over: Vec<String> = points
        .iter()
        .filter(|p| p.blocking_mean > 0.0 && p.blocking_sd / p.blocking_mean > 0.10)
        .map(|p| format!("{}@{} {:.1}%", p.strategy, p.arrival_rate_per_min, 100.0 * p.blocking_sd / p.blocking_mean))
        .collect();
    out.record(
        9,
        over.is_empty(),
        format!(
            "max relative sd {:.1}% at {} over {} points{}",
            worst.0 * 100.0,
            worst.1,
            points.len(),
            if over.is_empty() { String::new() } else { format!("; above 10%: {}", over.join(", ")) }
        ),
    );

    determinism(&mut out);

    let mut monotone = Vec::new();
    for s in STRATEGIES {
        for w in RATES.windows(2) {
            if b(s, w[1]) + MARGIN < b(s, w[0]) {
                monotone.push(format!("{s} {}->{}", w[0], w[1]));
            }
        }
    }
    println!(
        "load trend: {} blocking is non-decreasing in arrival rate for every strategy{}",
        if monotone.is_empty() { "PASS" } else { "FAIL" },
        if monotone.is_empty() { String::new() } else { format!(" (violated: {})", monotone.join(", ")) }
    );

    assert!(monotone.is_empty(), "blocking decreases with load: {monotone:?}");
    assert!(out.failed.is_empty(), "failed criteria {:?}:\n{}", out.failed, out.lines.join("\n"));
}
