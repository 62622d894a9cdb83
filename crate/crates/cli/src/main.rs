//! `regraph`: build networks, run flow assignment, dissemination and
//! repair, and run the verification suites and sweeps.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 for bad
//! input, 3 for internal invariant violations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use regraph::analysis::report::{all_pass, to_json};
use regraph::analysis::suites::{run_suite, Suite, SuiteConfig};
use regraph::analysis::sweep::{cell_means, disconnected_csv, max_delay_csv, run_sweep, sweep_csv, SweepConfig};
use regraph::dissemination::{simulate, summary_csv, verify_delay_equals_distance};
use regraph::flowgraph::{build_flow_graph, contraction_stats, decompose_all, distance_delay_table};
use regraph::output::write_atomic;
use regraph::parallel::Execution;
use regraph::repair::resolve_repairs;
use regraph::rfa::compute_rfa;
use regraph::topology::{apply_churn, grow, parse_churn_script, Network};
use regraph::{Error, RandomSource};

#[derive(Parser, Debug)]
#[command(name = "regraph", version, about = "P2P streaming over random 1-regular digraph layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One end-to-end run: build, assign flows, repair, disseminate.
    Simulate(SimulateArgs),
    /// Run a verification suite and write its JSON report.
    Verify(VerifyArgs),
    /// Repair sweep over N and K with per-cell means.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Master seed; every output is a function of the flags and this seed.
    #[arg(long)]
    seed: u64,
    /// Depth-threshold exponent, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long, env = "REGRAPH_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Run replicas on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Network size; grown by N-1 joins unless a churn file is given.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Extra layers used for repair.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Dissemination horizon; defaults to four times the largest distance.
    #[arg(long)]
    slots: Option<usize>,
    /// Lines `join` or `leave <id>`.
    #[arg(long)]
    churn_file: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SuiteArg {
    Uniformity,
    Expansion,
    Halfsplit,
    Contraction,
    Delay,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Uniformity => Suite::Uniformity,
            SuiteArg::Expansion => Suite::Expansion,
            SuiteArg::Halfsplit => Suite::HalfSplit,
            SuiteArg::Contraction => Suite::Contraction,
            SuiteArg::Delay => Suite::Delay,
        }
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(value_enum)]
    suite: SuiteArg,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Replicas (samples for the uniformity suite).
    #[arg(long)]
    replicas: Option<usize>,
    /// Additive slack on probability-bound comparisons.
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    /// Chi-square significance level.
    #[arg(long, default_value_t = 1e-3)]
    alpha: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [10, 31, 100, 316, 1000, 3163])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2])]
    k: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    replicas: usize,
    /// Skip the dissemination cross-check on each base network.
    #[arg(long)]
    no_cross_check: bool,
    #[command(flatten)]
    common: Common,
}

fn write(dir: &Path, name: &str, contents: &str) -> regraph::Result<()> {
    write_atomic(&dir.join(name), contents.as_bytes())
}

fn build_network(args: &SimulateArgs, rng: &RandomSource) -> regraph::Result<Network> {
    match &args.churn_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidParameter(format!("cannot read churn file {}: {e}", path.display())))?;
            let script = parse_churn_script(&text)?;
            let mut net = Network::new(args.m)?;
            apply_churn(&mut net, &script, rng)?;
            if let Some(n) = args.n {
                if n != net.len() {
                    return Err(Error::InvalidParameter(format!("--n {n} but the churn script leaves {} peers", net.len())));
                }
            }
            Ok(net)
        }
        None => {
            let n = args.n.ok_or_else(|| Error::InvalidParameter("--n is required without --churn-file".into()))?;
            grow(n, args.m, rng)
        }
    }
}

fn cmd_simulate(args: &SimulateArgs) -> regraph::Result<u8> {
    let rng = RandomSource::new(args.common.seed);
    let mut net = build_network(args, &rng)?;
    net.extend_layers(args.k, &rng)?;
    let state = compute_rfa(&net, args.common.c, &rng)?;
    let (graphs, decomps) = decompose_all(&net, &state)?;
    let table = distance_delay_table(&decomps);
    let plan = resolve_repairs(&net, &state, &graphs, &decomps, args.k)?;
    let slots = args.slots.unwrap_or(4 * (table.max_delay() as usize + 1));
    let log = simulate(&net, &state, slots)?;
    let report = verify_delay_equals_distance(&log, &table)?;
    if !report.is_exact() {
        return Err(Error::Invariant(format!("{} delay mismatches", report.mismatches.len() + report.rate_violations)));
    }

    let dir = &args.common.out_dir;
    write(dir, "graph.txt", &net.dump())?;
    write(dir, "rfa.txt", &state.dump())?;
    for d in &decomps {
        write(dir, &format!("flow_{}.txt", d.flow()), &d.dump())?;
    }
    if state.m() == 2 {
        let stats = contraction_stats(&state, &build_flow_graph(&net, &state, 1)?)?;
        write(dir, "contraction.csv", &stats.to_csv()?)?;
    }
    write(dir, "delivery.csv", &log.to_csv()?)?;
    write(dir, "summary.csv", &summary_csv(&table, &report)?)?;
    write(dir, "repair.csv", &plan.to_csv()?)?;
    println!(
        "N={} M={} K={} d*={} disconnected={} after_repair={} extra_uploaders={} max_delay={} slots={}",
        net.len(),
        net.m(),
        args.k,
        state.dstar(),
        plan.disconnected_before,
        plan.disconnected_after,
        plan.extra_uploaders.len(),
        plan.delays.connected_max_delay(),
        slots
    );
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> regraph::Result<u8> {
    let suite = Suite::from(args.suite);
    let cfg = SuiteConfig {
        n: args.n,
        m: args.m,
        replicas: args.replicas,
        c: args.common.c,
        seed: args.common.seed,
        margin: args.margin,
        alpha: args.alpha,
        exec: args.common.exec(),
    };
    if !(0.0..1.0).contains(&args.alpha) || args.alpha == 0.0 || !args.margin.is_finite() || args.margin < 0.0 {
        return Err(Error::InvalidParameter("need 0 < alpha < 1 and margin ≥ 0".into()));
    }
    let records = run_suite(suite, &cfg)?;
    let json = to_json(&records)?;
    write(&args.common.out_dir, &format!("verify_{}.json", suite.name()), &json)?;
    print!("{json}");
    Ok(if all_pass(&records) { 0 } else { 1 })
}

fn cmd_sweep(args: &SweepArgs) -> regraph::Result<u8> {
    let cfg = SweepConfig {
        ns: args.n.clone(),
        m: args.m,
        ks: args.k.clone(),
        replicas: args.replicas,
        c: args.common.c,
        seed: args.common.seed,
        cross_check: !args.no_cross_check,
        exec: args.common.exec(),
    };
    let rows = run_sweep(&cfg)?;
    let means = cell_means(&rows);
    let dir = &args.common.out_dir;
    write(dir, "sweep.csv", &sweep_csv(&rows)?)?;
    write(dir, "disconnected_means.csv", &disconnected_csv(&means)?)?;
    write(dir, "max_delay_means.csv", &max_delay_csv(&means)?)?;
    println!("{} rows", rows.len());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
