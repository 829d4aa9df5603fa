mod demo;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use partstore::crypto::BackendKind;
use partstore::simulation::{figure_preset, run_scenario, write_csv, RateReport, ScenarioConfig};
use partstore::storage::{chat_key_baseline, estimate_overhead, CHAT_KEY_BYTES};

#[derive(Parser, Debug)]
#[command(name = "partstore", version, about = "Partitioned storage recovery: experiments, demo and overhead estimate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run Monte-Carlo reconstruction-rate experiments and write CSV.
    Simulate(SimulateArgs),
    /// Run one recovery on a small population and print the message trace.
    Demo(demo::DemoArgs),
    /// Print the storage overhead estimate against per-chat key backups.
    Overhead(OverheadArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
pub enum Crypto {
    Test,
    Production,
}

impl From<Crypto> for BackendKind {
    fn from(c: Crypto) -> Self {
        match c {
            Crypto::Test => BackendKind::Test,
            Crypto::Production => BackendKind::Production,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum Toggle {
    On,
    Off,
}

fn parse_rate(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1]"))
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Number of storage parts p.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..=255), conflicts_with = "figure")]
    parts: u16,
    /// Parts needed to rebuild the storage secret; defaults to p.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..=255), conflicts_with = "figure")]
    q: Option<u16>,
    /// Product of storage-level and part-level threshold rates.
    #[arg(long, default_value = "0.7", value_parser = parse_rate, conflicts_with = "figure")]
    t_target: f64,
    /// Trials per configuration.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    /// Master seed; every trial seed derives from it.
    #[arg(long, env = "PARTSTORE_SEED", default_value_t = 42)]
    seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: Option<u16>,
    /// One share per distinct peer instead of one per chat membership.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set, conflicts_with = "figure")]
    unique_peers: bool,
    /// Also share the storage secret across all peers.
    #[arg(long, value_enum, default_value_t = Toggle::On, conflicts_with = "figure")]
    ts: Toggle,
    /// Probability that a peer never answers during recovery.
    #[arg(long, value_parser = parse_fraction)]
    inactive_rate: Option<f64>,
    /// Run a preset sweep: 3 unique vs shared peers, 4 TS off/on, 5 q = p..p-2, 6 t_target 0.9 vs 0.7.
    #[arg(long, value_parser = clap::value_parser!(u8).range(3..=6))]
    figure: Option<u8>,
    /// CSV destination; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Crypto::Test)]
    crypto: Crypto,
}

#[derive(Args, Debug)]
struct OverheadArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    parts: u64,
    /// Distinct peers holding a share.
    #[arg(long)]
    peers: u64,
    /// Chats in the per-chat-key baseline.
    #[arg(long, default_value_t = 60)]
    chats: u64,
}

fn usage_error(message: String) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, message).exit()
}

fn simulate_configs(args: &SimulateArgs) -> Vec<ScenarioConfig> {
    let mut configs = match args.figure {
        Some(fig) => figure_preset(fig, args.trials as usize, args.seed).unwrap_or_else(|e| usage_error(e.to_string())),
        None => {
            let parts = args.parts as usize;
            let q = args.q.map_or(parts, usize::from);
            if q > parts {
                usage_error(format!("--q {q} exceeds --parts {parts}"));
            }
            vec![ScenarioConfig {
                q,
                t_target: args.t_target,
                unique_peers: args.unique_peers,
                ts_enabled: args.ts == Toggle::On,
                trials: args.trials as usize,
                master_seed: args.seed,
                ..ScenarioConfig::new(parts)
            }]
        }
    };
    for c in &mut configs {
        if let Some(rate) = args.inactive_rate {
            c.inactive_rate = rate;
        }
        c.crypto = args.crypto.into();
        if let Err(e) = c.validate() {
            usage_error(e.to_string());
        }
    }
    configs
}

fn summary_line(c: &ScenarioConfig, r: &RateReport) -> String {
    format!(
        "p={} q={} t_target={} unique={} ts={} inactive={}: r={:.5} r75={:.5} r50={:.5} r25={:.5} ra={:.5}{}",
        c.parts,
        c.q,
        c.t_target,
        c.unique_peers,
        if c.ts_enabled { "on" } else { "off" },
        c.inactive_rate,
        r.r,
        r.r75,
        r.r50,
        r.r25,
        r.ra,
        if r.aborted > 0 { format!(" ({} trials aborted)", r.aborted) } else { String::new() }
    )
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let configs = simulate_configs(&args);
    let jobs =
        args.jobs.map(usize::from).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut rows = Vec::with_capacity(configs.len());
    for c in configs {
        let report = run_scenario(&c, jobs)?;
        rows.push((c, report));
    }
    let mut summary: Box<dyn Write> = match &args.output {
        Some(path) => {
            write_csv(File::create(path)?, &rows)?;
            Box::new(io::stdout())
        }
        None => {
            write_csv(io::stdout().lock(), &rows)?;
            Box::new(io::stderr())
        }
    };
    for (c, r) in &rows {
        writeln!(summary, "{}", summary_line(c, r))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn overhead(args: OverheadArgs) -> ExitCode {
    let bytes = estimate_overhead(args.parts, args.peers);
    let baseline = chat_key_baseline(args.chats);
    println!("overhead: {bytes} bytes ({} parts, {} peers)", args.parts, args.peers);
    println!("baseline: {baseline} bytes ({} chat keys x {CHAT_KEY_BYTES})", args.chats);
    if baseline > 0 {
        println!("ratio: {:.4}", bytes as f64 / baseline as f64);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Demo(args) => demo::run(args),
        Command::Overhead(args) => Ok(overhead(args)),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
