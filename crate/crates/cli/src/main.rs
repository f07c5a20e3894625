//! `gg`: compromised-device detection pipeline over device-app graphs.
//!
//! Subcommands compose through files: `synth` or `ingest` produce the
//! graph-side inputs, `label` derives ground truth, `infer`/`eval`/`sweep`
//! run inference and evaluation, `topology` and `postanalyze` diagnose,
//! and `report` aggregates everything written to an output directory.
//! `GG_LOG={error|info|debug}` controls log verbosity.

mod commands;
mod config;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use error::CliError;
use guiltgraph::ingest::EntityMode;

mod error {
    /// One variant per documented failure class, each with its own exit
    /// code and a single-line diagnostic.
    #[derive(Debug)]
    pub enum CliError {
        /// Bad flags or config file contents (exit 2).
        Config(String),
        /// Missing or unreadable/unwritable files (exit 3).
        Io(String),
        /// Malformed input data (exit 4).
        Parse(String),
        /// Structurally impossible run, e.g. a class smaller than k
        /// (exit 5).
        Infeasible(String),
    }

    impl std::fmt::Display for CliError {
        fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            match self {
                CliError::Config(m) => write!(f, "config error: {m}"),
                CliError::Io(m) => write!(f, "io error: {m}"),
                CliError::Parse(m) => write!(f, "parse error: {m}"),
                CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            }
        }
    }

    impl CliError {
        pub fn exit_code(&self) -> i32 {
            match self {
                CliError::Config(_) => 2,
                CliError::Io(_) => 3,
                CliError::Parse(_) => 4,
                CliError::Infeasible(_) => 5,
            }
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gg", version, about = "Compromised-device detection on device-app bipartite graphs")]
pub struct Cli {
    /// Key-value config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Traffic-record file (TSV, 8 columns).
    #[arg(long, global = true)]
    pub traffic: Option<PathBuf>,
    /// Edge-list file (TSV device<TAB>app), used instead of --traffic.
    #[arg(long, global = true)]
    pub edges: Option<PathBuf>,
    /// Verdict snapshot CSV (entity_id,positives,total_engines).
    #[arg(long, global = true)]
    pub verdicts: Option<PathBuf>,
    /// Device ground-truth CSV (device_id,label).
    #[arg(long = "ground-truth", global = true)]
    pub ground_truth: Option<PathBuf>,
    /// Per-device score CSV (device_id,p_bad), as written by eval.
    #[arg(long, global = true)]
    pub scores: Option<PathBuf>,
    /// Passive-DNS enrichment CSV (domain,first_seen,last_seen).
    #[arg(long = "enrich-dns", global = true)]
    pub enrich_dns: Option<PathBuf>,
    /// IP-to-AS enrichment CSV (ip,asn).
    #[arg(long = "enrich-asn", global = true)]
    pub enrich_asn: Option<PathBuf>,
    /// Leak-keyword catalog CSV (category,type,keyword); bundled list by
    /// default.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// App-entity extraction mode.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<EntityMode>,
    /// Engine threshold for labeling an app bad.
    #[arg(long, global = true)]
    pub vt: Option<u32>,
    /// Popularity cutoff; apps above it are filtered.
    #[arg(long, global = true)]
    pub np: Option<u32>,
    /// Bad apps required to label a device bad.
    #[arg(long, global = true)]
    pub nab: Option<u32>,
    /// Prior strength for labeled devices.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Edge-potential homophily strength.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Cross-validation folds.
    #[arg(long, global = true)]
    pub k: Option<u32>,
    /// Seed for all sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Message-passing iteration cap.
    #[arg(long = "max-iterations", global = true)]
    pub max_iterations: Option<u32>,
    /// Message convergence tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Classification threshold on final badness.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Devices per extreme for post-analysis.
    #[arg(long = "top-n", global = true)]
    pub top_n: Option<usize>,
    /// Short-lived-domain window in days.
    #[arg(long = "window-days", global = true)]
    pub window_days: Option<i64>,
    /// Epsilon sweep values (comma separated).
    #[arg(long = "epsilons", global = true, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    /// vt sweep values (comma separated).
    #[arg(long = "vts", global = true, value_delimiter = ',')]
    pub vts: Option<Vec<u32>>,
    /// np sweep values (comma separated).
    #[arg(long = "nps", global = true, value_delimiter = ',')]
    pub nps: Option<Vec<u32>>,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_mode(s: &str) -> Result<EntityMode, String> {
    match s {
        "app-string" => Ok(EntityMode::AppString),
        "dst-ip" => Ok(EntityMode::DestinationIp),
        other => Err(format!("unknown mode `{other}`; use app-string or dst-ip")),
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a traffic file and write the canonical edge list.
    Ingest,
    /// Derive app and device ground truth from verdicts.
    Label,
    /// Run belief propagation with the full ground truth as training.
    Infer {
        /// Also run the label-propagation baseline.
        #[arg(long)]
        lp: bool,
    },
    /// Balanced k-fold cross-validation with ROC/AUC outputs.
    Eval,
    /// Cross-validated AUC over the epsilon/vt/np sweep grid.
    Sweep,
    /// Distance and centrality diagnostics over the ground-truth clusters.
    Topology {
        /// Also write the (large) pairwise heatmap-data file.
        #[arg(long)]
        heatmap: bool,
    },
    /// Privacy-leak and infrastructure analysis of scored devices.
    Postanalyze,
    /// Generate a synthetic corpus.
    Synth {
        /// Committed topology to generate: mobile-like or dns-like.
        #[arg(long = "synth-mode")]
        synth_mode: Option<String>,
        /// Generator config file (overrides --synth-mode).
        #[arg(long = "synth-config")]
        synth_config: Option<PathBuf>,
        /// Fraction of bad-device app packets to inject leaks into.
        #[arg(long = "plant-fraction")]
        plant_fraction: Option<f64>,
    },
    /// Aggregate the CSVs in a directory into one summary.
    Report {
        /// Directory holding outputs of previous runs (defaults to --out).
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GG_LOG", "info")).init();

    if let Err(err) = run(&cli) {
        eprintln!("gg: {err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file_cfg = match &cli.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    let eff = config::Effective::resolve(cli, &file_cfg)?;

    if let Some(threads) = eff.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }

    match &cli.command {
        Command::Ingest => commands::ingest(&eff),
        Command::Label => commands::label(&eff),
        Command::Infer { lp } => commands::infer(&eff, *lp),
        Command::Eval => commands::eval(&eff),
        Command::Sweep => commands::sweep(&eff),
        Command::Topology { heatmap } => commands::topology(&eff, *heatmap),
        Command::Postanalyze => commands::postanalyze(&eff),
        Command::Synth { synth_mode, synth_config, plant_fraction } => {
            commands::synth(&eff, synth_mode.as_deref(), synth_config.as_deref(), *plant_fraction)
        }
        Command::Report { input } => report::report(&eff, input.as_deref()),
    }
}
