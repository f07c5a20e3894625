//! Effective run configuration: defaults, overridden by a key-value
//! config file, overridden by command-line flags. Every run echoes the
//! resolved configuration into its output directory.

use std::path::{Path, PathBuf};

use guiltgraph::evaluation::EvalConfig;
use guiltgraph::inference::BpConfig;
use guiltgraph::ingest::EntityMode;
use guiltgraph::labeling::LabelingConfig;
use guiltgraph::util::fnv1a_64;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// The on-disk config file shape. Unknown keys are rejected.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub mode: Option<EntityMode>,
    pub vt: Option<u32>,
    pub np: Option<u32>,
    pub nab: Option<u32>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub k: Option<u32>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub max_iterations: Option<u32>,
    pub convergence_tol: Option<f64>,
    pub threshold: Option<f64>,
    pub top_n: Option<usize>,
    pub window_days: Option<i64>,
    pub epsilon_sweep: Option<Vec<f64>>,
    pub vt_sweep: Option<Vec<u32>>,
    pub np_sweep: Option<Vec<u32>>,
    pub traffic: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub verdicts: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub enrich_dns: Option<PathBuf>,
    pub enrich_asn: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved parameters and input paths for one run.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub mode: EntityMode,
    pub vt: u32,
    pub np: u32,
    pub nab: u32,
    pub delta: f64,
    pub epsilon: f64,
    pub k: u32,
    pub seed: u64,
    /// The seed only if the user set one (flag or file), for commands
    /// whose inputs carry their own default seed.
    #[serde(skip)]
    pub seed_override: Option<u64>,
    pub threads: Option<usize>,
    pub max_iterations: u32,
    pub convergence_tol: f64,
    pub threshold: f64,
    pub top_n: usize,
    pub window_days: i64,
    pub epsilon_sweep: Vec<f64>,
    pub vt_sweep: Vec<u32>,
    pub np_sweep: Vec<u32>,
    pub traffic: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub verdicts: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub enrich_dns: Option<PathBuf>,
    pub enrich_asn: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub out: PathBuf,
}

impl Effective {
    pub fn resolve(flags: &crate::Cli, file: &FileConfig) -> Result<Self, CliError> {
        let labeling = LabelingConfig::default();
        let bp = BpConfig::default();
        let eval = EvalConfig::default();
        let eff = Effective {
            mode: flags.mode.or(file.mode).unwrap_or(labeling.mode),
            vt: flags.vt.or(file.vt).unwrap_or(labeling.vt),
            np: flags.np.or(file.np).unwrap_or(labeling.n_p),
            nab: flags.nab.or(file.nab).unwrap_or(labeling.n_ab),
            delta: flags.delta.or(file.delta).unwrap_or(bp.delta),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(bp.epsilon),
            k: flags.k.or(file.k).unwrap_or(eval.k),
            seed: flags.seed.or(file.seed).unwrap_or(eval.seed),
            seed_override: flags.seed.or(file.seed),
            threads: flags.threads.or(file.threads),
            max_iterations: flags
                .max_iterations
                .or(file.max_iterations)
                .unwrap_or(bp.max_iterations),
            convergence_tol: flags.tol.or(file.convergence_tol).unwrap_or(bp.convergence_tol),
            threshold: flags.threshold.or(file.threshold).unwrap_or(0.5),
            top_n: flags.top_n.or(file.top_n).unwrap_or(100),
            window_days: flags.window_days.or(file.window_days).unwrap_or(90),
            epsilon_sweep: flags
                .epsilons
                .clone()
                .or_else(|| file.epsilon_sweep.clone())
                .unwrap_or(eval.epsilon_sweep),
            vt_sweep: flags.vts.clone().or_else(|| file.vt_sweep.clone()).unwrap_or(eval.vt_sweep),
            np_sweep: flags.nps.clone().or_else(|| file.np_sweep.clone()).unwrap_or(eval.np_sweep),
            traffic: flags.traffic.clone().or_else(|| file.traffic.clone()),
            edges: flags.edges.clone().or_else(|| file.edges.clone()),
            verdicts: flags.verdicts.clone().or_else(|| file.verdicts.clone()),
            ground_truth: flags.ground_truth.clone().or_else(|| file.ground_truth.clone()),
            scores: flags.scores.clone().or_else(|| file.scores.clone()),
            enrich_dns: flags.enrich_dns.clone().or_else(|| file.enrich_dns.clone()),
            enrich_asn: flags.enrich_asn.clone().or_else(|| file.enrich_asn.clone()),
            catalog: flags.catalog.clone().or_else(|| file.catalog.clone()),
            out: flags
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        eff.validate()?;
        Ok(eff)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.delta > 0.5 && self.delta <= 1.0) {
            return bad(format!("delta must be in (0.5, 1], got {}", self.delta));
        }
        if !(self.epsilon >= 0.5 && self.epsilon < 1.0) {
            return bad(format!("epsilon must be in [0.5, 1), got {}", self.epsilon));
        }
        if self.vt < 1 || self.np < 1 || self.nab < 1 {
            return bad("vt, np and nab must be positive".to_string());
        }
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        if self.epsilon_sweep.is_empty() || self.vt_sweep.is_empty() || self.np_sweep.is_empty() {
            return bad("sweep lists must be non-empty".to_string());
        }
        Ok(())
    }

    pub fn labeling_config(&self) -> LabelingConfig {
        LabelingConfig { vt: self.vt, n_p: self.np, n_ab: self.nab, mode: self.mode }
    }

    pub fn bp_config(&self) -> BpConfig {
        BpConfig {
            delta: self.delta,
            epsilon: self.epsilon,
            max_iterations: self.max_iterations,
            convergence_tol: self.convergence_tol,
        }
    }

    /// Stable fingerprint of the resolved parameters, used to key result
    /// rows.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a_64(text.as_bytes()))
    }

    /// Writes the resolved configuration (and thereby the seed) next to
    /// the run's outputs.
    pub fn echo(&self, subcommand: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Io(format!("create {}: {e}", self.out.display())))?;
        let text = toml::to_string(self).expect("config serializes");
        let body = format!("# effective config for `gg {subcommand}`\n{text}");
        std::fs::write(self.out.join("config.toml"), body)
            .map_err(|e| CliError::Io(format!("write config echo: {e}")))?;
        Ok(())
    }
}
