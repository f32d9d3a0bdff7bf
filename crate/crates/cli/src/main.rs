//! `gsimc`: ingest interaction logs, build item graphs and eigenbases, fit
//! spectral filters, recommend, update users online, and evaluate.
//!
//! Exit status: 0 on success, 2 for usage errors and missing input files,
//! 1 when a pipeline stage fails.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use artifacts::MissingInput;
use commands::{ModelKind, SignalKind, SyntheticOptions, UpdateOptions, VerifyOptions};
use config::RunConfig;

/// A bad flag, config value or invocation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "gsimc", version, about = "Inductive one-bit matrix completion as graph signal sampling")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the run configuration. Each maps onto the config key of
/// the same name with dashes as underscores.
#[derive(Args)]
struct Settings {
    /// key = value configuration file; flags take precedence over it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Interaction log, user<TAB>item<TAB>timestamp
    #[arg(long, global = true, value_name = "FILE")]
    data: Option<String>,
    /// Output directory holding every artifact and the manifest
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,
    /// Reject malformed lines instead of skipping them
    #[arg(long, global = true, value_name = "BOOL")]
    strict: Option<String>,
    #[arg(long, global = true)]
    min_user_events: Option<String>,
    #[arg(long, global = true)]
    min_item_users: Option<String>,
    /// Cohort ratios train:val:test
    #[arg(long, global = true, value_name = "T:V:T")]
    split: Option<String>,
    /// hypergraph or covariance
    #[arg(long, global = true)]
    graph: Option<String>,
    /// exact or nystrom
    #[arg(long, global = true)]
    basis: Option<String>,
    /// Eigenpairs kept
    #[arg(long, global = true)]
    k: Option<String>,
    /// Sampled columns (nystrom)
    #[arg(long, global = true)]
    l: Option<String>,
    /// Oversampling (nystrom)
    #[arg(long, global = true)]
    p: Option<String>,
    /// Power iterations (nystrom)
    #[arg(long, global = true)]
    q: Option<String>,
    /// tikhonov, diffusion, random-walk, inverse-cosine or cutoff
    #[arg(long, global = true)]
    kernel: Option<String>,
    #[arg(long, global = true)]
    gamma: Option<String>,
    #[arg(long, global = true)]
    a: Option<String>,
    #[arg(long, global = true)]
    omega: Option<String>,
    #[arg(long, global = true)]
    phi: Option<String>,
    #[arg(long, global = true)]
    sigma_eta: Option<String>,
    #[arg(long, global = true)]
    sigma_nu: Option<String>,
    /// Comma-separated ranking cutoffs
    #[arg(long, global = true)]
    cutoffs: Option<String>,
    #[arg(long, global = true)]
    top_n: Option<String>,
}

impl Settings {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        let pairs = [
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("data", &self.data),
            ("out", &self.out),
            ("strict", &self.strict),
            ("min_user_events", &self.min_user_events),
            ("min_item_users", &self.min_item_users),
            ("split", &self.split),
            ("graph", &self.graph),
            ("basis", &self.basis),
            ("k", &self.k),
            ("l", &self.l),
            ("p", &self.p),
            ("q", &self.q),
            ("kernel", &self.kernel),
            ("gamma", &self.gamma),
            ("a", &self.a),
            ("omega", &self.omega),
            ("phi", &self.phi),
            ("sigma_eta", &self.sigma_eta),
            ("sigma_nu", &self.sigma_nu),
            ("cutoffs", &self.cutoffs),
            ("top_n", &self.top_n),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k, v))).collect()
    }

    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            if !path.is_file() {
                return Err(MissingInput(path.clone()).into());
            }
            cfg.apply_file(path)?;
        }
        for (key, value) in self.overrides() {
            cfg.set(key, value).with_context(|| format!("--{}", key.replace('_', "-")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and prune the log, split users, and record the split
    Ingest {
        /// First write a planted-cluster synthetic log to the data path
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = 300)]
        users: usize,
        #[arg(long, default_value_t = 200)]
        items: usize,
        #[arg(long, default_value_t = 8)]
        clusters: usize,
    },
    /// Build the item graph and compute its eigenbasis
    Eigen,
    /// Fix the filter kernel and estimate initial variances
    Fit,
    /// Read a user's item ids on stdin and print the top-N items
    Recommend,
    /// Feed one new item to a user's online state and print the top-N items
    Update {
        /// State file, rewritten in place
        #[arg(long, value_name = "FILE")]
        state: PathBuf,
        /// The newly interacted item id
        #[arg(long)]
        item: String,
        /// Start a new state for this user instead of reading one
        #[arg(long, value_name = "USER")]
        new_user: Option<String>,
    },
    /// Leave-last-out HR/NDCG on the test users
    Evaluate {
        #[arg(long, value_enum, default_value = "gs")]
        model: ModelKind,
        /// Also break metrics down by held-out item degree
        #[arg(long)]
        by_degree: bool,
    },
    /// Mean spectral energy of test users' signals per frequency
    Spectrum {
        #[arg(long, value_enum, default_value = "observed")]
        signal: SignalKind,
    },
    /// Check the recovery bounds numerically on the dataset's item graph
    Verify {
        /// 1 for noiseless interpolation, 2 for flip noise
        #[arg(long)]
        theorem: u8,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.125,0.3")]
        rho: Vec<f64>,
        #[arg(long = "phi-grid", value_delimiter = ',', default_value = "1,10,100")]
        phi_grid: Vec<f64>,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[arg(long, default_value_t = 0.5)]
        ones_fraction: f64,
        /// Eigenvalue index used as the bandlimit
        #[arg(long)]
        band_index: Option<usize>,
        /// Unobserved vertices (theorem 1); defaults to every 20th
        #[arg(long, value_delimiter = ',')]
        unobserved: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        powers: Vec<u32>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli
        .settings
        .resolve()
        .map_err(|e| anyhow::Error::new(UsageError(format!("{e:#}"))))?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    match cli.command {
        Command::Ingest {
            synthetic,
            users,
            items,
            clusters,
        } => commands::ingest(&cfg, synthetic.then_some(SyntheticOptions { users, items, clusters })),
        Command::Eigen => commands::eigen(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Recommend => commands::recommend(&cfg, std::io::stdin().lock()),
        Command::Update { state, item, new_user } => {
            commands::update_state(&cfg, UpdateOptions { state, item, new_user })
        }
        Command::Evaluate { model, by_degree } => commands::evaluate(&cfg, model, by_degree),
        Command::Spectrum { signal } => commands::spectrum(&cfg, signal),
        Command::Verify {
            theorem,
            rho,
            phi_grid,
            trials,
            ones_fraction,
            band_index,
            unobserved,
            powers,
        } => commands::verify(
            &cfg,
            VerifyOptions {
                theorem,
                rho,
                phi: phi_grid,
                trials,
                ones_fraction,
                band_index,
                unobserved,
                powers,
            },
        ),
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        cause.is::<UsageError>()
            || cause.is::<MissingInput>()
            || cause
                .downcast_ref::<std::io::Error>()
                .is_some_and(|e| e.kind() == std::io::ErrorKind::NotFound)
            || matches!(
                cause.downcast_ref::<gsimc_core::Error>(),
                Some(gsimc_core::Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound
            )
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = if is_usage(&err) { ("usage", 2) } else { ("pipeline", 1) };
            eprintln!("gsimc: {kind} error: {err:#}");
            ExitCode::from(code)
        }
    }
}
