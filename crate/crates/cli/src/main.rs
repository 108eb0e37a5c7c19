//! `faemb`: batch front end for training, signature extraction, indexing and
//! evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{Config, ConfigError};

#[derive(Parser, Debug)]
#[command(name = "faemb", version, about = "Function-approximation embeddings for image retrieval")]
struct Cli {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Number of anchors (coding.n).
    #[arg(long, global = true, value_name = "N")]
    n: Option<String>,
    /// Sparsity/locality weight (coding.mu).
    #[arg(long, global = true, value_name = "MU")]
    mu: Option<String>,
    /// Coding variant: faemb or ffaemb (coding.variant).
    #[arg(long, global = true, value_name = "VARIANT")]
    variant: Option<String>,
    /// Power-law exponent (aggregation.alpha).
    #[arg(long, global = true, value_name = "ALPHA")]
    alpha: Option<String>,
    /// Leading whitened components to discard, or `auto` (whitening.drop).
    #[arg(long, global = true, value_name = "DROP")]
    drop: Option<String>,
    /// Output dimension of rotation + normalization (rn.keep).
    #[arg(long, global = true, value_name = "KEEP")]
    keep: Option<String>,
    /// ITQ code length (itq.bits).
    #[arg(long, global = true, value_name = "BITS")]
    bits: Option<String>,
    /// Worker threads, 0 for all cores (run.threads).
    #[arg(long, global = true, value_name = "THREADS")]
    threads: Option<String>,
    /// Seed for sampling, k-means and ITQ (run.seed).
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<String>,
    /// Directory holding fitted models (paths.model_dir).
    #[arg(long, global = true, value_name = "DIR")]
    model_dir: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn the anchors from the learning images.
    TrainCoding,
    /// Write per-descriptor embeddings of every image.
    Embed {
        /// Descriptor file (default: paths.corpus).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit whitening on embedded learning descriptors.
    FitAgg,
    /// Compute one signature per image.
    Aggregate {
        /// Descriptor file (default: paths.corpus).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Apply the fitted rotation + normalization.
        #[arg(long)]
        rn: bool,
    },
    /// Fit rotation + normalization (default: on learning-image signatures).
    FitRn {
        /// Training signatures.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit ITQ (default: on learning-image signatures).
    FitItq {
        /// Training signatures.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Binarize signatures with the fitted ITQ model.
    Encode {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a search index from signatures or codes.
    Index {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rank the index for the given query ids.
    Search {
        #[arg(long)]
        index: Option<PathBuf>,
        /// Signatures or codes holding the queries (default: the index).
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Mean average precision of the index against ground truth.
    Eval {
        #[arg(long)]
        index: Option<PathBuf>,
        /// Ground truth file (default: paths.ground_truth).
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Write a planted-cluster corpus, learning set and ground truth.
    Synth {
        /// Noise level (synth.sigma).
        #[arg(long)]
        sigma: Option<String>,
    },
    /// Time FAemb against F-FAemb embedding on random descriptors.
    Bench {
        /// Number of descriptors (bench.descriptors).
        #[arg(long)]
        descriptors: Option<String>,
        /// Descriptor dimension (bench.dim).
        #[arg(long)]
        dim: Option<String>,
    },
    /// Inspect the configuration.
    Config {
        /// Print every key with its default value.
        #[arg(long)]
        dump_defaults: bool,
    },
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, &'static str, &str)> {
        let mut out = Vec::new();
        let flags = [
            ("coding", "n", &self.n),
            ("coding", "mu", &self.mu),
            ("coding", "variant", &self.variant),
            ("aggregation", "alpha", &self.alpha),
            ("whitening", "drop", &self.drop),
            ("rn", "keep", &self.keep),
            ("itq", "bits", &self.bits),
            ("run", "threads", &self.threads),
            ("run", "seed", &self.seed),
            ("paths", "model_dir", &self.model_dir),
        ];
        for (s, k, v) in flags {
            if let Some(v) = v {
                out.push((s, k, v.as_str()));
            }
        }
        match &self.command {
            Command::Synth { sigma: Some(v) } => out.push(("synth", "sigma", v)),
            Command::Bench { descriptors, dim } => {
                if let Some(v) = descriptors {
                    out.push(("bench", "descriptors", v));
                }
                if let Some(v) = dim {
                    out.push(("bench", "dim", v));
                }
            }
            _ => {}
        }
        out
    }

    fn config(&self) -> Result<Config> {
        let (mut cfg, mut bad) = Config::load(self.config.as_deref())?;
        for (s, k, v) in self.overrides() {
            if let Err(e) = cfg.set(s, k, v) {
                bad.push(format!("--{}: {e}", k.replace('_', "-")));
            }
        }
        bad.extend(cfg.validate());
        if !bad.is_empty() {
            return Err(ConfigError { source: self.config.clone(), violations: bad }.into());
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Config { dump_defaults } = cli.command {
        if dump_defaults {
            print!("{}", Config::default().dump());
        } else {
            print!("{}", cli.config()?.dump());
        }
        return Ok(());
    }
    let cfg = cli.config()?;
    rayon::ThreadPoolBuilder::new().num_threads(cfg.run.threads).build_global()?;
    match cli.command {
        Command::TrainCoding => commands::train(&cfg),
        Command::Embed { input, output } => commands::embed(&cfg, input, output),
        Command::FitAgg => commands::fit_agg(&cfg),
        Command::Aggregate { input, output, rn } => commands::aggregate(&cfg, input, output, rn),
        Command::FitRn { input } => commands::fit_rn(&cfg, input),
        Command::FitItq { input } => commands::fit_itq_cmd(&cfg, input),
        Command::Encode { input, output } => commands::encode(&cfg, input, output),
        Command::Index { input, output } => commands::index(&cfg, input, output),
        Command::Search { index, queries, k, ids } => commands::search(&cfg, index, queries, &ids, k),
        Command::Eval { index, ground_truth } => commands::eval(&cfg, index, ground_truth),
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Bench { .. } => commands::bench(&cfg),
        Command::Config { .. } => unreachable!(),
    }
}

fn error_line(err: &anyhow::Error) -> serde_json::Value {
    let mut message = String::new();
    for cause in err.chain().map(ToString::to_string) {
        // io errors already spell out their source
        if !message.contains(&cause) {
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&cause);
        }
    }
    if let Some(c) = err.downcast_ref::<ConfigError>() {
        return json!({ "error": "config", "message": message, "violations": c.violations });
    }
    let kind = match err.chain().find_map(|e| e.downcast_ref::<faemb_core::Error>()) {
        Some(faemb_core::Error::Io { path, .. }) => {
            return json!({ "error": "io", "message": message, "path": path.display().to_string() });
        }
        Some(faemb_core::Error::Format(_) | faemb_core::Error::Checksum(_) | faemb_core::Error::UnsupportedVersion { .. }) => {
            "format"
        }
        Some(faemb_core::Error::MissingGroundTruth(_)) => "ground-truth",
        Some(_) => "compute",
        None => "runtime",
    };
    json!({ "error": kind, "message": message })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
