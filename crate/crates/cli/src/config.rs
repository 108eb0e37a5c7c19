//! Plain-text pipeline configuration.
//!
//! ```text
//! # comment
//! [coding]
//! n = 16
//! variant = ffaemb
//! ```
//!
//! Every key has a default; a file only needs the keys it changes. Unknown
//! sections and keys are errors, and all problems are reported together.

use std::fmt;
use std::path::{Path, PathBuf};

use faemb_core::aggregate::{AggregationMode, DemocraticParams, DEFAULT_ALPHA, DEFAULT_EPS_REL};
use faemb_core::binary::DEFAULT_ITQ_ITERS;
use faemb_core::coding::DEFAULT_MU;
use faemb_core::embed::EmbeddingConfig;
use faemb_core::pipeline::PipelineParams;
use faemb_core::retrieval::SynthParams;
use faemb_core::{SolverParams, Variant};

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    /// Descriptor file of the learning images.
    pub train: PathBuf,
    /// Descriptor file of the database images.
    pub corpus: PathBuf,
    pub ground_truth: PathBuf,
    pub model_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coding {
    pub n: usize,
    pub mu: f64,
    pub variant: Variant,
    pub samples: usize,
    pub solver: SolverParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    /// `None` drops one embedding block.
    pub drop: Option<usize>,
    pub samples: usize,
    pub eps_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub mode: AggregationMode,
    pub alpha: f64,
    pub democratic: DemocraticParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Itq {
    pub bits: usize,
    pub iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bench {
    pub n: usize,
    pub dim: usize,
    pub descriptors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    /// 0 uses every core.
    pub threads: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub paths: Paths,
    pub coding: Coding,
    pub embedding: EmbeddingConfig,
    pub whitening: Whitening,
    pub aggregation: Aggregation,
    pub rn_keep: usize,
    pub itq: Itq,
    pub synth: SynthParams,
    pub bench: Bench,
    pub run: Run,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineParams::default();
        Self {
            paths: Paths {
                train: "learn.fdesc".into(),
                corpus: "corpus.fdesc".into(),
                ground_truth: "gt.txt".into(),
                model_dir: "models".into(),
            },
            coding: Coding {
                n: p.n_anchors,
                mu: DEFAULT_MU,
                variant: p.variant,
                samples: p.coding_samples,
                solver: SolverParams::default(),
            },
            embedding: EmbeddingConfig::default(),
            whitening: Whitening { drop: None, samples: p.whitening_samples, eps_rel: DEFAULT_EPS_REL },
            aggregation: Aggregation { mode: p.mode, alpha: DEFAULT_ALPHA, democratic: DemocraticParams::default() },
            rn_keep: 256,
            itq: Itq { bits: 256, iters: DEFAULT_ITQ_ITERS },
            synth: SynthParams::default(),
            bench: Bench { n: 16, dim: 45, descriptors: 100_000 },
            run: Run { threads: 0, seed: 0 },
        }
    }
}

/// Every violation found while reading or validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: Option<PathBuf>,
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            Some(p) => write!(f, "invalid configuration {}: ", p.display())?,
            None => write!(f, "invalid configuration: ")?,
        }
        write!(f, "{}", self.violations.join("; "))
    }
}

impl std::error::Error for ConfigError {}

trait Value: Sized {
    fn parse(s: &str) -> Result<Self, String>;
    fn show(&self) -> String;
}

macro_rules! fromstr_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{s:?}: {e}"))
            }
            fn show(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

fromstr_value!(usize, u64, f64, Variant, AggregationMode);

impl Value for PathBuf {
    fn parse(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(s))
    }
    fn show(&self) -> String {
        self.display().to_string()
    }
}

// whitening.drop: `auto` or a count
impl Value for Option<usize> {
    fn parse(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|e| format!("{s:?}: {e} (expected `auto` or a count)"))
    }
    fn show(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| v.to_string())
    }
}

macro_rules! config_keys {
    ($( $section:literal . $key:literal => $($field:ident).+ ),* $(,)?) => {
        /// `(section, key)` of every setting, in dump order.
        pub const KEYS: &[(&str, &str)] = &[$(($section, $key)),*];

        impl Config {
            /// Sets one value from its text form.
            pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
                match (section, key) {
                    $( ($section, $key) => {
                        self.$($field).+ = Value::parse(value).map_err(|e| format!("{section}.{key}: {e}"))?;
                    } )*
                    _ if !KEYS.iter().any(|(s, _)| *s == section) => return Err(format!("unknown section [{section}]")),
                    _ => return Err(format!("unknown key `{key}` in [{section}]")),
                }
                Ok(())
            }

            fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
                vec![$(($section, $key, Value::show(&self.$($field).+))),*]
            }
        }
    };
}

config_keys! {
    "paths"."train" => paths.train,
    "paths"."corpus" => paths.corpus,
    "paths"."ground_truth" => paths.ground_truth,
    "paths"."model_dir" => paths.model_dir,
    "coding"."n" => coding.n,
    "coding"."mu" => coding.mu,
    "coding"."variant" => coding.variant,
    "coding"."samples" => coding.samples,
    "coding"."max_outer_iters" => coding.solver.max_outer_iters,
    "coding"."outer_tol" => coding.solver.outer_tol,
    "coding"."newton_tol" => coding.solver.newton_tol,
    "coding"."newton_step" => coding.solver.newton_step,
    "coding"."newton_max_iters" => coding.solver.newton_max_iters,
    "coding"."stationarity_tol" => coding.solver.stationarity_tol,
    "embedding"."s1" => embedding.s1,
    "embedding"."s2" => embedding.s2,
    "whitening"."drop" => whitening.drop,
    "whitening"."samples" => whitening.samples,
    "whitening"."eps_rel" => whitening.eps_rel,
    "aggregation"."mode" => aggregation.mode,
    "aggregation"."alpha" => aggregation.alpha,
    "aggregation"."max_iters" => aggregation.democratic.max_iters,
    "aggregation"."tol" => aggregation.democratic.tol,
    "aggregation"."newton_max_iters" => aggregation.democratic.newton_max_iters,
    "rn"."keep" => rn_keep,
    "itq"."bits" => itq.bits,
    "itq"."iters" => itq.iters,
    "synth"."clusters" => synth.n_clusters,
    "synth"."per_cluster" => synth.per_cluster,
    "synth"."descriptors" => synth.descriptors_per_image,
    "synth"."dim" => synth.dim,
    "synth"."sigma" => synth.sigma,
    "synth"."learn_images" => synth.learn_images,
    "synth"."learn_descriptors" => synth.learn_descriptors_per_image,
    "synth"."seed" => synth.seed,
    "bench"."n" => bench.n,
    "bench"."dim" => bench.dim,
    "bench"."descriptors" => bench.descriptors,
    "run"."threads" => run.threads,
    "run"."seed" => run.seed,
}

impl Config {
    /// Parses `text` over the defaults, collecting every syntax and value
    /// error. Range checks are left to [`Config::validate`].
    #[cfg(test)]
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let (cfg, bad) = Config::parse_lenient(text);
        if bad.is_empty() {
            Ok(cfg)
        } else {
            Err(bad)
        }
    }

    /// Like [`Config::parse`], but keeps every valid setting alongside the
    /// errors so later checks can still run.
    pub fn parse_lenient(text: &str) -> (Self, Vec<String>) {
        let mut cfg = Config::default();
        let mut bad = Vec::new();
        // None before the first header, Some(None) inside an unknown section
        let mut section: Option<Option<String>> = None;
        let mut seen = std::collections::HashSet::new();
        for (no, raw) in text.lines().enumerate() {
            let no = no + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                match name.strip_suffix(']').map(str::trim) {
                    Some(name) if KEYS.iter().any(|(s, _)| *s == name) => section = Some(Some(name.to_owned())),
                    Some(name) => {
                        bad.push(format!("line {no}: unknown section [{name}]"));
                        section = Some(None);
                    }
                    None => bad.push(format!("line {no}: malformed section header {line:?}")),
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bad.push(format!("line {no}: expected `key = value`, got {line:?}"));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let sec = match &section {
                Some(Some(sec)) => sec,
                // already reported at the header
                Some(None) => continue,
                None => {
                    bad.push(format!("line {no}: key `{key}` outside any section"));
                    continue;
                }
            };
            if !seen.insert((sec.clone(), key.to_owned())) {
                bad.push(format!("line {no}: duplicate key `{key}` in [{sec}]"));
                continue;
            }
            if let Err(e) = cfg.set(sec, key, value) {
                bad.push(format!("line {no}: {e}"));
            }
        }
        (cfg, bad)
    }

    /// Reads a file (`None` gives the defaults), returning the settings that
    /// parsed and the problems found.
    pub fn load(path: Option<&Path>) -> anyhow::Result<(Self, Vec<String>)> {
        let Some(path) = path else {
            return Ok((Config::default(), Vec::new()));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|source| faemb_core::Error::Io { path: path.to_owned(), source })?;
        Ok(Config::parse_lenient(&text))
    }

    /// Range and consistency checks; returns every violation.
    pub fn validate(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                bad.push(msg.to_owned());
            }
        };
        let c = &self.coding;
        check(c.n >= 2, "coding.n must be >= 2");
        check(c.mu >= 0.0 && c.mu.is_finite(), "coding.mu must be finite and >= 0");
        check(c.samples >= c.n, "coding.samples must be >= coding.n");
        check(c.solver.max_outer_iters >= 1, "coding.max_outer_iters must be >= 1");
        check(c.solver.outer_tol > 0.0, "coding.outer_tol must be > 0");
        check(c.solver.newton_tol > 0.0, "coding.newton_tol must be > 0");
        check(
            c.solver.newton_step > 0.0 && c.solver.newton_step <= 1.0,
            "coding.newton_step must be in (0, 1]",
        );
        check(c.solver.newton_max_iters >= 1, "coding.newton_max_iters must be >= 1");
        check(c.solver.stationarity_tol > 0.0, "coding.stationarity_tol must be > 0");
        check(self.embedding.validate().is_ok(), "embedding.s1 and embedding.s2 must be finite and >= 0");
        check(self.whitening.samples >= 2, "whitening.samples must be >= 2");
        check(self.whitening.eps_rel > 0.0, "whitening.eps_rel must be > 0");
        let a = &self.aggregation;
        check(a.alpha > 0.0 && a.alpha <= 1.0, "aggregation.alpha must be in (0, 1]");
        check(a.democratic.max_iters >= 1, "aggregation.max_iters must be >= 1");
        check(a.democratic.tol > 0.0, "aggregation.tol must be > 0");
        check(self.rn_keep >= 1, "rn.keep must be >= 1");
        check(self.itq.bits >= 1, "itq.bits must be >= 1");
        let s = &self.synth;
        check(
            s.n_clusters >= 1 && s.per_cluster >= 1 && s.descriptors_per_image >= 1 && s.dim >= 1,
            "synth sizes must be >= 1",
        );
        check(s.sigma >= 0.0 && s.sigma.is_finite(), "synth.sigma must be finite and >= 0");
        check(self.bench.n >= 2, "bench.n must be >= 2");
        check(self.bench.dim >= 1, "bench.dim must be >= 1");
        check(self.bench.descriptors >= 1, "bench.descriptors must be >= 1");
        bad
    }

    /// The configuration as a file that parses back to the same value.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (section, key, value) in self.entries() {
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current = section;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    pub fn pipeline_params(&self) -> PipelineParams {
        PipelineParams {
            n_anchors: self.coding.n,
            mu: self.coding.mu,
            variant: self.coding.variant,
            solver: self.coding.solver.clone(),
            embedding: self.embedding,
            drop: self.whitening.drop,
            mode: self.aggregation.mode,
            alpha: self.aggregation.alpha,
            democratic: self.aggregation.democratic.clone(),
            coding_samples: self.coding.samples,
            whitening_samples: self.whitening.samples,
            seed: self.run.seed,
        }
    }

    pub fn model_path(&self, file: &str) -> PathBuf {
        self.paths.model_dir.join(file)
    }
}
