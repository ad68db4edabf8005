//! Flat `key = value` pipeline configuration shared by every subcommand.
//!
//! A config file assigns the same keys the flags expose; flags win over file
//! values. Every command dumps its effective configuration next to its other
//! outputs so a run can be reproduced from the dump alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lexalign::similarity::SimilarityMetric;

use crate::CliError;

/// Retrieval metric selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum MetricKind {
    /// Plain inner product.
    Ip,
    /// Cross-domain similarity local scaling.
    Csls,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Ip => "ip",
            MetricKind::Csls => "csls",
        }
    }

    pub fn to_metric(self, neighborhood: usize) -> SimilarityMetric {
        match self {
            MetricKind::Ip => SimilarityMetric::InnerProduct,
            MetricKind::Csls => SimilarityMetric::Csls { neighborhood },
        }
    }
}

/// Map initialization selector for training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum InitKind {
    /// Independent random rotations.
    Random,
    /// Closed-form moment-matched estimate (unsupervised).
    Moment,
}

impl InitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitKind::Random => "random",
            InitKind::Moment => "moment",
        }
    }
}

/// Everything any pipeline stage can need; each command reads the fields it
/// uses and ignores the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    // Inputs.
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub dict: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub words: Option<PathBuf>,
    pub max_vocab: Option<usize>,
    pub normalize: bool,
    // Synthetic pair generator.
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub shuffle: bool,
    // Adversarial training.
    pub epochs: usize,
    pub batch_size: usize,
    pub steps_per_epoch: usize,
    pub disc_steps: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub beta: f64,
    pub hidden_dim: usize,
    pub leaky_slope: f64,
    pub sample_vocab_limit: usize,
    pub criterion_k: usize,
    pub alternate_w: bool,
    pub init: InitKind,
    /// Most-frequent rows entering the moment fit when `init = moment`.
    pub init_fit_limit: usize,
    // Retrieval metric.
    pub metric: MetricKind,
    pub csls_t: usize,
    // Refinement.
    pub query_limit: usize,
    pub iterations: usize,
    pub restrict_pool: bool,
    // Per-command outputs.
    pub k: usize,
    pub export_limit: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source: None,
            target: None,
            dict: None,
            checkpoint: None,
            words: None,
            max_vocab: None,
            normalize: false,
            n: 2000,
            d: 16,
            noise: 0.01,
            shuffle: true,
            epochs: 5,
            batch_size: 32,
            steps_per_epoch: 1000,
            disc_steps: 1,
            lr: 0.1,
            lr_decay: 0.95,
            beta: 0.01,
            hidden_dim: 2048,
            leaky_slope: 0.2,
            sample_vocab_limit: usize::MAX,
            criterion_k: 10_000,
            alternate_w: false,
            init: InitKind::Random,
            init_fit_limit: usize::MAX,
            metric: MetricKind::Csls,
            csls_t: 10,
            query_limit: 10_000,
            iterations: 1,
            restrict_pool: false,
            k: 5,
            export_limit: 1000,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    /// Applies one `key = value` assignment using the flag spelling of the key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| format!("bad value {value:?} for {key}: {e}"))
        }
        match key {
            "source" => self.source = Some(PathBuf::from(value)),
            "target" => self.target = Some(PathBuf::from(value)),
            "dict" => self.dict = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "words" => self.words = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "max-vocab" => self.max_vocab = Some(parse(key, value)?),
            "normalize" => self.normalize = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "shuffle" => self.shuffle = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch-size" => self.batch_size = parse(key, value)?,
            "steps-per-epoch" => self.steps_per_epoch = parse(key, value)?,
            "disc-steps" => self.disc_steps = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr-decay" => self.lr_decay = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "hidden-dim" => self.hidden_dim = parse(key, value)?,
            "leaky-slope" => self.leaky_slope = parse(key, value)?,
            "sample-vocab-limit" => self.sample_vocab_limit = parse(key, value)?,
            "criterion-k" => self.criterion_k = parse(key, value)?,
            "alternate-w" => self.alternate_w = parse(key, value)?,
            "init" => {
                self.init = match value {
                    "random" => InitKind::Random,
                    "moment" => InitKind::Moment,
                    _ => {
                        return Err(format!("bad value {value:?} for init: expected random or moment"))
                    }
                }
            }
            "init-fit-limit" => self.init_fit_limit = parse(key, value)?,
            "metric" => {
                self.metric = match value {
                    "ip" => MetricKind::Ip,
                    "csls" => MetricKind::Csls,
                    _ => return Err(format!("bad value {value:?} for metric: expected ip or csls")),
                }
            }
            "csls-t" => self.csls_t = parse(key, value)?,
            "query-limit" => self.query_limit = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "restrict-pool" => self.restrict_pool = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "export-limit" => self.export_limit = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Loads a flat config file: one assignment per line, `#` comments and
    /// blank lines skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::new("io", format!("cannot read config {}: {e}", path.display())))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::new(
                    "config",
                    format!("{} line {}: expected `key = value`, got {line:?}", path.display(), idx + 1),
                ));
            };
            self.apply(key.trim(), value.trim())
                .map_err(|msg| CliError::new("config", format!("{} line {}: {msg}", path.display(), idx + 1)))?;
        }
        Ok(())
    }

    /// Canonical dump; feeding it back through `load_file` reproduces `self`.
    pub fn dump(&self) -> String {
        let mut s = String::from("# effective configuration\n");
        let mut kv = |key: &str, value: String| {
            let _ = writeln!(s, "{key} = {value}");
        };
        if let Some(p) = &self.source {
            kv("source", p.display().to_string());
        }
        if let Some(p) = &self.target {
            kv("target", p.display().to_string());
        }
        if let Some(p) = &self.dict {
            kv("dict", p.display().to_string());
        }
        if let Some(p) = &self.checkpoint {
            kv("checkpoint", p.display().to_string());
        }
        if let Some(p) = &self.words {
            kv("words", p.display().to_string());
        }
        kv("out", self.out.display().to_string());
        if let Some(m) = self.max_vocab {
            kv("max-vocab", m.to_string());
        }
        kv("normalize", self.normalize.to_string());
        kv("n", self.n.to_string());
        kv("d", self.d.to_string());
        kv("noise", self.noise.to_string());
        kv("shuffle", self.shuffle.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch-size", self.batch_size.to_string());
        kv("steps-per-epoch", self.steps_per_epoch.to_string());
        kv("disc-steps", self.disc_steps.to_string());
        kv("lr", self.lr.to_string());
        kv("lr-decay", self.lr_decay.to_string());
        kv("beta", self.beta.to_string());
        kv("hidden-dim", self.hidden_dim.to_string());
        kv("leaky-slope", self.leaky_slope.to_string());
        kv("sample-vocab-limit", self.sample_vocab_limit.to_string());
        kv("criterion-k", self.criterion_k.to_string());
        kv("alternate-w", self.alternate_w.to_string());
        kv("init", self.init.as_str().to_string());
        kv("init-fit-limit", self.init_fit_limit.to_string());
        kv("metric", self.metric.as_str().to_string());
        kv("csls-t", self.csls_t.to_string());
        kv("query-limit", self.query_limit.to_string());
        kv("iterations", self.iterations.to_string());
        kv("restrict-pool", self.restrict_pool.to_string());
        kv("k", self.k.to_string());
        kv("export-limit", self.export_limit.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    /// The retrieval metric selected by `metric` and `csls-t`.
    pub fn similarity_metric(&self) -> SimilarityMetric {
        self.metric.to_metric(self.csls_t)
    }

    pub fn trainer_config(&self) -> lexalign::adversarial::TrainerConfig {
        lexalign::adversarial::TrainerConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            steps_per_epoch: self.steps_per_epoch,
            disc_steps: self.disc_steps,
            lr0: self.lr,
            lr_decay_per_epoch: self.lr_decay,
            beta: self.beta,
            sample_vocab_limit: self.sample_vocab_limit,
            criterion_k: self.criterion_k,
            criterion_metric: self.similarity_metric(),
            leaky_slope: self.leaky_slope,
            hidden_dim: self.hidden_dim,
            alternate_w_updates: self.alternate_w,
            init: match self.init {
                InitKind::Random => lexalign::adversarial::InitStrategy::RandomOrthogonal,
                InitKind::Moment => lexalign::adversarial::InitStrategy::MomentAligned {
                    fit_limit: self.init_fit_limit,
                },
            },
            seed: self.seed,
        }
    }
}
