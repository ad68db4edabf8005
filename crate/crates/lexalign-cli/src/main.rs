//! Batch pipeline driver for unsupervised word translation.
//!
//! Six subcommands cover the full pipeline: `synth` generates a language pair
//! with a known alignment, `train` learns forward and inverse maps
//! adversarially, `refine` improves a checkpoint with induced-dictionary
//! Procrustes rounds, and `translate`/`evaluate`/`export` consume a
//! checkpoint. Options come from flags and/or a flat `key = value` config
//! file (flags win); every command dumps its effective configuration to the
//! output directory, and identical inputs plus seed reproduce every output
//! byte for byte.

mod config;

use std::fmt;
use std::fs;
use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use lexalign::adversarial::{
    read_checkpoint, train, write_checkpoint, write_history_csv, AdversarialError, CheckpointError,
};
use lexalign::embeddings::{
    generate_synthetic_pair, load_text_embeddings, write_text_embeddings, EmbeddingError,
    EmbeddingSpace,
};
use lexalign::evaluation::{
    error_analysis, export_vectors, load_dictionary, precision_at_k, write_dictionary, Direction,
    EvalError, EvalReport, ExportSpec,
};
use lexalign::numerics::NumericsError;
use lexalign::procrustes::{
    refine, refine_inverse, write_induced_dictionary, ProcrustesError, RefineOptions,
};
use lexalign::similarity::{build_neighborhood_cache, csls_topk_rows, knn_inner_product, SimilarityError};
use lexalign::Matrix;

use config::{MetricKind, PipelineConfig};

#[derive(Parser)]
#[command(name = "lexalign", version, about = "Unsupervised word translation pipeline")]
struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Shared options; each subcommand reads the ones it needs.
#[derive(Args)]
struct Overrides {
    /// Source embedding file (text word2vec format).
    #[arg(long, global = true, value_name = "FILE")]
    source: Option<PathBuf>,
    /// Target embedding file.
    #[arg(long, global = true, value_name = "FILE")]
    target: Option<PathBuf>,
    /// Reference bilingual dictionary (`source target` per line).
    #[arg(long, global = true, value_name = "FILE")]
    dict: Option<PathBuf>,
    /// Map checkpoint to read.
    #[arg(long, global = true, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Word-list file for `translate`; stdin when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    words: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Retrieval metric.
    #[arg(long, global = true, value_enum)]
    metric: Option<MetricKind>,
    /// CSLS neighborhood size.
    #[arg(long, global = true, value_name = "T")]
    csls_t: Option<usize>,
    /// Most-frequent words used for dictionary induction.
    #[arg(long, global = true, value_name = "N")]
    query_limit: Option<usize>,
    /// Induce-and-refit refinement rounds.
    #[arg(long, global = true, value_name = "N")]
    iterations: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    epochs: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    batch_size: Option<usize>,
    /// Initial SGD learning rate.
    #[arg(long, global = true, value_name = "F")]
    lr: Option<f64>,
    /// Orthogonality-restoring step coefficient.
    #[arg(long, global = true, value_name = "F")]
    beta: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    steps_per_epoch: Option<usize>,
    /// Discriminator updates per iteration.
    #[arg(long, global = true, value_name = "N")]
    disc_steps: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    hidden_dim: Option<usize>,
    #[arg(long, global = true, value_name = "F")]
    lr_decay: Option<f64>,
    /// Most-frequent words scored by the epoch selection criterion.
    #[arg(long, global = true, value_name = "N")]
    criterion_k: Option<usize>,
    /// Training batches sample from the first N words only.
    #[arg(long, global = true, value_name = "N")]
    sample_vocab_limit: Option<usize>,
    #[arg(long, global = true, value_name = "F")]
    leaky_slope: Option<f64>,
    /// Keep only the N most frequent words of each space.
    #[arg(long, global = true, value_name = "N")]
    max_vocab: Option<usize>,
    /// Candidates printed per translated word.
    #[arg(long, global = true, value_name = "N")]
    k: Option<usize>,
    /// Rows exported per space.
    #[arg(long, global = true, value_name = "N")]
    export_limit: Option<usize>,
    /// Normalize embedding rows to unit length on load.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    normalize: bool,
    /// Keep synthetic target rows aligned with the source rows.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    no_shuffle: bool,
    /// Alternate the forward map's adversary between iterations.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    alternate_w: bool,
    /// Map initialization: random rotations or a moment-matched estimate.
    #[arg(long, global = true, value_name = "KIND")]
    init: Option<config::InitKind>,
    /// Most-frequent rows entering the moment fit for --init moment.
    #[arg(long, global = true, value_name = "N")]
    init_fit_limit: Option<usize>,
    /// Restrict induction candidates to the query-limit most frequent words.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    restrict_pool: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic language pair with a known alignment.
    Synth {
        /// Vocabulary size.
        #[arg(long, value_name = "N")]
        n: Option<usize>,
        /// Embedding dimension.
        #[arg(long, value_name = "D")]
        d: Option<usize>,
        /// Gaussian noise scale added to the rotated target rows.
        #[arg(long, value_name = "F")]
        noise: Option<f64>,
    },
    /// Adversarially train forward and inverse maps.
    Train,
    /// Refine a checkpoint with induced dictionaries and Procrustes fits.
    Refine,
    /// Print top-k translation candidates for words.
    Translate,
    /// Score a checkpoint against a reference dictionary, both directions.
    Evaluate,
    /// Export original and mapped coordinates as CSV.
    Export,
}

/// A classified failure; printed as a single diagnostic line.
#[derive(Debug)]
pub struct CliError {
    class: &'static str,
    message: String,
}

impl CliError {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        CliError { class, message: message.into() }
    }

    pub fn class(&self) -> &'static str {
        self.class
    }

    fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error ({}): {}", self.class, self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        let class = match &e {
            EmbeddingError::Io(_) => "io",
            EmbeddingError::BadSyntheticShape { .. } => "config",
            _ => "data",
        };
        CliError::new(class, e.to_string())
    }
}

impl From<SimilarityError> for CliError {
    fn from(e: SimilarityError) -> Self {
        let class = match &e {
            SimilarityError::DimensionMismatch { .. } => "dimension",
            SimilarityError::EmptyInput | SimilarityError::EmptyQuerySet => "data",
            _ => "config",
        };
        CliError::new(class, e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Similarity(s) => s.into(),
            EvalError::Io(io) => io.into(),
            EvalError::MapShapeMismatch { .. } | EvalError::SpaceDimMismatch { .. } => {
                CliError::new("dimension", e.to_string())
            }
            EvalError::BadCutoffs => CliError::new("config", e.to_string()),
            _ => CliError::new("data", e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(io) => io.into(),
            CheckpointError::ShapeMismatch { .. } => CliError::new("dimension", e.to_string()),
            _ => CliError::new("data", e.to_string()),
        }
    }
}

impl From<AdversarialError> for CliError {
    fn from(e: AdversarialError) -> Self {
        match e {
            AdversarialError::Similarity(s) => s.into(),
            AdversarialError::DimensionMismatch { .. } => CliError::new("dimension", e.to_string()),
            AdversarialError::NonFiniteLoss { .. } => CliError::new("numeric", e.to_string()),
            _ => CliError::new("config", e.to_string()),
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::new("numeric", e.to_string())
    }
}

impl From<ProcrustesError> for CliError {
    fn from(e: ProcrustesError) -> Self {
        match e {
            ProcrustesError::Io(io) => io.into(),
            ProcrustesError::Numerics(n) => n.into(),
            ProcrustesError::Similarity(s) => s.into(),
            ProcrustesError::ZeroIterations => CliError::new("config", e.to_string()),
            _ => CliError::new("data", e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::from(e).context(format!("creating {}", cfg.out.display())))?;
    fs::write(cfg.out.join("effective_config.txt"), cfg.dump())?;
    match &cli.command {
        Command::Synth { .. } => cmd_synth(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Refine => cmd_refine(&cfg),
        Command::Translate => cmd_translate(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Export => cmd_export(&cfg),
    }
}

/// Defaults, overlaid by the config file, overlaid by present flags.
fn effective_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    let o = &cli.overrides;
    if let Some(v) = &o.source {
        cfg.source = Some(v.clone());
    }
    if let Some(v) = &o.target {
        cfg.target = Some(v.clone());
    }
    if let Some(v) = &o.dict {
        cfg.dict = Some(v.clone());
    }
    if let Some(v) = &o.checkpoint {
        cfg.checkpoint = Some(v.clone());
    }
    if let Some(v) = &o.words {
        cfg.words = Some(v.clone());
    }
    if let Some(v) = &o.out {
        cfg.out = v.clone();
    }
    if let Some(v) = o.metric {
        cfg.metric = v;
    }
    if let Some(v) = o.csls_t {
        cfg.csls_t = v;
    }
    if let Some(v) = o.query_limit {
        cfg.query_limit = v;
    }
    if let Some(v) = o.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = o.lr {
        cfg.lr = v;
    }
    if let Some(v) = o.beta {
        cfg.beta = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.steps_per_epoch {
        cfg.steps_per_epoch = v;
    }
    if let Some(v) = o.disc_steps {
        cfg.disc_steps = v;
    }
    if let Some(v) = o.hidden_dim {
        cfg.hidden_dim = v;
    }
    if let Some(v) = o.lr_decay {
        cfg.lr_decay = v;
    }
    if let Some(v) = o.criterion_k {
        cfg.criterion_k = v;
    }
    if let Some(v) = o.sample_vocab_limit {
        cfg.sample_vocab_limit = v;
    }
    if let Some(v) = o.leaky_slope {
        cfg.leaky_slope = v;
    }
    if let Some(v) = o.max_vocab {
        cfg.max_vocab = Some(v);
    }
    if let Some(v) = o.k {
        cfg.k = v;
    }
    if let Some(v) = o.export_limit {
        cfg.export_limit = v;
    }
    if o.normalize {
        cfg.normalize = true;
    }
    if o.no_shuffle {
        cfg.shuffle = false;
    }
    if o.alternate_w {
        cfg.alternate_w = true;
    }
    if let Some(v) = o.init {
        cfg.init = v;
    }
    if let Some(v) = o.init_fit_limit {
        cfg.init_fit_limit = v;
    }
    if o.restrict_pool {
        cfg.restrict_pool = true;
    }
    if let Command::Synth { n, d, noise } = &cli.command {
        if let Some(v) = n {
            cfg.n = *v;
        }
        if let Some(v) = d {
            cfg.d = *v;
        }
        if let Some(v) = noise {
            cfg.noise = *v;
        }
    }
    Ok(cfg)
}

fn load_spaces(cfg: &PipelineConfig) -> Result<(EmbeddingSpace, EmbeddingSpace), CliError> {
    let (Some(sp), Some(tp)) = (&cfg.source, &cfg.target) else {
        return Err(CliError::new("usage", "this command requires --source and --target embedding files"));
    };
    let mut spaces = Vec::with_capacity(2);
    for path in [sp, tp] {
        let loaded = load_text_embeddings(path, cfg.max_vocab, cfg.normalize)
            .map_err(|e| CliError::from(e).context(path.display()))?;
        if loaded.duplicates_skipped > 0 {
            println!("note: skipped {} duplicate tokens in {}", loaded.duplicates_skipped, path.display());
        }
        spaces.push(loaded.space);
    }
    let (source, target) = (spaces.remove(0), spaces.remove(0));
    if source.dim() != target.dim() {
        return Err(CliError::new(
            "dimension",
            format!("source dimension {} does not match target dimension {}", source.dim(), target.dim()),
        ));
    }
    Ok((source, target))
}

fn load_maps(cfg: &PipelineConfig, dim: usize) -> Result<(Matrix, Matrix), CliError> {
    let Some(path) = &cfg.checkpoint else {
        return Err(CliError::new("usage", "this command requires --checkpoint"));
    };
    let (w, z) = read_checkpoint(path).map_err(|e| CliError::from(e).context(path.display()))?;
    if w.rows() != dim {
        return Err(CliError::new(
            "dimension",
            format!("checkpoint dimension {} does not match embedding dimension {dim}", w.rows()),
        ));
    }
    Ok((w, z))
}

fn wrote(path: &Path) {
    println!("wrote {}", path.display());
}

fn cmd_synth(cfg: &PipelineConfig) -> Result<(), CliError> {
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(CliError::new("config", format!("noise must be a nonnegative number, got {}", cfg.noise)));
    }
    let pair = generate_synthetic_pair(cfg.seed, cfg.n, cfg.d, cfg.noise, cfg.shuffle, cfg.normalize)?;
    println!(
        "synthetic pair: n={} d={} noise={} shuffled={} normalized={}",
        cfg.n, cfg.d, cfg.noise, cfg.shuffle, cfg.normalize
    );
    let source_path = cfg.out.join("source.vec");
    write_text_embeddings(&pair.source, &source_path)?;
    wrote(&source_path);
    let target_path = cfg.out.join("target.vec");
    write_text_embeddings(&pair.target, &target_path)?;
    wrote(&target_path);
    let dict_path = cfg.out.join("dictionary.txt");
    write_dictionary(&pair.dictionary, &dict_path)?;
    wrote(&dict_path);
    let ckpt_path = cfg.out.join("rotation.ckpt");
    write_checkpoint(&ckpt_path, &pair.rotation, &pair.rotation.transpose())?;
    wrote(&ckpt_path);
    Ok(())
}

fn cmd_train(cfg: &PipelineConfig) -> Result<(), CliError> {
    let (source, target) = load_spaces(cfg)?;
    let state = train(&cfg.trainer_config(), &source, &target)?;
    for rec in &state.history {
        println!(
            "epoch {}: criterion={:.6} d1={:.6} d2={:.6} w={:.6} z={:.6}",
            rec.epoch, rec.criterion, rec.d1_loss, rec.d2_loss, rec.w_loss, rec.z_loss
        );
    }
    println!("best criterion = {:.6}", state.best_criterion);
    let ckpt_path = cfg.out.join("map.ckpt");
    write_checkpoint(&ckpt_path, &state.best_w, &state.best_z)?;
    wrote(&ckpt_path);
    let history_path = cfg.out.join("history.csv");
    write_history_csv(&history_path, &state.history)?;
    wrote(&history_path);
    Ok(())
}

fn cmd_refine(cfg: &PipelineConfig) -> Result<(), CliError> {
    let (source, target) = load_spaces(cfg)?;
    let (w, z) = load_maps(cfg, source.dim())?;
    let metric = cfg.similarity_metric();
    let options = RefineOptions {
        query_limit: cfg.query_limit,
        iterations: cfg.iterations,
        restrict_target_pool: cfg.restrict_pool,
    };
    let forward = refine(&w, &source, &target, &metric, &options)?;
    let inverse = refine_inverse(&z, &source, &target, &metric, &options)?;
    for (name, outcome) in [("forward", &forward), ("inverse", &inverse)] {
        let sizes: Vec<String> = outcome.dictionary_sizes.iter().map(|s| s.to_string()).collect();
        println!("{name} induced dictionary sizes: {}", sizes.join(" "));
        if outcome.aborted_empty {
            println!("{name} refinement stopped on an empty induced dictionary");
        }
    }
    let ckpt_path = cfg.out.join("refined.ckpt");
    write_checkpoint(&ckpt_path, &forward.map, &inverse.map)?;
    wrote(&ckpt_path);
    if let Some(dict) = &forward.last_dictionary {
        let dict_path = cfg.out.join("induced_dictionary.txt");
        write_induced_dictionary(dict, &source, &target, &dict_path)?;
        wrote(&dict_path);
    }
    Ok(())
}

fn cmd_translate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let (source, target) = load_spaces(cfg)?;
    let (w, _) = load_maps(cfg, source.dim())?;
    if cfg.k == 0 {
        return Err(CliError::new("config", "k must be at least 1"));
    }
    let text = match &cfg.words {
        Some(path) => {
            fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?
        }
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(CliError::new("usage", "no words to translate"));
    }
    let k = cfg.k.min(target.len());
    let mapped = source.vectors().mul_bt(&w);
    let found: Vec<usize> = words.iter().filter_map(|word| source.index_of(word)).collect();
    let mut results = match cfg.metric {
        MetricKind::Ip if found.is_empty() => Vec::new(),
        MetricKind::Ip => knn_inner_product(&mapped.gather_rows(&found), target.vectors(), k)?,
        MetricKind::Csls => {
            let t = cfg.csls_t.min(mapped.rows()).min(target.len());
            let cache = build_neighborhood_cache(&mapped, target.vectors(), t)?;
            csls_topk_rows(&mapped, &found, target.vectors(), &cache, k)?
        }
    }
    .into_iter();
    for word in &words {
        if source.index_of(word).is_none() {
            println!("# {word}: not in source vocabulary");
            continue;
        }
        for (j, score) in results.next().expect("one result row per found word") {
            println!("{word}\t{}\t{score:.6}", target.token(j));
        }
    }
    Ok(())
}

fn direction_line(name: &str, report: &EvalReport) -> String {
    let mut line = format!("{name}: coverage={:.2}%", report.coverage);
    for (k, p) in &report.precision_at {
        line.push_str(&format!(" P@{k}={p:.2}%"));
    }
    line
}

fn cmd_evaluate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let (source, target) = load_spaces(cfg)?;
    let (w, z) = load_maps(cfg, source.dim())?;
    let Some(dict_path) = &cfg.dict else {
        return Err(CliError::new("usage", "evaluate requires --dict"));
    };
    let dict = load_dictionary(dict_path).map_err(|e| CliError::from(e).context(dict_path.display()))?;
    let metric = cfg.similarity_metric();
    let cutoffs = |candidates: usize| -> Vec<usize> {
        [1usize, 5, 10].into_iter().filter(|&k| k <= candidates).collect()
    };
    let forward =
        precision_at_k(&w, &source, &target, &dict, &metric, &cutoffs(target.len()), Direction::Forward)?;
    let inverse =
        precision_at_k(&z, &source, &target, &dict, &metric, &cutoffs(source.len()), Direction::Inverse)?;

    let mut table = String::new();
    let mut csv = String::from("direction,k,precision,covered,total,coverage\n");
    for (name, report) in [("forward", &forward), ("inverse", &inverse)] {
        let line = direction_line(name, report);
        println!("{line}");
        table.push_str(&line);
        table.push('\n');
        for (k, p) in &report.precision_at {
            csv.push_str(&format!(
                "{name},{k},{p:.6},{},{},{:.6}\n",
                report.covered, report.total_entries, report.coverage
            ));
        }
    }
    for (name, report) in [("forward", &forward), ("inverse", &inverse)] {
        let errors = error_analysis(report, 10);
        if errors.is_empty() {
            continue;
        }
        table.push_str(&format!("\ntop errors ({name}):\n"));
        for rec in errors {
            let rank = rec.truth_rank.map_or_else(|| "beyond search depth".to_string(), |r| format!("rank {r}"));
            table.push_str(&format!(
                "{} -> {} (expected {}, {rank})\n",
                rec.source_token,
                rec.predicted,
                rec.acceptable.join("|")
            ));
        }
    }
    let table_path = cfg.out.join("report.txt");
    fs::write(&table_path, table)?;
    wrote(&table_path);
    let csv_path = cfg.out.join("report.csv");
    fs::write(&csv_path, csv)?;
    wrote(&csv_path);
    Ok(())
}

fn cmd_export(cfg: &PipelineConfig) -> Result<(), CliError> {
    let (source, target) = load_spaces(cfg)?;
    let (w, _) = load_maps(cfg, source.dim())?;
    let specs =
        [ExportSpec { space: &source, map: Some(&w) }, ExportSpec { space: &target, map: None }];
    let csv_path = cfg.out.join("vectors.csv");
    let rows = export_vectors(&specs, cfg.export_limit, &csv_path)?;
    println!("exported {rows} rows");
    wrote(&csv_path);
    Ok(())
}
