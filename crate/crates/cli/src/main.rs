//! `charflex` — measure word-class flexibility and semantic change in
//! Chinese corpora at the character level.
//!
//! Exit codes: 0 success, 1 usage error, 2 missing/invalid input, 3 stage
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

mod config;
mod manifest;
mod stages;
mod svg;

use config::{ConfigError, PipelineConfig};
use stages::StageError;

const OUTPUT_ENV: &str = "CHARFLEX_OUTPUT";

#[derive(Parser)]
#[command(
    name = "charflex",
    version,
    about = "Word-class flexibility and semantic change pipeline for Chinese corpora",
    after_help = "Configuration precedence: command-line flags override the config file, \
which overrides built-in defaults. The CHARFLEX_OUTPUT environment variable \
sets the output root when --output-dir is not given."
)]
struct Cli {
    /// Flat key = value config file (relative paths resolve against it).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// POS entropy of the 2k+2 syntactic positions for both treebanks.
    Entropy,
    /// Per-character noun/verb flexibility census of the classical treebank.
    Flexibility,
    /// Character vocabulary and windowed co-occurrence counts for both raw corpora.
    Cooc,
    /// Train GloVe vectors for both languages from the cooc sidecars.
    Train,
    /// Fit the orthogonal rotation aligning the two embedding spaces.
    Align,
    /// Score per-character semantic change under the fitted rotation.
    Change,
    /// Correlate noun ratio with norms, and semantic change with noun ratio and frequency.
    Correlate,
    /// Render the figures (SVG) from earlier stage outputs.
    Report,
    /// Run the whole pipeline in order.
    All,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Entropy => "entropy",
            Command::Flexibility => "flexibility",
            Command::Cooc => "cooc",
            Command::Train => "train",
            Command::Align => "align",
            Command::Change => "change",
            Command::Correlate => "correlate",
            Command::Report => "report",
            Command::All => "all",
        }
    }
}

/// `--key value` overrides for every config key.
#[derive(Args)]
struct Overrides {
    #[arg(long, global = true, value_name = "FILE")]
    classical_treebank: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    modern_treebank: Option<PathBuf>,
    /// Comma-separated list of raw classical text files.
    #[arg(long, global = true, value_name = "FILES")]
    classical_raw: Option<String>,
    /// Comma-separated list of raw modern text files.
    #[arg(long, global = true, value_name = "FILES")]
    modern_raw: Option<String>,
    #[arg(long, global = true, value_name = "FILE")]
    norms_file: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    window: Option<usize>,
    #[arg(long, global = true)]
    x_max: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    min_frequency: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    min_count: Option<u64>,
    #[arg(long, global = true)]
    shared_vocab_cap: Option<usize>,
    /// Number of grammatical function words per language.
    #[arg(long, global = true)]
    function_words: Option<usize>,
    /// Entropy log base: `e` or a positive number.
    #[arg(long, global = true)]
    entropy_log_base: Option<String>,
    /// Count PROPN as NOUN in coarse tags (sensitivity analysis).
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    propn_as_noun: bool,
    /// Skip mean-centering before alignment (ablation).
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    no_center: bool,
    /// Skip row normalization before alignment (ablation).
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    no_normalize: bool,
    /// Force sequential, bit-reproducible execution everywhere.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    deterministic: bool,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Cross-check correlations with a seeded permutation test.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    permutation_check: bool,
    #[arg(long, global = true)]
    permutation_shuffles: Option<usize>,
    /// Corpus whose counts feed the log-frequency correlation: classical, modern, or min.
    #[arg(long, global = true)]
    freq_source: Option<String>,
    /// Also write parsed treebanks as JSON in the entropy stage.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    dump_treebanks: bool,
    /// Characters to exclude from embedding vocabularies (replaces the default set).
    #[arg(long, global = true)]
    punctuation: Option<String>,
    #[arg(long, global = true)]
    word_column: Option<String>,
    #[arg(long, global = true)]
    valence_column: Option<String>,
    #[arg(long, global = true)]
    arousal_column: Option<String>,
    #[arg(long, global = true)]
    concreteness_column: Option<String>,
    #[arg(long, global = true)]
    imageability_column: Option<String>,
    #[arg(long, global = true)]
    context_availability_column: Option<String>,
    #[arg(long, global = true)]
    familiarity_column: Option<String>,
    /// Norms file delimiter: a single character or `tab`.
    #[arg(long, global = true)]
    norms_delimiter: Option<String>,
}

fn apply_overrides(cfg: &mut PipelineConfig, o: &Overrides) -> Result<(), ConfigError> {
    if let Some(v) = &o.classical_treebank {
        cfg.classical_treebank = Some(v.clone());
    }
    if let Some(v) = &o.modern_treebank {
        cfg.modern_treebank = Some(v.clone());
    }
    if let Some(v) = &o.classical_raw {
        cfg.set("classical_raw", v, None)?;
    }
    if let Some(v) = &o.modern_raw {
        cfg.set("modern_raw", v, None)?;
    }
    if let Some(v) = &o.norms_file {
        cfg.norms_file = Some(v.clone());
    }
    if let Some(v) = &o.output_dir {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = o.dim {
        cfg.dim = v;
    }
    if let Some(v) = o.window {
        cfg.window = v;
    }
    if let Some(v) = o.x_max {
        cfg.x_max = v;
    }
    if let Some(v) = o.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = o.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = o.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = o.min_frequency {
        cfg.min_frequency = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = o.min_count {
        cfg.min_count = v;
    }
    if let Some(v) = o.shared_vocab_cap {
        cfg.shared_vocab_cap = v;
    }
    if let Some(v) = o.function_words {
        cfg.function_words = v;
    }
    if let Some(v) = &o.entropy_log_base {
        cfg.entropy_log_base = config::parse_log_base(v)?;
    }
    if o.propn_as_noun {
        cfg.propn_as_noun = true;
    }
    if o.no_center {
        cfg.no_center = true;
    }
    if o.no_normalize {
        cfg.no_normalize = true;
    }
    if o.deterministic {
        cfg.deterministic = true;
    }
    if let Some(v) = o.threads {
        cfg.threads = v;
    }
    if o.permutation_check {
        cfg.permutation_check = true;
    }
    if let Some(v) = o.permutation_shuffles {
        cfg.permutation_shuffles = v;
    }
    if let Some(v) = &o.freq_source {
        cfg.freq_source = config::parse_freq_source(v)?;
    }
    if o.dump_treebanks {
        cfg.dump_treebanks = true;
    }
    if let Some(v) = &o.punctuation {
        cfg.punctuation = Some(v.clone());
    }
    if let Some(v) = &o.word_column {
        cfg.word_column = v.clone();
    }
    if let Some(v) = &o.valence_column {
        cfg.valence_column = v.clone();
    }
    if let Some(v) = &o.arousal_column {
        cfg.arousal_column = v.clone();
    }
    if let Some(v) = &o.concreteness_column {
        cfg.concreteness_column = v.clone();
    }
    if let Some(v) = &o.imageability_column {
        cfg.imageability_column = v.clone();
    }
    if let Some(v) = &o.context_availability_column {
        cfg.context_availability_column = v.clone();
    }
    if let Some(v) = &o.familiarity_column {
        cfg.familiarity_column = v.clone();
    }
    if let Some(v) = &o.norms_delimiter {
        cfg.set("norms_delimiter", v, None)?;
    }
    Ok(())
}

fn build_config(cli: &Cli) -> Result<PipelineConfig, (String, u8)> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path).map_err(|e| {
            let code = match e {
                ConfigError::FileNotFound(_) => 2,
                _ => 1,
            };
            (e.to_string(), code)
        })?;
    }
    if cli.overrides.output_dir.is_none() {
        if let Ok(dir) = std::env::var(OUTPUT_ENV) {
            if !dir.is_empty() {
                cfg.output_dir = PathBuf::from(dir);
            }
        }
    }
    apply_overrides(&mut cfg, &cli.overrides).map_err(|e| (e.to_string(), 1))?;
    Ok(cfg)
}

fn dispatch(command: Command, cfg: &PipelineConfig) -> Result<(), StageError> {
    match command {
        Command::Entropy => stages::run_entropy(cfg),
        Command::Flexibility => stages::run_flexibility(cfg),
        Command::Cooc => stages::run_cooc(cfg),
        Command::Train => stages::run_train(cfg),
        Command::Align => stages::run_align(cfg),
        Command::Change => stages::run_change(cfg),
        Command::Correlate => stages::run_correlate(cfg),
        Command::Report => stages::run_report(cfg),
        Command::All => stages::run_all(cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err((message, code)) => {
            eprintln!("error: {message}");
            return ExitCode::from(code);
        }
    };

    match dispatch(cli.command, &cfg) {
        Ok(()) => {
            log::info!(
                "{} finished; outputs in {}",
                cli.command.name(),
                cfg.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
