//! Pipeline configuration: defaults, a flat `key = value` config file, and
//! command-line overrides, in increasing precedence. The effective
//! configuration has a canonical text form whose hash goes into every
//! stage manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use charflex_core::norms::NormColumns;
use charflex_core::stats::FrequencySource;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("config file {path}, line {line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid value for {key}: {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    // Corpus inputs.
    pub classical_treebank: Option<PathBuf>,
    pub modern_treebank: Option<PathBuf>,
    pub classical_raw: Vec<PathBuf>,
    pub modern_raw: Vec<PathBuf>,
    pub norms_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    // Embedding training.
    pub dim: usize,
    pub window: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_frequency: u64,
    pub seed: u64,
    // Analysis thresholds.
    pub min_count: u64,
    pub shared_vocab_cap: usize,
    pub function_words: usize,
    pub entropy_log_base: f64,
    // Behavior flags.
    pub propn_as_noun: bool,
    pub no_center: bool,
    pub no_normalize: bool,
    pub deterministic: bool,
    pub threads: usize,
    pub permutation_check: bool,
    pub permutation_shuffles: usize,
    pub freq_source: FrequencySource,
    pub dump_treebanks: bool,
    /// Overrides the built-in punctuation exclusion set when present.
    pub punctuation: Option<String>,
    // Norms file layout.
    pub word_column: String,
    pub valence_column: String,
    pub arousal_column: String,
    pub concreteness_column: String,
    pub imageability_column: String,
    pub context_availability_column: String,
    pub familiarity_column: String,
    pub norms_delimiter: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            classical_treebank: None,
            modern_treebank: None,
            classical_raw: Vec::new(),
            modern_raw: Vec::new(),
            norms_file: None,
            output_dir: PathBuf::from("charflex-out"),
            dim: 300,
            window: 15,
            x_max: 100.0,
            alpha: 0.75,
            learning_rate: 0.05,
            epochs: 15,
            min_frequency: 5,
            seed: 1,
            min_count: 10,
            shared_vocab_cap: 10_000,
            function_words: 5,
            entropy_log_base: std::f64::consts::E,
            propn_as_noun: false,
            no_center: false,
            no_normalize: false,
            deterministic: false,
            threads: 1,
            permutation_check: false,
            permutation_shuffles: 10_000,
            freq_source: FrequencySource::Classical,
            dump_treebanks: false,
            punctuation: None,
            word_column: "word".into(),
            valence_column: "valence".into(),
            arousal_column: "arousal".into(),
            concreteness_column: "concreteness".into(),
            imageability_column: "imageability".into(),
            context_availability_column: "context_availability".into(),
            familiarity_column: "familiarity".into(),
            norms_delimiter: ",".into(),
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "expected a boolean".into(),
        }),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: "not a valid number".into(),
    })
}

pub fn parse_log_base(value: &str) -> Result<f64, ConfigError> {
    if value.eq_ignore_ascii_case("e") {
        return Ok(std::f64::consts::E);
    }
    let base: f64 = parse_num("entropy_log_base", value)?;
    if base > 0.0 && base != 1.0 {
        Ok(base)
    } else {
        Err(ConfigError::BadValue {
            key: "entropy_log_base".into(),
            value: value.into(),
            reason: "must be positive and not 1".into(),
        })
    }
}

pub fn parse_freq_source(value: &str) -> Result<FrequencySource, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "classical" => Ok(FrequencySource::Classical),
        "modern" => Ok(FrequencySource::Modern),
        "min" | "min_of_both" => Ok(FrequencySource::MinOfBoth),
        _ => Err(ConfigError::BadValue {
            key: "freq_source".into(),
            value: value.into(),
            reason: "expected classical, modern, or min".into(),
        }),
    }
}

pub fn parse_delimiter(value: &str) -> Result<u8, ConfigError> {
    match value {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        s if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(ConfigError::BadValue {
            key: "norms_delimiter".into(),
            value: value.into(),
            reason: "expected a single ASCII character or 'tab'".into(),
        }),
    }
}

fn resolve(base: Option<&Path>, value: &str) -> PathBuf {
    let path = PathBuf::from(value);
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path,
    }
}

fn resolve_list(base: Option<&Path>, value: &str) -> Vec<PathBuf> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| resolve(base, s))
        .collect()
}

impl PipelineConfig {
    /// Apply one `key = value` assignment. Relative paths resolve against
    /// `base` (the config file's directory) when given.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        match key {
            "classical_treebank" => self.classical_treebank = Some(resolve(base, value)),
            "modern_treebank" => self.modern_treebank = Some(resolve(base, value)),
            "classical_raw" => self.classical_raw = resolve_list(base, value),
            "modern_raw" => self.modern_raw = resolve_list(base, value),
            "norms_file" => self.norms_file = Some(resolve(base, value)),
            "output_dir" => self.output_dir = resolve(base, value),
            "dim" => self.dim = parse_num(key, value)?,
            "window" => self.window = parse_num(key, value)?,
            "x_max" => self.x_max = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "min_frequency" => self.min_frequency = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "min_count" => self.min_count = parse_num(key, value)?,
            "shared_vocab_cap" => self.shared_vocab_cap = parse_num(key, value)?,
            "function_words" => self.function_words = parse_num(key, value)?,
            "entropy_log_base" => self.entropy_log_base = parse_log_base(value)?,
            "propn_as_noun" => self.propn_as_noun = parse_bool(key, value)?,
            "no_center" => self.no_center = parse_bool(key, value)?,
            "no_normalize" => self.no_normalize = parse_bool(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            "permutation_check" => self.permutation_check = parse_bool(key, value)?,
            "permutation_shuffles" => self.permutation_shuffles = parse_num(key, value)?,
            "freq_source" => self.freq_source = parse_freq_source(value)?,
            "dump_treebanks" => self.dump_treebanks = parse_bool(key, value)?,
            "punctuation" => self.punctuation = Some(value.to_string()),
            "word_column" => self.word_column = value.into(),
            "valence_column" => self.valence_column = value.into(),
            "arousal_column" => self.arousal_column = value.into(),
            "concreteness_column" => self.concreteness_column = value.into(),
            "imageability_column" => self.imageability_column = value.into(),
            "context_availability_column" => self.context_availability_column = value.into(),
            "familiarity_column" => self.familiarity_column = value.into(),
            "norms_delimiter" => {
                parse_delimiter(value)?;
                self.norms_delimiter = value.into();
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Load assignments from a flat config file: one `key = value` per
    /// line, `#` lines are comments, relative paths resolve against the
    /// file's directory.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| ConfigError::FileNotFound(path.to_path_buf()))?;
        let base = path.parent().map(Path::to_path_buf);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    reason: "expected `key = value`".into(),
                });
            };
            self.set(key.trim(), value.trim(), base.as_deref())?;
        }
        Ok(())
    }

    pub fn norm_columns(&self) -> NormColumns {
        NormColumns {
            word: self.word_column.clone(),
            valence: self.valence_column.clone(),
            arousal: self.arousal_column.clone(),
            concreteness: self.concreteness_column.clone(),
            imageability: self.imageability_column.clone(),
            context_availability: self.context_availability_column.clone(),
            familiarity: self.familiarity_column.clone(),
        }
    }

    pub fn norms_delimiter_byte(&self) -> u8 {
        parse_delimiter(&self.norms_delimiter).unwrap_or(b',')
    }

    pub fn punctuation_set(&self) -> std::collections::BTreeSet<char> {
        match &self.punctuation {
            Some(set) => set.chars().collect(),
            None => charflex_core::embedding::default_punctuation(),
        }
    }

    pub fn train_config(&self) -> charflex_core::embedding::TrainConfig {
        charflex_core::embedding::TrainConfig {
            dim: self.dim,
            window: self.window,
            x_max: self.x_max,
            alpha: self.alpha,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            min_frequency: self.min_frequency,
            seed: self.seed,
        }
    }

    pub fn parallelism(&self) -> charflex_core::embedding::Parallelism {
        if self.deterministic || self.threads <= 1 {
            charflex_core::embedding::Parallelism::Deterministic
        } else {
            charflex_core::embedding::Parallelism::Threads(self.threads)
        }
    }

    /// Canonical text form of the effective configuration: every key in
    /// fixed order. Hashing this pins the config in stage manifests.
    pub fn canonical(&self) -> String {
        fn opt(p: &Option<PathBuf>) -> String {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        }
        fn list(ps: &[PathBuf]) -> String {
            ps.iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        let freq_source = match self.freq_source {
            FrequencySource::Classical => "classical",
            FrequencySource::Modern => "modern",
            FrequencySource::MinOfBoth => "min",
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("alpha", self.alpha.to_string());
        kv("arousal_column", self.arousal_column.clone());
        kv("classical_raw", list(&self.classical_raw));
        kv("classical_treebank", opt(&self.classical_treebank));
        kv("concreteness_column", self.concreteness_column.clone());
        kv("context_availability_column", self.context_availability_column.clone());
        kv("deterministic", self.deterministic.to_string());
        kv("dim", self.dim.to_string());
        kv("dump_treebanks", self.dump_treebanks.to_string());
        kv("entropy_log_base", self.entropy_log_base.to_string());
        kv("epochs", self.epochs.to_string());
        kv("familiarity_column", self.familiarity_column.clone());
        kv("freq_source", freq_source.to_string());
        kv("function_words", self.function_words.to_string());
        kv("imageability_column", self.imageability_column.clone());
        kv("learning_rate", self.learning_rate.to_string());
        kv("min_count", self.min_count.to_string());
        kv("min_frequency", self.min_frequency.to_string());
        kv("modern_raw", list(&self.modern_raw));
        kv("modern_treebank", opt(&self.modern_treebank));
        kv("no_center", self.no_center.to_string());
        kv("no_normalize", self.no_normalize.to_string());
        kv("norms_delimiter", self.norms_delimiter.clone());
        kv("norms_file", opt(&self.norms_file));
        kv("output_dir", self.output_dir.display().to_string());
        kv("permutation_check", self.permutation_check.to_string());
        kv("permutation_shuffles", self.permutation_shuffles.to_string());
        kv("propn_as_noun", self.propn_as_noun.to_string());
        kv("punctuation", self.punctuation.clone().unwrap_or_default());
        kv("seed", self.seed.to_string());
        kv("shared_vocab_cap", self.shared_vocab_cap.to_string());
        kv("threads", self.threads.to_string());
        kv("valence_column", self.valence_column.clone());
        kv("window", self.window.to_string());
        kv("word_column", self.word_column.clone());
        kv("x_max", self.x_max.to_string());
        out
    }
}
