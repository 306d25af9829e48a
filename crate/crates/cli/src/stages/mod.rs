//! Pipeline stages. Each stage validates its own inputs, writes its
//! artifacts into a temporary directory under the output root, and
//! promotes the directory (with a manifest) only on success.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use charflex_core::alignment::ChangeScore;
use charflex_core::posstats::{FlexClass, LexemeStats};
use charflex_core::stats::FrequencySource;

use crate::config::PipelineConfig;
use crate::manifest::{sha256_file, sha256_hex, InputRecord, Manifest};

mod corpus;
mod embeddings;
mod reports;

pub use corpus::{run_entropy, run_flexibility};
pub use embeddings::{run_align, run_change, run_cooc, run_train};
pub use reports::{run_correlate, run_report};

#[derive(Debug)]
pub enum StageError {
    /// Missing or unreadable inputs: exit code 2.
    Input { stage: &'static str, message: String },
    /// The stage itself failed: exit code 3.
    Failure { stage: &'static str, source: anyhow::Error },
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::Input { .. } => 2,
            StageError::Failure { .. } => 3,
        }
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageError::Input { stage, message } => write!(f, "stage {stage}: {message}"),
            StageError::Failure { stage, source } => write!(f, "stage {stage}: {source:#}"),
        }
    }
}

pub(crate) fn input_err(stage: &'static str, message: impl Into<String>) -> StageError {
    StageError::Input { stage, message: message.into() }
}

pub(crate) fn failure(stage: &'static str, source: impl Into<anyhow::Error>) -> StageError {
    StageError::Failure { stage, source: source.into() }
}

/// Resolve a required config path and check it exists.
pub(crate) fn require_path<'a>(
    stage: &'static str,
    label: &str,
    path: &'a Option<PathBuf>,
) -> Result<&'a Path, StageError> {
    let path = path
        .as_deref()
        .ok_or_else(|| input_err(stage, format!("{label} is not configured")))?;
    if !path.exists() {
        return Err(input_err(stage, format!("{label} not found: {}", path.display())));
    }
    Ok(path)
}

pub(crate) fn require_path_list<'a>(
    stage: &'static str,
    label: &str,
    paths: &'a [PathBuf],
) -> Result<&'a [PathBuf], StageError> {
    if paths.is_empty() {
        return Err(input_err(stage, format!("{label} is not configured")));
    }
    for path in paths {
        if !path.exists() {
            return Err(input_err(stage, format!("{label} not found: {}", path.display())));
        }
    }
    Ok(paths)
}

/// Resolve a file produced by an earlier stage.
pub(crate) fn require_artifact(
    stage: &'static str,
    cfg: &PipelineConfig,
    producer: &str,
    name: &str,
) -> Result<PathBuf, StageError> {
    let path = cfg.output_dir.join(producer).join(name);
    if !path.exists() {
        return Err(input_err(
            stage,
            format!(
                "missing {} (run `charflex {producer}` first)",
                path.display()
            ),
        ));
    }
    Ok(path)
}

/// Collects a stage's outputs in a temp directory and promotes them with a
/// manifest once the stage succeeds.
pub(crate) struct StageWriter {
    stage: &'static str,
    temp_dir: PathBuf,
    final_dir: PathBuf,
    manifest: Manifest,
    promoted: bool,
}

impl StageWriter {
    pub fn new(cfg: &PipelineConfig, stage: &'static str) -> Result<Self, StageError> {
        let final_dir = cfg.output_dir.join(stage);
        let temp_dir = cfg
            .output_dir
            .join(format!(".tmp-{stage}-{}", std::process::id()));
        if temp_dir.exists() {
            fs::remove_dir_all(&temp_dir).map_err(|e| failure(stage, e))?;
        }
        fs::create_dir_all(&temp_dir).map_err(|e| failure(stage, e))?;
        let manifest = Manifest::new(stage, sha256_hex(cfg.canonical().as_bytes()));
        Ok(StageWriter {
            stage,
            temp_dir,
            final_dir,
            manifest,
            promoted: false,
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), StageError> {
        let sha256 = sha256_file(path).map_err(|e| {
            input_err(self.stage, format!("cannot read {}: {e}", path.display()))
        })?;
        self.manifest.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.manifest.notes.push(text.into());
    }

    pub fn write_file(&mut self, name: &str, contents: &str) -> Result<(), StageError> {
        fs::write(self.temp_dir.join(name), contents).map_err(|e| failure(self.stage, e))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// Streaming variant for large artifacts.
    pub fn writer(&mut self, name: &str) -> Result<std::io::BufWriter<fs::File>, StageError> {
        let file = fs::File::create(self.temp_dir.join(name)).map_err(|e| failure(self.stage, e))?;
        self.manifest.outputs.push(name.to_string());
        Ok(std::io::BufWriter::new(file))
    }

    /// Write the manifest and move the directory into place, replacing any
    /// previous run of this stage.
    pub fn promote(mut self) -> Result<(), StageError> {
        self.manifest.outputs.sort();
        let manifest_json = self.manifest.to_json();
        fs::write(self.temp_dir.join("manifest.json"), manifest_json)
            .map_err(|e| failure(self.stage, e))?;
        if self.final_dir.exists() {
            fs::remove_dir_all(&self.final_dir).map_err(|e| failure(self.stage, e))?;
        }
        fs::rename(&self.temp_dir, &self.final_dir).map_err(|e| failure(self.stage, e))?;
        self.promoted = true;
        Ok(())
    }
}

impl Drop for StageWriter {
    fn drop(&mut self) {
        if !self.promoted {
            fs::remove_dir_all(&self.temp_dir).ok();
        }
    }
}

pub(crate) fn format_float(v: f64) -> String {
    // Shortest representation that round-trips.
    format!("{v}")
}

/// Run the full pipeline in stage order.
pub fn run_all(cfg: &PipelineConfig) -> Result<(), StageError> {
    run_entropy(cfg)?;
    run_flexibility(cfg)?;
    run_cooc(cfg)?;
    run_train(cfg)?;
    run_align(cfg)?;
    run_change(cfg)?;
    run_correlate(cfg)?;
    run_report(cfg)?;
    Ok(())
}

// ---------------------------------------------------------------------
// Readers for artifacts produced by earlier stages.
// ---------------------------------------------------------------------

pub(crate) fn read_vocab_file(
    stage: &'static str,
    path: &Path,
) -> Result<Vec<(char, u64)>, StageError> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| failure(stage, e))?);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| failure(stage, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(head), Some(count)) = (fields.next(), fields.next()) else {
            return Err(input_err(
                stage,
                format!("{}: line {} is not `char count`", path.display(), idx + 1),
            ));
        };
        let mut chars = head.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return Err(input_err(
                stage,
                format!("{}: line {}: {head:?} is not a single character", path.display(), idx + 1),
            ));
        };
        let count: u64 = count.parse().map_err(|_| {
            input_err(stage, format!("{}: line {}: bad count {count:?}", path.display(), idx + 1))
        })?;
        entries.push((c, count));
    }
    Ok(entries)
}

pub(crate) fn read_census_csv(
    stage: &'static str,
    path: &Path,
) -> Result<Vec<LexemeStats>, StageError> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| failure(stage, e))?);
    let mut census = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| failure(stage, e))?;
        if idx == 0 || line.trim().is_empty() {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| {
            input_err(stage, format!("{}: line {}: {what}", path.display(), idx + 1))
        };
        if fields.len() != 8 {
            return Err(bad("expected 8 columns"));
        }
        let mut chars = fields[0].chars();
        let (Some(character), None) = (chars.next(), chars.next()) else {
            return Err(bad("first column is not a single character"));
        };
        let parse_u64 =
            |s: &str, what: &str| s.parse::<u64>().map_err(|_| bad(&format!("bad {what}")));
        let noun_count = parse_u64(fields[1], "noun_count")?;
        let verb_count = parse_u64(fields[2], "verb_count")?;
        let other_count = parse_u64(fields[3], "other_count")?;
        let noun_ratio = if fields[5].is_empty() {
            None
        } else {
            Some(fields[5].parse::<f64>().map_err(|_| bad("bad noun_ratio"))?)
        };
        let flexibility = match fields[6] {
            "flexible_noun" => FlexClass::FlexibleNoun,
            "inflexible_noun" => FlexClass::InflexibleNoun,
            "flexible_verb" => FlexClass::FlexibleVerb,
            "inflexible_verb" => FlexClass::InflexibleVerb,
            "unclassified" => FlexClass::Unclassified,
            other => return Err(bad(&format!("unknown class {other:?}"))),
        };
        let tied = fields[7] == "true";
        census.push(LexemeStats {
            character,
            noun_count,
            verb_count,
            other_count,
            noun_ratio,
            flexibility,
            tied,
        });
    }
    Ok(census)
}

pub(crate) fn read_change_scores_csv(
    stage: &'static str,
    path: &Path,
) -> Result<Vec<ChangeScore>, StageError> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| failure(stage, e))?);
    let mut scores = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| failure(stage, e))?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| {
            input_err(stage, format!("{}: line {}: {what}", path.display(), idx + 1))
        };
        if fields.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let mut chars = fields[0].chars();
        let (Some(character), None) = (chars.next(), chars.next()) else {
            return Err(bad("first column is not a single character"));
        };
        let distance: f64 = fields[1].parse().map_err(|_| bad("bad distance"))?;
        let parse_opt = |s: &str| -> Result<Option<f64>, StageError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|_| bad("bad optional value"))
            }
        };
        scores.push(ChangeScore {
            character,
            distance,
            noun_ratio: parse_opt(fields[2])?,
            log_frequency: parse_opt(fields[3])?,
        });
    }
    Ok(scores)
}

/// Vocabulary sidecars consulted for the configured frequency source.
pub(crate) fn frequency_vocab_names(source: FrequencySource) -> &'static [&'static str] {
    match source {
        FrequencySource::Classical => &["classical_vocab.txt"],
        FrequencySource::Modern => &["modern_vocab.txt"],
        FrequencySource::MinOfBoth => &["classical_vocab.txt", "modern_vocab.txt"],
    }
}

/// Frequency map from the cooc stage's vocabulary sidecars, honoring the
/// configured frequency source.
pub(crate) fn load_frequencies(
    stage: &'static str,
    cfg: &PipelineConfig,
) -> Result<BTreeMap<char, u64>, StageError> {
    let load = |name: &str| -> Result<BTreeMap<char, u64>, StageError> {
        let path = require_artifact(stage, cfg, "cooc", name)?;
        Ok(read_vocab_file(stage, &path)?.into_iter().collect())
    };
    match cfg.freq_source {
        FrequencySource::Classical => load("classical_vocab.txt"),
        FrequencySource::Modern => load("modern_vocab.txt"),
        FrequencySource::MinOfBoth => {
            let classical = load("classical_vocab.txt")?;
            let modern = load("modern_vocab.txt")?;
            Ok(classical
                .into_iter()
                .filter_map(|(c, f)| modern.get(&c).map(|m| (c, f.min(*m))))
                .collect())
        }
    }
}
