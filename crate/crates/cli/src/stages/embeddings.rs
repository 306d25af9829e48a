//! Embedding stages: co-occurrence counting, GloVe training, Procrustes
//! alignment, and semantic-change scoring.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use charflex_core::alignment::{
    align_embeddings, AlignOptions, PreprocessOptions,
};
use charflex_core::embedding::{
    load_embeddings, save_embeddings, CoocBuilder, CoocEntry, CooccurrenceTable, EmbeddingMatrix,
    VocabBuilder, Vocabulary,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::stages::{
    failure, format_float, input_err, load_frequencies, read_census_csv, read_vocab_file,
    require_artifact, require_path_list, StageError, StageWriter,
};

const LANGUAGES: [&str; 2] = ["classical", "modern"];

fn raw_paths<'c>(
    stage: &'static str,
    cfg: &'c PipelineConfig,
    language: &str,
) -> Result<&'c [PathBuf], StageError> {
    let (label, paths) = match language {
        "classical" => ("classical_raw", &cfg.classical_raw),
        _ => ("modern_raw", &cfg.modern_raw),
    };
    require_path_list(stage, label, paths)
}

/// `cooc`: vocabulary and co-occurrence sidecars for both raw corpora.
pub fn run_cooc(cfg: &PipelineConfig) -> Result<(), StageError> {
    const STAGE: &str = "cooc";
    // Validate everything up front so a half-built stage never promotes.
    for language in LANGUAGES {
        raw_paths(STAGE, cfg, language)?;
    }
    let punctuation = cfg.punctuation_set();
    let mut writer = StageWriter::new(cfg, STAGE)?;

    for language in LANGUAGES {
        let paths = raw_paths(STAGE, cfg, language)?.to_vec();
        let mut vocab_builder = VocabBuilder::new();
        for path in &paths {
            writer.record_input(path)?;
            let file = fs::File::open(path).map_err(|e| failure(STAGE, e))?;
            vocab_builder
                .add_reader(BufReader::new(file))
                .map_err(|e| failure(STAGE, anyhow::anyhow!("{}: {e}", path.display())))?;
        }
        let vocab = vocab_builder
            .build(cfg.min_frequency, &punctuation)
            .map_err(|e| failure(STAGE, anyhow::anyhow!("{language} corpus: {e}")))?;

        let mut cooc_builder =
            CoocBuilder::new(&vocab, cfg.window).map_err(|e| failure(STAGE, e))?;
        for path in &paths {
            let file = fs::File::open(path).map_err(|e| failure(STAGE, e))?;
            cooc_builder
                .add_reader(BufReader::new(file))
                .map_err(|e| failure(STAGE, anyhow::anyhow!("{}: {e}", path.display())))?;
        }
        let table = cooc_builder.build();
        log::info!(
            "{language}: vocabulary {} characters, {} nonzero co-occurrence cells",
            vocab.len(),
            table.len()
        );

        let mut vocab_out = writer.writer(&format!("{language}_vocab.txt"))?;
        for (c, freq) in vocab.iter() {
            writeln!(vocab_out, "{c} {freq}").map_err(|e| failure(STAGE, e))?;
        }
        vocab_out.flush().map_err(|e| failure(STAGE, e))?;

        let mut cooc_out = writer.writer(&format!("{language}_cooc.csv"))?;
        writeln!(cooc_out, "i,j,weight").map_err(|e| failure(STAGE, e))?;
        for entry in table.iter() {
            writeln!(cooc_out, "{},{},{}", entry.i, entry.j, format_float(entry.weight))
                .map_err(|e| failure(STAGE, e))?;
        }
        cooc_out.flush().map_err(|e| failure(STAGE, e))?;
    }
    writer.promote()
}

fn read_cooc_csv(stage: &'static str, path: &Path) -> Result<CooccurrenceTable, StageError> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| failure(stage, e))?);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| failure(stage, e))?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let bad =
            |what: &str| input_err(stage, format!("{}: line {}: {what}", path.display(), idx + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad("expected i,j,weight"));
        }
        entries.push(CoocEntry {
            i: fields[0].parse().map_err(|_| bad("bad row index"))?,
            j: fields[1].parse().map_err(|_| bad("bad column index"))?,
            weight: fields[2].parse().map_err(|_| bad("bad weight"))?,
        });
    }
    Ok(CooccurrenceTable::from_entries(entries))
}

pub(crate) fn load_vocab(
    stage: &'static str,
    path: &Path,
) -> Result<Vocabulary, StageError> {
    let entries = read_vocab_file(stage, path)?;
    Vocabulary::from_entries(entries)
        .map_err(|e| input_err(stage, format!("{}: {e}", path.display())))
}

/// `train`: GloVe vectors for both languages from the cooc sidecars.
pub fn run_train(cfg: &PipelineConfig) -> Result<(), StageError> {
    const STAGE: &str = "train";
    let config = cfg.train_config();
    config.validate().map_err(|e| failure(STAGE, e))?;

    let mut inputs = Vec::new();
    for language in LANGUAGES {
        inputs.push((
            language,
            require_artifact(STAGE, cfg, "cooc", &format!("{language}_vocab.txt"))?,
            require_artifact(STAGE, cfg, "cooc", &format!("{language}_cooc.csv"))?,
        ));
    }

    let mut writer = StageWriter::new(cfg, STAGE)?;
    for (language, vocab_path, cooc_path) in inputs {
        writer.record_input(&vocab_path)?;
        writer.record_input(&cooc_path)?;
        let vocab = load_vocab(STAGE, &vocab_path)?;
        let table = read_cooc_csv(STAGE, &cooc_path)?;

        let outcome =
            charflex_core::embedding::train_glove(&table, &vocab, &config, cfg.parallelism())
                .map_err(|e| failure(STAGE, anyhow::anyhow!("{language}: {e}")))?;
        log::info!(
            "{language}: trained {} vectors, final mean loss {:.6}",
            outcome.embeddings.len(),
            outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
        );

        let mut vectors = writer.writer(&format!("{language}_vectors.txt"))?;
        save_embeddings(&outcome.embeddings, &mut vectors).map_err(|e| failure(STAGE, e))?;
        vectors.flush().map_err(|e| failure(STAGE, e))?;

        let mut log_out = writer.writer(&format!("{language}_train_log.jsonl"))?;
        for (epoch, mean_loss) in outcome.epoch_losses.iter().enumerate() {
            writeln!(
                log_out,
                "{{\"epoch\":{},\"mean_loss\":{}}}",
                epoch + 1,
                format_float(*mean_loss)
            )
            .map_err(|e| failure(STAGE, e))?;
        }
        log_out.flush().map_err(|e| failure(STAGE, e))?;
    }
    writer.promote()
}

pub(crate) fn load_embedding_file(
    stage: &'static str,
    path: &Path,
) -> Result<EmbeddingMatrix, StageError> {
    let file = fs::File::open(path).map_err(|e| failure(stage, e))?;
    load_embeddings(BufReader::new(file))
        .map_err(|e| input_err(stage, format!("{}: {e}", path.display())))
}

fn preprocess_options(cfg: &PipelineConfig) -> PreprocessOptions {
    PreprocessOptions {
        center: !cfg.no_center,
        normalize: !cfg.no_normalize,
    }
}

#[derive(Serialize)]
struct AlignmentReport {
    dim: usize,
    shared_vocab_size: usize,
    fitted: usize,
    residual: f64,
    center: bool,
    normalize: bool,
}

/// `align`: fit the orthogonal rotation between the two trained spaces.
pub fn run_align(cfg: &PipelineConfig) -> Result<(), StageError> {
    const STAGE: &str = "align";
    let classical_path = require_artifact(STAGE, cfg, "train", "classical_vectors.txt")?;
    let modern_path = require_artifact(STAGE, cfg, "train", "modern_vectors.txt")?;

    let mut writer = StageWriter::new(cfg, STAGE)?;
    writer.record_input(&classical_path)?;
    writer.record_input(&modern_path)?;

    let classical = load_embedding_file(STAGE, &classical_path)?;
    let modern = load_embedding_file(STAGE, &modern_path)?;
    if classical.dim() != modern.dim() {
        return Err(input_err(
            STAGE,
            format!(
                "embedding dimensions differ: {} vs {}",
                classical.dim(),
                modern.dim()
            ),
        ));
    }

    let aligned = align_embeddings(
        &classical,
        &modern,
        &AlignOptions {
            fit_cap: cfg.shared_vocab_cap,
            preprocess: preprocess_options(cfg),
        },
    )
    .map_err(|e| failure(STAGE, e))?;

    let mut rotation_out = writer.writer("rotation.txt")?;
    let rotation = &aligned.rotation;
    for row in 0..rotation.nrows() {
        let mut line = String::new();
        for col in 0..rotation.ncols() {
            if col > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{:.16e}", rotation[(row, col)]));
        }
        writeln!(rotation_out, "{line}").map_err(|e| failure(STAGE, e))?;
    }
    rotation_out.flush().map_err(|e| failure(STAGE, e))?;

    let shared: String = aligned
        .shared_vocab
        .iter()
        .map(|c| format!("{c}\n"))
        .collect();
    writer.write_file("shared_vocab.txt", &shared)?;

    let report = AlignmentReport {
        dim: classical.dim(),
        shared_vocab_size: aligned.shared_vocab.len(),
        fitted: aligned.fitted,
        residual: aligned.residual,
        center: !cfg.no_center,
        normalize: !cfg.no_normalize,
    };
    writer.write_file(
        "alignment.json",
        &serde_json::to_string_pretty(&report).map_err(|e| failure(STAGE, e))?,
    )?;
    writer.promote()
}

pub(crate) fn read_rotation(
    stage: &'static str,
    path: &Path,
    dim: usize,
) -> Result<DMatrix<f64>, StageError> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| failure(stage, e))?);
    let mut values = Vec::new();
    let mut rows = 0usize;
    for line in reader.lines() {
        let line = line.map_err(|e| failure(stage, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let row = row.map_err(|_| {
            input_err(stage, format!("{}: unparseable rotation row", path.display()))
        })?;
        if row.len() != dim {
            return Err(input_err(
                stage,
                format!(
                    "{}: rotation row has {} entries, embeddings have dimension {dim}",
                    path.display(),
                    row.len()
                ),
            ));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != dim {
        return Err(input_err(
            stage,
            format!("{}: rotation has {rows} rows, expected {dim}", path.display()),
        ));
    }
    Ok(DMatrix::from_row_slice(dim, dim, &values))
}

/// `change`: per-character semantic-change distances under the saved
/// rotation, joined with census noun ratios and corpus frequencies.
pub fn run_change(cfg: &PipelineConfig) -> Result<(), StageError> {
    const STAGE: &str = "change";
    let classical_path = require_artifact(STAGE, cfg, "train", "classical_vectors.txt")?;
    let modern_path = require_artifact(STAGE, cfg, "train", "modern_vectors.txt")?;
    let rotation_path = require_artifact(STAGE, cfg, "align", "rotation.txt")?;
    let census_path = require_artifact(STAGE, cfg, "flexibility", "census.csv")?;

    let mut writer = StageWriter::new(cfg, STAGE)?;
    writer.record_input(&classical_path)?;
    writer.record_input(&modern_path)?;
    writer.record_input(&rotation_path)?;
    writer.record_input(&census_path)?;
    for name in crate::stages::frequency_vocab_names(cfg.freq_source) {
        let path = require_artifact(STAGE, cfg, "cooc", name)?;
        writer.record_input(&path)?;
    }

    let classical = load_embedding_file(STAGE, &classical_path)?;
    let modern = load_embedding_file(STAGE, &modern_path)?;
    let rotation = read_rotation(STAGE, &rotation_path, classical.dim())?;

    // Rebuild the preprocessed shared-vocabulary matrices exactly as the
    // align stage did, then score against its rotation.
    use charflex_core::alignment::{embedding_rows, preprocess, semantic_change_scores, shared_vocabulary};
    let shared = shared_vocabulary(&classical, &modern).map_err(|e| failure(STAGE, e))?;
    let opts = preprocess_options(cfg);
    let x_c = preprocess(
        &embedding_rows(&classical, &shared).map_err(|e| failure(STAGE, e))?,
        &shared,
        opts,
    )
    .map_err(|e| failure(STAGE, e))?;
    let x_m = preprocess(
        &embedding_rows(&modern, &shared).map_err(|e| failure(STAGE, e))?,
        &shared,
        opts,
    )
    .map_err(|e| failure(STAGE, e))?;
    let mut scores =
        semantic_change_scores(&x_c, &x_m, &rotation, &shared).map_err(|e| failure(STAGE, e))?;

    let census = read_census_csv(STAGE, &census_path)?;
    let noun_ratios: BTreeMap<char, f64> = census
        .iter()
        .filter_map(|l| l.noun_ratio.map(|r| (l.character, r)))
        .collect();
    let frequencies = load_frequencies(STAGE, cfg)?;
    charflex_core::alignment::enrich_scores(&mut scores, &noun_ratios, &frequencies);

    let mut csv = String::from("character,distance,noun_ratio,log_frequency\n");
    for score in &scores {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            score.character,
            format_float(score.distance),
            score.noun_ratio.map(format_float).unwrap_or_default(),
            score.log_frequency.map(format_float).unwrap_or_default(),
        ));
    }
    writer.write_file("change_scores.csv", &csv)?;
    writer.promote()
}
