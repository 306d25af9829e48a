//! Treebank-driven stages: syntactic-position entropy tables and the
//! flexibility census.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use charflex_core::posstats::{
    entropy_summary, lexeme_census, pos_entropy_with_base, position_distributions,
    top_function_words, FlexClass, LexemeStats, SyntacticPosition,
};
use charflex_core::treebank::{parse_conllu_with, to_char_counts, ParseOptions, Treebank};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::stages::{failure, format_float, input_err, require_path, StageError, StageWriter};

pub(crate) fn load_treebank(
    stage: &'static str,
    cfg: &PipelineConfig,
    path: &Path,
    label: &str,
) -> Result<Treebank, StageError> {
    let file = fs::File::open(path)
        .map_err(|e| input_err(stage, format!("{}: {e}", path.display())))?;
    parse_conllu_with(
        BufReader::new(file),
        label,
        ParseOptions { propn_as_noun: cfg.propn_as_noun },
    )
    .map_err(|e| input_err(stage, format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct PositionRow {
    position: String,
    function_word: Option<String>,
    noun: u64,
    verb: u64,
    other: u64,
    entropy: Option<f64>,
}

#[derive(Serialize)]
struct LanguageEntropy {
    language: String,
    function_words: Vec<String>,
    positions: Vec<PositionRow>,
    mean: f64,
    median: f64,
}

#[derive(Serialize)]
struct EntropyReport {
    log_base: f64,
    classical: LanguageEntropy,
    modern: LanguageEntropy,
    notes: Vec<String>,
}

fn position_fields(position: &SyntacticPosition) -> (String, Option<String>) {
    match position {
        SyntacticPosition::ClauseInitial => ("clause_initial".into(), None),
        SyntacticPosition::ClauseFinal => ("clause_final".into(), None),
        SyntacticPosition::Before(fw) => ("before".into(), Some(fw.clone())),
        SyntacticPosition::After(fw) => ("after".into(), Some(fw.clone())),
    }
}

fn analyze_language(
    stage: &'static str,
    cfg: &PipelineConfig,
    treebank: &Treebank,
) -> Result<LanguageEntropy, StageError> {
    let function_words = top_function_words(treebank, cfg.function_words);
    let table = position_distributions(treebank, &function_words);

    let mut rows = Vec::new();
    let mut defined: Vec<(SyntacticPosition, f64)> = Vec::new();
    for (position, dist) in &table {
        let entropy = if dist.total() > 0 {
            let h = pos_entropy_with_base(dist, cfg.entropy_log_base)
                .map_err(|e| failure(stage, e))?;
            defined.push((position.clone(), h));
            Some(h)
        } else {
            log::warn!(
                "{}: position {position} is unobserved; entropy undefined",
                treebank.language_label
            );
            None
        };
        let (kind, function_word) = position_fields(position);
        rows.push(PositionRow {
            position: kind,
            function_word,
            noun: dist.noun,
            verb: dist.verb,
            other: dist.other,
            entropy,
        });
    }
    let summary = entropy_summary(defined).map_err(|e| failure(stage, e))?;
    Ok(LanguageEntropy {
        language: treebank.language_label.clone(),
        function_words,
        positions: rows,
        mean: summary.mean,
        median: summary.median,
    })
}

fn positions_csv(language: &LanguageEntropy) -> String {
    let mut csv = String::from("position,function_word,noun,verb,other,entropy\n");
    for row in &language.positions {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.position,
            row.function_word.as_deref().unwrap_or(""),
            row.noun,
            row.verb,
            row.other,
            row.entropy.map(format_float).unwrap_or_default(),
        ));
    }
    csv
}

/// `entropy`: per-language position distributions and entropies.
pub fn run_entropy(cfg: &PipelineConfig) -> Result<(), StageError> {
    const STAGE: &str = "entropy";
    let classical_path = require_path(STAGE, "classical_treebank", &cfg.classical_treebank)?;
    let modern_path = require_path(STAGE, "modern_treebank", &cfg.modern_treebank)?;

    let mut writer = StageWriter::new(cfg, STAGE)?;
    writer.record_input(classical_path)?;
    writer.record_input(modern_path)?;

    let classical_tb = load_treebank(STAGE, cfg, classical_path, "classical")?;
    let modern_tb = load_treebank(STAGE, cfg, modern_path, "modern")?;

    let classical = analyze_language(STAGE, cfg, &classical_tb)?;
    let modern = analyze_language(STAGE, cfg, &modern_tb)?;

    writer.write_file("classical_positions.csv", &positions_csv(&classical))?;
    writer.write_file("modern_positions.csv", &positions_csv(&modern))?;

    if cfg.dump_treebanks {
        writer.write_file("classical_treebank.json", &classical_tb.to_json())?;
        writer.write_file("modern_treebank.json", &modern_tb.to_json())?;
    }

    let report = EntropyReport {
        log_base: cfg.entropy_log_base,
        classical,
        modern,
        notes: vec![
            "single-token clauses count toward both clause-initial and clause-final".into(),
            "positions are word-level; the census is character-level".into(),
            "mean and median cover positions with at least one observation".into(),
        ],
    };
    writer.write_file(
        "summary.json",
        &serde_json::to_string_pretty(&report).map_err(|e| failure(STAGE, e))?,
    )?;
    writer.promote()
}

#[derive(Serialize)]
struct ClassSummary {
    count: usize,
    most_common: Vec<char>,
}

#[derive(Serialize)]
struct FlexibilityReport {
    min_count: u64,
    census_size: usize,
    noun_characters: usize,
    verb_characters: usize,
    flexible_noun_fraction: f64,
    flexible_verb_fraction: f64,
    tied_characters: usize,
    unclassified_characters: usize,
    flexible_nouns: ClassSummary,
    inflexible_nouns: ClassSummary,
    flexible_verbs: ClassSummary,
    inflexible_verbs: ClassSummary,
}

fn class_summary(census: &[LexemeStats], class: FlexClass, top: usize) -> ClassSummary {
    // Census is already sorted by descending total count.
    let members: Vec<char> = census
        .iter()
        .filter(|l| l.flexibility == class)
        .map(|l| l.character)
        .collect();
    ClassSummary {
        count: members.len(),
        most_common: members.into_iter().take(top).collect(),
    }
}

/// `flexibility`: the per-character noun/verb census over the classical
/// treebank.
pub fn run_flexibility(cfg: &PipelineConfig) -> Result<(), StageError> {
    const STAGE: &str = "flexibility";
    let path = require_path(STAGE, "classical_treebank", &cfg.classical_treebank)?;

    let mut writer = StageWriter::new(cfg, STAGE)?;
    writer.record_input(path)?;

    let treebank = load_treebank(STAGE, cfg, path, "classical")?;
    let counts = to_char_counts(&treebank);
    let census = lexeme_census(&counts, cfg.min_count);

    let mut csv = String::from("character,noun_count,verb_count,other_count,total,noun_ratio,class,tied\n");
    for lexeme in &census {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            lexeme.character,
            lexeme.noun_count,
            lexeme.verb_count,
            lexeme.other_count,
            lexeme.total(),
            lexeme.noun_ratio.map(format_float).unwrap_or_default(),
            lexeme.flexibility.label(),
            lexeme.tied,
        ));
    }
    writer.write_file("census.csv", &csv)?;

    let flexible_nouns = class_summary(&census, FlexClass::FlexibleNoun, 8);
    let inflexible_nouns = class_summary(&census, FlexClass::InflexibleNoun, 8);
    let flexible_verbs = class_summary(&census, FlexClass::FlexibleVerb, 8);
    let inflexible_verbs = class_summary(&census, FlexClass::InflexibleVerb, 8);
    let noun_characters = flexible_nouns.count + inflexible_nouns.count;
    let verb_characters = flexible_verbs.count + inflexible_verbs.count;
    let report = FlexibilityReport {
        min_count: cfg.min_count,
        census_size: census.len(),
        noun_characters,
        verb_characters,
        flexible_noun_fraction: ratio(flexible_nouns.count, noun_characters),
        flexible_verb_fraction: ratio(flexible_verbs.count, verb_characters),
        tied_characters: census.iter().filter(|l| l.tied).count(),
        unclassified_characters: census
            .iter()
            .filter(|l| l.flexibility == FlexClass::Unclassified)
            .count(),
        flexible_nouns,
        inflexible_nouns,
        flexible_verbs,
        inflexible_verbs,
    };
    writer.write_file(
        "summary.json",
        &serde_json::to_string_pretty(&report).map_err(|e| failure(STAGE, e))?,
    )?;
    writer.promote()
}

fn ratio(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}
