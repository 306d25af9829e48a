//! Correlation studies and figure rendering.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use charflex_core::norms::{aggregate_character_norms, parse_norms, NormDimension};
use charflex_core::stats::{
    correlate_change, correlate_noun_ratio_with_norms, join_census_with_norms,
    join_change_scores, permutation_p_value, CorrelationResult, FrequencySource,
};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::stages::{
    failure, format_float, input_err, load_frequencies, read_census_csv, read_change_scores_csv,
    require_artifact, require_path, StageError, StageWriter,
};
use crate::svg;

#[derive(Serialize)]
struct CorrelationRow {
    variable: String,
    rho: f64,
    p_value: f64,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    permutation_p: Option<f64>,
}

#[derive(Serialize)]
struct CorrelationReport {
    frequency_source: &'static str,
    noun_ratio_norms: Vec<CorrelationRow>,
    semantic_change: Vec<CorrelationRow>,
}

fn freq_source_label(source: FrequencySource) -> &'static str {
    match source {
        FrequencySource::Classical => "classical",
        FrequencySource::Modern => "modern",
        FrequencySource::MinOfBoth => "min",
    }
}

fn correlation_csv(rows: &[CorrelationRow]) -> String {
    let mut csv = String::from("variable,rho,p_value,n,permutation_p\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.variable,
            format_float(row.rho),
            format_float(row.p_value),
            row.n,
            row.permutation_p.map(format_float).unwrap_or_default(),
        ));
    }
    csv
}

fn with_permutation(
    results: Vec<CorrelationResult>,
    columns: &[(&str, Vec<f64>, Vec<f64>)],
    cfg: &PipelineConfig,
) -> Result<Vec<CorrelationRow>, StageError> {
    const STAGE: &str = "correlate";
    results
        .into_iter()
        .map(|r| {
            let permutation_p = if cfg.permutation_check {
                let (_, x, y) = columns
                    .iter()
                    .find(|(name, _, _)| *name == r.variable_name)
                    .ok_or_else(|| failure(STAGE, anyhow::anyhow!("missing columns for {}", r.variable_name)))?;
                Some(
                    permutation_p_value(x, y, cfg.permutation_shuffles, cfg.seed)
                        .map_err(|e| failure(STAGE, e))?,
                )
            } else {
                None
            };
            Ok(CorrelationRow {
                variable: r.variable_name,
                rho: r.rho,
                p_value: r.p_value,
                n: r.n,
                permutation_p,
            })
        })
        .collect()
}

/// `correlate`: noun ratio vs norms, and semantic change vs noun ratio and
/// log frequency, plus the scatter data behind the figures.
pub fn run_correlate(cfg: &PipelineConfig) -> Result<(), StageError> {
    const STAGE: &str = "correlate";
    let norms_path = require_path(STAGE, "norms_file", &cfg.norms_file)?;
    let census_path = require_artifact(STAGE, cfg, "flexibility", "census.csv")?;
    let change_path = require_artifact(STAGE, cfg, "change", "change_scores.csv")?;

    let mut writer = StageWriter::new(cfg, STAGE)?;
    writer.record_input(norms_path)?;
    writer.record_input(&census_path)?;
    writer.record_input(&change_path)?;
    for name in crate::stages::frequency_vocab_names(cfg.freq_source) {
        let path = require_artifact(STAGE, cfg, "cooc", name)?;
        writer.record_input(&path)?;
    }

    let census = read_census_csv(STAGE, &census_path)?;
    let change_scores = read_change_scores_csv(STAGE, &change_path)?;
    let frequencies = load_frequencies(STAGE, cfg)?;

    let norms_file = fs::File::open(norms_path).map_err(|e| failure(STAGE, e))?;
    let parsed = parse_norms(
        BufReader::new(norms_file),
        &cfg.norm_columns(),
        cfg.norms_delimiter_byte(),
    )
    .map_err(|e| input_err(STAGE, format!("{}: {e}", norms_path.display())))?;
    if parsed.skipped > 0 {
        writer.note(format!("skipped {} malformed norms rows", parsed.skipped));
    }
    let char_norms = aggregate_character_norms(&parsed.records);

    let mut norms_csv = String::from(
        "character,valence,arousal,concreteness,imageability,context_availability,familiarity,support\n",
    );
    for norms in char_norms.values() {
        norms_csv.push_str(&norms.character.to_string());
        for rating in norms.ratings {
            norms_csv.push(',');
            norms_csv.push_str(&format_float(rating));
        }
        norms_csv.push_str(&format!(",{}\n", norms.support));
    }
    writer.write_file("character_norms.csv", &norms_csv)?;

    // Table 4 shape: one row per norm dimension.
    let norm_join = join_census_with_norms(&census, &char_norms).map_err(|e| failure(STAGE, e))?;
    let norm_results =
        correlate_noun_ratio_with_norms(&census, &char_norms).map_err(|e| failure(STAGE, e))?;
    let norm_columns: Vec<(&str, Vec<f64>, Vec<f64>)> = NormDimension::ALL
        .iter()
        .map(|&dim| (dim.label(), norm_join.noun_ratios.clone(), norm_join.rating_column(dim)))
        .collect();
    let norm_rows = with_permutation(norm_results, &norm_columns, cfg)?;
    writer.write_file("norm_correlations.csv", &correlation_csv(&norm_rows))?;

    // Table 6 shape: semantic change against noun ratio and log frequency.
    let change_join =
        join_change_scores(&change_scores, &census, &frequencies).map_err(|e| failure(STAGE, e))?;
    let change_results =
        correlate_change(&change_scores, &census, &frequencies).map_err(|e| failure(STAGE, e))?;
    let change_columns: Vec<(&str, Vec<f64>, Vec<f64>)> = vec![
        (
            "noun_ratio",
            change_join.ratio_distances.clone(),
            change_join.noun_ratios.clone(),
        ),
        (
            "log_frequency",
            change_join.freq_distances.clone(),
            change_join.log_frequencies.clone(),
        ),
    ];
    let change_rows = with_permutation(change_results, &change_columns, cfg)?;
    writer.write_file("change_correlations.csv", &correlation_csv(&change_rows))?;

    // Scatter data for the figures.
    let mut scatter = String::from("character,noun_ratio,concreteness\n");
    let concreteness = norm_join.rating_column(NormDimension::Concreteness);
    for ((c, ratio), conc) in norm_join
        .characters
        .iter()
        .zip(&norm_join.noun_ratios)
        .zip(&concreteness)
    {
        scatter.push_str(&format!("{c},{},{}\n", format_float(*ratio), format_float(*conc)));
    }
    writer.write_file("scatter_concreteness.csv", &scatter)?;

    let mut scatter = String::from("character,distance,noun_ratio\n");
    for ((c, dist), ratio) in change_join
        .ratio_characters
        .iter()
        .zip(&change_join.ratio_distances)
        .zip(&change_join.noun_ratios)
    {
        scatter.push_str(&format!("{c},{},{}\n", format_float(*dist), format_float(*ratio)));
    }
    writer.write_file("scatter_change_noun_ratio.csv", &scatter)?;

    let mut scatter = String::from("character,distance,log_frequency\n");
    for ((c, dist), logf) in change_join
        .freq_characters
        .iter()
        .zip(&change_join.freq_distances)
        .zip(&change_join.log_frequencies)
    {
        scatter.push_str(&format!("{c},{},{}\n", format_float(*dist), format_float(*logf)));
    }
    writer.write_file("scatter_change_log_frequency.csv", &scatter)?;

    let report = CorrelationReport {
        frequency_source: freq_source_label(cfg.freq_source),
        noun_ratio_norms: norm_rows,
        semantic_change: change_rows,
    };
    writer.write_file(
        "correlations.json",
        &serde_json::to_string_pretty(&report).map_err(|e| failure(STAGE, e))?,
    )?;
    writer.promote()
}

struct PositionsFile {
    rows: Vec<svg::PositionShare>,
}

fn read_positions_csv(stage: &'static str, path: &Path) -> Result<PositionsFile, StageError> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| failure(stage, e))?);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| failure(stage, e))?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(input_err(
                stage,
                format!("{}: line {}: expected 6 columns", path.display(), idx + 1),
            ));
        }
        let label = if fields[1].is_empty() {
            fields[0].replace('_', "-")
        } else {
            format!("{} {}", fields[0], fields[1])
        };
        let parse = |s: &str| -> Result<f64, StageError> {
            s.parse().map_err(|_| {
                input_err(stage, format!("{}: line {}: bad count", path.display(), idx + 1))
            })
        };
        rows.push(svg::PositionShare {
            label,
            noun: parse(fields[2])?,
            verb: parse(fields[3])?,
            other: parse(fields[4])?,
        });
    }
    Ok(PositionsFile { rows })
}

fn read_scatter_csv(
    stage: &'static str,
    path: &Path,
    x_col: usize,
    y_col: usize,
) -> Result<Vec<(f64, f64)>, StageError> {
    let reader = BufReader::new(fs::File::open(path).map_err(|e| failure(stage, e))?);
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| failure(stage, e))?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || input_err(stage, format!("{}: line {}: bad point", path.display(), idx + 1));
        let x: f64 = fields.get(x_col).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let y: f64 = fields.get(y_col).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        points.push((x, y));
    }
    Ok(points)
}

/// `report`: render the four figures from files written by earlier stages.
pub fn run_report(cfg: &PipelineConfig) -> Result<(), StageError> {
    const STAGE: &str = "report";
    let classical_positions = require_artifact(STAGE, cfg, "entropy", "classical_positions.csv")?;
    let modern_positions = require_artifact(STAGE, cfg, "entropy", "modern_positions.csv")?;
    let concreteness = require_artifact(STAGE, cfg, "correlate", "scatter_concreteness.csv")?;
    let change_ratio = require_artifact(STAGE, cfg, "correlate", "scatter_change_noun_ratio.csv")?;
    let change_freq =
        require_artifact(STAGE, cfg, "correlate", "scatter_change_log_frequency.csv")?;

    let mut writer = StageWriter::new(cfg, STAGE)?;
    for path in [
        &classical_positions,
        &modern_positions,
        &concreteness,
        &change_ratio,
        &change_freq,
    ] {
        writer.record_input(path)?;
    }

    let panels = vec![
        (
            "Classical".to_string(),
            read_positions_csv(STAGE, &classical_positions)?.rows,
        ),
        (
            "Modern".to_string(),
            read_positions_csv(STAGE, &modern_positions)?.rows,
        ),
    ];
    writer.write_file(
        "fig1_pos_distributions.svg",
        &svg::stacked_position_chart("POS distribution by syntactic position", &panels),
    )?;

    let points = read_scatter_csv(STAGE, &concreteness, 1, 2)?;
    writer.write_file(
        "fig2_noun_ratio_concreteness.svg",
        &svg::scatter_plot("Noun ratio vs concreteness", "noun ratio", "concreteness", &points),
    )?;

    // Change scatters put the explanatory variable on x.
    let points: Vec<(f64, f64)> = read_scatter_csv(STAGE, &change_ratio, 2, 1)?;
    writer.write_file(
        "fig3_change_noun_ratio.svg",
        &svg::scatter_plot(
            "Semantic change vs noun ratio",
            "noun ratio",
            "semantic change (euclidean)",
            &points,
        ),
    )?;

    let points: Vec<(f64, f64)> = read_scatter_csv(STAGE, &change_freq, 2, 1)?;
    writer.write_file(
        "fig4_change_log_frequency.svg",
        &svg::scatter_plot(
            "Semantic change vs log frequency",
            "log frequency",
            "semantic change (euclidean)",
            &points,
        ),
    )?;
    writer.promote()
}
