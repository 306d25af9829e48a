//! Psycholinguistic norms ingestion and character-level aggregation.
//!
//! Rating datasets are word-level; monosyllabic items from the older
//! language usually surface inside multi-character compounds in the modern
//! one, so a character's rating is the unweighted mean over all rated words
//! containing it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormsError {
    #[error("norms file has no '{0}' column (check the column mapping)")]
    MissingColumn(String),
    #[error("norms file is empty or has no header row")]
    EmptyInput,
    #[error("failed to read norms file: {0}")]
    Csv(#[from] csv::Error),
}

/// The six rated dimensions, in canonical (report) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormDimension {
    Valence,
    Arousal,
    Concreteness,
    Imageability,
    ContextAvailability,
    Familiarity,
}

impl NormDimension {
    pub const ALL: [NormDimension; 6] = [
        NormDimension::Valence,
        NormDimension::Arousal,
        NormDimension::Concreteness,
        NormDimension::Imageability,
        NormDimension::ContextAvailability,
        NormDimension::Familiarity,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NormDimension::Valence => "valence",
            NormDimension::Arousal => "arousal",
            NormDimension::Concreteness => "concreteness",
            NormDimension::Imageability => "imageability",
            NormDimension::ContextAvailability => "context_availability",
            NormDimension::Familiarity => "familiarity",
        }
    }
}

impl std::fmt::Display for NormDimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One rated word with all six dimensions present and finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormRecord {
    pub word: String,
    pub ratings: [f64; 6],
}

impl NormRecord {
    pub fn rating(&self, dim: NormDimension) -> f64 {
        self.ratings[dim as usize]
    }
}

/// Mean ratings for one character plus the number of contributing words.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacterNorms {
    pub character: char,
    pub ratings: [f64; 6],
    pub support: u32,
}

impl CharacterNorms {
    pub fn rating(&self, dim: NormDimension) -> f64 {
        self.ratings[dim as usize]
    }
}

/// Maps dataset column headers onto the expected fields; rating datasets
/// disagree on labels, so all of these are configurable.
#[derive(Debug, Clone)]
pub struct NormColumns {
    pub word: String,
    pub valence: String,
    pub arousal: String,
    pub concreteness: String,
    pub imageability: String,
    pub context_availability: String,
    pub familiarity: String,
}

impl Default for NormColumns {
    fn default() -> Self {
        NormColumns {
            word: "word".into(),
            valence: "valence".into(),
            arousal: "arousal".into(),
            concreteness: "concreteness".into(),
            imageability: "imageability".into(),
            context_availability: "context_availability".into(),
            familiarity: "familiarity".into(),
        }
    }
}

impl NormColumns {
    fn rating_columns(&self) -> [&str; 6] {
        [
            &self.valence,
            &self.arousal,
            &self.concreteness,
            &self.imageability,
            &self.context_availability,
            &self.familiarity,
        ]
    }
}

#[derive(Debug)]
pub struct ParsedNorms {
    pub records: Vec<NormRecord>,
    /// Rows dropped for a missing or non-numeric rating (or empty word).
    pub skipped: usize,
}

/// Parse a delimited norms file with a header row.
///
/// Rows with an empty word or any missing/non-numeric rating are skipped
/// and counted in [`ParsedNorms::skipped`]; a mapped column absent from the
/// header is an error.
pub fn parse_norms<R: Read>(
    reader: R,
    columns: &NormColumns,
    delimiter: u8,
) -> Result<ParsedNorms, NormsError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = csv_reader.headers().map_err(|_| NormsError::EmptyInput)?.clone();
    let find = |name: &str| -> Result<usize, NormsError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| NormsError::MissingColumn(name.to_string()))
    };
    let word_idx = find(&columns.word)?;
    let mut rating_idx = [0usize; 6];
    for (slot, name) in rating_idx.iter_mut().zip(columns.rating_columns()) {
        *slot = find(name)?;
    }

    let mut records = Vec::new();
    let mut skipped = 0usize;
    for row in csv_reader.records() {
        let row = row?;
        let word = row.get(word_idx).unwrap_or("").trim();
        if word.is_empty() {
            skipped += 1;
            continue;
        }
        let mut ratings = [0.0f64; 6];
        let mut ok = true;
        for (slot, idx) in ratings.iter_mut().zip(rating_idx) {
            match row.get(idx).map(str::trim).and_then(|s| s.parse::<f64>().ok()) {
                Some(v) if v.is_finite() => *slot = v,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            records.push(NormRecord {
                word: word.to_string(),
                ratings,
            });
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} norms rows with missing or non-numeric ratings");
    }
    Ok(ParsedNorms { records, skipped })
}

/// Aggregate word ratings to characters: each character occurring in a word
/// receives that word's ratings once (duplicates within a word contribute
/// once per word), and the final rating is the unweighted mean over
/// contributing words.
pub fn aggregate_character_norms(records: &[NormRecord]) -> BTreeMap<char, CharacterNorms> {
    let mut sums: BTreeMap<char, ([f64; 6], u32)> = BTreeMap::new();
    for record in records {
        let distinct: BTreeSet<char> = record.word.chars().collect();
        for ch in distinct {
            let entry = sums.entry(ch).or_insert(([0.0; 6], 0));
            for (slot, value) in entry.0.iter_mut().zip(record.ratings) {
                *slot += value;
            }
            entry.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(character, (totals, support))| {
            let mut ratings = [0.0; 6];
            for (slot, total) in ratings.iter_mut().zip(totals) {
                *slot = total / support as f64;
            }
            (
                character,
                CharacterNorms {
                    character,
                    ratings,
                    support,
                },
            )
        })
        .collect()
}
