//! Syntactic-position POS statistics and the noun/verb flexibility census.
//!
//! A syntactic position is one of: clause-initial, clause-final, or the slot
//! immediately before/after one of the top grammatical function words. With
//! `k` function words there are `2k + 2` positions. For each position we
//! accumulate the coarse-tag distribution of the words observed there and
//! summarize it as Shannon entropy; lower entropy means the position
//! predicts part of speech better.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::treebank::{split_clauses, CharTagCounts, CoarseTag, Treebank};

/// UD tags treated as grammatical function words.
pub const FUNCTION_WORD_TAGS: [&str; 5] = ["AUX", "PART", "CCONJ", "SCONJ", "ADP"];

#[derive(Debug, Error)]
pub enum PosStatsError {
    #[error("entropy undefined for a distribution with zero total count")]
    EmptyDistribution,
    #[error("entropy summary requires at least one position")]
    NoPositions,
    #[error("log base must be positive and not 1")]
    BadLogBase,
}

/// One of the `2k + 2` syntactic positions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SyntacticPosition {
    ClauseInitial,
    ClauseFinal,
    Before(String),
    After(String),
}

impl std::fmt::Display for SyntacticPosition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SyntacticPosition::ClauseInitial => write!(f, "clause-initial"),
            SyntacticPosition::ClauseFinal => write!(f, "clause-final"),
            SyntacticPosition::Before(fw) => write!(f, "before {fw}"),
            SyntacticPosition::After(fw) => write!(f, "after {fw}"),
        }
    }
}

/// Counts of coarse tags observed at one syntactic position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PosDistribution {
    pub noun: u64,
    pub verb: u64,
    pub other: u64,
}

impl PosDistribution {
    pub fn new(noun: u64, verb: u64, other: u64) -> Self {
        PosDistribution { noun, verb, other }
    }

    pub fn total(&self) -> u64 {
        self.noun + self.verb + self.other
    }

    pub fn bump(&mut self, tag: CoarseTag) {
        match tag {
            CoarseTag::Noun => self.noun += 1,
            CoarseTag::Verb => self.verb += 1,
            CoarseTag::Other => self.other += 1,
        }
    }
}

/// The `k` most frequent function-word forms (UPOS in
/// [`FUNCTION_WORD_TAGS`]), most frequent first, ties broken by codepoint
/// order. If fewer than `k` distinct forms exist, all are returned and a
/// warning is logged.
pub fn top_function_words(treebank: &Treebank, k: usize) -> Vec<String> {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for token in treebank.tokens() {
        if FUNCTION_WORD_TAGS.contains(&token.upos.as_str()) {
            *freq.entry(token.form.as_str()).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if ranked.len() < k {
        log::warn!(
            "treebank {:?} has only {} function-word forms (requested {})",
            treebank.language_label,
            ranked.len(),
            k
        );
    }
    ranked.into_iter().take(k).map(|(form, _)| form.to_string()).collect()
}

/// Tally the coarse-tag distribution of every syntactic position.
///
/// Per clause: the first token counts toward clause-initial and the last
/// toward clause-final (a one-token clause counts toward both). Within a
/// clause, the token immediately before/after each occurrence of a function
/// word counts toward that word's before/after position. Adjacency never
/// crosses clause boundaries, so punctuation cannot sit next to a function
/// word invisibly.
///
/// Every position is present in the result, in canonical order
/// (clause-initial, clause-final, then before/after per function word),
/// even if unobserved.
pub fn position_distributions(
    treebank: &Treebank,
    function_words: &[String],
) -> Vec<(SyntacticPosition, PosDistribution)> {
    let mut table: BTreeMap<SyntacticPosition, PosDistribution> = BTreeMap::new();
    table.insert(SyntacticPosition::ClauseInitial, PosDistribution::default());
    table.insert(SyntacticPosition::ClauseFinal, PosDistribution::default());
    for fw in function_words {
        table.insert(SyntacticPosition::Before(fw.clone()), PosDistribution::default());
        table.insert(SyntacticPosition::After(fw.clone()), PosDistribution::default());
    }

    for sentence in &treebank.sentences {
        for clause in split_clauses(sentence) {
            let first = &clause[0];
            let last = &clause[clause.len() - 1];
            table
                .get_mut(&SyntacticPosition::ClauseInitial)
                .unwrap()
                .bump(first.coarse);
            table
                .get_mut(&SyntacticPosition::ClauseFinal)
                .unwrap()
                .bump(last.coarse);

            for (i, token) in clause.iter().enumerate() {
                if !function_words.iter().any(|fw| fw == &token.form) {
                    continue;
                }
                if i > 0 {
                    table
                        .get_mut(&SyntacticPosition::Before(token.form.clone()))
                        .unwrap()
                        .bump(clause[i - 1].coarse);
                }
                if i + 1 < clause.len() {
                    table
                        .get_mut(&SyntacticPosition::After(token.form.clone()))
                        .unwrap()
                        .bump(clause[i + 1].coarse);
                }
            }
        }
    }

    canonical_order(function_words)
        .into_iter()
        .map(|pos| {
            let dist = table.remove(&pos).unwrap();
            (pos, dist)
        })
        .collect()
}

/// Presentation order for the position table: clause positions first, then
/// before/after per function word in the given (frequency) order.
pub fn canonical_order(function_words: &[String]) -> Vec<SyntacticPosition> {
    let mut order = vec![SyntacticPosition::ClauseInitial, SyntacticPosition::ClauseFinal];
    for fw in function_words {
        order.push(SyntacticPosition::Before(fw.clone()));
        order.push(SyntacticPosition::After(fw.clone()));
    }
    order
}

/// Natural-log Shannon entropy of the normalized three-way distribution,
/// with `0 * ln 0 = 0`. Errors when the distribution has no observations.
pub fn pos_entropy(dist: &PosDistribution) -> Result<f64, PosStatsError> {
    pos_entropy_with_base(dist, std::f64::consts::E)
}

/// Entropy in an arbitrary log base (natural log divided by `ln base`).
pub fn pos_entropy_with_base(dist: &PosDistribution, base: f64) -> Result<f64, PosStatsError> {
    if base.is_nan() || base <= 0.0 || base == 1.0 {
        return Err(PosStatsError::BadLogBase);
    }
    let total = dist.total();
    if total == 0 {
        return Err(PosStatsError::EmptyDistribution);
    }
    let total = total as f64;
    let h_nat: f64 = [dist.noun, dist.verb, dist.other]
        .iter()
        .filter(|&&count| count > 0)
        .map(|&count| {
            let p = count as f64 / total;
            -p * p.ln()
        })
        .sum();
    // A fully predictable position sums to -0.0; normalize the sign.
    Ok(if h_nat == 0.0 { 0.0 } else { h_nat / base.ln() })
}

/// Per-position entropies with their mean and median.
#[derive(Debug, Clone, Serialize)]
pub struct EntropySummary {
    pub rows: Vec<(SyntacticPosition, f64)>,
    pub mean: f64,
    pub median: f64,
}

/// Mean and median over a set of per-position entropies. The median is the
/// middle value, or the average of the two middle values for even counts.
pub fn entropy_summary(
    rows: Vec<(SyntacticPosition, f64)>,
) -> Result<EntropySummary, PosStatsError> {
    if rows.is_empty() {
        return Err(PosStatsError::NoPositions);
    }
    let mut values: Vec<f64> = rows.iter().map(|(_, h)| *h).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    };
    Ok(EntropySummary { rows, mean, median })
}

/// Noun/verb flexibility classification of one character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlexClass {
    FlexibleNoun,
    InflexibleNoun,
    FlexibleVerb,
    InflexibleVerb,
    Unclassified,
}

impl FlexClass {
    pub fn label(self) -> &'static str {
        match self {
            FlexClass::FlexibleNoun => "flexible_noun",
            FlexClass::InflexibleNoun => "inflexible_noun",
            FlexClass::FlexibleVerb => "flexible_verb",
            FlexClass::InflexibleVerb => "inflexible_verb",
            FlexClass::Unclassified => "unclassified",
        }
    }
}

/// Census entry for one character that met the occurrence threshold.
#[derive(Debug, Clone, Serialize)]
pub struct LexemeStats {
    pub character: char,
    pub noun_count: u64,
    pub verb_count: u64,
    pub other_count: u64,
    /// `noun / (noun + verb)`; `None` when the character never occurs as
    /// noun or verb.
    pub noun_ratio: Option<f64>,
    pub flexibility: FlexClass,
    /// Noun and verb counts are equal (and nonzero); such characters are
    /// classified as verbs because the noun criterion is strictly "more
    /// often".
    pub tied: bool,
}

impl LexemeStats {
    pub fn total(&self) -> u64 {
        self.noun_count + self.verb_count + self.other_count
    }
}

/// Per-character flexibility census over characters appearing at least
/// `min_count` times.
///
/// A character is a noun iff it occurs strictly more often as a noun than
/// as a verb, otherwise a verb (ties go to verb and are flagged); it is
/// flexible iff the minority class is attested at least once. Characters
/// with no noun or verb occurrences are unclassified. Sorted by descending
/// total count, ties by codepoint.
pub fn lexeme_census(
    char_counts: &BTreeMap<char, CharTagCounts>,
    min_count: u64,
) -> Vec<LexemeStats> {
    let mut census: Vec<LexemeStats> = char_counts
        .iter()
        .filter(|(_, counts)| counts.total() >= min_count)
        .map(|(&character, counts)| {
            let nv = counts.noun + counts.verb;
            let noun_ratio = if nv > 0 {
                Some(counts.noun as f64 / nv as f64)
            } else {
                None
            };
            let flexibility = if nv == 0 {
                FlexClass::Unclassified
            } else if counts.noun > counts.verb {
                if counts.verb >= 1 {
                    FlexClass::FlexibleNoun
                } else {
                    FlexClass::InflexibleNoun
                }
            } else if counts.noun >= 1 {
                FlexClass::FlexibleVerb
            } else {
                FlexClass::InflexibleVerb
            };
            LexemeStats {
                character,
                noun_count: counts.noun,
                verb_count: counts.verb,
                other_count: counts.other,
                noun_ratio,
                flexibility,
                tied: counts.noun == counts.verb && nv > 0,
            }
        })
        .collect();
    census.sort_by(|a, b| b.total().cmp(&a.total()).then_with(|| a.character.cmp(&b.character)));
    census
}
