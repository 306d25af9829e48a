//! CoNLL-U treebank ingestion and the character-level corpus model.
//!
//! Treebanks are parsed into an immutable [`Treebank`] holding sentences of
//! word tokens. Each token carries its Universal Dependencies POS tag plus a
//! coarse three-way tag (noun / verb / other), which is what the rest of the
//! pipeline operates on. Dependency structure (HEAD/DEPREL) is validated as
//! part of the column count but not retained.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: empty FORM column")]
    EmptyForm { line: usize },
    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("i/o error reading treebank: {0}")]
    Io(#[from] std::io::Error),
    #[error("gold and predicted sequences differ in length ({gold} vs {pred})")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("gold and predicted characters differ at position {position}: {gold} vs {pred}")]
    CharMismatch {
        position: usize,
        gold: char,
        pred: char,
    },
    #[error("cannot score empty tag sequences")]
    EmptySequences,
}

/// Three-way POS category: every UD tag other than NOUN and VERB collapses
/// into `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarseTag {
    Noun,
    Verb,
    Other,
}

impl CoarseTag {
    pub fn label(self) -> &'static str {
        match self {
            CoarseTag::Noun => "NOUN",
            CoarseTag::Verb => "VERB",
            CoarseTag::Other => "OTHER",
        }
    }
}

impl std::fmt::Display for CoarseTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Collapse a UD POS tag into the three-way scheme. Total: unknown labels
/// map to `Other`. PROPN maps to `Other` by default; see
/// [`coarsen_tag_with`] for the alternative used in sensitivity analyses.
pub fn coarsen_tag(upos: &str) -> CoarseTag {
    coarsen_tag_with(upos, false)
}

/// Like [`coarsen_tag`], with proper nouns optionally counted as nouns.
pub fn coarsen_tag_with(upos: &str, propn_as_noun: bool) -> CoarseTag {
    match upos {
        "NOUN" => CoarseTag::Noun,
        "VERB" => CoarseTag::Verb,
        "PROPN" if propn_as_noun => CoarseTag::Noun,
        _ => CoarseTag::Other,
    }
}

/// A syntactic word: surface form, UD POS tag, and the derived coarse tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub form: String,
    pub upos: String,
    pub coarse: CoarseTag,
}

impl Token {
    pub fn new(form: impl Into<String>, upos: impl Into<String>) -> Self {
        let upos = upos.into();
        let coarse = coarsen_tag(&upos);
        Token {
            form: form.into(),
            upos,
            coarse,
        }
    }

    pub fn is_punct(&self) -> bool {
        self.upos == "PUNCT"
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

/// An ordered, immutable collection of parsed sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Treebank {
    pub language_label: String,
    pub sentences: Vec<Sentence>,
}

impl Treebank {
    pub fn new(language_label: impl Into<String>) -> Self {
        Treebank {
            language_label: language_label.into(),
            sentences: Vec::new(),
        }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    /// Serialize back to minimal CoNLL-U: sequential IDs, FORM and UPOS
    /// filled, every other column `_`.
    pub fn to_conllu(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            for (i, token) in sentence.tokens.iter().enumerate() {
                out.push_str(&format!(
                    "{}\t{}\t_\t{}\t_\t_\t_\t_\t_\t_\n",
                    i + 1,
                    token.form,
                    token.upos
                ));
            }
            out.push('\n');
        }
        out
    }

    /// JSON dump: one array element per sentence, tokens as
    /// `{form, upos, coarse}` objects.
    pub fn to_json(&self) -> String {
        let sentences: Vec<Vec<&Token>> = self
            .sentences
            .iter()
            .map(|s| s.tokens.iter().collect())
            .collect();
        serde_json::to_string_pretty(&sentences).expect("treebank JSON serialization")
    }
}

/// Options controlling how token lines are interpreted.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Count PROPN as NOUN when deriving coarse tags.
    pub propn_as_noun: bool,
}

/// Parse a UTF-8 CoNLL-U stream into a [`Treebank`].
///
/// Token lines must have exactly 10 tab-separated columns; FORM is column 2
/// and UPOS column 4. Multiword-token range lines (ID containing `-`) and
/// empty nodes (ID containing `.`) are skipped, so the syntactic word lines
/// are authoritative. Blank lines terminate sentences; `#` lines are
/// comments. CRLF input is accepted. Empty input yields an empty treebank.
pub fn parse_conllu<R: BufRead>(
    reader: R,
    language_label: &str,
) -> Result<Treebank, TreebankError> {
    parse_conllu_with(reader, language_label, ParseOptions::default())
}

pub fn parse_conllu_with<R: BufRead>(
    reader: R,
    language_label: &str,
    options: ParseOptions,
) -> Result<Treebank, TreebankError> {
    let mut treebank = Treebank::new(language_label);
    let mut current = Sentence::default();
    // Tracks whether the current block had any content (tokens or comments),
    // so runs of blank lines never emit empty sentences but a comment-only
    // sentence block still does.
    let mut block_has_content = false;

    for (idx, line) in reader.split(b'\n').enumerate() {
        let line_no = idx + 1;
        let mut raw = line?;
        if raw.last() == Some(&b'\r') {
            raw.pop();
        }
        let line = String::from_utf8(raw).map_err(|_| TreebankError::InvalidUtf8 { line: line_no })?;

        if line.is_empty() {
            if block_has_content {
                treebank.sentences.push(std::mem::take(&mut current));
                block_has_content = false;
            }
            continue;
        }
        if line.starts_with('#') {
            block_has_content = true;
            continue;
        }

        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 10 {
            return Err(TreebankError::ColumnCount {
                line: line_no,
                found: columns.len(),
            });
        }
        block_has_content = true;

        let id = columns[0];
        if id.contains('-') || id.contains('.') {
            // Multiword range line or empty node; the word lines carry the tags.
            continue;
        }

        let form = columns[1].trim();
        if form.is_empty() {
            return Err(TreebankError::EmptyForm { line: line_no });
        }
        let upos = columns[3];
        current.tokens.push(Token {
            form: form.to_string(),
            upos: upos.to_string(),
            coarse: coarsen_tag_with(upos, options.propn_as_noun),
        });
    }
    if block_has_content {
        treebank.sentences.push(current);
    }
    Ok(treebank)
}

/// Split a sentence into clauses: maximal runs of tokens with no punctuation.
/// PUNCT tokens act as separators and are not part of any clause.
pub fn split_clauses(sentence: &Sentence) -> Vec<&[Token]> {
    sentence
        .tokens
        .split(|t| t.is_punct())
        .filter(|clause| !clause.is_empty())
        .collect()
}

/// Per-character occurrence counts under each coarse tag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CharTagCounts {
    pub noun: u64,
    pub verb: u64,
    pub other: u64,
}

impl CharTagCounts {
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

/// Character-level tag counts: every character of a token's form inherits
/// the whole token's coarse tag. Multi-character words therefore spread
/// their tag over each constituent character.
pub fn to_char_counts(treebank: &Treebank) -> BTreeMap<char, CharTagCounts> {
    let mut counts: BTreeMap<char, CharTagCounts> = BTreeMap::new();
    for token in treebank.tokens() {
        for ch in token.form.chars() {
            counts.entry(ch).or_default().bump(token.coarse);
        }
    }
    counts
}

/// Fraction of positions where gold and predicted tags agree exactly.
/// Both sequences must cover the same characters in the same order.
pub fn char_tag_accuracy<T: PartialEq>(
    gold: &[(char, T)],
    pred: &[(char, T)],
) -> Result<f64, TreebankError> {
    if gold.len() != pred.len() {
        return Err(TreebankError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(TreebankError::EmptySequences);
    }
    let mut matches = 0usize;
    for (position, ((gc, gt), (pc, pt))) in gold.iter().zip(pred.iter()).enumerate() {
        if gc != pc {
            return Err(TreebankError::CharMismatch {
                position,
                gold: *gc,
                pred: *pc,
            });
        }
        if gt == pt {
            matches += 1;
        }
    }
    Ok(matches as f64 / gold.len() as f64)
}
