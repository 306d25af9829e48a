//! Character vocabulary, windowed co-occurrence counting, and GloVe vector
//! training.
//!
//! Tokenization is per character. Co-occurrence uses a symmetric window
//! weighted 1/d for distance d, where distance is measured over raw
//! character positions within a line (out-of-vocabulary characters still
//! separate their neighbors); line breaks reset the window. Training
//! minimizes the weighted least-squares GloVe objective with AdaGrad over
//! shuffled nonzero entries, matching the reference implementation's update
//! rule.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::marker::PhantomData;

use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("corpus contains no characters")]
    EmptyCorpus,
    #[error("no character reaches the minimum frequency {0}")]
    EmptyVocabulary(u64),
    #[error("co-occurrence window must be at least 1")]
    InvalidWindow,
    #[error("co-occurrence table is empty")]
    EmptyCooccurrence,
    #[error("glove weight undefined for non-positive count {0}")]
    NonPositiveCount(f64),
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("embedding file line {line}: {reason}")]
    MalformedEmbedding { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Characters excluded from vocabularies by default, in addition to all
/// whitespace: common CJK and ASCII punctuation.
pub const DEFAULT_PUNCTUATION: &str = "。，、；：？！「」『』（）《》〈〉【】〔〕·—…‥～“”‘’\
!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

pub fn default_punctuation() -> BTreeSet<char> {
    DEFAULT_PUNCTUATION.chars().collect()
}

/// Frequency-ranked character vocabulary. Entries are sorted by descending
/// corpus frequency, ties by codepoint, and all frequencies meet the
/// construction-time minimum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<(char, u64)>,
    index: HashMap<char, usize>,
}

impl Vocabulary {
    /// Rebuild a vocabulary from already-ranked `(character, frequency)`
    /// entries, e.g. a saved vocabulary file. Order is preserved so that
    /// indices in a co-occurrence sidecar stay valid; duplicates are
    /// rejected.
    pub fn from_entries(entries: Vec<(char, u64)>) -> Result<Self, EmbeddingError> {
        if entries.is_empty() {
            return Err(EmbeddingError::EmptyVocabulary(0));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (c, _)) in entries.iter().enumerate() {
            if index.insert(*c, i).is_some() {
                return Err(EmbeddingError::BadConfig(format!(
                    "duplicate character {c} in vocabulary"
                )));
            }
        }
        Ok(Vocabulary { entries, index })
    }

    fn from_counts(
        counts: HashMap<char, u64>,
        min_frequency: u64,
    ) -> Result<Self, EmbeddingError> {
        let mut entries: Vec<(char, u64)> = counts
            .into_iter()
            .filter(|(_, freq)| *freq >= min_frequency)
            .collect();
        if entries.is_empty() {
            return Err(EmbeddingError::EmptyVocabulary(min_frequency));
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (c, _))| (*c, i))
            .collect();
        Ok(Vocabulary { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rank of a character (0 = most frequent), if present.
    pub fn get(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn char_at(&self, rank: usize) -> char {
        self.entries[rank].0
    }

    pub fn frequency(&self, c: char) -> Option<u64> {
        self.get(c).map(|i| self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(char, u64)> {
        self.entries.iter()
    }

    pub fn chars(&self) -> Vec<char> {
        self.entries.iter().map(|(c, _)| *c).collect()
    }
}

/// Streaming character counter; shards can be merged before building the
/// vocabulary (counts are commutative sums).
#[derive(Debug, Default, Clone)]
pub struct VocabBuilder {
    counts: HashMap<char, u64>,
    seen_any: bool,
}

impl VocabBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_line(&mut self, line: &str) {
        for c in line.chars() {
            self.seen_any = true;
            *self.counts.entry(c).or_insert(0) += 1;
        }
    }

    pub fn add_reader<R: BufRead>(&mut self, reader: R) -> Result<(), EmbeddingError> {
        for line in reader.lines() {
            self.add_line(&line?);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: VocabBuilder) {
        self.seen_any |= other.seen_any;
        for (c, n) in other.counts {
            *self.counts.entry(c).or_insert(0) += n;
        }
    }

    /// Build the vocabulary, excluding whitespace and the given punctuation
    /// set, keeping characters with frequency at least `min_frequency`.
    pub fn build(
        self,
        min_frequency: u64,
        punctuation: &BTreeSet<char>,
    ) -> Result<Vocabulary, EmbeddingError> {
        if !self.seen_any {
            return Err(EmbeddingError::EmptyCorpus);
        }
        let filtered: HashMap<char, u64> = self
            .counts
            .into_iter()
            .filter(|(c, _)| !c.is_whitespace() && !punctuation.contains(c))
            .collect();
        Vocabulary::from_counts(filtered, min_frequency)
    }
}

/// Count characters from a single reader with the default punctuation set.
pub fn build_vocab<R: BufRead>(
    reader: R,
    min_frequency: u64,
) -> Result<Vocabulary, EmbeddingError> {
    let mut builder = VocabBuilder::new();
    builder.add_reader(reader)?;
    builder.build(min_frequency, &default_punctuation())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoocEntry {
    pub i: u32,
    pub j: u32,
    pub weight: f64,
}

/// Sparse symmetric co-occurrence table with entries sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceTable {
    entries: Vec<CoocEntry>,
}

impl CooccurrenceTable {
    pub fn from_entries(mut entries: Vec<CoocEntry>) -> Self {
        entries.sort_by_key(|e| (e.i, e.j));
        CooccurrenceTable { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CoocEntry> {
        self.entries.iter()
    }

    pub fn weight(&self, i: u32, j: u32) -> Option<f64> {
        self.entries
            .binary_search_by(|e| (e.i, e.j).cmp(&(i, j)))
            .ok()
            .map(|idx| self.entries[idx].weight)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

/// Accumulates windowed co-occurrence weights against a fixed vocabulary.
/// Shards built over corpus chunks merge commutatively.
pub struct CoocBuilder<'v> {
    vocab: &'v Vocabulary,
    window: usize,
    weights: HashMap<(u32, u32), f64>,
}

impl<'v> CoocBuilder<'v> {
    pub fn new(vocab: &'v Vocabulary, window: usize) -> Result<Self, EmbeddingError> {
        if window == 0 {
            return Err(EmbeddingError::InvalidWindow);
        }
        Ok(CoocBuilder {
            vocab,
            window,
            weights: HashMap::new(),
        })
    }

    /// Add one line. For each in-vocabulary pair at raw-character distance
    /// `d <= window`, add `1/d` to both `(i, j)` and `(j, i)`; a same-index
    /// pair therefore receives both increments on its diagonal cell.
    pub fn add_line(&mut self, line: &str) {
        let ids: Vec<Option<u32>> = line
            .chars()
            .map(|c| self.vocab.get(c).map(|i| i as u32))
            .collect();
        for (pos, id) in ids.iter().enumerate() {
            let Some(center) = *id else { continue };
            for d in 1..=self.window.min(pos) {
                let Some(left) = ids[pos - d] else { continue };
                let increment = 1.0 / d as f64;
                *self.weights.entry((center, left)).or_insert(0.0) += increment;
                *self.weights.entry((left, center)).or_insert(0.0) += increment;
            }
        }
    }

    pub fn add_reader<R: BufRead>(&mut self, reader: R) -> Result<(), EmbeddingError> {
        for line in reader.lines() {
            self.add_line(&line?);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: CoocBuilder<'_>) {
        for (key, weight) in other.weights {
            *self.weights.entry(key).or_insert(0.0) += weight;
        }
    }

    pub fn build(self) -> CooccurrenceTable {
        CooccurrenceTable::from_entries(
            self.weights
                .into_iter()
                .map(|((i, j), weight)| CoocEntry { i, j, weight })
                .collect(),
        )
    }
}

/// Convenience wrapper: count co-occurrences from a single reader.
pub fn build_cooccurrence<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    window: usize,
) -> Result<CooccurrenceTable, EmbeddingError> {
    let mut builder = CoocBuilder::new(vocab, window)?;
    builder.add_reader(reader)?;
    Ok(builder.build())
}

/// GloVe loss weighting `f(x) = (x / x_max)^alpha`, capped at 1.
pub fn glove_weight(x: f64, x_max: f64, alpha: f64) -> Result<f64, EmbeddingError> {
    if x <= 0.0 {
        return Err(EmbeddingError::NonPositiveCount(x));
    }
    if x < x_max {
        Ok((x / x_max).powf(alpha))
    } else {
        Ok(1.0)
    }
}

/// Training hyperparameters. Defaults follow the GloVe reference settings
/// with 300-dimensional vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_frequency: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 300,
            window: 15,
            x_max: 100.0,
            alpha: 0.75,
            learning_rate: 0.05,
            epochs: 15,
            min_frequency: 5,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |msg: &str| Err(EmbeddingError::BadConfig(msg.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.x_max.is_nan() || self.x_max <= 0.0 {
            return bad("x_max must be positive");
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.alpha > 1.0 {
            return bad("alpha must lie in (0, 1]");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.min_frequency == 0 {
            return bad("min_frequency must be positive");
        }
        Ok(())
    }
}

/// Execution mode for training. The deterministic mode is single-threaded
/// with a seeded shuffle and reproduces bit-identical output; the threaded
/// mode updates parameters without synchronization (as the reference
/// implementation does) and is not bit-reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Deterministic,
    Threads(usize),
}

/// Word vectors, context vectors, and the two bias arrays of a GloVe model;
/// exposed so gradients can be validated against finite differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveModel {
    pub vocab_size: usize,
    pub dim: usize,
    pub w: Vec<f64>,
    pub wc: Vec<f64>,
    pub b: Vec<f64>,
    pub bc: Vec<f64>,
}

impl GloveModel {
    /// Initialize all parameters uniformly in `[-0.5/dim, 0.5/dim]` from a
    /// seeded generator.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = 0.5 / dim as f64;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-half..=half)).collect()
        };
        GloveModel {
            vocab_size,
            dim,
            w: draw(vocab_size * dim),
            wc: draw(vocab_size * dim),
            b: draw(vocab_size),
            bc: draw(vocab_size),
        }
    }

    fn residual(&self, entry: &CoocEntry) -> f64 {
        let (i, j) = (entry.i as usize, entry.j as usize);
        let wi = &self.w[i * self.dim..(i + 1) * self.dim];
        let wj = &self.wc[j * self.dim..(j + 1) * self.dim];
        let dot: f64 = wi.iter().zip(wj).map(|(a, b)| a * b).sum();
        dot + self.b[i] + self.bc[j] - entry.weight.ln()
    }

    /// Total loss `sum over entries of 0.5 * f(x) * residual^2`.
    pub fn loss(&self, table: &CooccurrenceTable, x_max: f64, alpha: f64) -> f64 {
        table
            .iter()
            .map(|entry| {
                let f = glove_weight(entry.weight, x_max, alpha).expect("positive table weight");
                let diff = self.residual(entry);
                0.5 * f * diff * diff
            })
            .sum()
    }

    /// Analytic gradient of [`GloveModel::loss`], same shape as the model.
    pub fn gradient(&self, table: &CooccurrenceTable, x_max: f64, alpha: f64) -> GloveModel {
        let mut grad = GloveModel {
            vocab_size: self.vocab_size,
            dim: self.dim,
            w: vec![0.0; self.w.len()],
            wc: vec![0.0; self.wc.len()],
            b: vec![0.0; self.b.len()],
            bc: vec![0.0; self.bc.len()],
        };
        for entry in table.iter() {
            let (i, j) = (entry.i as usize, entry.j as usize);
            let f = glove_weight(entry.weight, x_max, alpha).expect("positive table weight");
            let fdiff = f * self.residual(entry);
            for d in 0..self.dim {
                grad.w[i * self.dim + d] += fdiff * self.wc[j * self.dim + d];
                grad.wc[j * self.dim + d] += fdiff * self.w[i * self.dim + d];
            }
            grad.b[i] += fdiff;
            grad.bc[j] += fdiff;
        }
        grad
    }
}

/// Dense embedding matrix: one row per character, uniform dimension, all
/// entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    chars: Vec<char>,
    index: HashMap<char, usize>,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_rows(chars: Vec<char>, dim: usize, data: Vec<f64>) -> Result<Self, EmbeddingError> {
        let malformed = |reason: &str| EmbeddingError::MalformedEmbedding {
            line: 0,
            reason: reason.to_string(),
        };
        if dim == 0 {
            return Err(malformed("dimension must be positive"));
        }
        if data.len() != chars.len() * dim {
            return Err(malformed("row data does not match vocabulary size"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(malformed("non-finite vector component"));
        }
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(malformed(&format!("duplicate character {c}")));
            }
        }
        Ok(EmbeddingMatrix {
            chars,
            index,
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Rank of a character in this matrix's row order (frequency order when
    /// produced by training).
    pub fn rank(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, c: char) -> Option<&[f64]> {
        self.rank(c).map(|i| self.row(i))
    }
}

/// Result of a training run: final vectors (`w + w~` per row) plus the
/// per-epoch mean loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub embeddings: EmbeddingMatrix,
    pub epoch_losses: Vec<f64>,
}

// Raw shared view used for unsynchronized parallel updates. The
// deterministic driver uses the same code path under an exclusive borrow.
struct SharedSlice<'a> {
    ptr: *mut f64,
    _marker: PhantomData<&'a mut [f64]>,
}

unsafe impl Send for SharedSlice<'_> {}
unsafe impl Sync for SharedSlice<'_> {}

impl<'a> SharedSlice<'a> {
    fn new(v: &'a mut [f64]) -> Self {
        SharedSlice {
            ptr: v.as_mut_ptr(),
            _marker: PhantomData,
        }
    }

    #[inline]
    unsafe fn get(&self, i: usize) -> f64 {
        *self.ptr.add(i)
    }

    #[inline]
    unsafe fn add_to(&self, i: usize, v: f64) {
        *self.ptr.add(i) += v;
    }
}

struct SharedParams<'a> {
    dim: usize,
    w: SharedSlice<'a>,
    wc: SharedSlice<'a>,
    b: SharedSlice<'a>,
    bc: SharedSlice<'a>,
    gw: SharedSlice<'a>,
    gwc: SharedSlice<'a>,
    gb: SharedSlice<'a>,
    gbc: SharedSlice<'a>,
}

/// AdaGrad update for one co-occurrence entry, following the reference
/// implementation: the step and the squared-gradient accumulator both use
/// the learning-rate-scaled gradient. Returns this entry's loss
/// contribution, or None if the residual went non-finite.
///
/// Safety: callers must either hold exclusive access to the parameter
/// arrays (sequential mode) or accept racy lock-free updates (hogwild
/// mode), where each individual f64 access is still plain load/store.
unsafe fn update_entry(
    params: &SharedParams<'_>,
    entry: &CoocEntry,
    x_max: f64,
    alpha: f64,
    learning_rate: f64,
) -> Option<f64> {
    let dim = params.dim;
    let (i, j) = (entry.i as usize, entry.j as usize);
    let (wi, wj) = (i * dim, j * dim);

    let mut dot = 0.0;
    for d in 0..dim {
        dot += params.w.get(wi + d) * params.wc.get(wj + d);
    }
    let diff = dot + params.b.get(i) + params.bc.get(j) - entry.weight.ln();
    let f = if entry.weight < x_max {
        (entry.weight / x_max).powf(alpha)
    } else {
        1.0
    };
    let fdiff = f * diff;
    if !fdiff.is_finite() {
        return None;
    }
    let loss = 0.5 * fdiff * diff;

    let scaled = fdiff * learning_rate;
    for d in 0..dim {
        let old_w = params.w.get(wi + d);
        let old_wc = params.wc.get(wj + d);
        let temp_w = scaled * old_wc;
        let temp_wc = scaled * old_w;
        params.w.add_to(wi + d, -temp_w / params.gw.get(wi + d).sqrt());
        params.wc.add_to(wj + d, -temp_wc / params.gwc.get(wj + d).sqrt());
        params.gw.add_to(wi + d, temp_w * temp_w);
        params.gwc.add_to(wj + d, temp_wc * temp_wc);
    }
    params.b.add_to(i, -scaled / params.gb.get(i).sqrt());
    params.bc.add_to(j, -scaled / params.gbc.get(j).sqrt());
    params.gb.add_to(i, scaled * scaled);
    params.gbc.add_to(j, scaled * scaled);
    Some(loss)
}

/// Train GloVe vectors on a co-occurrence table.
///
/// Entries are visited in a seeded shuffled order each epoch. The final
/// vector for each character is `w + w~`. Errors if the table is empty,
/// the configuration is invalid, or the loss becomes non-finite.
pub fn train_glove(
    cooc: &CooccurrenceTable,
    vocab: &Vocabulary,
    config: &TrainConfig,
    parallelism: Parallelism,
) -> Result<TrainOutcome, EmbeddingError> {
    config.validate()?;
    if cooc.is_empty() {
        return Err(EmbeddingError::EmptyCooccurrence);
    }
    let size = vocab.len();
    let dim = config.dim;
    if let Some(entry) = cooc
        .iter()
        .find(|e| e.i as usize >= size || e.j as usize >= size)
    {
        return Err(EmbeddingError::BadConfig(format!(
            "co-occurrence cell ({}, {}) outside vocabulary of {size}",
            entry.i, entry.j
        )));
    }

    let mut model = GloveModel::init(size, dim, config.seed);
    // AdaGrad accumulators start at 1 so early steps are bounded by the
    // learning rate.
    let mut gw = vec![1.0f64; size * dim];
    let mut gwc = vec![1.0f64; size * dim];
    let mut gb = vec![1.0f64; size];
    let mut gbc = vec![1.0f64; size];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..cooc.len()).collect();
    let entries: Vec<CoocEntry> = cooc.iter().copied().collect();

    let threads = match parallelism {
        Parallelism::Deterministic => 1,
        Parallelism::Threads(n) => n.max(1),
    };

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);

        let params = SharedParams {
            dim,
            w: SharedSlice::new(&mut model.w),
            wc: SharedSlice::new(&mut model.wc),
            b: SharedSlice::new(&mut model.b),
            bc: SharedSlice::new(&mut model.bc),
            gw: SharedSlice::new(&mut gw),
            gwc: SharedSlice::new(&mut gwc),
            gb: SharedSlice::new(&mut gb),
            gbc: SharedSlice::new(&mut gbc),
        };

        let total_loss: Option<f64> = if threads == 1 {
            let mut sum = 0.0;
            let mut ok = true;
            for &idx in &order {
                match unsafe {
                    update_entry(&params, &entries[idx], config.x_max, config.alpha, config.learning_rate)
                } {
                    Some(loss) => sum += loss,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            ok.then_some(sum)
        } else {
            let chunk = order.len().div_ceil(threads);
            std::thread::scope(|scope| {
                let params = &params;
                let entries = &entries;
                let handles: Vec<_> = order
                    .chunks(chunk)
                    .map(|chunk_indices| {
                        scope.spawn(move || {
                            let mut sum = 0.0;
                            for &idx in chunk_indices {
                                match unsafe {
                                    update_entry(
                                        params,
                                        &entries[idx],
                                        config.x_max,
                                        config.alpha,
                                        config.learning_rate,
                                    )
                                } {
                                    Some(loss) => sum += loss,
                                    None => return None,
                                }
                            }
                            Some(sum)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("training thread panicked"))
                    .sum::<Option<f64>>()
            })
        };

        match total_loss {
            Some(loss) if loss.is_finite() => {
                let mean = loss / entries.len() as f64;
                log::debug!("epoch {epoch}: mean loss {mean}");
                epoch_losses.push(mean);
            }
            _ => return Err(EmbeddingError::Diverged { epoch }),
        }
    }

    let mut data = Vec::with_capacity(size * dim);
    for i in 0..size {
        for d in 0..dim {
            data.push(model.w[i * dim + d] + model.wc[i * dim + d]);
        }
    }
    let embeddings = EmbeddingMatrix::from_rows(vocab.chars(), dim, data)?;
    Ok(TrainOutcome {
        embeddings,
        epoch_losses,
    })
}

/// Write embeddings as `<char> <v1> ... <vdim>` lines with 17 significant
/// digits, enough to round-trip f64 exactly.
pub fn save_embeddings<W: Write>(emb: &EmbeddingMatrix, writer: &mut W) -> Result<(), EmbeddingError> {
    for (i, &c) in emb.chars().iter().enumerate() {
        write!(writer, "{c}")?;
        for v in emb.row(i) {
            write!(writer, " {v:.16e}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Load embeddings saved by [`save_embeddings`]. Rejects ragged rows,
/// duplicate characters, non-finite values, and first fields that are not
/// exactly one character.
pub fn load_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut chars = Vec::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| EmbeddingError::MalformedEmbedding {
            line: line_no,
            reason,
        };
        let mut fields = line.split_whitespace();
        let head = fields.next().ok_or_else(|| malformed("missing character field".into()))?;
        let mut head_chars = head.chars();
        let c = head_chars
            .next()
            .filter(|_| head_chars.next().is_none())
            .ok_or_else(|| malformed(format!("first field {head:?} is not a single character")))?;

        let mut row = Vec::new();
        for field in fields {
            let value: f64 = field
                .parse()
                .map_err(|_| malformed(format!("unparseable value {field:?}")))?;
            if !value.is_finite() {
                return Err(malformed(format!("non-finite value {field:?}")));
            }
            row.push(value);
        }
        if row.is_empty() {
            return Err(malformed("row has no vector components".into()));
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(malformed(format!("row has {} components, expected {d}", row.len())))
            }
            _ => {}
        }
        chars.push(c);
        data.push(row);
    }
    let dim = dim.ok_or_else(|| EmbeddingError::MalformedEmbedding {
        line: 0,
        reason: "file contains no embedding rows".into(),
    })?;
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    // Duplicate detection happens in from_rows; re-tag its line-less error.
    EmbeddingMatrix::from_rows(chars, dim, flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Cursor;

    #[test]
    fn vocab_direct_count_and_threshold() {
        let v = build_vocab(Cursor::new("子子孙"), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.char_at(0), '子');
        assert_eq!(v.frequency('子'), Some(2));
        assert_eq!(v.frequency('孙'), Some(1));

        let v = build_vocab(Cursor::new("子子孙"), 2).unwrap();
        assert_eq!(v.chars(), vec!['子']);
    }

    #[test]
    fn vocab_excludes_whitespace_and_punctuation() {
        let v = build_vocab(Cursor::new("子 孙。子\n孙"), 1).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.get('。').is_none());
        assert!(v.get(' ').is_none());
    }

    #[test]
    fn vocab_empty_inputs_error() {
        assert!(matches!(
            build_vocab(Cursor::new(""), 1),
            Err(EmbeddingError::EmptyCorpus)
        ));
        assert!(matches!(
            build_vocab(Cursor::new("子孙"), 10),
            Err(EmbeddingError::EmptyVocabulary(10))
        ));
    }

    #[test]
    fn vocab_rank_ties_by_codepoint() {
        // 丙(4E19) 乙(4E59) 甲(7532): all frequency 2.
        let v = build_vocab(Cursor::new("甲乙丙甲乙丙"), 1).unwrap();
        assert_eq!(v.chars(), vec!['丙', '乙', '甲']);
    }

    #[test]
    fn vocab_matches_hash_count_oracle() {
        // Deterministic synthetic corpus, ~1k chars.
        let inventory: Vec<char> = "天地玄黄宇宙洪荒日月盈昃辰宿列张".chars().collect();
        let mut text = String::new();
        let mut state = 9u64;
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            text.push(inventory[(state >> 33) as usize % inventory.len()]);
        }
        let v = build_vocab(Cursor::new(text.clone()), 1).unwrap();
        let mut oracle: HashMap<char, u64> = HashMap::new();
        for c in text.chars() {
            *oracle.entry(c).or_insert(0) += 1;
        }
        assert_eq!(v.len(), oracle.len());
        for (c, n) in oracle {
            assert_eq!(v.frequency(c), Some(n));
        }
    }

    #[test]
    fn cooccurrence_adjacent_pair() {
        let v = build_vocab(Cursor::new("AB"), 1).unwrap();
        let t = build_cooccurrence(Cursor::new("AB"), &v, 2).unwrap();
        let a = v.get('A').unwrap() as u32;
        let b = v.get('B').unwrap() as u32;
        assert_eq!(t.weight(a, b), Some(1.0));
        assert_eq!(t.weight(b, a), Some(1.0));
    }

    #[test]
    fn cooccurrence_out_of_vocab_still_separates() {
        let v = build_vocab(Cursor::new("AB"), 1).unwrap();
        // Middle space is out of vocabulary but the distance is still 2.
        let t = build_cooccurrence(Cursor::new("A B"), &v, 2).unwrap();
        let a = v.get('A').unwrap() as u32;
        let b = v.get('B').unwrap() as u32;
        assert_eq!(t.weight(a, b), Some(0.5));
    }

    #[test]
    fn cooccurrence_repeated_char_hits_diagonal_twice() {
        let v = build_vocab(Cursor::new("AA"), 1).unwrap();
        let t = build_cooccurrence(Cursor::new("AA"), &v, 2).unwrap();
        let a = v.get('A').unwrap() as u32;
        assert_eq!(t.weight(a, a), Some(2.0));
    }

    #[test]
    fn cooccurrence_line_breaks_reset_window() {
        let v = build_vocab(Cursor::new("AB"), 1).unwrap();
        let t = build_cooccurrence(Cursor::new("A\nB"), &v, 5).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn builders_merge_like_single_pass() {
        // Sharding a corpus at line boundaries and merging equals one pass.
        let chunk_a = "甲乙丙甲\n乙丙丁戊";
        let chunk_b = "戊甲乙丙\n丁丁甲乙";
        let whole = format!("{chunk_a}\n{chunk_b}");

        let mut va = VocabBuilder::new();
        va.add_reader(Cursor::new(chunk_a)).unwrap();
        let mut vb = VocabBuilder::new();
        vb.add_reader(Cursor::new(chunk_b)).unwrap();
        va.merge(vb);
        let sharded = va.build(1, &default_punctuation()).unwrap();
        let single = build_vocab(Cursor::new(whole.clone()), 1).unwrap();
        assert_eq!(sharded, single);

        let mut ca = CoocBuilder::new(&single, 3).unwrap();
        ca.add_reader(Cursor::new(chunk_a)).unwrap();
        let mut cb = CoocBuilder::new(&single, 3).unwrap();
        cb.add_reader(Cursor::new(chunk_b)).unwrap();
        ca.merge(cb);
        let sharded = ca.build();
        let single_pass = build_cooccurrence(Cursor::new(whole), &single, 3).unwrap();
        assert_eq!(sharded.len(), single_pass.len());
        for entry in sharded.iter() {
            let other = single_pass.weight(entry.i, entry.j).unwrap();
            assert_relative_eq!(entry.weight, other, max_relative = 1e-12);
        }
    }

    #[test]
    fn cooccurrence_rejects_zero_window() {
        let v = build_vocab(Cursor::new("AB"), 1).unwrap();
        assert!(matches!(
            build_cooccurrence(Cursor::new("AB"), &v, 0),
            Err(EmbeddingError::InvalidWindow)
        ));
    }

    #[test]
    fn cooccurrence_matches_nested_loop_oracle() {
        // 500-character corpus over a small alphabet, checked against a
        // direct O(n * w) pair enumeration.
        let inventory: Vec<char> = "甲乙丙丁戊己庚辛壬癸".chars().collect();
        let mut lines: Vec<String> = Vec::new();
        let mut state = 1234u64;
        for _ in 0..10 {
            let mut line = String::new();
            for _ in 0..50 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                line.push(inventory[(state >> 33) as usize % inventory.len()]);
            }
            lines.push(line);
        }
        let text = lines.join("\n");
        let window = 4usize;
        let v = build_vocab(Cursor::new(text.clone()), 1).unwrap();
        let t = build_cooccurrence(Cursor::new(text), &v, window).unwrap();

        let mut oracle: HashMap<(u32, u32), f64> = HashMap::new();
        for line in &lines {
            let ids: Vec<u32> = line.chars().map(|c| v.get(c).unwrap() as u32).collect();
            for i in 0..ids.len() {
                for j in i.saturating_sub(window)..i {
                    let d = (i - j) as f64;
                    *oracle.entry((ids[i], ids[j])).or_insert(0.0) += 1.0 / d;
                    *oracle.entry((ids[j], ids[i])).or_insert(0.0) += 1.0 / d;
                }
            }
        }
        assert_eq!(t.len(), oracle.len());
        for entry in t.iter() {
            let expect = oracle[&(entry.i, entry.j)];
            assert_relative_eq!(entry.weight, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn weight_boundary_cap_and_interior() {
        assert_eq!(glove_weight(100.0, 100.0, 0.75).unwrap(), 1.0);
        assert_eq!(glove_weight(200.0, 100.0, 0.75).unwrap(), 1.0);
        assert_relative_eq!(
            glove_weight(50.0, 100.0, 0.75).unwrap(),
            0.5946035575013605,
            max_relative = 1e-12
        );
        // Continuous at the cap.
        let just_below = glove_weight(100.0 * (1.0 - 1e-12), 100.0, 0.75).unwrap();
        assert!((just_below - 1.0).abs() < 1e-9);
        assert!(matches!(
            glove_weight(0.0, 100.0, 0.75),
            Err(EmbeddingError::NonPositiveCount(_))
        ));
    }

    fn tiny_corpus_vocab() -> Vocabulary {
        build_vocab(Cursor::new("甲乙丙丁戊"), 1).unwrap()
    }

    #[test]
    fn training_satisfies_single_constraint() {
        // One entry X(0,1) = e^1: the trained model must drive
        // (w0 . wc1 + b0 + bc1 - 1)^2 below 1e-4.
        let vocab = tiny_corpus_vocab();
        let table = CooccurrenceTable::from_entries(vec![CoocEntry {
            i: 0,
            j: 1,
            weight: std::f64::consts::E,
        }]);
        let config = TrainConfig {
            dim: 4,
            epochs: 5000,
            seed: 3,
            ..TrainConfig::default()
        };
        let outcome = train_glove(&table, &vocab, &config, Parallelism::Deterministic).unwrap();
        let final_loss = *outcome.epoch_losses.last().unwrap();
        // loss = 0.5 * f * diff^2 and f = (e/100)^0.75, so diff^2 < 1e-4
        // needs loss < 0.5 * f * 1e-4.
        let f = glove_weight(std::f64::consts::E, 100.0, 0.75).unwrap();
        assert!(
            final_loss < 0.5 * f * 1e-4,
            "final loss {final_loss} too high"
        );
    }

    #[test]
    fn training_is_deterministic_for_fixed_seed() {
        let vocab = tiny_corpus_vocab();
        let text = "甲乙丙甲乙丁戊甲丙丁\n乙戊甲丙丁乙甲戊丙丁";
        let table = build_cooccurrence(Cursor::new(text), &vocab, 3).unwrap();
        let config = TrainConfig {
            dim: 8,
            epochs: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train_glove(&table, &vocab, &config, Parallelism::Deterministic).unwrap();
        let b = train_glove(&table, &vocab, &config, Parallelism::Deterministic).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn parallel_mode_also_reduces_loss() {
        let vocab = tiny_corpus_vocab();
        let text = "甲乙丙甲乙丁戊甲丙丁\n乙戊甲丙丁乙甲戊丙丁\n甲乙甲乙甲乙丙丁戊丙";
        let table = build_cooccurrence(Cursor::new(text), &vocab, 3).unwrap();
        let config = TrainConfig {
            dim: 8,
            epochs: 10,
            seed: 11,
            ..TrainConfig::default()
        };
        let outcome = train_glove(&table, &vocab, &config, Parallelism::Threads(3)).unwrap();
        assert!(outcome.epoch_losses.last().unwrap() < &outcome.epoch_losses[0]);
    }

    #[test]
    fn empty_table_is_an_error() {
        let vocab = tiny_corpus_vocab();
        let table = CooccurrenceTable::from_entries(vec![]);
        assert!(matches!(
            train_glove(&table, &vocab, &TrainConfig::default(), Parallelism::Deterministic),
            Err(EmbeddingError::EmptyCooccurrence)
        ));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        // 5x5 table with every cell filled; h = 1e-5.
        let mut entries = Vec::new();
        let mut state = 77u64;
        for i in 0..5u32 {
            for j in 0..5u32 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let weight = 1.0 + (state >> 40) as f64 / 1000.0;
                entries.push(CoocEntry { i, j, weight });
            }
        }
        let table = CooccurrenceTable::from_entries(entries);
        let model = GloveModel::init(5, 4, 99);
        let (x_max, alpha) = (10.0, 0.75);
        let analytic = model.gradient(&table, x_max, alpha);

        let h = 1e-5;
        let mut max_rel = 0.0f64;
        let mut check = |get: &dyn Fn(&GloveModel) -> &Vec<f64>,
                         get_mut: &dyn Fn(&mut GloveModel) -> &mut Vec<f64>| {
            let len = get(&model).len();
            for k in 0..len {
                let mut plus = model.clone();
                get_mut(&mut plus)[k] += h;
                let mut minus = model.clone();
                get_mut(&mut minus)[k] -= h;
                let fd = (plus.loss(&table, x_max, alpha) - minus.loss(&table, x_max, alpha)) / (2.0 * h);
                let an = get(&analytic)[k];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        };
        check(&|m| &m.w, &|m| &mut m.w);
        check(&|m| &m.wc, &|m| &mut m.wc);
        check(&|m| &m.b, &|m| &mut m.b);
        check(&|m| &m.bc, &|m| &mut m.bc);
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn save_load_roundtrip_exact() {
        let emb = EmbeddingMatrix::from_rows(
            vec!['甲', '乙'],
            3,
            vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0, f64::MIN_POSITIVE, -1.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        save_embeddings(&emb, &mut buf).unwrap();
        let loaded = load_embeddings(Cursor::new(buf)).unwrap();
        assert_eq!(emb, loaded);
    }

    #[test]
    fn load_rejects_malformed_files() {
        // Ragged rows.
        let err = load_embeddings(Cursor::new("甲 1.0 2.0\n乙 1.0\n")).unwrap_err();
        assert!(matches!(err, EmbeddingError::MalformedEmbedding { line: 2, .. }));
        // Duplicate characters.
        assert!(load_embeddings(Cursor::new("甲 1.0\n甲 2.0\n")).is_err());
        // Non-finite values.
        assert!(load_embeddings(Cursor::new("甲 NaN\n")).is_err());
        assert!(load_embeddings(Cursor::new("甲 inf\n")).is_err());
        // Multi-character first field.
        assert!(load_embeddings(Cursor::new("甲乙 1.0\n")).is_err());
    }

    #[test]
    fn load_hand_written_matrix() {
        let text = "甲 1.5 -2.0 0.25\n乙 0.0 3.0 -0.125\n";
        let emb = load_embeddings(Cursor::new(text)).unwrap();
        assert_eq!(emb.dim(), 3);
        assert_eq!(emb.vector('甲').unwrap(), &[1.5, -2.0, 0.25]);
        assert_eq!(emb.vector('乙').unwrap(), &[0.0, 3.0, -0.125]);
    }
}
