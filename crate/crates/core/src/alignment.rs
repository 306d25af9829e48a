//! Orthogonal Procrustes alignment of two embedding spaces and
//! per-character semantic-change scoring.
//!
//! Given matrices X_c and X_m whose rows are the shared vocabulary's
//! vectors in each space, the rotation minimizing ||X_c - X_m R||_F over
//! orthogonal R is R = U V^T where U S V^T is the SVD of X_m^T X_c. Both
//! matrices are mean-centered and row-normalized first, so the Euclidean
//! distance between a character's vector and its rotated counterpart lies
//! in [0, 2].

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("embedding vocabularies share no characters")]
    EmptyIntersection,
    #[error("matrices have mismatched shapes: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("matrix has no rows")]
    EmptyMatrix,
    #[error("labels do not match matrix rows ({labels} labels, {rows} rows)")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("character {0} has a zero-norm vector; cannot normalize")]
    ZeroNormRow(char),
    #[error("non-finite value in input matrix")]
    NonFiniteInput,
    #[error("SVD failed to converge")]
    SvdFailed,
    #[error("rotation is {0}x{1} but embeddings have dimension {2}")]
    RotationDimMismatch(usize, usize, usize),
}

/// Rotation aligning one space onto another, with the Frobenius residual
/// of the fit. The rotation satisfies `R^T R = I` to within 1e-8.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub rotation: DMatrix<f64>,
    pub residual: f64,
}

/// Semantic-change score for one shared character. The optional fields are
/// filled by joining against census and frequency data.
#[derive(Debug, Clone, Serialize)]
pub struct ChangeScore {
    pub character: char,
    pub distance: f64,
    pub noun_ratio: Option<f64>,
    pub log_frequency: Option<f64>,
}

/// Intersection of two embedding vocabularies ordered by combined
/// frequency rank (sum of per-space row ranks, ties by codepoint).
///
/// Logs a warning when the intersection is smaller than the embedding
/// dimension, where the rotation becomes underdetermined.
pub fn shared_vocabulary(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
) -> Result<Vec<char>, AlignmentError> {
    let mut shared: Vec<(usize, char)> = a
        .chars()
        .iter()
        .filter_map(|&c| b.rank(c).map(|rb| (a.rank(c).unwrap() + rb, c)))
        .collect();
    if shared.is_empty() {
        return Err(AlignmentError::EmptyIntersection);
    }
    shared.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    if shared.len() < a.dim() {
        log::warn!(
            "shared vocabulary has {} characters, fewer than dimension {}; rotation is underdetermined",
            shared.len(),
            a.dim()
        );
    }
    Ok(shared.into_iter().map(|(_, c)| c).collect())
}

/// Stack the given characters' vectors into a row-per-character matrix.
pub fn embedding_rows(emb: &EmbeddingMatrix, chars: &[char]) -> Result<DMatrix<f64>, AlignmentError> {
    let mut m = DMatrix::zeros(chars.len(), emb.dim());
    for (r, &c) in chars.iter().enumerate() {
        let row = emb.vector(c).ok_or(AlignmentError::EmptyIntersection)?;
        for (col, &v) in row.iter().enumerate() {
            m[(r, col)] = v;
        }
    }
    Ok(m)
}

/// Which preprocessing steps to apply before fitting the rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessOptions {
    pub center: bool,
    pub normalize: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            center: true,
            normalize: true,
        }
    }
}

/// Mean-center columns, then scale each row to unit Euclidean norm.
/// `labels` names rows in the zero-norm error. Either step can be disabled
/// for ablation.
pub fn preprocess(
    matrix: &DMatrix<f64>,
    labels: &[char],
    options: PreprocessOptions,
) -> Result<DMatrix<f64>, AlignmentError> {
    if matrix.nrows() == 0 {
        return Err(AlignmentError::EmptyMatrix);
    }
    if labels.len() != matrix.nrows() {
        return Err(AlignmentError::LabelMismatch {
            labels: labels.len(),
            rows: matrix.nrows(),
        });
    }
    let mut out = matrix.clone();
    if options.center {
        let n = out.nrows() as f64;
        for col in 0..out.ncols() {
            let mean = out.column(col).sum() / n;
            for row in 0..out.nrows() {
                out[(row, col)] -= mean;
            }
        }
    }
    if options.normalize {
        for row in 0..out.nrows() {
            let norm = out.row(row).norm();
            if norm == 0.0 {
                return Err(AlignmentError::ZeroNormRow(labels[row]));
            }
            for col in 0..out.ncols() {
                out[(row, col)] /= norm;
            }
        }
    }
    Ok(out)
}

/// Solve `min_R ||X_c - X_m R||_F` over orthogonal R via the SVD of
/// `X_m^T X_c`, returning the rotation and the achieved residual.
pub fn procrustes_rotation(
    x_c: &DMatrix<f64>,
    x_m: &DMatrix<f64>,
) -> Result<AlignmentResult, AlignmentError> {
    if x_c.shape() != x_m.shape() {
        return Err(AlignmentError::ShapeMismatch(
            x_c.nrows(),
            x_c.ncols(),
            x_m.nrows(),
            x_m.ncols(),
        ));
    }
    if x_c.nrows() == 0 {
        return Err(AlignmentError::EmptyMatrix);
    }
    if x_c.iter().chain(x_m.iter()).any(|v| !v.is_finite()) {
        return Err(AlignmentError::NonFiniteInput);
    }

    let m = x_m.transpose() * x_c;
    let svd = m.try_svd(true, true, f64::EPSILON, 0).ok_or(AlignmentError::SvdFailed)?;
    let u = svd.u.ok_or(AlignmentError::SvdFailed)?;
    let v_t = svd.v_t.ok_or(AlignmentError::SvdFailed)?;
    let rotation = u * v_t;
    let residual = (x_c - x_m * &rotation).norm();
    Ok(AlignmentResult { rotation, residual })
}

/// Distance between each character's vector in the first space and its
/// rotated vector from the second, sorted by descending distance (ties by
/// codepoint). Inputs are the preprocessed matrices the rotation was
/// fitted against, with `chars` naming their rows.
pub fn semantic_change_scores(
    x_c: &DMatrix<f64>,
    x_m: &DMatrix<f64>,
    rotation: &DMatrix<f64>,
    chars: &[char],
) -> Result<Vec<ChangeScore>, AlignmentError> {
    if x_c.shape() != x_m.shape() {
        return Err(AlignmentError::ShapeMismatch(
            x_c.nrows(),
            x_c.ncols(),
            x_m.nrows(),
            x_m.ncols(),
        ));
    }
    if chars.len() != x_c.nrows() {
        return Err(AlignmentError::LabelMismatch {
            labels: chars.len(),
            rows: x_c.nrows(),
        });
    }
    let rotated = x_m * rotation;
    let mut scores: Vec<ChangeScore> = chars
        .iter()
        .enumerate()
        .map(|(row, &character)| {
            let distance = (x_c.row(row) - rotated.row(row)).norm();
            ChangeScore {
                character,
                distance,
                noun_ratio: None,
                log_frequency: None,
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.distance
            .partial_cmp(&a.distance)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.character.cmp(&b.character))
    });
    Ok(scores)
}

/// Options for the end-to-end alignment of two embedding files.
#[derive(Debug, Clone)]
pub struct AlignOptions {
    /// Fit the rotation on at most this many of the most frequent shared
    /// characters (distances are still reported for all of them).
    pub fit_cap: usize,
    pub preprocess: PreprocessOptions,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            fit_cap: 10_000,
            preprocess: PreprocessOptions::default(),
        }
    }
}

/// Full alignment of two embedding spaces over their shared vocabulary.
#[derive(Debug, Clone)]
pub struct CharacterAlignment {
    pub shared_vocab: Vec<char>,
    /// Number of leading shared characters the rotation was fitted on.
    pub fitted: usize,
    pub rotation: DMatrix<f64>,
    /// Frobenius residual over the full shared vocabulary.
    pub residual: f64,
    pub scores: Vec<ChangeScore>,
}

/// Align `classical` onto `modern`'s rotated space: compute the shared
/// vocabulary, preprocess both matrices, fit the rotation on the most
/// frequent `fit_cap` characters, and score every shared character.
pub fn align_embeddings(
    classical: &EmbeddingMatrix,
    modern: &EmbeddingMatrix,
    options: &AlignOptions,
) -> Result<CharacterAlignment, AlignmentError> {
    let shared = shared_vocabulary(classical, modern)?;
    let x_c = preprocess(&embedding_rows(classical, &shared)?, &shared, options.preprocess)?;
    let x_m = preprocess(&embedding_rows(modern, &shared)?, &shared, options.preprocess)?;

    let fitted = shared.len().min(options.fit_cap.max(1));
    let fit_c = x_c.rows(0, fitted).into_owned();
    let fit_m = x_m.rows(0, fitted).into_owned();
    let AlignmentResult { rotation, .. } = procrustes_rotation(&fit_c, &fit_m)?;

    let residual = (&x_c - &x_m * &rotation).norm();
    let scores = semantic_change_scores(&x_c, &x_m, &rotation, &shared)?;
    Ok(CharacterAlignment {
        shared_vocab: shared,
        fitted,
        rotation,
        residual,
        scores,
    })
}

/// Attach census noun ratios and corpus log frequencies to change scores.
pub fn enrich_scores(
    scores: &mut [ChangeScore],
    noun_ratios: &BTreeMap<char, f64>,
    frequencies: &BTreeMap<char, u64>,
) {
    for score in scores {
        score.noun_ratio = noun_ratios.get(&score.character).copied();
        score.log_frequency = frequencies
            .get(&score.character)
            .filter(|&&f| f > 0)
            .map(|&f| (f as f64).ln());
    }
}
