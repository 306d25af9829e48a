//! Pearson correlation with two-tailed significance, and the two
//! correlation studies run by the pipeline: noun ratio against norm
//! dimensions, and semantic change against noun ratio / log frequency.
//!
//! Significance uses the exact t-transform of Pearson's r: the two-tailed
//! tail mass of Student's t with `n - 2` degrees of freedom, evaluated
//! through the regularized incomplete beta function. A seeded permutation
//! test is available as a cross-check.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::alignment::ChangeScore;
use crate::norms::{CharacterNorms, NormDimension};
use crate::posstats::LexemeStats;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sequences have different lengths ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("correlation needs at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("correlation undefined: {0} input is constant")]
    ConstantInput(&'static str),
    #[error("non-finite value in {0} input")]
    NonFiniteInput(&'static str),
    #[error("|rho| must not exceed 1, got {0}")]
    RhoOutOfRange(f64),
    #[error("joined sample too small: {got} characters (need at least {needed})")]
    JoinTooSmall { needed: usize, got: usize },
}

/// One row of a correlation report.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationResult {
    pub variable_name: String,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Sample Pearson correlation coefficient of two equal-length sequences.
pub fn pearson_rho(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewObservations { needed: 2, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput("x"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFiniteInput("y"));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 {
        return Err(StatsError::ConstantInput("x"));
    }
    if var_y == 0.0 {
        return Err(StatsError::ConstantInput("y"));
    }
    // Guard rounding: the true coefficient is within [-1, 1].
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
fn ln_gamma(x: f64) -> f64 {
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued-fraction kernel for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)` for `a, b > 0` and
/// `x` in `[0, 1]`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-tailed significance of a Pearson coefficient under the null of zero
/// correlation: `t = rho * sqrt((n-2) / (1-rho^2))` referred to Student's t
/// with `n - 2` degrees of freedom. `|rho| = 1` yields exactly 0.
pub fn p_value_two_tailed(rho: f64, n: usize) -> Result<f64, StatsError> {
    if n < 3 {
        return Err(StatsError::TooFewObservations { needed: 3, got: n });
    }
    if !rho.is_finite() || rho.abs() > 1.0 {
        return Err(StatsError::RhoOutOfRange(rho));
    }
    if rho.abs() == 1.0 {
        return Ok(0.0);
    }
    let nu = (n - 2) as f64;
    let t = rho * (nu / (1.0 - rho * rho)).sqrt();
    // P(|T| > t) = I_{nu/(nu+t^2)}(nu/2, 1/2).
    Ok(regularized_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t)))
}

/// Two-tailed permutation test: shuffles `y` with a seeded generator and
/// reports `(exceedances + 1) / (shuffles + 1)` for `|rho|` at least as
/// large as observed. Deterministic for a fixed seed.
pub fn permutation_p_value(
    x: &[f64],
    y: &[f64],
    shuffles: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    let observed = pearson_rho(x, y)?.abs();
    let mut permuted = y.to_vec();
    let mut exceed = 0usize;
    for i in 0..shuffles {
        // Independent stream per shuffle so the loop can be sharded.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        permuted.shuffle(&mut rng);
        if pearson_rho(x, &permuted)?.abs() >= observed {
            exceed += 1;
        }
    }
    Ok((exceed + 1) as f64 / (shuffles + 1) as f64)
}

fn correlation_result(name: &str, x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    let rho = pearson_rho(x, y)?;
    let p_value = p_value_two_tailed(rho, x.len())?;
    Ok(CorrelationResult {
        variable_name: name.to_string(),
        rho,
        p_value,
        n: x.len(),
    })
}

/// The census/norms join sample: one slot per character having both a
/// defined noun ratio and aggregated ratings.
#[derive(Debug, Clone)]
pub struct NormJoin {
    pub characters: Vec<char>,
    pub noun_ratios: Vec<f64>,
    pub ratings: Vec<[f64; 6]>,
}

impl NormJoin {
    pub fn rating_column(&self, dim: NormDimension) -> Vec<f64> {
        self.ratings.iter().map(|r| r[dim as usize]).collect()
    }
}

/// Join the census with aggregated norms, erroring when fewer than three
/// characters survive.
pub fn join_census_with_norms(
    census: &[LexemeStats],
    char_norms: &BTreeMap<char, CharacterNorms>,
) -> Result<NormJoin, StatsError> {
    let mut join = NormJoin {
        characters: Vec::new(),
        noun_ratios: Vec::new(),
        ratings: Vec::new(),
    };
    for lexeme in census {
        let (Some(ratio), Some(norms)) = (lexeme.noun_ratio, char_norms.get(&lexeme.character))
        else {
            continue;
        };
        join.characters.push(lexeme.character);
        join.noun_ratios.push(ratio);
        join.ratings.push(norms.ratings);
    }
    if join.characters.len() < 3 {
        return Err(StatsError::JoinTooSmall { needed: 3, got: join.characters.len() });
    }
    Ok(join)
}

/// Correlate noun ratio with each of the six norm dimensions over the
/// characters present in both the census (with a defined noun ratio) and
/// the aggregated norms.
pub fn correlate_noun_ratio_with_norms(
    census: &[LexemeStats],
    char_norms: &BTreeMap<char, CharacterNorms>,
) -> Result<Vec<CorrelationResult>, StatsError> {
    let join = join_census_with_norms(census, char_norms)?;
    NormDimension::ALL
        .iter()
        .map(|&dim| correlation_result(dim.label(), &join.noun_ratios, &join.rating_column(dim)))
        .collect()
}

/// Which side's corpus frequency feeds the log-frequency correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencySource {
    Classical,
    Modern,
    MinOfBoth,
}

/// The change-score joins: one sample for the noun-ratio row and one for
/// the log-frequency row, each over the characters where that variable is
/// available.
#[derive(Debug, Clone)]
pub struct ChangeJoin {
    pub ratio_characters: Vec<char>,
    pub ratio_distances: Vec<f64>,
    pub noun_ratios: Vec<f64>,
    pub freq_characters: Vec<char>,
    pub freq_distances: Vec<f64>,
    pub log_frequencies: Vec<f64>,
}

/// Join change scores with census noun ratios and positive corpus
/// frequencies (natural log), erroring when either sample has fewer than
/// three characters.
pub fn join_change_scores(
    change_scores: &[ChangeScore],
    census: &[LexemeStats],
    frequencies: &BTreeMap<char, u64>,
) -> Result<ChangeJoin, StatsError> {
    let ratio_by_char: BTreeMap<char, f64> = census
        .iter()
        .filter_map(|l| l.noun_ratio.map(|r| (l.character, r)))
        .collect();

    let mut join = ChangeJoin {
        ratio_characters: Vec::new(),
        ratio_distances: Vec::new(),
        noun_ratios: Vec::new(),
        freq_characters: Vec::new(),
        freq_distances: Vec::new(),
        log_frequencies: Vec::new(),
    };
    for score in change_scores {
        if let Some(ratio) = ratio_by_char.get(&score.character) {
            join.ratio_characters.push(score.character);
            join.ratio_distances.push(score.distance);
            join.noun_ratios.push(*ratio);
        }
        if let Some(&freq) = frequencies.get(&score.character) {
            if freq > 0 {
                join.freq_characters.push(score.character);
                join.freq_distances.push(score.distance);
                join.log_frequencies.push((freq as f64).ln());
            }
        }
    }
    if join.ratio_characters.len() < 3 {
        return Err(StatsError::JoinTooSmall { needed: 3, got: join.ratio_characters.len() });
    }
    if join.freq_characters.len() < 3 {
        return Err(StatsError::JoinTooSmall { needed: 3, got: join.freq_characters.len() });
    }
    Ok(join)
}

/// Correlate semantic-change distance with noun ratio and with the natural
/// log of corpus frequency. Each variable is computed over the characters
/// for which it is available; characters with zero frequency are excluded
/// from the frequency row.
pub fn correlate_change(
    change_scores: &[ChangeScore],
    census: &[LexemeStats],
    frequencies: &BTreeMap<char, u64>,
) -> Result<Vec<CorrelationResult>, StatsError> {
    let join = join_change_scores(change_scores, census, frequencies)?;
    Ok(vec![
        correlation_result("noun_ratio", &join.ratio_distances, &join.noun_ratios)?,
        correlation_result("log_frequency", &join.freq_distances, &join.log_frequencies)?,
    ])
}
