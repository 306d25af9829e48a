//! Acceptance suite: one test per release criterion, each printing a
//! PASS/SKIP line (run with `--nocapture` to see them).
//!
//! Criteria needing the real UD treebanks look for these environment
//! variables and otherwise verify the same machinery on the bundled
//! fixtures:
//!   CHARFLEX_KYOTO_CONLLU  path to the Classical-Chinese Kyoto treebank
//!   CHARFLEX_GSD_CONLLU    path to the Chinese GSD treebank
//!   CHARFLEX_ERA_MATCHED=1 the above match the corpus versions behind the reference numbers
//!   CHARFLEX_FULL_RESULTS  correlations.json from a full-corpus pipeline run

use std::collections::BTreeMap;
use std::io::{BufReader, Cursor};
use std::path::{Path, PathBuf};
use std::time::Instant;

use charflex_core::alignment::{procrustes_rotation, semantic_change_scores};
use charflex_core::embedding::{
    build_cooccurrence, build_vocab, save_embeddings, train_glove, CoocEntry, CooccurrenceTable,
    GloveModel, Parallelism, TrainConfig,
};
use charflex_core::norms::{aggregate_character_norms, NormRecord};
use charflex_core::posstats::{
    entropy_summary, lexeme_census, pos_entropy, position_distributions, top_function_words,
    FlexClass, SyntacticPosition,
};
use charflex_core::stats::{
    correlate_change, correlate_noun_ratio_with_norms, p_value_two_tailed, pearson_rho,
    regularized_incomplete_beta,
};
use charflex_core::treebank::{parse_conllu, to_char_counts, Treebank};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn report(criterion: usize, name: &str, status: &str) {
    println!("ACCEPTANCE criterion {criterion} ({name}): {status}");
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn load_treebank(path: &Path, label: &str) -> Treebank {
    let file = std::fs::File::open(path)
        .unwrap_or_else(|e| panic!("cannot open {}: {e}", path.display()));
    parse_conllu(BufReader::new(file), label)
        .unwrap_or_else(|e| panic!("cannot parse {}: {e}", path.display()))
}

struct EntropyRun {
    function_words: Vec<String>,
    entropies: Vec<(SyntacticPosition, f64)>,
    mean: f64,
}

fn entropy_run(treebank: &Treebank, k: usize) -> EntropyRun {
    let function_words = top_function_words(treebank, k);
    let table = position_distributions(treebank, &function_words);
    let entropies: Vec<(SyntacticPosition, f64)> = table
        .iter()
        .filter(|(_, d)| d.total() > 0)
        .map(|(p, d)| (p.clone(), pos_entropy(d).unwrap()))
        .collect();
    assert_eq!(table.len(), 2 * k + 2, "expected {} positions", 2 * k + 2);
    let mean = entropy_summary(entropies.clone()).unwrap().mean;
    EntropyRun {
        function_words,
        entropies,
        mean,
    }
}

/// Criterion 1: entropy tables. The position/function-word machinery runs
/// on the bundled fixtures unconditionally; the reference numbers are
/// checked when the real treebanks are supplied.
#[test]
fn criterion_1_entropy_tables() {
    // Fixture leg: 12 positions per language, planted function words, and
    // every position observed.
    let classical = load_treebank(&fixtures().join("classical.conllu"), "classical");
    let modern = load_treebank(&fixtures().join("modern.conllu"), "modern");
    let run_c = entropy_run(&classical, 5);
    let run_m = entropy_run(&modern, 5);
    assert_eq!(run_c.function_words, ["也", "之", "而", "者", "于"]);
    assert_eq!(run_m.function_words, ["的", "在", "是", "和", "了"]);
    assert_eq!(run_c.entropies.len(), 12, "fixture leaves positions unobserved");
    assert_eq!(run_m.entropies.len(), 12);

    let (Some(kyoto), Some(gsd)) = (
        std::env::var_os("CHARFLEX_KYOTO_CONLLU"),
        std::env::var_os("CHARFLEX_GSD_CONLLU"),
    ) else {
        report(1, "entropy tables", "PASS on fixtures; SKIP corpus leg (set CHARFLEX_KYOTO_CONLLU and CHARFLEX_GSD_CONLLU)");
        return;
    };

    let started = Instant::now();
    let kyoto_tb = load_treebank(Path::new(&kyoto), "classical");
    let gsd_tb = load_treebank(Path::new(&gsd), "modern");
    let run_c = entropy_run(&kyoto_tb, 5);
    let run_m = entropy_run(&gsd_tb, 5);
    assert_eq!(run_c.function_words, ["也", "之", "而", "者", "于"]);
    assert_eq!(run_m.function_words, ["的", "在", "是", "和", "了"]);
    assert_eq!(run_c.entropies.len(), 12);
    assert_eq!(run_m.entropies.len(), 12);
    assert!(
        run_c.mean - run_m.mean >= 0.10,
        "classical mean {} does not exceed modern mean {} by 0.10",
        run_c.mean,
        run_m.mean
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "corpus entropy run took {elapsed:?}");

    if std::env::var("CHARFLEX_ERA_MATCHED").as_deref() == Ok("1") {
        check_reference_entropies(&run_c, &run_m);
        report(1, "entropy tables", "PASS (fixtures + corpora + reference cells)");
    } else {
        report(1, "entropy tables", "PASS (fixtures + corpora; cell comparison needs CHARFLEX_ERA_MATCHED=1)");
    }
}

/// Reference per-position entropies (natural log).
fn check_reference_entropies(classical: &EntropyRun, modern: &EntropyRun) {
    let expect_classical: Vec<(SyntacticPosition, f64)> = vec![
        (SyntacticPosition::ClauseInitial, 1.060),
        (SyntacticPosition::ClauseFinal, 1.088),
        (SyntacticPosition::Before("也".into()), 1.051),
        (SyntacticPosition::After("也".into()), 0.870),
        (SyntacticPosition::Before("之".into()), 0.989),
        (SyntacticPosition::After("之".into()), 1.069),
        (SyntacticPosition::Before("而".into()), 0.974),
        (SyntacticPosition::After("而".into()), 0.973),
        (SyntacticPosition::Before("者".into()), 1.027),
        (SyntacticPosition::After("者".into()), 0.955),
        (SyntacticPosition::Before("于".into()), 0.770),
        (SyntacticPosition::After("于".into()), 0.907),
    ];
    let expect_modern: Vec<(SyntacticPosition, f64)> = vec![
        (SyntacticPosition::ClauseInitial, 0.885),
        (SyntacticPosition::ClauseFinal, 0.987),
        (SyntacticPosition::Before("的".into()), 1.033),
        (SyntacticPosition::After("的".into()), 0.727),
        (SyntacticPosition::Before("在".into()), 1.025),
        (SyntacticPosition::After("在".into()), 0.903),
        (SyntacticPosition::Before("是".into()), 0.856),
        (SyntacticPosition::After("是".into()), 0.894),
        (SyntacticPosition::Before("和".into()), 0.811),
        (SyntacticPosition::After("和".into()), 0.903),
        (SyntacticPosition::Before("了".into()), 0.141),
        (SyntacticPosition::After("了".into()), 0.836),
    ];
    for (run, expect) in [(classical, &expect_classical), (modern, &expect_modern)] {
        for (position, cell) in expect {
            let (_, got) = run
                .entropies
                .iter()
                .find(|(p, _)| p == position)
                .unwrap_or_else(|| panic!("position {position} missing"));
            assert!(
                (got - cell).abs() <= 0.05,
                "{position}: entropy {got:.3} not within 0.05 of reference {cell:.3}"
            );
        }
    }
    // The before-于 slot is the classical minimum.
    let min = classical
        .entropies
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    assert_eq!(min.0, SyntacticPosition::Before("于".into()));
}

/// Criterion 2: flexibility census. Planted fixture classes always run;
/// the reference Kyoto counts are checked when the corpus is supplied.
#[test]
fn criterion_2_flexibility_census() {
    let classical = load_treebank(&fixtures().join("classical.conllu"), "classical");
    let census = lexeme_census(&to_char_counts(&classical), 3);
    let class_of = |c: char| census.iter().find(|l| l.character == c).map(|l| l.flexibility);
    assert_eq!(class_of('子'), Some(FlexClass::FlexibleNoun));
    assert_eq!(class_of('君'), Some(FlexClass::FlexibleNoun));
    assert_eq!(class_of('人'), Some(FlexClass::InflexibleNoun));
    assert_eq!(class_of('曰'), Some(FlexClass::InflexibleVerb));
    assert_eq!(class_of('行'), Some(FlexClass::FlexibleVerb));
    let tied = census.iter().find(|l| l.character == '言').unwrap();
    assert!(tied.tied && tied.flexibility == FlexClass::FlexibleVerb);

    let Some(kyoto) = std::env::var_os("CHARFLEX_KYOTO_CONLLU") else {
        report(2, "flexibility census", "PASS on fixtures; SKIP Kyoto leg (set CHARFLEX_KYOTO_CONLLU)");
        return;
    };
    let treebank = load_treebank(Path::new(&kyoto), "classical");
    let census = lexeme_census(&to_char_counts(&treebank), 10);
    let count = |class: FlexClass| census.iter().filter(|l| l.flexibility == class).count();
    let flexible_nouns = count(FlexClass::FlexibleNoun);
    let inflexible_nouns = count(FlexClass::InflexibleNoun);
    let flexible_verbs = count(FlexClass::FlexibleVerb);
    let inflexible_verbs = count(FlexClass::InflexibleVerb);
    let nouns = flexible_nouns + inflexible_nouns;
    let verbs = flexible_verbs + inflexible_verbs;
    assert!(
        (237..=289).contains(&nouns),
        "noun characters {nouns} outside 263 +/- 26"
    );
    assert!(
        (362..=442).contains(&verbs),
        "verb characters {verbs} outside 402 +/- 40"
    );
    let noun_frac = flexible_nouns as f64 / nouns as f64;
    let verb_frac = flexible_verbs as f64 / verbs as f64;
    assert!(
        (0.44..=0.54).contains(&noun_frac),
        "flexible noun fraction {noun_frac:.3} outside 0.49 +/- 0.05"
    );
    assert!(
        (0.30..=0.40).contains(&verb_frac),
        "flexible verb fraction {verb_frac:.3} outside 0.35 +/- 0.05"
    );
    // Census is ordered by frequency; the 8 most frequent flexible nouns
    // must include 子 and 君.
    let top8: Vec<char> = census
        .iter()
        .filter(|l| l.flexibility == FlexClass::FlexibleNoun)
        .take(8)
        .map(|l| l.character)
        .collect();
    assert!(
        top8.contains(&'子') && top8.contains(&'君'),
        "top flexible nouns {top8:?} missing 子 or 君"
    );
    report(2, "flexibility census", "PASS (fixtures + Kyoto)");
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, dim, dim).qr();
    let r = qr.r();
    let mut q = qr.q();
    for col in 0..dim {
        if r[(col, col)] < 0.0 {
            for row in 0..dim {
                q[(row, col)] = -q[(row, col)];
            }
        }
    }
    q
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Criterion 3: Procrustes property suite over 200 seeded shape pairs.
#[test]
fn criterion_3_procrustes_properties() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31_337);

    // 10,000 orthogonal candidates per dimension, shared across pairs.
    let mut candidates: BTreeMap<usize, Vec<DMatrix<f64>>> = BTreeMap::new();
    for dim in 2..=10usize {
        let set: Vec<DMatrix<f64>> = (0..10_000).map(|_| random_orthogonal(&mut rng, dim)).collect();
        candidates.insert(dim, set);
    }

    for pair_index in 0..200 {
        let dim = 2 + pair_index % 9;
        let n = rng.gen_range(dim..=50);
        let x_c = gaussian_matrix(&mut rng, n, dim);
        let x_m = gaussian_matrix(&mut rng, n, dim);

        let result = procrustes_rotation(&x_c, &x_m).unwrap();

        // Orthogonality.
        let gram = result.rotation.transpose() * &result.rotation;
        let ortho_err = max_abs(&(gram - DMatrix::identity(dim, dim)));
        assert!(ortho_err < 1e-8, "pair {pair_index}: |R^T R - I| = {ortho_err:e}");

        // Exact recovery of a planted rotation.
        let planted = random_orthogonal(&mut rng, dim);
        let x_m_planted = &x_c * planted.transpose();
        let recovery = procrustes_rotation(&x_c, &x_m_planted).unwrap();
        assert!(
            recovery.residual < 1e-8,
            "pair {pair_index}: planted-rotation residual {:e}",
            recovery.residual
        );

        // Optimality against identity + 10,000 random orthogonal
        // candidates. ||X_c - X_m R'||_F^2 = c - 2 tr(R'^T M) with
        // M = X_m^T X_c; the identity is verified against the direct
        // formula on the first candidate of every pair.
        let m = x_m.transpose() * &x_c;
        let constant = x_c.norm_squared() + x_m.norm_squared();
        let residual_of = |rotation: &DMatrix<f64>| -> f64 {
            (constant - 2.0 * (rotation.transpose() * &m).trace()).max(0.0).sqrt()
        };
        let direct = (&x_c - &x_m * &candidates[&dim][0]).norm();
        assert!(
            (residual_of(&candidates[&dim][0]) - direct).abs() < 1e-8,
            "trace-identity residual disagrees with the direct formula"
        );
        let identity_residual = (&x_c - &x_m).norm();
        assert!(result.residual <= identity_residual + 1e-9);
        for candidate in &candidates[&dim] {
            debug_assert!(candidate.nrows() == dim);
            let candidate_residual = residual_of(candidate);
            assert!(
                result.residual <= candidate_residual + 1e-9,
                "pair {pair_index}: candidate beat SVD solution ({candidate_residual} < {})",
                result.residual
            );
        }

        // Orthogonal equivariance of distances.
        let chars: Vec<char> = (0..n)
            .map(|i| char::from_u32(0x4E00 + i as u32).unwrap())
            .collect();
        let p = random_orthogonal(&mut rng, dim);
        let reparam = procrustes_rotation(&x_c, &(&x_m * &p)).unwrap();
        assert!(
            (result.residual - reparam.residual).abs() < 1e-8,
            "pair {pair_index}: residual changed under reparameterization"
        );
        let scores_a = semantic_change_scores(&x_c, &x_m, &result.rotation, &chars).unwrap();
        let scores_b = semantic_change_scores(&x_c, &(&x_m * &p), &reparam.rotation, &chars).unwrap();
        let by_char: BTreeMap<char, f64> = scores_b.iter().map(|s| (s.character, s.distance)).collect();
        for score in &scores_a {
            let other = by_char[&score.character];
            assert!(
                (score.distance - other).abs() < 1e-8,
                "pair {pair_index}: distance changed under reparameterization"
            );
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "property suite took {elapsed:?}");
    report(3, "procrustes properties", &format!("PASS in {elapsed:.2?}"));
}

const GLOVE_INVENTORY: &str =
    "天地玄黄宇宙洪荒日月盈昃辰宿列张寒来暑往秋收冬藏闰余成岁律吕调阳云腾致雨露结为霜";

/// Deterministic 100k-character corpus over 40 characters with 10 planted
/// adjacent pairs.
fn synthetic_corpus(seed: u64) -> (String, Vec<(char, char)>) {
    let inventory: Vec<char> = GLOVE_INVENTORY.chars().collect();
    assert_eq!(inventory.len(), 40);
    let pairs: Vec<(char, char)> = (0..10).map(|i| (inventory[2 * i], inventory[2 * i + 1])).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    let mut emitted = 0usize;
    let mut line_len = 0usize;
    while emitted < 100_000 {
        let idx = rng.gen_range(0..40);
        let mut burst = vec![inventory[idx]];
        if idx < 20 && rng.gen::<f64>() < 0.7 {
            // Partner of the planted pair, adjacent.
            let partner = if idx % 2 == 0 { inventory[idx + 1] } else { inventory[idx - 1] };
            burst.push(partner);
        }
        for c in burst {
            if emitted == 100_000 {
                break;
            }
            text.push(c);
            emitted += 1;
            line_len += 1;
            if line_len == 50 {
                text.push('\n');
                line_len = 0;
            }
        }
    }
    (text, pairs)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Criterion 4: desk-scale GloVe training.
#[test]
fn criterion_4_glove_desk_scale() {
    let started = Instant::now();
    let (text, pairs) = synthetic_corpus(2024);
    assert_eq!(text.chars().filter(|c| !c.is_whitespace()).count(), 100_000);

    let vocab = build_vocab(Cursor::new(text.clone()), 5).unwrap();
    assert_eq!(vocab.len(), 40, "all 40 characters must clear min_frequency");
    let table = build_cooccurrence(Cursor::new(text), &vocab, 5).unwrap();

    let config = TrainConfig {
        dim: 50,
        window: 5,
        epochs: 15,
        seed: 7,
        ..TrainConfig::default()
    };
    let outcome = train_glove(&table, &vocab, &config, Parallelism::Deterministic).unwrap();
    let first = outcome.epoch_losses[0];
    let last = *outcome.epoch_losses.last().unwrap();
    assert!(
        last <= 0.5 * first,
        "final mean loss {last} not within half of initial {first}"
    );

    // Gradient check on a 5x5 table, h = 1e-5, max relative error < 1e-4.
    let mut entries = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..5u32 {
        for j in 0..5u32 {
            entries.push(CoocEntry { i, j, weight: rng.gen_range(0.5..40.0) });
        }
    }
    let small = CooccurrenceTable::from_entries(entries);
    let model = GloveModel::init(5, 6, 123);
    let grad = model.gradient(&small, config.x_max, config.alpha);
    let h = 1e-5;
    let mut max_rel = 0.0f64;
    for slot in 0..4 {
        let len = match slot {
            0 | 1 => 5 * 6,
            _ => 5,
        };
        for k in 0..len {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let (p, m, a) = match slot {
                0 => (&mut plus.w, &mut minus.w, grad.w[k]),
                1 => (&mut plus.wc, &mut minus.wc, grad.wc[k]),
                2 => (&mut plus.b, &mut minus.b, grad.b[k]),
                _ => (&mut plus.bc, &mut minus.bc, grad.bc[k]),
            };
            p[k] += h;
            m[k] -= h;
            let fd = (plus.loss(&small, config.x_max, config.alpha)
                - minus.loss(&small, config.x_max, config.alpha))
                / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
        }
    }
    assert!(max_rel < 1e-4, "gradient max relative error {max_rel:e}");

    // Mutual nearest neighbors for at least 8 of the 10 planted pairs.
    let emb = &outcome.embeddings;
    let nearest = |c: char| -> char {
        let target = emb.vector(c).unwrap();
        emb.chars()
            .iter()
            .copied()
            .filter(|&o| o != c)
            .max_by(|&a, &b| {
                cosine(target, emb.vector(a).unwrap())
                    .partial_cmp(&cosine(target, emb.vector(b).unwrap()))
                    .unwrap()
            })
            .unwrap()
    };
    let mutual = pairs
        .iter()
        .filter(|(a, b)| nearest(*a) == *b && nearest(*b) == *a)
        .count();
    assert!(mutual >= 8, "only {mutual}/10 planted pairs are mutual nearest neighbors");

    // Byte-identical reproduction under the same seed.
    let again = train_glove(&table, &vocab, &config, Parallelism::Deterministic).unwrap();
    let mut bytes_a = Vec::new();
    let mut bytes_b = Vec::new();
    save_embeddings(&outcome.embeddings, &mut bytes_a).unwrap();
    save_embeddings(&again.embeddings, &mut bytes_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "deterministic mode is not byte-identical");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "desk-scale training took {elapsed:?}");
    report(
        4,
        "glove desk scale",
        &format!("PASS in {elapsed:.2?} ({mutual}/10 mutual pairs, loss {first:.4} -> {last:.4})"),
    );
}

/// Independent oracle: two-tailed t tail mass by adaptive Simpson over the
/// tangent-substituted density, normalized by the full integral rather
/// than the gamma constant.
fn quadrature_p(rho: f64, n: usize) -> f64 {
    let nu = (n - 2) as f64;
    let t = rho.abs() * (nu / (1.0 - rho * rho)).sqrt();
    let density = move |theta: f64| -> f64 {
        let (sin, cos) = theta.sin_cos();
        if cos == 0.0 {
            return if nu == 1.0 { 1.0 } else { 0.0 };
        }
        (0.5 * (nu + 1.0) * nu.ln() + (nu - 1.0) * cos.ln()
            - 0.5 * (nu + 1.0) * (nu * cos * cos + sin * sin).ln())
        .exp()
    };
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let left = simpson(f, a, mid);
        let right = simpson(f, mid, b);
        let refined = left + right;
        if depth == 0 || (refined - whole).abs() <= 15.0 * eps {
            refined + (refined - whole) / 15.0
        } else {
            adaptive(f, a, mid, left, eps / 2.0, depth - 1)
                + adaptive(f, mid, b, right, eps / 2.0, depth - 1)
        }
    }
    let half = std::f64::consts::FRAC_PI_2;
    let whole = adaptive(&density, 0.0, half, simpson(&density, 0.0, half), 1e-13, 60);
    let tail_start = t.atan();
    let tail = adaptive(
        &density,
        tail_start,
        half,
        simpson(&density, tail_start, half),
        1e-13,
        60,
    );
    (tail / whole).min(1.0)
}

/// Criterion 5: statistics oracle.
#[test]
fn criterion_5_statistics_oracle() {
    // Reference cell: rho = 0.138 over 378 characters.
    let p = p_value_two_tailed(0.138, 378).unwrap();
    assert!(
        (0.005..=0.008).contains(&p),
        "p(0.138, 378) = {p} outside [0.005, 0.008]"
    );

    // Incomplete beta vs direct quadrature on a 50-point grid.
    let rhos = [0.02, 0.1, 0.138, 0.25, 0.4, 0.55, 0.7, 0.8, 0.9, 0.97];
    let ns = [3usize, 5, 12, 60, 378];
    let mut grid_points = 0;
    let mut worst = 0.0f64;
    for &rho in &rhos {
        for &n in &ns {
            let beta_route = p_value_two_tailed(rho, n).unwrap();
            let quad_route = quadrature_p(rho, n);
            worst = worst.max((beta_route - quad_route).abs());
            assert!(
                (beta_route - quad_route).abs() < 1e-9,
                "rho={rho} n={n}: |{beta_route} - {quad_route}| >= 1e-9"
            );
            grid_points += 1;
        }
    }
    assert_eq!(grid_points, 50);

    // Incomplete beta endpoints sanity.
    assert_eq!(regularized_incomplete_beta(3.0, 2.0, 0.0), 0.0);
    assert_eq!(regularized_incomplete_beta(3.0, 2.0, 1.0), 1.0);

    // Pearson affine invariance over 1,000 random vectors.
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    for _ in 0..1_000 {
        let n = rng.gen_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let Ok(rho) = pearson_rho(&x, &y) else { continue };
        let a = rng.gen_range(0.01..10.0);
        let b = rng.gen_range(-5.0..5.0);
        let x_affine: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let rho_affine = pearson_rho(&x_affine, &y).unwrap();
        assert!(
            (rho - rho_affine).abs() < 1e-12,
            "affine transform moved rho by {:e}",
            (rho - rho_affine).abs()
        );
    }
    report(5, "statistics oracle", &format!("PASS (worst quadrature gap {worst:.2e})"));
}

fn planted_pair(rho: f64, n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        x.push(a);
        y.push(rho * a + (1.0 - rho * rho).sqrt() * b);
    }
    (x, y)
}

/// Criterion 6: planted-correlation fixtures at desk scale; full-corpus
/// sign reproduction checked only when a user-supplied result is given.
#[test]
fn criterion_6_correlation_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);

    // Direct recovery of planted coefficients.
    for &target in &[0.6f64, -0.3, 0.138, -0.282] {
        let (x, y) = planted_pair(target, 20_000, &mut rng);
        let rho = pearson_rho(&x, &y).unwrap();
        assert!(
            (rho - target).abs() <= 0.02,
            "recovered {rho:.4}, planted {target}"
        );
    }

    // Synthetic join through the census/norms machinery: noun ratios and
    // concreteness planted with correlation 0.6.
    let n = 5_000;
    let (ratio_base, concreteness) = planted_pair(0.6, n, &mut rng);
    let to_unit = |v: f64| 1.0 / (1.0 + (-v).exp());
    let census: Vec<charflex_core::posstats::LexemeStats> = (0..n)
        .map(|i| {
            let character = char::from_u32(0x3400 + i as u32).unwrap();
            let ratio = to_unit(ratio_base[i]);
            let noun = (ratio * 1000.0).round() as u64;
            let verb = 1000 - noun;
            charflex_core::posstats::LexemeStats {
                character,
                noun_count: noun,
                verb_count: verb,
                other_count: 0,
                noun_ratio: Some(noun as f64 / 1000.0),
                flexibility: FlexClass::FlexibleNoun,
                tied: false,
            }
        })
        .collect();
    let norms: BTreeMap<char, charflex_core::norms::CharacterNorms> = census
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut ratings = [0.0; 6];
            for slot in ratings.iter_mut() {
                *slot = rng.sample(StandardNormal);
            }
            ratings[2] = concreteness[i];
            (
                l.character,
                charflex_core::norms::CharacterNorms {
                    character: l.character,
                    ratings,
                    support: 1,
                },
            )
        })
        .collect();
    let results = correlate_noun_ratio_with_norms(&census, &norms).unwrap();
    let conc = results.iter().find(|r| r.variable_name == "concreteness").unwrap();
    // The quantized sigmoid ratios attenuate the planted coefficient; the
    // module must agree with a direct pearson on the same joined columns
    // to machine precision and recover the planted value loosely.
    let ratios: Vec<f64> = census.iter().map(|l| l.noun_ratio.unwrap()).collect();
    let conc_col: Vec<f64> = census
        .iter()
        .map(|l| norms[&l.character].ratings[2])
        .collect();
    let direct = pearson_rho(&ratios, &conc_col).unwrap();
    assert!((conc.rho - direct).abs() < 1e-12, "module disagrees with direct chain");
    assert_eq!(conc.n, n);

    // Change-score join with planted anticorrelations, recovered within
    // +/- 0.02 because distance is an exact linear map of each variable
    // over a large sample.
    let m = 4_000;
    let census_small: Vec<charflex_core::posstats::LexemeStats> = (0..m)
        .map(|i| {
            let character = char::from_u32(0x4E00 + i as u32).unwrap();
            let noun = (i as u64) % 1_000;
            charflex_core::posstats::LexemeStats {
                character,
                noun_count: noun,
                verb_count: 999 - noun,
                other_count: 0,
                noun_ratio: Some(noun as f64 / 999.0),
                flexibility: FlexClass::FlexibleNoun,
                tied: false,
            }
        })
        .collect();
    let scores: Vec<charflex_core::alignment::ChangeScore> = census_small
        .iter()
        .map(|l| charflex_core::alignment::ChangeScore {
            character: l.character,
            distance: 1.5 - 0.4 * l.noun_ratio.unwrap(),
            noun_ratio: None,
            log_frequency: None,
        })
        .collect();
    let frequencies: BTreeMap<char, u64> = census_small
        .iter()
        .enumerate()
        .map(|(i, l)| (l.character, 1 + (i as u64 % 777)))
        .collect();
    let change = correlate_change(&scores, &census_small, &frequencies).unwrap();
    assert_eq!(change[0].variable_name, "noun_ratio");
    assert!(
        (change[0].rho - (-1.0)).abs() <= 0.02,
        "exact linear plant must give rho ~ -1, got {}",
        change[0].rho
    );
    assert_eq!(change[1].variable_name, "log_frequency");
    assert!(change[1].rho.is_finite());

    match std::env::var("CHARFLEX_FULL_RESULTS") {
        Ok(path) => {
            check_full_corpus_signs(Path::new(&path));
            report(6, "correlation fixtures", "PASS (planted + full-corpus signs)");
        }
        Err(_) => report(
            6,
            "correlation fixtures",
            "PASS on planted fixtures; SKIP full-corpus signs (set CHARFLEX_FULL_RESULTS to a correlations.json)",
        ),
    }
}

/// Sign targets for a user-supplied full-corpus run: concreteness
/// positive, semantic-change correlations negative (magnitudes are
/// corpus-dependent; reference values 0.138, -0.100, -0.282).
fn check_full_corpus_signs(path: &Path) {
    let text = std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    let rho_of = |rows: &serde_json::Value, name: &str| -> f64 {
        rows.as_array()
            .unwrap()
            .iter()
            .find(|r| r["variable"] == name)
            .unwrap_or_else(|| panic!("{name} missing from {}", path.display()))["rho"]
            .as_f64()
            .unwrap()
    };
    let concreteness = rho_of(&json["noun_ratio_norms"], "concreteness");
    let noun_ratio = rho_of(&json["semantic_change"], "noun_ratio");
    let log_frequency = rho_of(&json["semantic_change"], "log_frequency");
    assert!(concreteness > 0.0, "concreteness rho {concreteness} not positive");
    assert!(noun_ratio < 0.0, "change/noun-ratio rho {noun_ratio} not negative");
    assert!(log_frequency < 0.0, "change/log-frequency rho {log_frequency} not negative");
}

/// Criterion 7: `all --deterministic` twice gives byte-identical trees
/// (manifests compared after dropping their timestamp field). Both runs
/// use the same output directory, the second overwriting the first, with
/// the tree snapshotted in between.
#[test]
fn criterion_7_end_to_end_determinism() {
    let binary = env!("CARGO_BIN_EXE_charflex");
    let config = fixtures().join("fixture.conf");
    let out_root = tempfile::tempdir().unwrap();

    let run = || {
        let out = std::process::Command::new(binary)
            .args([
                "--config",
                &config.display().to_string(),
                "--output-dir",
                &out_root.path().display().to_string(),
                "--deterministic",
                "all",
            ])
            .env_remove("CHARFLEX_OUTPUT")
            .output()
            .expect("spawn charflex");
        assert!(
            out.status.success(),
            "pipeline failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let snapshot = || -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
        walk(out_root.path())
            .into_iter()
            .map(|rel| {
                let bytes = std::fs::read(out_root.path().join(&rel)).unwrap();
                (rel, bytes)
            })
            .collect()
    };

    run();
    let first = snapshot();
    run();
    let second = snapshot();

    assert!(!first.is_empty());
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>(),
        "output trees have different shapes"
    );

    let mut compared = 0usize;
    for (relative, a) in &first {
        let b = &second[relative];
        if relative.file_name().map(|n| n == "manifest.json").unwrap_or(false) {
            let canon = |bytes: &[u8]| -> serde_json::Value {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                v["created_unix"] = serde_json::Value::from(0);
                v
            };
            assert_eq!(canon(a), canon(b), "{} differs beyond timestamp", relative.display());
        } else {
            assert_eq!(a, b, "{} is not byte-identical", relative.display());
        }
        compared += 1;
    }
    report(
        7,
        "end-to-end determinism",
        &format!("PASS ({compared} files byte-identical modulo manifest timestamps)"),
    );
}

fn walk(root: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let entry = entry.unwrap();
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    files.sort();
    files
}

/// The norms aggregation path exercised with fixture-shaped records, so
/// criterion 6's join machinery is covered end to end even without the
/// licensed dataset.
#[test]
fn norms_fixture_join_is_well_formed() {
    let records = vec![
        NormRecord { word: "君子".into(), ratings: [5.8, 3.1, 3.2, 3.9, 5.2, 6.1] },
        NormRecord { word: "人民".into(), ratings: [5.2, 3.4, 4.1, 4.5, 5.9, 6.5] },
        NormRecord { word: "食言".into(), ratings: [2.4, 3.8, 2.9, 3.1, 4.4, 5.2] },
    ];
    let norms = aggregate_character_norms(&records);
    assert_eq!(norms.len(), 6);
    assert_eq!(norms[&'君'].support, 1);
}
