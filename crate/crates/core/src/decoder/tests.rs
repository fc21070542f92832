use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lm::train_ngram;

fn vocab(letters: usize) -> Vocabulary {
    Vocabulary::graphemes(letters).unwrap()
}

fn random_grid(frames: usize, symbols: usize, seed: u64, sharpness: f64) -> PosteriorGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = (0..frames * symbols)
        .map(|_| sharpness * rng.random_range(-1.0..1.0))
        .collect();
    PosteriorGrid::from_logits("u", frames, symbols, logits).unwrap()
}

fn one_hot(text: &str, v: &Vocabulary, eps: f64) -> PosteriorGrid {
    let tokens = v.tokenize(text).unwrap();
    // Insert a blank between equal neighbours so the spelling survives collapse.
    let mut path = Vec::new();
    for (i, &t) in tokens.iter().enumerate() {
        if i > 0 && tokens[i - 1] == t {
            path.push(v.blank_index());
        }
        path.push(t);
    }
    let rows: Vec<Vec<f64>> = path
        .iter()
        .map(|&s| {
            let mut r = vec![eps; v.len()];
            r[s] = 1.0 - eps * (v.len() - 1) as f64;
            r
        })
        .collect();
    PosteriorGrid::from_probs("u", &rows).unwrap()
}

/// Sums the probability of every frame-level path by collapsed transcript.
fn brute_force(grid: &PosteriorGrid, blank: usize) -> BTreeMap<Vec<usize>, f64> {
    let (t, v) = (grid.num_frames(), grid.num_symbols());
    let mut totals = BTreeMap::new();
    let mut path = vec![0usize; t];
    loop {
        let mut lp = 0.0;
        for (f, &s) in path.iter().enumerate() {
            lp += grid.log_prob(f, s);
        }
        let mut collapsed = Vec::new();
        let mut prev = usize::MAX;
        for &s in &path {
            if s != prev && s != blank {
                collapsed.push(s);
            }
            prev = s;
        }
        *totals.entry(collapsed).or_insert(0.0) += lp.exp();
        // Odometer increment.
        let mut i = 0;
        while i < t {
            path[i] += 1;
            if path[i] < v {
                break;
            }
            path[i] = 0;
            i += 1;
        }
        if i == t {
            break;
        }
    }
    totals
}

fn brute_best(grid: &PosteriorGrid, v: &Vocabulary) -> (String, f64) {
    let mut best: Option<(String, f64)> = None;
    for (tokens, p) in brute_force(grid, v.blank_index()) {
        let text = v.render(&tokens);
        let lp = p.ln();
        let better = match &best {
            None => true,
            Some((bt, bp)) => lp > *bp || (lp == *bp && text < *bt),
        };
        if better {
            best = Some((text, lp));
        }
    }
    best.unwrap()
}

#[test]
fn one_hot_decodes_exactly_for_any_width() {
    let v = vocab(3);
    let g = one_hot("ab a", &v, 0.0);
    for width in [1, 2, 5, 64] {
        let d = beam_search_decode(&g, None, &DecodeConfig::new(width, 0.0, 0.0), &v).unwrap();
        assert_eq!(d.transcript.rendered(), "ab a");
        assert!(d.am.abs() < 1e-12);
    }
}

#[test]
fn saturated_beam_matches_enumeration() {
    // Three letters plus blank and delimiter would give V=5; use two letters
    // so V=4 as in the reference instance.
    let v = vocab(2);
    for seed in 0..40 {
        let g = random_grid(4, v.len(), seed, 2.0);
        let config = DecodeConfig::new(10_000, 0.0, 0.0).exhaustive();
        let d = beam_search_decode(&g, None, &config, &v).unwrap();
        let (text, lp) = brute_best(&g, &v);
        assert_eq!(d.transcript.rendered(), text, "seed {seed}");
        assert!((d.total - lp).abs() < 1e-9, "seed {seed}: {} vs {lp}", d.total);
        assert!((d.am - lp).abs() < 1e-9);
    }
}

#[test]
fn saturated_beam_matches_enumeration_longer() {
    let v = vocab(1);
    for seed in 0..10 {
        let g = random_grid(7, v.len(), 100 + seed, 3.0);
        let config = DecodeConfig::new(10_000, 0.0, 0.0).exhaustive();
        let d = beam_search_decode(&g, None, &config, &v).unwrap();
        let (text, lp) = brute_best(&g, &v);
        assert_eq!(d.transcript.rendered(), text, "seed {seed}");
        assert!((d.total - lp).abs() < 1e-9);
    }
}

#[test]
fn ties_break_on_rendered_text() {
    let v = vocab(2);
    // Two frames; "a" and "b" have identical mass, blank none.
    let rows = vec![vec![0.0, 0.0, 0.5, 0.5]];
    let g = PosteriorGrid::from_probs("u", &rows).unwrap();
    let d = beam_search_decode(&g, None, &DecodeConfig::new(4, 0.0, 0.0), &v).unwrap();
    assert_eq!(d.transcript.rendered(), "a");
}

fn ambiguous_setup() -> (Vocabulary, PosteriorGrid, NGramModel) {
    let v = vocab(3);
    // Frames spell "a", " ", then b vs c with c slightly ahead.
    let rows = vec![
        vec![0.0, 0.0, 1.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.48, 0.52],
    ];
    let g = PosteriorGrid::from_probs("u", &rows).unwrap();
    let mut text: Vec<Vec<&str>> = vec![vec!["a", "b"]; 20];
    text.push(vec!["a", "c"]);
    let lm = train_ngram(&text, 2, 0.4).unwrap();
    (v, g, lm)
}

#[test]
fn lm_resolves_acoustic_ambiguity() {
    let (v, g, lm) = ambiguous_setup();
    let plain = beam_search_decode(&g, Some(&lm), &DecodeConfig::new(8, 0.0, 0.0), &v).unwrap();
    assert_eq!(plain.transcript.rendered(), "a c");
    let fused = beam_search_decode(&g, Some(&lm), &DecodeConfig::new(8, 2.0, 0.0), &v).unwrap();
    assert_eq!(fused.transcript.rendered(), "a b");
    let words: Vec<String> = fused.transcript.words(&v);
    assert!((fused.lm - lm.score_sentence(&words) * LN_10).abs() < 1e-9);
}

#[test]
fn lm_off_ignores_lm_argument() {
    let (v, _, lm) = ambiguous_setup();
    for seed in 0..10 {
        let g = random_grid(12, v.len(), seed, 3.0);
        let c = DecodeConfig::new(8, 0.0, 0.0);
        let a = beam_search_decode(&g, None, &c, &v).unwrap();
        let b = beam_search_decode(&g, Some(&lm), &c, &v).unwrap();
        assert_eq!(a.transcript, b.transcript);
        assert_eq!(a.total, b.total);
    }
}

#[test]
fn rejects_bad_configs() {
    let v = vocab(2);
    let g = random_grid(3, v.len(), 0, 1.0);
    assert!(beam_search_decode(&g, None, &DecodeConfig::new(0, 0.0, 0.0), &v).is_err());
    assert!(beam_search_decode(&g, None, &DecodeConfig::new(4, 0.5, 0.0), &v).is_err());
    let mut c = DecodeConfig::new(4, 0.0, 0.0);
    c.prune_log_threshold = 0.5;
    assert!(beam_search_decode(&g, None, &c, &v).is_err());
    assert!(beam_search_decode(&g, None, &DecodeConfig::new(4, 0.0, 0.0), &vocab(3)).is_err());
}

#[test]
fn grapheme_length_unit_counts_letters() {
    let v = vocab(3);
    let g = one_hot("ab c", &v, 0.0);
    let mut c = DecodeConfig::new(4, 0.0, 0.5);
    c.length_unit = LengthUnit::Graphemes;
    let d = beam_search_decode(&g, None, &c, &v).unwrap();
    assert_eq!(d.length, 3);
    assert!((d.bonus - 1.5).abs() < 1e-12);
    let d = beam_search_decode(&g, None, &DecodeConfig::new(4, 0.0, 0.5), &v).unwrap();
    assert_eq!(d.length, 2);
}

#[test]
fn tune_singleton_grid() {
    let (v, g, lm) = ambiguous_setup();
    let r = Transcript::parse("a b", &v).unwrap();
    let t = tune_hyperparams(&[g], &[r], &lm, &[0.0], &[0.0], &DecodeConfig::default(), &v).unwrap();
    assert_eq!((t.config.alpha, t.config.beta), (0.0, 0.0));
}

#[test]
fn tune_prefers_lm_when_it_helps_and_is_exhaustive() {
    let (v, g, lm) = ambiguous_setup();
    let r = Transcript::parse("a b", &v).unwrap();
    let grids = vec![g.clone(), g.with_id("u2")];
    let refs = vec![r.clone(), r];
    let alphas = [0.0, 0.5, 1.0, 2.0];
    let betas = [-1.0, 0.0, 1.0];
    let base = DecodeConfig::new(8, 0.0, 0.0);
    let t = tune_hyperparams(&grids, &refs, &lm, &alphas, &betas, &base, &v).unwrap();
    assert!(t.config.alpha > 0.0);
    assert_eq!(t.table.len(), alphas.len() * betas.len());
    for &(a, b, w) in &t.table {
        let c = DecodeConfig { alpha: a, beta: b, ..base };
        let d = decode_all(&grids, Some(&lm), &c, &v).unwrap();
        let pairs: Vec<_> = d.iter().map(|x| &x.transcript).zip(&refs).collect();
        let recomputed = metrics::corpus_wer(&pairs, &v).unwrap().wer;
        assert_eq!(recomputed, w);
        assert!(t.wer <= w);
        if w == t.wer {
            assert!((a, b) >= (t.config.alpha, t.config.beta));
        }
    }
    assert!(tune_hyperparams(&grids, &refs[..1], &lm, &alphas, &betas, &base, &v).is_err());
}

#[test]
fn label_file_round_trip() {
    let (v, g, lm) = ambiguous_setup();
    let d = beam_search_decode(&g, Some(&lm), &DecodeConfig::new(8, 1.0, 0.5), &v).unwrap();
    let labels = vec![
        PseudoLabel::from_decoded("u1", &d).with_provenance(Provenance::Teacher(2)),
        PseudoLabel::from_decoded("u2", &d).with_provenance(Provenance::Stage(1)),
        PseudoLabel::from_decoded("u3", &d),
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.jsonl");
    save_labels(&labels, &v, &path).unwrap();
    assert_eq!(load_labels(&path, &v).unwrap(), labels);
    assert!(matches!(load_labels(&path, &vocab(4)), Err(Error::Format { .. })));
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replace("\"a b\"", "\"a 9\"")).unwrap();
    let err = load_labels(&path, &v).unwrap_err().to_string();
    assert!(err.contains("line 2") && err.contains("u1"), "{err}");
}

fn lm_for_props() -> (Vocabulary, NGramModel) {
    let v = vocab(3);
    let text = vec![
        vec!["ab", "c"],
        vec!["a", "bc", "ab"],
        vec!["c", "c", "a"],
        vec!["ab", "ab"],
    ];
    (v, train_ngram(&text, 2, 0.4).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn score_decomposes_into_components(
        seed in 0u64..10_000,
        frames in 1usize..14,
        alpha in 0.0f64..2.0,
        beta in -2.0f64..2.0,
        width in 1usize..12,
    ) {
        let (v, lm) = lm_for_props();
        let g = random_grid(frames, v.len(), seed, 3.0);
        let c = DecodeConfig::new(width, alpha, beta);
        let d = beam_search_decode(&g, Some(&lm), &c, &v).unwrap();
        let words = d.transcript.words(&v);
        let lm_ln = lm.score_sentence(&words) * LN_10;
        prop_assert!((d.lm - lm_ln).abs() < 1e-6);
        prop_assert_eq!(d.length, words.len());
        let recomposed = d.am + alpha * lm_ln + beta * words.len() as f64;
        prop_assert!((d.total - recomposed).abs() < 1e-6);
        // The acoustic score of a prefix never exceeds its exact marginal.
        let exact = crate::ctc::ctc_loss(&g, &d.transcript, v.blank_index()).map(|l| -l);
        if let Ok(exact) = exact {
            prop_assert!(d.am <= exact + 1e-9);
        }
    }

    #[test]
    fn decoding_is_deterministic(seed in 0u64..10_000, frames in 1usize..20) {
        let (v, lm) = lm_for_props();
        let g = random_grid(frames, v.len(), seed, 2.0);
        let c = DecodeConfig::new(6, 0.7, 0.3);
        let a = beam_search_decode(&g, Some(&lm), &c, &v).unwrap();
        let b = beam_search_decode(&g, Some(&lm), &c, &v).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Prefix beam search is not monotone in the beam width: with a wider beam a
/// competitor can survive early and push the eventual winner's ancestor out.
#[test]
fn wider_beam_can_return_a_lower_score() {
    let (v, lm) = lm_for_props();
    let g = random_grid(4 + 29 % 12, v.len(), 29, 2.5);
    let decode = |w| {
        let c = DecodeConfig::new(w, 0.0, 0.0).exhaustive();
        beam_search_decode(&g, Some(&lm), &c, &v).unwrap().total
    };
    assert!(decode(3) < decode(2));
}

/// Any beam width stays below the exact optimum, and once the beam holds
/// every reachable prefix it attains it.
#[test]
fn scores_are_bounded_by_the_saturated_optimum() {
    let v = vocab(2);
    for seed in 0..30 {
        let g = random_grid(5, v.len(), 500 + seed, 2.5);
        let (_, optimum) = brute_best(&g, &v);
        for w in [1, 2, 3, 5, 8, 13, 21] {
            let c = DecodeConfig::new(w, 0.0, 0.0).exhaustive();
            let d = beam_search_decode(&g, None, &c, &v).unwrap();
            assert!(d.total <= optimum + 1e-9, "seed {seed} w {w}");
        }
        let c = DecodeConfig::new(10_000, 0.0, 0.0).exhaustive();
        let d = beam_search_decode(&g, None, &c, &v).unwrap();
        assert!((d.total - optimum).abs() < 1e-9);
    }
}
