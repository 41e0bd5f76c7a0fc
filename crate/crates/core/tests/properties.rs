use std::collections::HashMap;

use proptest::prelude::*;

use divergelab::corpus::{perturb, tokenize, truncated_len, PerturbOptions, Scheme, Stopwords};
use divergelab::distributions::{histogram, mixture, pushforward, DiscreteDistribution};
use divergelab::divergences::{auc_divergence, divergence_curve, js, kl};
use divergelab::geometry::{read_embeddings, write_embeddings};
use divergelab::metaeval::{pearson, spearman};
use divergelab::probing::{majority_labels, surface_r2_values};
use divergelab::{Corpus, EmbeddingMatrix, PerturbationKind};

const WORDS: [&str; 12] = ["the", "a", "An", "cat", "dog", "of", "runs", "fast", ".", ",", "!", "and"];

fn corpus_strategy() -> impl Strategy<Value = Corpus> {
    prop::collection::vec(prop::collection::vec(0..WORDS.len(), 0..25), 2..8).prop_map(|docs| {
        Corpus::from_texts(
            "d",
            docs.into_iter().map(|d| d.into_iter().map(|i| WORDS[i]).collect::<Vec<_>>().join(" ")),
        )
    })
}

fn dist_strategy(n: usize) -> impl Strategy<Value = DiscreteDistribution> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|mut w| {
        if w.iter().all(|&x| x == 0.0) {
            w[0] = 1.0;
        }
        DiscreteDistribution::from_weights(&w).unwrap()
    })
}

fn pair_strategy() -> impl Strategy<Value = (DiscreteDistribution, DiscreteDistribution)> {
    (2usize..16).prop_flat_map(|n| (dist_strategy(n), dist_strategy(n)))
}

fn counts(tokens: impl IntoIterator<Item = String>) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t).or_insert(0) += 1;
    }
    m
}

fn toks(c: &Corpus) -> Vec<Vec<String>> {
    c.tokenize(Scheme::UnicodeWord).into_iter().map(|d| d.tokens).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tokenization_is_idempotent(s in "\\PC{0,60}") {
        let t = tokenize(&s, Scheme::UnicodeWord);
        prop_assert_eq!(tokenize(&t.join(" "), Scheme::UnicodeWord), t);
    }

    #[test]
    fn permute_words_keeps_multisets(c in corpus_strategy(), seed in any::<u64>()) {
        let opts = PerturbOptions::default();
        let p = perturb(&c, PerturbationKind::PermuteWords, seed, &opts).unwrap();
        for (a, b) in toks(&c).into_iter().zip(toks(&p)) {
            prop_assert_eq!(counts(a), counts(b));
        }
        prop_assert_eq!(perturb(&c, PerturbationKind::PermuteWords, seed, &opts).unwrap(), p);
        prop_assert_eq!(c.ids(), perturb(&c, PerturbationKind::PermuteWords, seed, &opts).unwrap().ids());
    }

    #[test]
    fn removals_leave_no_targets(c in corpus_strategy()) {
        let opts = PerturbOptions::default();
        let sw = Stopwords::english();
        let arts = perturb(&c, PerturbationKind::RemoveArticles, 0, &opts).unwrap();
        for (orig, d) in toks(&c).into_iter().zip(toks(&arts)) {
            prop_assert!(d.iter().all(|t| !["a", "an", "the"].contains(&t.to_lowercase().as_str())));
            let kept: Vec<String> = orig.into_iter().filter(|t| !["a", "an", "the"].contains(&t.to_lowercase().as_str())).collect();
            prop_assert_eq!(kept, d);
        }
        let stops = perturb(&c, PerturbationKind::RemoveStopwords, 0, &opts).unwrap();
        for d in toks(&stops) {
            prop_assert!(d.iter().all(|t| !sw.contains(t)));
        }
    }

    #[test]
    fn truncation_keeps_a_third_prefix(c in corpus_strategy()) {
        let p = perturb(&c, PerturbationKind::TruncateThird, 0, &PerturbOptions::default()).unwrap();
        for (a, b) in toks(&c).into_iter().zip(toks(&p)) {
            prop_assert_eq!(b.len(), truncated_len(a.len()));
            prop_assert_eq!(&a[..b.len()], &b[..]);
        }
    }

    #[test]
    fn swap_preserves_corpus_tokens(c in corpus_strategy(), seed in any::<u64>()) {
        let p = perturb(&c, PerturbationKind::SwapFirstHalves, seed, &PerturbOptions::default()).unwrap();
        prop_assert_eq!(counts(toks(&c).into_iter().flatten()), counts(toks(&p).into_iter().flatten()));
    }

    #[test]
    fn measures_are_bounded_and_symmetric((p, q) in pair_strategy()) {
        let k = kl(&p, &q).unwrap();
        prop_assert!(k >= 0.0);
        let j = js(&p, &q).unwrap();
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&j));
        prop_assert!((j - js(&q, &p).unwrap()).abs() < 1e-12);
        let a = auc_divergence(&divergence_curve(&p, &q, 1.0, 19).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let b = auc_divergence(&divergence_curve(&q, &p, 1.0, 19).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn mixture_is_a_distribution((p, q) in pair_strategy(), lam in 0.0f64..=1.0) {
        let m = mixture(&p, &q, lam).unwrap();
        prop_assert!((m.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(kl(&p, &m).unwrap() <= kl(&p, &q).unwrap() + 1e-9);
    }

    #[test]
    fn coarsening_never_increases_kl((p, q) in pair_strategy(), k in 1usize..6, salt in any::<u64>()) {
        let map: Vec<usize> = (0..p.len()).map(|i| ((i as u64).wrapping_mul(salt | 1) >> 7) as usize % k).collect();
        let pc = pushforward(&p, &map, k).unwrap();
        let qc = pushforward(&q, &map, k).unwrap();
        prop_assert!(kl(&pc, &qc).unwrap() <= kl(&p, &q).unwrap() + 1e-9);
    }

    #[test]
    fn smoothed_histograms_are_positive(assign in prop::collection::vec(0usize..10, 1..50), alpha in 0.01f64..3.0) {
        let h = histogram(&assign, 10, alpha).unwrap();
        prop_assert!(h.probs().iter().all(|&x| x > 0.0));
        prop_assert!((h.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn majority_labels_follow_relabeling(
        assign in prop::collection::vec(0usize..5, 1..40),
        label_ids in prop::collection::vec(0usize..3, 40),
        perm in Just(vec![3usize, 0, 4, 1, 2]),
    ) {
        let labels: Vec<String> = label_ids[..assign.len()].iter().map(|i| format!("L{i}")).collect();
        let base = majority_labels(&assign, &labels, 5).unwrap();
        let moved: Vec<usize> = assign.iter().map(|&a| perm[a]).collect();
        let relabeled = majority_labels(&moved, &labels, 5).unwrap();
        for c in 0..5 {
            prop_assert_eq!(&base[c], &relabeled[perm[c]]);
        }
    }

    #[test]
    fn surface_r2_is_affine_free(
        fit in prop::collection::vec((0usize..4, -5.0f64..5.0), 4..40),
        eval in prop::collection::vec((0usize..4, -5.0f64..5.0), 4..40),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        let (fa, fv): (Vec<usize>, Vec<f64>) = fit.into_iter().unzip();
        let (ea, ev): (Vec<usize>, Vec<f64>) = eval.into_iter().unzip();
        let r = surface_r2_values(&fa, &fv, &ea, &ev, 4).unwrap();
        prop_assert!(r <= 1.0 + 1e-12);
        let t = |v: &[f64]| v.iter().map(|x| a * x + b).collect::<Vec<f64>>();
        let r2 = surface_r2_values(&fa, &t(&fv), &ea, &t(&ev), 4).unwrap();
        prop_assert!((r - r2).abs() < 1e-9, "{} vs {}", r, r2);
    }

    #[test]
    fn spearman_ignores_monotone_maps(x in prop::collection::vec(-10.0f64..10.0, 3..30), y in prop::collection::vec(-10.0f64..10.0, 30)) {
        let y = &y[..x.len()];
        prop_assume!(x.iter().any(|&v| v != x[0]) && y.iter().any(|&v| v != y[0]));
        let s = spearman(&x, y).unwrap();
        let ex: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let cube: Vec<f64> = y.iter().map(|v| v * v * v + v).collect();
        prop_assert!((spearman(&ex, &cube).unwrap() - s).abs() < 1e-12);
        let p = pearson(&x, y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&p));
    }

    #[test]
    fn emb1_round_trip(rows in prop::collection::vec(prop::collection::vec(-100.0f32..100.0, 5), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        let data: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let emb = EmbeddingMatrix::from_rows(&data, None).unwrap();
        write_embeddings(&emb, &path).unwrap();
        let back = read_embeddings(&path).unwrap();
        prop_assert_eq!(back, emb);
    }
}
