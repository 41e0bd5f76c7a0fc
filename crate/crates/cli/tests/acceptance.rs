//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

// Negated comparisons keep NaN on the failing side.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use divergelab::corpus::{perturb, tokenize, Document, PerturbOptions, Scheme};
use divergelab::distributions::{mixture, pushforward, DiscreteDistribution};
use divergelab::divergences::{all_measures, auc_divergence, backward_kl, divergence_curve, kl, lambda_grid};
use divergelab::estimators::{cluster_suite, string_plugin_suite};
use divergelab::geometry::{fit_kmeans, fit_pca, hash_embed_corpus, ClusterConfig, KMeansConfig};
use divergelab::metaeval::{metric_quality, pearson, quality_report, spearman, CorrelationKind, InfinitePolicy, JudgmentTable};
use divergelab::ngram::{train_kn, NGramModel};
use divergelab::probing::{probe_accuracy, surface_r2, SurfaceFeature};
use divergelab::seed::rng;
use divergelab::{
    ClusterModel, ClusterSuiteConfig, Corpus, EmbeddingMatrix, KnConfig, PerturbationKind, Stopwords, StringSuiteConfig,
    TokenizedDoc,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e<T>(r: divergelab::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_dist(r: &mut impl Rng, n: usize, zero_prob: f64) -> DiscreteDistribution {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if r.random::<f64>() < zero_prob { 0.0 } else { r.random::<f64>() + 1e-3 })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        let i = r.random_range(0..n);
        w[i] = 1.0;
    }
    DiscreteDistribution::from_weights(&w).unwrap()
}

/// KL straight from the definition, with the support rule spelled out.
fn kl_oracle(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b == 0.0 {
                return f64::INFINITY;
            }
            s += a * (a / b).ln();
        }
    }
    s
}

// ---------------------------------------------------------------------------

fn data_processing_inequality() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut infinite = 0;
    for trial in 0..1000 {
        let w = r.random_range(2..=64);
        let k = r.random_range(1..=8usize.min(w));
        let zeros = if trial % 10 == 0 { 0.1 } else { 0.0 };
        let p = random_dist(&mut r, w, zeros);
        let q = random_dist(&mut r, w, zeros);
        let map: Vec<usize> = (0..w).map(|_| r.random_range(0..k)).collect();
        // alpha = 0: the coarse distributions are exact pushforwards
        let pc = e(pushforward(&p, &map, k))?;
        let qc = e(pushforward(&q, &map, k))?;
        let fine = e(kl(&p, &q))?;
        let coarse = e(kl(&pc, &qc))?;
        if fine.is_infinite() {
            infinite += 1;
        }
        ensure!(coarse <= fine + 1e-9, "trial {trial}: kl coarse {coarse} > fine {fine}");
        for lam in lambda_grid(9) {
            let rw = e(mixture(&p, &q, lam))?;
            let rc = e(mixture(&pc, &qc, lam))?;
            for (a, ac, side) in [(&p, &pc, "p"), (&q, &qc, "q")] {
                let f = e(kl(a, &rw))?;
                let c = e(kl(ac, &rc))?;
                ensure!(c <= f + 1e-9, "trial {trial}, lambda {lam}, side {side}: {c} > {f}");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2}s");
    Ok(format!("1000 triples ({infinite} with infinite fine KL), per-lambda on L=9, {secs:.2}s"))
}

fn divergence_identities() -> Outcome {
    let mut r = rng(102);
    let ln2 = std::f64::consts::LN_2;
    for trial in 0..200 {
        let n = r.random_range(2..=20);
        let p = random_dist(&mut r, n, 0.2);
        let q = random_dist(&mut r, n, 0.2);
        let (m, _) = e(all_measures(&p, &q, 1.0, 99))?;
        let (m_swap, _) = e(all_measures(&q, &p, 1.0, 99))?;
        ensure!(m.forward >= 0.0 && m.js >= 0.0 && m.auc >= 0.0, "trial {trial}: negative measure {m:?}");
        ensure!(m.js <= ln2 + 1e-12, "trial {trial}: js {} > ln 2", m.js);
        ensure!((m.js - m_swap.js).abs() <= 1e-9, "trial {trial}: js asymmetric");
        ensure!((m.auc - m_swap.auc).abs() <= 1e-9, "trial {trial}: auc asymmetric {} vs {}", m.auc, m_swap.auc);
        let violates = p.probs().iter().zip(q.probs()).any(|(&a, &b)| a > 0.0 && b == 0.0);
        ensure!(m.forward.is_infinite() == violates, "trial {trial}: inf sentinel {} but violation {violates}", m.forward);
        if !violates {
            let want = kl_oracle(p.probs(), q.probs());
            ensure!((m.forward - want).abs() <= 1e-9 * want.max(1.0), "trial {trial}: kl {} vs {want}", m.forward);
        }
        ensure!(m.backward == e(kl(&q, &p))?, "trial {trial}: backward is not kl(q, p)");
        let (f, _) = e(all_measures(&p, &p, 1.0, 99))?;
        ensure!(
            f.forward.abs() <= 1e-9 && f.backward.abs() <= 1e-9 && (f.exp - 1.0).abs() <= 1e-9 && f.js.abs() <= 1e-9 && f.auc.abs() <= 1e-9,
            "trial {trial}: floor violated on p = q: {f:?}"
        );
    }
    let a = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
    let b = DiscreteDistribution::new(vec![0.9, 0.1]).unwrap();
    let v = e(kl(&a, &b))?;
    ensure!((v - (5.0f64 / 3.0).ln()).abs() <= 1e-12, "kl closed form {v}");
    let l = 99;
    let x = DiscreteDistribution::new(vec![1.0, 0.0, 0.0]).unwrap();
    let y = DiscreteDistribution::new(vec![0.0, 0.5, 0.5]).unwrap();
    let auc = e(auc_divergence(&e(divergence_curve(&x, &y, 1.0, l))?))?;
    ensure!((auc - 0.5).abs() <= 2.0 / l as f64, "disjoint auc {auc}");
    ensure!(e(backward_kl(&x, &y))?.is_infinite(), "disjoint backward should be inf");
    Ok(format!("200 random pairs; ln(5/3) to {:.1e}; disjoint auc {auc:.6}", (v - (5.0f64 / 3.0).ln()).abs()))
}

fn docs_of(texts: &[String], scheme: Scheme) -> Vec<TokenizedDoc> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| TokenizedDoc::new(format!("d{i}"), tokenize(t, scheme), scheme))
        .collect()
}

fn kneser_ney() -> Outcome {
    let mut r = rng(103);
    let alphabet = ["a", "b", "c", "d", "e", "f"];
    let texts: Vec<String> = (0..40)
        .map(|_| {
            let n = r.random_range(1..12);
            (0..n).map(|_| alphabet[r.random_range(0..alphabet.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect();
    let docs = docs_of(&texts, Scheme::Whitespace);
    let mut worst: f64 = 0.0;
    for order in [2, 3, 5] {
        let m = e(train_kn(&docs, KnConfig::with_order(order)))?;
        let ids: Vec<u32> = m.predictable_ids().collect();
        for _ in 0..100 {
            let len = r.random_range(0..order + 2);
            let ctx: Vec<u32> = (0..len).map(|_| r.random_range(0..m.vocab().len() as u32)).collect();
            let total: f64 = ids.iter().map(|&t| m.prob_ids(&ctx, t)).sum();
            worst = worst.max((total - 1.0).abs());
            ensure!((total - 1.0).abs() <= 1e-6, "order {order}, context {ctx:?}: sum {total}");
        }
        let bytes = m.to_bytes();
        let back = e(NGramModel::from_bytes(&bytes))?;
        ensure!(back.to_bytes() == bytes, "order {order}: bytes differ after round trip");
        for d in &docs {
            ensure!(
                back.log_prob(d).to_bits() == m.log_prob(d).to_bits(),
                "order {order}: log_prob differs after round trip"
            );
        }
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("m.kng");
        e(m.save(&path))?;
        ensure!(e(NGramModel::load(&path))?.to_bytes() == bytes, "order {order}: file round trip differs");
    }
    let bare = KnConfig {
        order: 2,
        discount: 0.75,
        unigram_discount: 0.0,
        boundaries: false,
    };
    let m = e(train_kn(&docs_of(&["the cat the dog".to_string()], Scheme::Whitespace), bare))?;
    let p = m.prob(&["the"], "dog");
    ensure!((p - 0.375).abs() <= 1e-12, "P(dog|the) = {p}");
    Ok(format!("300 contexts, max |sum - 1| = {worst:.1e}; P(dog|the) = {p}; round trip bit-exact"))
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration over a toy string space

const BOS: &str = "<s>";
const EOS: &str = "</s>";

/// Brute-force interpolated Kneser-Ney over string n-grams.
struct BruteKn {
    n: usize,
    d: f64,
    d1: f64,
    v: usize,
    /// tables[k-1]: order-k counts (raw at the top, continuation below)
    tables: Vec<HashMap<Vec<String>, f64>>,
}

impl BruteKn {
    fn train(docs: &[Vec<String>], n: usize, d: f64, d1: f64, vocab_size: usize) -> Self {
        let mut grams: Vec<HashMap<Vec<String>, f64>> = vec![HashMap::new(); n];
        for doc in docs {
            let mut seq: Vec<String> = vec![BOS.to_string(); n - 1];
            seq.extend(doc.iter().cloned());
            seq.push(EOS.to_string());
            for i in n - 1..seq.len() {
                for k in 1..=n {
                    *grams[k - 1].entry(seq[i + 1 - k..=i].to_vec()).or_insert(0.0) += 1.0;
                }
            }
        }
        let mut tables = vec![HashMap::new(); n];
        for k in 1..n {
            let mut t: HashMap<Vec<String>, f64> = HashMap::new();
            for g in grams[k].keys() {
                *t.entry(g[1..].to_vec()).or_insert(0.0) += 1.0;
            }
            tables[k - 1] = t;
        }
        tables[n - 1] = grams[n - 1].clone();
        BruteKn { n, d, d1, v: vocab_size, tables }
    }

    fn prob(&self, hist: &[String], w: &str) -> f64 {
        let mut p = 1.0 / self.v as f64;
        for k in 1..=self.n {
            let h = &hist[hist.len() + 1 - k..];
            let t = &self.tables[k - 1];
            let (mut total, mut distinct, mut c) = (0.0, 0.0, 0.0);
            for (g, &cnt) in t {
                if &g[..k - 1] == h {
                    total += cnt;
                    distinct += 1.0;
                    if g[k - 1] == w {
                        c = cnt;
                    }
                }
            }
            if total == 0.0 {
                continue;
            }
            let d = if k == 1 { self.d1 } else { self.d };
            p = (c - d).max(0.0) / total + d * distinct / total * p;
        }
        p
    }

    fn log_prob(&self, doc: &[String]) -> f64 {
        let mut seq: Vec<String> = vec![BOS.to_string(); self.n - 1];
        seq.extend(doc.iter().cloned());
        seq.push(EOS.to_string());
        (self.n - 1..seq.len()).map(|i| self.prob(&seq[i + 1 - self.n..i], &seq[i]).ln()).sum()
    }
}

fn enumerable_oracle() -> Outcome {
    let alphabet = ["a", "b", "c"];
    let mut space: Vec<Vec<String>> = vec![vec![]];
    for x in alphabet {
        space.push(vec![x.to_string()]);
    }
    for x in alphabet {
        for y in alphabet {
            space.push(vec![x.to_string(), y.to_string()]);
        }
    }
    assert_eq!(space.len(), 13);
    let mut r = rng(104);
    let pw: Vec<f64> = (0..13).map(|_| r.random::<f64>() + 0.05).collect();
    let qw: Vec<f64> = (0..13).map(|i| if i % 4 == 0 { 0.02 } else { r.random::<f64>() + 0.05 }).collect();
    let draw = |r: &mut rand_chacha::ChaCha8Rng, w: &[f64], n: usize| -> Vec<usize> {
        let dist = rand::distr::weighted::WeightedIndex::new(w).unwrap();
        (0..n).map(|_| r.sample(&dist)).collect()
    };
    let ref_idx = draw(&mut r, &pw, 400);
    let gen_idx = draw(&mut r, &qw, 300);
    let corpus = |idx: &[usize], prefix: &str| {
        Corpus::new(
            idx.iter()
                .enumerate()
                .map(|(i, &s)| Document { id: format!("{prefix}{i}"), text: space[s].join(" ") })
                .collect(),
        )
        .unwrap()
    };
    let (rc, gc) = (corpus(&ref_idx, "r"), corpus(&gen_idx, "g"));
    let kn = KnConfig { order: 3, discount: 0.75, unigram_discount: 0.75, boundaries: true };
    let cfg = StringSuiteConfig { kn, s: 0.2, grid: 99, scheme: Scheme::Whitespace };
    let report = e(string_plugin_suite(&rc, &gc, &cfg))?;

    let ref_docs: Vec<Vec<String>> = ref_idx.iter().map(|&i| space[i].clone()).collect();
    let gen_docs: Vec<Vec<String>> = gen_idx.iter().map(|&i| space[i].clone()).collect();
    let vocab: BTreeSet<&String> = ref_docs.iter().chain(&gen_docs).flatten().collect();
    let v = vocab.len() + 2;
    let p_hat = BruteKn::train(&ref_docs, 3, 0.75, 0.75, v);
    let q_hat = BruteKn::train(&gen_docs, 3, 0.75, 0.75, v);
    // empirical weight of every string of the toy space in each sample
    let freq = |idx: &[usize]| -> Vec<f64> {
        let mut f = vec![0.0; 13];
        for &i in idx {
            f[i] += 1.0 / idx.len() as f64;
        }
        f
    };
    let (fp, fq) = (freq(&ref_idx), freq(&gen_idx));
    let lp: Vec<f64> = space.iter().map(|x| p_hat.log_prob(x)).collect();
    let lq: Vec<f64> = space.iter().map(|x| q_hat.log_prob(x)).collect();
    let mass_p: f64 = lp.iter().map(|l| l.exp()).sum();
    ensure!(mass_p <= 1.0 + 1e-12, "p_hat puts {mass_p} on the toy space");
    let kl_to_mix = |f: &[f64], own: &[f64], lam: f64| -> f64 {
        (0..13)
            .map(|i| {
                let m = lam * lp[i].exp() + (1.0 - lam) * lq[i].exp();
                f[i] * (own[i] - m.ln())
            })
            .sum()
    };
    let forward: f64 = (0..13).map(|i| fp[i] * (lp[i] - lq[i])).sum();
    let backward: f64 = (0..13).map(|i| fq[i] * (lq[i] - lp[i])).sum();
    let jsv = 0.5 * kl_to_mix(&fp, &lp, 0.5) + 0.5 * kl_to_mix(&fq, &lq, 0.5);
    // frontier on a dense grid, integrated exactly by trapezoids
    let dense = 20_000;
    let mut pts = vec![(0.0, 1.0), (1.0, 0.0)];
    for i in 1..dense {
        let lam = i as f64 / dense as f64;
        let a = kl_to_mix(&fp, &lp, lam).max(0.0);
        let b = kl_to_mix(&fq, &lq, lam).max(0.0);
        pts.push(((-0.2 * a).exp(), (-0.2 * b).exp()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let area: f64 = pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
    let auc = 1.0 - area;

    let got = |name: &str| report.value(name).unwrap();
    let mut details = Vec::new();
    for (name, want, tol) in [("forward", forward, 1e-6), ("backward", backward, 1e-6), ("js", jsv, 1e-6), ("auc", auc, 0.02)] {
        let g = got(name);
        ensure!((g - want).abs() <= tol, "{name}: suite {g} vs enumeration {want}");
        details.push(format!("{name} {:.1e}", (g - want).abs()));
    }
    Ok(format!("13-string space, |error|: {}", details.join(", ")))
}

// ---------------------------------------------------------------------------

fn gaussian(r: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn blobs(r: &mut impl Rng, n: usize, dim: usize, sep: f64) -> (EmbeddingMatrix, Vec<usize>) {
    let centers: Vec<Vec<f64>> = (0..4)
        .map(|b| (0..dim).map(|j| if j == b % dim { sep } else { 0.0 } * if b >= dim { -1.0 } else { 1.0 }).collect())
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let b = i % 4;
        rows.push(centers[b].iter().map(|c| c + gaussian(r)).collect::<Vec<f64>>());
        labels.push(b);
    }
    (EmbeddingMatrix::from_rows(&rows, None).unwrap(), labels)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += a[i][j] * a[i][j];
                }
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta == 0.0 { 1.0 } else { theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt()) };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (a[k][p], a[k][q]);
                    a[k][p] = c * kp - s * kq;
                    a[k][q] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (a[p][k], a[q][k]);
                    a[p][k] = c * pk - s * qk;
                    a[q][k] = s * pk + c * qk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn geometry() -> Outcome {
    let mut r = rng(105);
    // objective monotonicity
    let mut iters = 0;
    for trial in 0..10 {
        let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..5).map(|_| gaussian(&mut r)).collect()).collect();
        let emb = EmbeddingMatrix::from_rows(&rows, None).unwrap();
        let km = e(fit_kmeans(&emb, &KMeansConfig { k: 3 + trial, seed: trial as u64, max_iter: 200, tolerance: 0.0 }))?;
        iters += km.objective_history.len();
        for w in km.objective_history.windows(2) {
            ensure!(w[1] <= w[0] * (1.0 + 1e-12), "trial {trial}: objective rose {} -> {}", w[0], w[1]);
        }
    }
    // blob recovery
    let (emb, truth) = blobs(&mut r, 1000, 4, 20.0);
    for seed in 0..5 {
        let km = e(fit_kmeans(&emb, &KMeansConfig { k: 4, seed, ..Default::default() }))?;
        let got = e(km.assign_batch(&emb))?;
        let mut map: HashMap<usize, usize> = HashMap::new();
        for (&t, &g) in truth.iter().zip(&got) {
            let m = *map.entry(t).or_insert(g);
            ensure!(m == g, "seed {seed}: blob {t} split across clusters");
        }
        let distinct: BTreeSet<usize> = map.values().copied().collect();
        ensure!(distinct.len() == 4, "seed {seed}: blobs merged");
    }
    // PCA against the covariance eigendecomposition
    let mut checked = Vec::new();
    for trial in 0..5 {
        let (n, d) = (150, 10);
        let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| gaussian(&mut r)).collect()).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..d).map(|j| gaussian(&mut r) / (1.0 + j as f64)).collect();
                (0..d).map(|a| (0..d).map(|b| mix[a][b] * z[b]).sum()).collect()
            })
            .collect();
        let emb = EmbeddingMatrix::from_rows(&rows, None).unwrap();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let cov: Vec<Vec<f64>> = (0..d)
            .map(|a| (0..d).map(|b| rows.iter().map(|x| (x[a] - mean[a]) * (x[b] - mean[b])).sum::<f64>() / (n - 1) as f64).collect())
            .collect();
        let ev = jacobi_eigenvalues(cov);
        let total: f64 = ev.iter().sum();
        let ratios: Vec<f64> = ev.iter().map(|v| v / total).collect();
        let mut cum = 0.0;
        let k_min = ratios.iter().position(|x| {
            cum += x;
            cum >= 0.9 - 1e-12
        });
        let k_min = k_min.unwrap() + 1;
        let basis = e(fit_pca(&emb, 0.9))?;
        ensure!(basis.k() == k_min, "trial {trial}: k = {} but minimal k is {k_min}", basis.k());
        let kept: f64 = basis.explained_variance_ratio.iter().sum();
        ensure!(kept >= 0.9 - 1e-12, "trial {trial}: kept only {kept}");
        for (i, (a, b)) in basis.explained_variance_ratio.iter().zip(&ratios).enumerate() {
            ensure!((a - b).abs() <= 1e-8, "trial {trial}: ratio {i} {a} vs oracle {b}");
        }
        checked.push(k_min);
    }
    Ok(format!("{iters} monotone k-means steps; 4 blobs recovered for 5 seeds; PCA k = {checked:?} match oracle"))
}

// ---------------------------------------------------------------------------

const PREPOSITIONS: [&str; 6] = ["in", "on", "with", "by", "for", "to"];

/// Topic documents built from a few sentence templates, so that word order
/// carries information. Content words are drawn per topic.
fn topic_corpus(seed: u64, n_docs: usize) -> Corpus {
    let mut r = rng(seed);
    let topics = 8;
    let texts: Vec<String> = (0..n_docs)
        .map(|_| {
            let t = r.random_range(0..topics);
            let word = |r: &mut rand_chacha::ChaCha8Rng, pos: &str, n: usize| {
                let tt = if r.random::<f64>() < 0.1 { (t + 1) % topics } else { t };
                format!("{pos}{tt}x{}", r.random_range(0..n))
            };
            let sentences = r.random_range(3..7);
            let mut out: Vec<String> = Vec::new();
            for _ in 0..sentences {
                let det = if r.random::<bool>() { "the" } else { "a" };
                let prep = PREPOSITIONS[r.random_range(0..PREPOSITIONS.len())];
                let s: Vec<String> = match r.random_range(0..4) {
                    0 => vec![det.into(), word(&mut r, "adj", 8), word(&mut r, "n", 15), word(&mut r, "v", 8), prep.into(), "the".into(), word(&mut r, "n", 15)],
                    1 => vec![det.into(), word(&mut r, "n", 15), word(&mut r, "v", 8), "a".into(), word(&mut r, "adj", 8), word(&mut r, "n", 15)],
                    2 => vec!["the".into(), word(&mut r, "n", 15), "and".into(), "the".into(), word(&mut r, "n", 15), word(&mut r, "v", 8), "with".into(), det.into(), word(&mut r, "n", 15)],
                    _ => vec!["it".into(), "was".into(), det.into(), word(&mut r, "adj", 8), word(&mut r, "n", 15), "of".into(), "the".into(), word(&mut r, "n", 15)],
                };
                out.extend(s);
                out.push(".".to_string());
            }
            out.join(" ")
        })
        .collect();
    Corpus::from_texts("doc", texts)
}

fn perturbation_ordering() -> Outcome {
    let start = Instant::now();
    let kinds = [
        PerturbationKind::PermuteWords,
        PerturbationKind::RemoveStopwords,
        PerturbationKind::SwapFirstHalves,
        PerturbationKind::TruncateThird,
    ];
    let opts = PerturbOptions::default();
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let corpus = topic_corpus(1000 + seed, 2000);
        let (reference, comparison) = {
            let docs = corpus.docs();
            (Corpus::new(docs[..1000].to_vec()).unwrap(), Corpus::new(docs[1000..].to_vec()).unwrap())
        };
        let embed = |c: &Corpus| hash_embed_corpus(&c.tokenize(Scheme::UnicodeWord), 128, 7);
        let re = e(embed(&reference))?;
        let cfg = ClusterSuiteConfig { k: 50, seed, ..Default::default() };
        let js_of = |c: &Corpus| -> Result<f64, String> {
            let report = e(cluster_suite(&re, &e(embed(c))?, &cfg))?;
            Ok(report.value("js").unwrap())
        };
        let base = js_of(&comparison)?;
        let mut row = vec![format!("seed {seed}: none {base:.4}")];
        for kind in kinds {
            let v = js_of(&e(perturb(&comparison, kind, seed, &opts))?)?;
            ensure!(base < v, "seed {seed}: unmodified js {base} not below {kind} js {v}");
            row.push(format!("{kind} {v:.4}"));
        }
        lines.push(row.join(" "));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("{} ({secs:.1}s)", lines.join("; ")))
}

// ---------------------------------------------------------------------------

fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let mx = sx / n;
    let my = sy / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / (n - 1.0);
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum::<f64>() / (n - 1.0);
    cov / (vx.sqrt() * vy.sqrt())
}

/// Rank table: 1 + (#smaller) + (#ties - 1)/2.
fn rank_oracle(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|a| {
            let less = x.iter().filter(|b| *b < a).count() as f64;
            let eq = x.iter().filter(|b| *b == a).count() as f64;
            1.0 + less + (eq - 1.0) / 2.0
        })
        .collect()
}

fn meta_evaluation() -> Outcome {
    let mut r = rng(106);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let n = r.random_range(3..60);
        let tie = trial % 2 == 0;
        let x: Vec<f64> = (0..n).map(|_| if tie { (r.random::<f64>() * 5.0).floor() } else { gaussian(&mut r) }).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + gaussian(&mut r)).collect();
        if x.iter().all(|&v| v == x[0]) {
            continue;
        }
        let p = e(pearson(&x, &y))?;
        let po = pearson_oracle(&x, &y);
        worst = worst.max((p - po).abs());
        ensure!((p - po).abs() <= 1e-12, "trial {trial}: pearson {p} vs {po}");
        let s = e(spearman(&x, &y))?;
        let so = pearson_oracle(&rank_oracle(&x), &rank_oracle(&y));
        worst = worst.max((s - so).abs());
        ensure!((s - so).abs() <= 1e-12, "trial {trial}: spearman {s} vs {so}");
        for kind in [CorrelationKind::Pearson, CorrelationKind::Spearman] {
            let q = e(metric_quality(&x, &y, kind))?;
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            ensure!((e(metric_quality(&x, &neg, kind))? - q).abs() <= 1e-12, "trial {trial}: |corr| not sign-free");
            let (a, b) = (r.random_range(0.1..10.0) * if r.random::<bool>() { 1.0 } else { -1.0 }, r.random_range(-50.0..50.0));
            let aff: Vec<f64> = y.iter().map(|v| a * v + b).collect();
            ensure!((e(metric_quality(&x, &aff, kind))? - q).abs() <= 1e-12, "trial {trial}: quality not affine invariant");
        }
        let (a, b) = (r.random_range(0.1..10.0), r.random_range(-50.0..50.0));
        let aff: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        ensure!((e(pearson(&aff, &y))? - p).abs() <= 1e-12, "trial {trial}: pearson not affine invariant");
        let flipped: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        ensure!((e(pearson(&flipped, &y))? + p).abs() <= 1e-12, "trial {trial}: pearson sign did not flip");
    }
    // infinite rows
    let human = [1.0, 2.5, 3.0, 4.5, 5.0, 6.0];
    let metric = [0.2, f64::INFINITY, 0.5, 0.9, f64::INFINITY, 1.4];
    let mut csv = String::from("system_id,human_score,forward,js\n");
    for i in 0..6 {
        let m = if metric[i].is_infinite() { "inf".to_string() } else { metric[i].to_string() };
        csv.push_str(&format!("s{i},{},{m},{}\n", human[i], 0.1 * i as f64));
    }
    let table = e(JudgmentTable::from_csv_reader(csv.as_bytes(), InfinitePolicy::Exclude))?;
    let report = quality_report(&table);
    let fwd = &report.metrics[0];
    ensure!(fwd.excluded_infinite == 2 && fwd.n == 4, "excluded {} of n {}", fwd.excluded_infinite, fwd.n);
    let keep: Vec<usize> = (0..6).filter(|&i| metric[i].is_finite()).collect();
    let h: Vec<f64> = keep.iter().map(|&i| human[i]).collect();
    let m: Vec<f64> = keep.iter().map(|&i| metric[i]).collect();
    let want = pearson_oracle(&h, &m).abs();
    ensure!((fwd.quality_pearson.unwrap() - want).abs() <= 1e-12, "quality on finite rows");
    ensure!(report.metrics[1].excluded_infinite == 0, "js column lost rows");
    ensure!(
        JudgmentTable::from_csv_reader(csv.as_bytes(), InfinitePolicy::Reject).is_err(),
        "strict policy accepted an infinite value"
    );
    Ok(format!("100 vectors, max deviation {worst:.1e}; 2 infinite rows excluded and counted"))
}

// ---------------------------------------------------------------------------

fn probing() -> Outcome {
    let mut r = rng(107);
    let names = ["alpha", "beta", "gamma", "delta"];
    let (train, train_blob) = blobs(&mut r, 400, 4, 20.0);
    let (test, test_blob) = blobs(&mut r, 200, 4, 20.0);
    // skewed random labels for the single-cluster case
    let rand_label = |r: &mut rand_chacha::ChaCha8Rng| names[if r.random::<f64>() < 0.45 { 0 } else { r.random_range(1..4) }].to_string();
    let train_rand: Vec<String> = (0..400).map(|_| rand_label(&mut r)).collect();
    let test_rand: Vec<String> = (0..200).map(|_| rand_label(&mut r)).collect();
    let cc = |k: usize, seed: u64| ClusterConfig { kmeans: KMeansConfig { k, seed, ..Default::default() }, ..Default::default() };
    let one = e(ClusterModel::fit(&train, &cc(1, 0)))?;
    let res = e(probe_accuracy(&train, &train_rand, &test, &test_rand, &one))?;
    ensure!(res.accuracy == res.baseline, "K=1 accuracy {} vs baseline {}", res.accuracy, res.baseline);

    let train_labels: Vec<String> = train_blob.iter().map(|&b| names[b].to_string()).collect();
    let test_labels: Vec<String> = test_blob.iter().map(|&b| names[b].to_string()).collect();
    let four = e(ClusterModel::fit(&train, &cc(4, 3)))?;
    let sep = e(probe_accuracy(&train, &train_labels, &test, &test_labels, &four))?;
    ensure!(sep.accuracy == 1.0, "separable accuracy {}", sep.accuracy);

    // surface features: stopword share fixed per blob, then constant everywhere
    let sw = Stopwords::english();
    let doc_for = |i: usize, stop: usize| {
        let mut toks: Vec<String> = (0..stop).map(|_| "the".to_string()).collect();
        toks.extend((stop..4).map(|j| format!("tok{j}")));
        TokenizedDoc::new(format!("d{i}"), toks, Scheme::Whitespace)
    };
    let fit_docs: Vec<TokenizedDoc> = train_blob.iter().enumerate().map(|(i, &b)| doc_for(i, b)).collect();
    let eval_docs: Vec<TokenizedDoc> = test_blob.iter().enumerate().map(|(i, &b)| doc_for(i, b)).collect();
    let r2 = e(surface_r2(&train, &fit_docs, &test, &eval_docs, &four, SurfaceFeature::StopwordPct, &sw))?;
    ensure!(r2 == 1.0, "per-cluster constant feature gives R2 {r2}");
    let flat_fit: Vec<TokenizedDoc> = (0..400).map(|i| doc_for(i, 1)).collect();
    let flat_eval: Vec<TokenizedDoc> = (0..200).map(|i| doc_for(i, 1)).collect();
    let r0 = e(surface_r2(&train, &flat_fit, &test, &flat_eval, &four, SurfaceFeature::StopwordPct, &sw))?;
    ensure!(r0 == 0.0, "constant feature gives R2 {r0}");
    Ok(format!("K=1 accuracy = baseline = {}; separable accuracy 1; R2 {r2} and {r0}", res.baseline))
}

// ---------------------------------------------------------------------------

fn write_corpus(path: &Path, corpus: &Corpus) {
    corpus.write_jsonl(path).unwrap();
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = topic_corpus(77, 400);
    let (a, b) = corpus.docs().split_at(200);
    let mut shuffled = b.to_vec();
    shuffled.shuffle(&mut rng(5));
    write_corpus(&dir.path().join("ref.jsonl"), &Corpus::new(a.to_vec()).unwrap());
    write_corpus(&dir.path().join("gen.jsonl"), &Corpus::new(shuffled).unwrap());
    let run = |out: &str| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_divergelab"))
            .current_dir(dir.path())
            .args(["divergence", "--ref", "ref.jsonl", "--gen", "gen.jsonl", "--K", "20", "--seeds", "0,1,2", "--order", "3", "--out-dir", out])
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "run failed: {}", String::from_utf8_lossy(&status.stderr));
        Ok(())
    };
    run("one")?;
    run("two")?;
    let mut compared = 0;
    for f in ["string.json", "string_curve.csv", "cluster.json", "cluster_curve.csv"] {
        let x = std::fs::read(dir.path().join("one").join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(dir.path().join("two").join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure!(x == y, "{f} differs between runs");
        compared += x.len();
    }
    Ok(format!("two CLI runs, 4 output files ({compared} bytes) identical"))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [Criterion; 9] = [
        ("data-processing inequality", data_processing_inequality),
        ("divergence identities", divergence_identities),
        ("kneser-ney", kneser_ney),
        ("enumerable toy-space oracle", enumerable_oracle),
        ("geometry", geometry),
        ("perturbation ordering", perturbation_ordering),
        ("meta-evaluation", meta_evaluation),
        ("probing", probing),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match std::panic::catch_unwind(f) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
