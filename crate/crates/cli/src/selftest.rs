//! Brute-force oracle checks behind `divergelab selftest`.

use rand::Rng;
use serde::Serialize;

use divergelab::corpus::{tokenize, Scheme};
use divergelab::distributions::{pushforward, DiscreteDistribution};
use divergelab::divergences::{auc_divergence, divergence_curve, js, kl};
use divergelab::geometry::{fit_kmeans, fit_pca, KMeansConfig};
use divergelab::metaeval::{pearson, spearman};
use divergelab::ngram::{train_kn, KnConfig, NGramModel};
use divergelab::seed::rng;
use divergelab::{EmbeddingMatrix, TokenizedDoc};

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    match f() {
        Ok(detail) => Check { name, passed: true, detail },
        Err(detail) => Check { name, passed: false, detail },
    }
}

fn random_dist(r: &mut impl Rng, n: usize, zero_prob: f64) -> DiscreteDistribution {
    let mut w: Vec<f64> = (0..n).map(|_| if r.random::<f64>() < zero_prob { 0.0 } else { r.random::<f64>() }).collect();
    if w.iter().all(|&x| x == 0.0) {
        w[0] = 1.0;
    }
    DiscreteDistribution::from_weights(&w).unwrap()
}

fn kl_direct(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in p.iter().zip(q) {
        if *a > 0.0 {
            if *b == 0.0 {
                return f64::INFINITY;
            }
            s += a * a.ln() - a * b.ln();
        }
    }
    s
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn data_processing() -> Result<String, String> {
    let mut r = rng(11);
    for trial in 0..300 {
        let w = r.random_range(2..=64);
        let k = r.random_range(1..=8usize.min(w));
        let p = random_dist(&mut r, w, 0.2);
        let q = random_dist(&mut r, w, 0.2);
        let map: Vec<usize> = (0..w).map(|_| r.random_range(0..k)).collect();
        let pc = pushforward(&p, &map, k).map_err(|e| e.to_string())?;
        let qc = pushforward(&q, &map, k).map_err(|e| e.to_string())?;
        let fine = kl(&p, &q).map_err(|e| e.to_string())?;
        let coarse = kl(&pc, &qc).map_err(|e| e.to_string())?;
        if !(coarse <= fine + 1e-9) {
            return Err(format!("trial {trial}: coarse {coarse} > fine {fine}"));
        }
    }
    Ok("300 random coarsenings".into())
}

fn identities() -> Result<String, String> {
    let mut r = rng(12);
    for trial in 0..100 {
        let n = r.random_range(2..=12);
        let p = random_dist(&mut r, n, 0.25);
        let q = random_dist(&mut r, n, 0.25);
        let e = |x: divergelab::Result<f64>| x.map_err(|e| e.to_string());
        let got = e(kl(&p, &q))?;
        let want = kl_direct(p.probs(), q.probs()).max(0.0);
        let ok = if want.is_infinite() { got.is_infinite() } else { (got - want).abs() < 1e-12 };
        if !ok {
            return Err(format!("trial {trial}: kl {got} vs oracle {want}"));
        }
        let m: Vec<f64> = p.probs().iter().zip(q.probs()).map(|(a, b)| 0.5 * (a + b)).collect();
        let js_want = 0.5 * kl_direct(p.probs(), &m) + 0.5 * kl_direct(q.probs(), &m);
        let js_got = e(js(&p, &q))?;
        if (js_got - js_want).abs() > 1e-12 || js_got > std::f64::consts::LN_2 + 1e-12 {
            return Err(format!("trial {trial}: js {js_got} vs oracle {js_want}"));
        }
        if (js_got - e(js(&q, &p))?).abs() > 1e-9 || e(kl(&p, &p))?.abs() > 1e-9 {
            return Err(format!("trial {trial}: symmetry or floor violated"));
        }
        let a1 = auc_divergence(&divergence_curve(&p, &q, 1.0, 19).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let a2 = auc_divergence(&divergence_curve(&q, &p, 1.0, 19).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        if a1 < 0.0 || (a1 - a2).abs() > 1e-9 {
            return Err(format!("trial {trial}: auc {a1} vs swapped {a2}"));
        }
    }
    Ok("100 random pairs".into())
}

fn kneser_ney() -> Result<String, String> {
    let docs = |texts: &[&str]| -> Vec<TokenizedDoc> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| TokenizedDoc::new(format!("d{i}"), tokenize(t, Scheme::Whitespace), Scheme::Whitespace))
            .collect()
    };
    let bare = KnConfig {
        order: 2,
        discount: 0.75,
        unigram_discount: 0.0,
        boundaries: false,
    };
    let m = train_kn(&docs(&["the cat the dog"]), bare).map_err(|e| e.to_string())?;
    let p = m.prob(&["the"], "dog");
    if (p - 0.375).abs() > 1e-12 {
        return Err(format!("P(dog|the) = {p}"));
    }
    let corpus = docs(&["a b a c b a", "c c a b", "b a b b c a a"]);
    let m = train_kn(&corpus, KnConfig::with_order(3)).map_err(|e| e.to_string())?;
    let ids: Vec<u32> = m.predictable_ids().collect();
    let mut r = rng(13);
    for _ in 0..30 {
        let len = r.random_range(0..4);
        let ctx: Vec<u32> = (0..len).map(|_| r.random_range(0..m.vocab().len() as u32)).collect();
        let total: f64 = ids.iter().map(|&t| m.prob_ids(&ctx, t)).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(format!("context {ctx:?} sums to {total}"));
        }
    }
    let bytes = m.to_bytes();
    let back = NGramModel::from_bytes(&bytes).map_err(|e| e.to_string())?;
    if back.to_bytes() != bytes {
        return Err("serialization round trip differs".into());
    }
    Ok("hand example, 30 normalized contexts, round trip".into())
}

fn correlations() -> Result<String, String> {
    let mut r = rng(14);
    for trial in 0..50 {
        let n = r.random_range(3..40);
        // coarse values force ties
        let x: Vec<f64> = (0..n).map(|_| (r.random::<f64>() * 8.0).floor()).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        if x.iter().all(|&v| v == x[0]) {
            continue;
        }
        let nf = n as f64;
        let mx = x.iter().sum::<f64>() / nf;
        let my = y.iter().sum::<f64>() / nf;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (nf - 1.0);
        let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        let want = cov / (sx * sy);
        let got = pearson(&x, &y).map_err(|e| e.to_string())?;
        if (got - want).abs() > 1e-12 {
            return Err(format!("trial {trial}: pearson {got} vs {want}"));
        }
        // rank = 1 + #smaller + (#equal - 1) / 2
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let eq = v.iter().filter(|b| *b == a).count() as f64;
                    1.0 + less + (eq - 1.0) / 2.0
                })
                .collect()
        };
        let want = pearson(&rank(&x), &rank(&y)).map_err(|e| e.to_string())?;
        let got = spearman(&x, &y).map_err(|e| e.to_string())?;
        if (got - want).abs() > 1e-12 {
            return Err(format!("trial {trial}: spearman {got} vs {want}"));
        }
    }
    Ok("50 random vectors with ties".into())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn pca_ratios() -> Result<String, String> {
    let mut r = rng(15);
    let (n, d) = (60, 6);
    let scales = [3.0, 2.0, 1.5, 0.5, 0.2, 0.1];
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| scales.iter().map(|s| s * (r.random::<f64>() - 0.5)).collect())
        .collect();
    let emb = EmbeddingMatrix::from_rows(&rows, None).map_err(|e| e.to_string())?;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
    let cov: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            (0..d)
                .map(|b| rows.iter().map(|x| (x[a] - mean[a]) * (x[b] - mean[b])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect();
    let ev = jacobi_eigenvalues(cov);
    let total: f64 = ev.iter().sum();
    let ratios: Vec<f64> = ev.iter().map(|v| v / total).collect();
    let mut cum = 0.0;
    let mut k_want = d;
    for (i, r) in ratios.iter().enumerate() {
        cum += r;
        if cum >= 0.9 - 1e-12 {
            k_want = i + 1;
            break;
        }
    }
    let basis = fit_pca(&emb, 0.9).map_err(|e| e.to_string())?;
    if basis.k() != k_want {
        return Err(format!("k = {} but oracle says {k_want}", basis.k()));
    }
    for (i, (a, b)) in basis.explained_variance_ratio.iter().zip(&ratios).enumerate() {
        if (a - b).abs() > 1e-8 {
            return Err(format!("ratio {i}: {a} vs {b}"));
        }
    }
    Ok(format!("k = {k_want} of {d}"))
}

fn kmeans_monotone() -> Result<String, String> {
    let mut r = rng(16);
    let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| r.random::<f64>()).collect()).collect();
    let emb = EmbeddingMatrix::from_rows(&rows, None).map_err(|e| e.to_string())?;
    for seed in 0..3 {
        let km = fit_kmeans(&emb, &KMeansConfig { k: 12, seed, max_iter: 100, tolerance: 0.0 }).map_err(|e| e.to_string())?;
        if let Some(w) = km.objective_history.windows(2).find(|w| w[1] > w[0] * (1.0 + 1e-12)) {
            return Err(format!("seed {seed}: objective rose from {} to {}", w[0], w[1]));
        }
    }
    Ok("3 seeds".into())
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("data_processing_inequality", data_processing),
        check("divergence_identities", identities),
        check("kneser_ney", kneser_ney),
        check("correlations", correlations),
        check("pca_explained_variance", pca_ratios),
        check("kmeans_monotone", kmeans_monotone),
    ]
}
