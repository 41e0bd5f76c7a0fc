//! Estimation pipelines: Monte Carlo cross-entropy, string-based plug-in
//! estimates through Kneser-Ney models, and cluster-based estimates through
//! PCA + k-means histograms.
//!
//! Only the forward direction has a Monte Carlo estimator here. A backward
//! estimate from generated samples would need the reference log-probability,
//! which is unknown, so backward values come from plug-in models only.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Scheme, TokenizedDoc};
use crate::distributions::{histogram, DiscreteDistribution};
use crate::divergences::{all_measures, lambda_grid, DivergenceCurve, Measures, DEFAULT_GRID};
use crate::error::{Error, Result};
use crate::geometry::{ClusterConfig, ClusterModel, EmbeddingMatrix, KMeansConfig};
use crate::ngram::{train_kn_with_vocab, vocabulary, KnConfig, NGramModel};
use crate::report::{measures_map, ConfigEcho, DivergenceReport, Method, Real, ValueMap};

/// `-(1/N) * sum(log score(w_n))` over samples drawn from the reference.
///
/// Estimates the cross-entropy `H(p, q)`, which equals the forward KL up to
/// the entropy of `p`. A sample with zero probability (log-score `-inf` or
/// NaN) makes the estimate infinite.
pub fn mc_forward_cross_entropy<F>(samples: &[TokenizedDoc], scorer: F) -> Result<f64>
where
    F: Fn(&TokenizedDoc) -> f64,
{
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let mut total = 0.0;
    for s in samples {
        let lp = scorer(s);
        if lp.is_nan() || lp == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        total += lp;
    }
    Ok(-total / samples.len() as f64)
}

/// Monte Carlo report for one scorer: `forward` is the cross-entropy and
/// `exp` its exponential (perplexity per document).
pub fn monte_carlo_report<F>(samples: &[TokenizedDoc], scorer: F, scheme: Scheme) -> Result<DivergenceReport>
where
    F: Fn(&TokenizedDoc) -> f64,
{
    let h = mc_forward_cross_entropy(samples, scorer)?;
    let mut values = ValueMap::new();
    values.insert("forward".into(), Real(h));
    values.insert("exp".into(), Real(h.exp()));
    let config = ConfigEcho {
        scheme: Some(scheme.name().to_string()),
        ..Default::default()
    };
    Ok(DivergenceReport::single(Method::MonteCarlo, None, values, config))
}

// ---------------------------------------------------------------------------
// String-based plug-in suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StringSuiteConfig {
    pub kn: KnConfig,
    pub s: f64,
    pub grid: usize,
    pub scheme: Scheme,
}

impl Default for StringSuiteConfig {
    fn default() -> Self {
        StringSuiteConfig {
            kn: KnConfig::default(),
            s: 0.2,
            grid: DEFAULT_GRID,
            scheme: Scheme::UnicodeWord,
        }
    }
}

/// Per-document log-probabilities of both corpora under both plug-in models.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginScores {
    /// `log p_hat` of reference documents.
    pub ref_under_p: Vec<f64>,
    /// `log q_hat` of reference documents.
    pub ref_under_q: Vec<f64>,
    /// `log p_hat` of generated documents.
    pub gen_under_p: Vec<f64>,
    /// `log q_hat` of generated documents.
    pub gen_under_q: Vec<f64>,
}

fn log_mix(lambda: f64, a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (lambda * (a - m).exp() + (1.0 - lambda) * (b - m).exp()).ln()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Mean of `log a - log r_lambda` over documents, with `r_lambda = lambda p + (1 - lambda) q`.
fn mc_kl_to_mixture(own: &[f64], p: &[f64], q: &[f64], lambda: f64) -> f64 {
    mean(own.iter().zip(p.iter().zip(q)).map(|(&a, (&lp, &lq))| a - log_mix(lambda, lp, lq)))
}

impl PluginScores {
    /// Plug-in estimates from per-document scores.
    ///
    /// * forward  = mean over reference of `log p_hat - log q_hat`
    /// * backward = mean over generated of `log q_hat - log p_hat`
    /// * js: mean over each corpus of the log-ratio to the equal mixture
    /// * auc: the frontier built from the same per-weight estimates
    pub fn measures(&self, s: f64, grid: usize) -> Result<(Measures, DivergenceCurve)> {
        if self.ref_under_p.is_empty() || self.gen_under_q.is_empty() {
            return Err(Error::Empty("scored corpus"));
        }
        let forward = mean(self.ref_under_p.iter().zip(&self.ref_under_q).map(|(p, q)| p - q));
        let backward = mean(self.gen_under_q.iter().zip(&self.gen_under_p).map(|(q, p)| q - p));
        let js = 0.5 * mc_kl_to_mixture(&self.ref_under_p, &self.ref_under_p, &self.ref_under_q, 0.5)
            + 0.5 * mc_kl_to_mixture(&self.gen_under_q, &self.gen_under_p, &self.gen_under_q, 0.5);
        if grid < 3 {
            return Err(Error::config("L", format!("grid size {grid} must be at least 3")));
        }
        let lambdas = lambda_grid(grid);
        let kls: Vec<(f64, f64)> = lambdas
            .iter()
            .map(|&l| {
                (
                    mc_kl_to_mixture(&self.ref_under_p, &self.ref_under_p, &self.ref_under_q, l),
                    mc_kl_to_mixture(&self.gen_under_q, &self.gen_under_p, &self.gen_under_q, l),
                )
            })
            .collect();
        let curve = DivergenceCurve::from_kl_pairs(&lambdas, &kls, s)?;
        let auc = crate::divergences::auc_divergence(&curve)?;
        Ok((
            Measures {
                forward,
                backward,
                exp: forward.exp(),
                js,
                auc,
            },
            curve,
        ))
    }
}

/// The two plug-in models, trained on a shared vocabulary.
#[derive(Debug, Clone)]
pub struct PluginModels {
    pub p_hat: NGramModel,
    pub q_hat: NGramModel,
}

impl PluginModels {
    pub fn train(reference: &[TokenizedDoc], generated: &[TokenizedDoc], kn: KnConfig) -> Result<Self> {
        for (name, docs) in [("reference", reference), ("generated", generated)] {
            let tokens: usize = docs.iter().map(|d| d.tokens.len()).sum();
            if docs.is_empty() || tokens < kn.order {
                return Err(Error::Validation(format!(
                    "{name} corpus has {tokens} tokens, fewer than the model order {}",
                    kn.order
                )));
            }
        }
        let vocab = vocabulary(reference.iter().chain(generated));
        Ok(PluginModels {
            p_hat: train_kn_with_vocab(reference, kn, &vocab)?,
            q_hat: train_kn_with_vocab(generated, kn, &vocab)?,
        })
    }

    pub fn score(&self, reference: &[TokenizedDoc], generated: &[TokenizedDoc]) -> PluginScores {
        use rayon::prelude::*;
        let score = |m: &NGramModel, docs: &[TokenizedDoc]| -> Vec<f64> {
            docs.par_iter().map(|d| m.log_prob(d)).collect()
        };
        PluginScores {
            ref_under_p: score(&self.p_hat, reference),
            ref_under_q: score(&self.q_hat, reference),
            gen_under_p: score(&self.p_hat, generated),
            gen_under_q: score(&self.q_hat, generated),
        }
    }
}

/// String-based suite: Kneser-Ney plug-ins for both corpora, all five
/// measures estimated over the two samples. The report also carries
/// `cross_entropy`, the Monte Carlo estimate of `H(p, q_hat)`.
pub fn string_plugin_suite(reference: &Corpus, generated: &Corpus, cfg: &StringSuiteConfig) -> Result<DivergenceReport> {
    if reference.is_empty() || generated.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let r = reference.tokenize(cfg.scheme);
    let g = generated.tokenize(cfg.scheme);
    let models = PluginModels::train(&r, &g, cfg.kn)?;
    let scores = models.score(&r, &g);
    let (m, curve) = scores.measures(cfg.s, cfg.grid)?;
    let mut values = measures_map(&m);
    let h = mc_forward_cross_entropy(&r, |d| models.q_hat.log_prob(d))?;
    values.insert("cross_entropy".into(), Real(h));
    let config = ConfigEcho {
        s: Some(cfg.s),
        grid: Some(cfg.grid),
        order: Some(cfg.kn.order),
        discount: Some(cfg.kn.discount),
        unigram_discount: Some(cfg.kn.unigram_discount),
        scheme: Some(cfg.scheme.name().to_string()),
        ..Default::default()
    };
    let mut report = DivergenceReport::single(Method::StringPlugin, None, values, config);
    report.curve = Some(curve);
    Ok(report)
}

// ---------------------------------------------------------------------------
// Cluster-based suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSuiteConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub s: f64,
    pub grid: usize,
    pub variance_target: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ClusterSuiteConfig {
    fn default() -> Self {
        ClusterSuiteConfig {
            k: 500,
            alpha: 1.0,
            s: 5.0,
            grid: DEFAULT_GRID,
            variance_target: 0.9,
            max_iter: 300,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// Intermediate products of the cluster pipeline.
#[derive(Debug, Clone)]
pub struct ClusterHistograms {
    pub model: ClusterModel,
    pub ref_assignments: Vec<usize>,
    pub gen_assignments: Vec<usize>,
    pub p_hat: DiscreteDistribution,
    pub q_hat: DiscreteDistribution,
    pub warnings: Vec<String>,
}

/// Row indices sorted lexicographically by value, so that fitting does not
/// depend on input row order.
fn canonical_order(emb: &EmbeddingMatrix) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..emb.rows()).collect();
    idx.sort_by(|&a, &b| {
        emb.row(a)
            .iter()
            .zip(emb.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx
}

/// Fit PCA + k-means on the joint rows and histogram each side.
pub fn cluster_histograms(
    reference: &EmbeddingMatrix,
    generated: &EmbeddingMatrix,
    cfg: &ClusterSuiteConfig,
) -> Result<ClusterHistograms> {
    if reference.rows() == 0 || generated.rows() == 0 {
        return Err(Error::Empty("embedding matrix"));
    }
    let joint = reference.vstack(generated)?;
    if joint.rows() < 2 {
        return Err(Error::Validation("joint embedding set needs at least 2 rows".into()));
    }
    let mut warnings = Vec::new();
    let k = if cfg.k > joint.rows() {
        let msg = format!("K={} exceeds the {} joint rows; clamped", cfg.k, joint.rows());
        log::warn!("{msg}");
        warnings.push(msg);
        joint.rows()
    } else {
        cfg.k
    };
    let canonical = joint.select(&canonical_order(&joint));
    let model = ClusterModel::fit(
        &canonical,
        &ClusterConfig {
            variance_target: cfg.variance_target,
            kmeans: KMeansConfig {
                k,
                seed: cfg.seed,
                max_iter: cfg.max_iter,
                tolerance: cfg.tolerance,
            },
        },
    )?;
    let ref_assignments = model.assign_batch(reference)?;
    let gen_assignments = model.assign_batch(generated)?;
    let p_hat = histogram(&ref_assignments, k, cfg.alpha)?;
    let q_hat = histogram(&gen_assignments, k, cfg.alpha)?;
    Ok(ClusterHistograms {
        model,
        ref_assignments,
        gen_assignments,
        p_hat,
        q_hat,
        warnings,
    })
}

/// Cluster-based suite for one seed.
pub fn cluster_suite(
    reference: &EmbeddingMatrix,
    generated: &EmbeddingMatrix,
    cfg: &ClusterSuiteConfig,
) -> Result<DivergenceReport> {
    let hists = cluster_histograms(reference, generated, cfg)?;
    let (m, curve) = all_measures(&hists.p_hat, &hists.q_hat, cfg.s, cfg.grid)?;
    let config = ConfigEcho {
        k: Some(cfg.k),
        k_effective: Some(hists.model.k()),
        alpha: Some(cfg.alpha),
        s: Some(cfg.s),
        grid: Some(cfg.grid),
        variance_target: Some(cfg.variance_target),
        max_iter: Some(cfg.max_iter),
        tolerance: Some(cfg.tolerance),
        seeds: vec![cfg.seed],
        ..Default::default()
    };
    let mut report = DivergenceReport::single(Method::Cluster, Some(cfg.seed), measures_map(&m), config);
    report.warnings = hists.warnings;
    report.curve = Some(curve);
    Ok(report)
}
