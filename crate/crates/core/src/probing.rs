//! Cluster probing: how much of a text attribute a cluster partition encodes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, read_jsonl_records, Corpus, Document, Stopwords, TokenizedDoc};
use crate::error::{Error, Result};
use crate::geometry::{ClusterModel, EmbeddingMatrix};

/// A corpus with one category label per document.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub corpus: Corpus,
    pub labels: Vec<String>,
}

#[derive(Deserialize)]
struct LabeledRecord {
    id: String,
    text: String,
    label: String,
}

impl LabeledCorpus {
    pub fn new(corpus: Corpus, labels: Vec<String>) -> Result<Self> {
        if corpus.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} documents but {} labels",
                corpus.len(),
                labels.len()
            )));
        }
        Ok(LabeledCorpus { corpus, labels })
    }

    /// Load `{"id","text","label"}` records.
    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let recs: Vec<LabeledRecord> = read_jsonl_records(path)?;
        let mut docs = Vec::with_capacity(recs.len());
        let mut labels = Vec::with_capacity(recs.len());
        for r in recs {
            docs.push(Document { id: r.id, text: r.text });
            labels.push(r.label);
        }
        Self::new(Corpus::new(docs)?, labels)
    }

    pub fn distinct_labels(&self) -> usize {
        let mut l: Vec<&String> = self.labels.iter().collect();
        l.sort();
        l.dedup();
        l.len()
    }
}

/// Most frequent label; ties go to the lexicographically smallest.
fn modal_label<'a>(labels: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (l, c) in counts {
        // BTreeMap iterates in label order, so strict > keeps the smallest on ties
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l.to_string())
}

/// Label every cluster with the modal label of its training members; a
/// cluster with no members gets the overall modal label.
pub fn majority_labels(assignments: &[usize], labels: &[String], k: usize) -> Result<Vec<String>> {
    if assignments.is_empty() {
        return Err(Error::Empty("training assignments"));
    }
    if assignments.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} assignments but {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    if let Some(&a) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::Validation(format!("cluster id {a} out of range [0, {k})")));
    }
    let overall = modal_label(labels.iter().map(String::as_str)).expect("non-empty");
    let mut members: Vec<Vec<&str>> = vec![Vec::new(); k];
    for (&a, l) in assignments.iter().zip(labels) {
        members[a].push(l);
    }
    Ok(members
        .into_iter()
        .map(|m| modal_label(m.into_iter()).unwrap_or_else(|| overall.clone()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    #[serde(rename = "K")]
    pub k: usize,
    pub accuracy: f64,
    /// Accuracy of always predicting the training majority class.
    pub baseline: f64,
    pub cluster_labels: Vec<String>,
}

/// Label clusters on the training side, then predict test labels through
/// cluster membership.
pub fn probe_accuracy(
    train: &EmbeddingMatrix,
    train_labels: &[String],
    test: &EmbeddingMatrix,
    test_labels: &[String],
    model: &ClusterModel,
) -> Result<ProbeResult> {
    if test.rows() == 0 {
        return Err(Error::Empty("test set"));
    }
    if test.rows() != test_labels.len() {
        return Err(Error::Validation(format!(
            "{} test rows but {} labels",
            test.rows(),
            test_labels.len()
        )));
    }
    let train_assign = model.assign_batch(train)?;
    let cluster_labels = majority_labels(&train_assign, train_labels, model.k())?;
    let test_assign = model.assign_batch(test)?;
    let hits = test_assign
        .iter()
        .zip(test_labels)
        .filter(|(&c, l)| &cluster_labels[c] == *l)
        .count();
    let majority = modal_label(train_labels.iter().map(String::as_str)).expect("non-empty");
    let base_hits = test_labels.iter().filter(|l| **l == majority).count();
    let n = test_labels.len() as f64;
    Ok(ProbeResult {
        k: model.k(),
        accuracy: hits as f64 / n,
        baseline: base_hits as f64 / n,
        cluster_labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceFeature {
    StopwordPct,
    PunctuationPct,
}

impl std::str::FromStr for SurfaceFeature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stopword_pct" => Ok(SurfaceFeature::StopwordPct),
            "punctuation_pct" => Ok(SurfaceFeature::PunctuationPct),
            other => Err(Error::config("feature", format!("unknown surface feature {other:?}"))),
        }
    }
}

/// Fraction of a document's tokens that are stopwords / punctuation. Empty
/// documents score 0.
pub fn surface_feature(doc: &TokenizedDoc, feature: SurfaceFeature, stopwords: &Stopwords) -> f64 {
    if doc.tokens.is_empty() {
        return 0.0;
    }
    let hits = doc
        .tokens
        .iter()
        .filter(|t| match feature {
            SurfaceFeature::StopwordPct => stopwords.contains(t),
            SurfaceFeature::PunctuationPct => is_punctuation(t),
        })
        .count();
    hits as f64 / doc.tokens.len() as f64
}

/// R² of predicting `eval` values by the per-cluster mean of `fit` values.
///
/// Clusters without fit members predict the global fit mean. Zero total
/// variance on the evaluation side is defined as R² = 0.
pub fn surface_r2_values(
    fit_assign: &[usize],
    fit_values: &[f64],
    eval_assign: &[usize],
    eval_values: &[f64],
    k: usize,
) -> Result<f64> {
    if fit_assign.is_empty() || eval_assign.is_empty() {
        return Err(Error::Empty("surface R² half"));
    }
    if fit_assign.len() != fit_values.len() || eval_assign.len() != eval_values.len() {
        return Err(Error::Validation("assignments and feature values are not aligned".into()));
    }
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&c, &v) in fit_assign.iter().zip(fit_values) {
        if c >= k {
            return Err(Error::Validation(format!("cluster id {c} out of range [0, {k})")));
        }
        sums[c] += v;
        counts[c] += 1;
    }
    let global = fit_values.iter().sum::<f64>() / fit_values.len() as f64;
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { global })
        .collect();
    let eval_mean = eval_values.iter().sum::<f64>() / eval_values.len() as f64;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for (&c, &v) in eval_assign.iter().zip(eval_values) {
        if c >= k {
            return Err(Error::Validation(format!("cluster id {c} out of range [0, {k})")));
        }
        sse += (v - means[c]).powi(2);
        sst += (v - eval_mean).powi(2);
    }
    let scale = eval_values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    if sst <= 1e-24 * scale * scale * eval_values.len() as f64 {
        return Ok(0.0);
    }
    Ok(1.0 - sse / sst)
}

/// Surface-feature R² from embeddings and tokenized documents.
#[allow(clippy::too_many_arguments)]
pub fn surface_r2(
    fit_emb: &EmbeddingMatrix,
    fit_docs: &[TokenizedDoc],
    eval_emb: &EmbeddingMatrix,
    eval_docs: &[TokenizedDoc],
    model: &ClusterModel,
    feature: SurfaceFeature,
    stopwords: &Stopwords,
) -> Result<f64> {
    if fit_emb.rows() != fit_docs.len() || eval_emb.rows() != eval_docs.len() {
        return Err(Error::Validation("embeddings and documents are not aligned".into()));
    }
    let fv: Vec<f64> = fit_docs.iter().map(|d| surface_feature(d, feature, stopwords)).collect();
    let ev: Vec<f64> = eval_docs.iter().map(|d| surface_feature(d, feature, stopwords)).collect();
    let fa = model.assign_batch(fit_emb)?;
    let ea = model.assign_batch(eval_emb)?;
    surface_r2_values(&fa, &fv, &ea, &ev, model.k())
}
