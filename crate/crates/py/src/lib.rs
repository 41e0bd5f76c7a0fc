//! Python bindings for divergelab.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use divergelab::corpus::{perturb as perturb_corpus, tokenize as tokenize_text, PerturbOptions};
use divergelab::distributions::histogram as hist;
use divergelab::divergences::{self, auc_divergence, divergence_curve};
use divergelab::estimators::{cluster_suite as run_cluster_suite, string_plugin_suite};
use divergelab::geometry::hash_embed_corpus;
use divergelab::metaeval::{self, CorrelationKind};
use divergelab::ngram::{train_kn, KnConfig, NGramModel};
use divergelab::{
    ClusterSuiteConfig, Corpus, DiscreteDistribution, EmbeddingMatrix, PerturbationKind, Scheme, Stopwords,
    StringSuiteConfig, TokenizedDoc,
};

fn err(e: divergelab::Error) -> PyErr {
    match e {
        divergelab::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn scheme(s: &str) -> PyResult<Scheme> {
    s.parse().map_err(err)
}

fn dist(p: Vec<f64>) -> PyResult<DiscreteDistribution> {
    DiscreteDistribution::new(p).map_err(err)
}

fn to_py_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Split text into tokens.
#[pyfunction]
#[pyo3(signature = (text, scheme = "unicode-word"))]
fn tokenize(text: &str, scheme: &str) -> PyResult<Vec<String>> {
    Ok(tokenize_text(text, self::scheme(scheme)?))
}

/// Apply one perturbation to a list of texts.
#[pyfunction]
#[pyo3(signature = (texts, kind, seed = 0, scheme = "unicode-word"))]
fn perturb(texts: Vec<String>, kind: &str, seed: u64, scheme: &str) -> PyResult<Vec<String>> {
    let kind: PerturbationKind = kind.parse().map_err(err)?;
    let opts = PerturbOptions {
        scheme: self::scheme(scheme)?,
        stopwords: Stopwords::resolve(None).map_err(err)?,
    };
    let out = perturb_corpus(&Corpus::from_texts("d", texts), kind, seed, &opts).map_err(err)?;
    Ok(out.docs().iter().map(|d| d.text.clone()).collect())
}

/// Interpolated Kneser-Ney n-gram model.
#[pyclass(name = "KneserNey", module = "divergelab")]
struct PyKneserNey {
    inner: NGramModel,
    scheme: Scheme,
}

#[pymethods]
impl PyKneserNey {
    #[staticmethod]
    #[pyo3(signature = (texts, order = 5, discount = 0.75, unigram_discount = 0.75, scheme = "unicode-word"))]
    fn train(texts: Vec<String>, order: usize, discount: f64, unigram_discount: f64, scheme: &str) -> PyResult<Self> {
        let sc = self::scheme(scheme)?;
        let docs: Vec<TokenizedDoc> = Corpus::from_texts("d", texts).tokenize(sc);
        let cfg = KnConfig {
            order,
            discount,
            unigram_discount,
            boundaries: true,
        };
        Ok(PyKneserNey {
            inner: train_kn(&docs, cfg).map_err(err)?,
            scheme: sc,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (data, scheme = "unicode-word"))]
    fn from_bytes(data: &[u8], scheme: &str) -> PyResult<Self> {
        Ok(PyKneserNey {
            inner: NGramModel::from_bytes(data).map_err(err)?,
            scheme: self::scheme(scheme)?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    /// P(token | context).
    fn prob(&self, context: Vec<String>, token: &str) -> f64 {
        let ctx: Vec<&str> = context.iter().map(String::as_str).collect();
        self.inner.prob(&ctx, token)
    }

    /// Log-probability of a text in nats, end-of-sequence included.
    fn log_prob(&self, text: &str) -> f64 {
        self.inner.log_prob_tokens(&tokenize_text(text, self.scheme))
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint_hex()
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.inner.vocab().to_vec()
    }
}

/// Deterministic hashed n-gram embeddings, one row per text.
#[pyfunction]
#[pyo3(signature = (texts, dim = 256, seed = 0, scheme = "unicode-word"))]
fn hash_embed(texts: Vec<String>, dim: usize, seed: u64, scheme: &str) -> PyResult<Vec<Vec<f64>>> {
    let docs = Corpus::from_texts("d", texts).tokenize(self::scheme(scheme)?);
    let m = hash_embed_corpus(&docs, dim, seed).map_err(err)?;
    Ok(m.iter_rows().map(<[f64]>::to_vec).collect())
}

/// Laplace-smoothed histogram of cluster assignments.
#[pyfunction]
#[pyo3(signature = (assignments, k, alpha = 1.0))]
fn histogram(assignments: Vec<usize>, k: usize, alpha: f64) -> PyResult<Vec<f64>> {
    Ok(hist(&assignments, k, alpha).map_err(err)?.probs().to_vec())
}

#[pyfunction]
fn kl(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    divergences::kl(&dist(p)?, &dist(q)?).map_err(err)
}

#[pyfunction]
fn backward_kl(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    divergences::backward_kl(&dist(p)?, &dist(q)?).map_err(err)
}

#[pyfunction]
fn exp_kl(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    divergences::exp_kl(&dist(p)?, &dist(q)?).map_err(err)
}

#[pyfunction]
fn js(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    divergences::js(&dist(p)?, &dist(q)?).map_err(err)
}

/// Frontier points `(x, y)`, boundary points included.
#[pyfunction]
#[pyo3(signature = (p, q, s = 5.0, grid = 99))]
fn curve(p: Vec<f64>, q: Vec<f64>, s: f64, grid: usize) -> PyResult<Vec<(f64, f64)>> {
    Ok(divergence_curve(&dist(p)?, &dist(q)?, s, grid).map_err(err)?.points)
}

#[pyfunction]
#[pyo3(signature = (p, q, s = 5.0, grid = 99))]
fn auc(p: Vec<f64>, q: Vec<f64>, s: f64, grid: usize) -> PyResult<f64> {
    auc_divergence(&divergence_curve(&dist(p)?, &dist(q)?, s, grid).map_err(err)?).map_err(err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    metaeval::pearson(&x, &y).map_err(err)
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    metaeval::spearman(&x, &y).map_err(err)
}

/// `|corr(human, metric)|` with kind "pearson" or "spearman".
#[pyfunction]
#[pyo3(signature = (human, metric, kind = "pearson"))]
fn metric_quality(human: Vec<f64>, metric: Vec<f64>, kind: &str) -> PyResult<f64> {
    let kind = match kind {
        "pearson" => CorrelationKind::Pearson,
        "spearman" => CorrelationKind::Spearman,
        other => return Err(PyValueError::new_err(format!("unknown correlation kind {other:?}"))),
    };
    metaeval::metric_quality(&human, &metric, kind).map_err(err)
}

/// Cluster-based divergence report (as a dict) for two embedding matrices.
#[pyfunction]
#[pyo3(signature = (reference, generated, k = 500, alpha = 1.0, s = 5.0, grid = 99, variance_target = 0.9, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn cluster_suite<'py>(
    py: Python<'py>,
    reference: Vec<Vec<f64>>,
    generated: Vec<Vec<f64>>,
    k: usize,
    alpha: f64,
    s: f64,
    grid: usize,
    variance_target: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = EmbeddingMatrix::from_rows(&reference, None).map_err(err)?;
    let g = EmbeddingMatrix::from_rows(&generated, None).map_err(err)?;
    let cfg = ClusterSuiteConfig {
        k,
        alpha,
        s,
        grid,
        variance_target,
        seed,
        ..Default::default()
    };
    let report = py.detach(|| run_cluster_suite(&r, &g, &cfg)).map_err(err)?;
    to_py_json(py, &report.to_json())
}

/// String-based plug-in divergence report (as a dict) for two lists of texts.
#[pyfunction]
#[pyo3(signature = (reference, generated, order = 5, s = 0.2, grid = 99, scheme = "unicode-word"))]
fn string_suite<'py>(
    py: Python<'py>,
    reference: Vec<String>,
    generated: Vec<String>,
    order: usize,
    s: f64,
    grid: usize,
    scheme: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = StringSuiteConfig {
        kn: KnConfig::with_order(order),
        s,
        grid,
        scheme: self::scheme(scheme)?,
    };
    let r = Corpus::from_texts("r", reference);
    let g = Corpus::from_texts("g", generated);
    let report = py.detach(|| string_plugin_suite(&r, &g, &cfg)).map_err(err)?;
    to_py_json(py, &report.to_json())
}

#[pymodule]
#[pyo3(name = "divergelab")]
fn divergelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKneserNey>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(hash_embed, m)?)?;
    m.add_function(wrap_pyfunction!(histogram, m)?)?;
    m.add_function(wrap_pyfunction!(kl, m)?)?;
    m.add_function(wrap_pyfunction!(backward_kl, m)?)?;
    m.add_function(wrap_pyfunction!(exp_kl, m)?)?;
    m.add_function(wrap_pyfunction!(js, m)?)?;
    m.add_function(wrap_pyfunction!(curve, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(metric_quality, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_suite, m)?)?;
    m.add_function(wrap_pyfunction!(string_suite, m)?)?;
    Ok(())
}
