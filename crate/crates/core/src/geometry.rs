//! Embeddings, PCA, k-means and the hash embedder.
//!
//! Together these implement the embed-then-cluster map that turns a document
//! into a cluster id: project onto a PCA basis fit to the joint embedding set,
//! then assign to the nearest k-means centroid.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenizedDoc;
use crate::error::{Error, Result};
use crate::seed;

// ---------------------------------------------------------------------------
// EmbeddingMatrix
// ---------------------------------------------------------------------------

/// Row-major `rows x dim` matrix of finite values with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension is 0".into()));
        }
        if values.len() != ids.len() * dim {
            return Err(Error::Validation(format!(
                "{} values for {} rows of dim {}",
                values.len(),
                ids.len(),
                dim
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(EmbeddingMatrix { ids, dim, values })
    }

    /// Build from rows, numbering ids `0..n` when `ids` is `None`.
    pub fn from_rows(rows: &[Vec<f64>], ids: Option<Vec<String>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.len(),
            });
        }
        let ids = ids.unwrap_or_else(|| (0..rows.len()).map(|i| i.to_string()).collect());
        Self::new(ids, dim, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Stack `other` below `self`.
    pub fn vstack(&self, other: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        let mut ids = self.ids.clone();
        ids.extend(other.ids.iter().cloned());
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(EmbeddingMatrix {
            ids,
            dim: self.dim,
            values,
        })
    }

    /// Rows in the given order.
    pub fn select(&self, order: &[usize]) -> EmbeddingMatrix {
        let mut values = Vec::with_capacity(order.len() * self.dim);
        for &i in order {
            values.extend_from_slice(self.row(i));
        }
        EmbeddingMatrix {
            ids: order.iter().map(|&i| self.ids[i].clone()).collect(),
            dim: self.dim,
            values,
        }
    }
}

// ---------------------------------------------------------------------------
// EMB1 file format
// ---------------------------------------------------------------------------

const EMB_MAGIC: &[u8; 4] = b"EMB1";
const EMB_VERSION: u32 = 1;
const EMB_HEADER: usize = 4 + 4 + 8 + 4;

#[derive(Serialize, Deserialize)]
struct IdRecord {
    id: String,
}

/// Path of the id sidecar: `<path>.ids.jsonl`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.jsonl");
    PathBuf::from(s)
}

/// Write an EMB1 file plus its id sidecar. Values are stored as f32.
pub fn write_embeddings(emb: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(EMB_HEADER + emb.values.len() * 4);
    bytes.extend_from_slice(EMB_MAGIC);
    bytes.extend(EMB_VERSION.to_le_bytes());
    bytes.extend((emb.rows() as u64).to_le_bytes());
    bytes.extend((emb.dim as u32).to_le_bytes());
    for &v in &emb.values {
        bytes.extend((v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

    let side = sidecar_path(path);
    let mut w = std::io::BufWriter::new(fs::File::create(&side).map_err(|e| Error::io(&side, e))?);
    for id in &emb.ids {
        let line = serde_json::to_string(&IdRecord { id: id.clone() }).expect("id serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(&side, e))?;
    }
    w.flush().map_err(|e| Error::io(&side, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let loc = path.display().to_string();
    if bytes.len() < EMB_HEADER {
        return Err(Error::parse(
            loc,
            format!("truncated header: expected {EMB_HEADER} bytes, got {}", bytes.len()),
        ));
    }
    if &bytes[..4] != EMB_MAGIC {
        return Err(Error::parse(loc, "bad magic, expected EMB1"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != EMB_VERSION {
        return Err(Error::parse(loc, format!("unsupported EMB1 version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::Validation(format!("{loc}: header declares dim 0")));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(EMB_HEADER))
        .ok_or_else(|| Error::parse(loc.clone(), "header sizes overflow"))?;
    if bytes.len() != expected {
        return Err(Error::parse(
            loc,
            format!("expected {expected} bytes, got {}", bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes[EMB_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();

    let side = sidecar_path(path);
    let ids: Vec<String> = crate::corpus::read_jsonl_records::<IdRecord>(&side)?
        .into_iter()
        .map(|r| r.id)
        .collect();
    if ids.len() != rows {
        return Err(Error::Validation(format!(
            "{} lists {} ids but {loc} has {rows} rows",
            side.display(),
            ids.len()
        )));
    }
    EmbeddingMatrix::new(ids, dim, values)
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

/// Principal axes of a data set, truncated to the leading `k` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `k x dim`, row-major, orthonormal rows.
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub dim: usize,
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.explained_variance_ratio.len()
    }

    pub fn component(&self, j: usize) -> &[f64] {
        &self.components[j * self.dim..(j + 1) * self.dim]
    }

    pub fn project_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok((0..self.k())
            .map(|j| {
                self.component(j)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (v, m))| c * (v - m))
                    .sum()
            })
            .collect())
    }

    /// Inverse map of `project_row` restricted to the retained subspace.
    pub fn reconstruct_row(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (j, &zj) in z.iter().enumerate() {
            for (xi, c) in x.iter_mut().zip(self.component(j)) {
                *xi += zj * c;
            }
        }
        x
    }
}

/// Fit PCA by eigendecomposition of the sample covariance and keep the
/// smallest number of components whose cumulative explained variance reaches
/// `variance_target`. Each component is signed so that its largest-magnitude
/// coordinate is positive.
pub fn fit_pca(emb: &EmbeddingMatrix, variance_target: f64) -> Result<PcaBasis> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::config(
            "variance_target",
            format!("{variance_target} is not in (0, 1]"),
        ));
    }
    let n = emb.rows();
    if n < 2 {
        return Err(Error::Degenerate(format!("PCA needs at least 2 rows, got {n}")));
    }
    let d = emb.dim;
    let mut mean = vec![0.0; d];
    for row in emb.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |i, j| emb.values[i * d + j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let scale = emb.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if total <= 1e-24 * scale * scale * d as f64 {
        return Err(Error::Degenerate("all rows are identical (rank 0)".into()));
    }

    let mut k = 0;
    let mut cumulative = 0.0;
    while k < d {
        if values[k] <= 0.0 {
            break;
        }
        cumulative += values[k] / total;
        k += 1;
        if cumulative >= variance_target - 1e-12 {
            break;
        }
    }

    let mut components = Vec::with_capacity(k * d);
    for &col in &order[..k] {
        let v = eig.eigenvectors.column(col);
        let (mut best, mut best_abs) = (0, -1.0);
        for (i, x) in v.iter().enumerate() {
            if x.abs() > best_abs + 1e-12 {
                best = i;
                best_abs = x.abs();
            }
        }
        let sign = if v[best] < 0.0 { -1.0 } else { 1.0 };
        components.extend(v.iter().map(|x| sign * x));
    }
    Ok(PcaBasis {
        mean,
        components,
        explained_variance: values[..k].to_vec(),
        explained_variance_ratio: values[..k].iter().map(|v| v / total).collect(),
        dim: d,
    })
}

/// Project every row onto the basis: `(x - mean) * components^T`.
pub fn project(basis: &PcaBasis, emb: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if emb.dim != basis.dim {
        return Err(Error::DimensionMismatch {
            expected: basis.dim,
            actual: emb.dim,
        });
    }
    let rows: Vec<Vec<f64>> = emb
        .iter_rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|r| basis.project_row(r).expect("dimension checked"))
        .collect();
    Ok(EmbeddingMatrix {
        ids: emb.ids.clone(),
        dim: basis.k(),
        values: rows.concat(),
    })
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once the relative objective decrease falls to this value.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 500,
            seed: 0,
            max_iter: 300,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeans {
    /// `k x dim`, row-major.
    pub centroids: Vec<f64>,
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    /// Objective (sum of squared distances) after each assignment step.
    pub objective_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KMeans {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }

    /// Nearest centroid; ties go to the lowest index.
    pub fn assign(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(nearest(&self.centroids, self.dim, x).0)
    }

    pub fn assign_batch(&self, emb: &EmbeddingMatrix) -> Result<Vec<usize>> {
        if emb.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: emb.dim,
            });
        }
        Ok(assign_all(&self.centroids, emb).0)
    }
}

fn nearest(centroids: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign_all(centroids: &[f64], emb: &EmbeddingMatrix) -> (Vec<usize>, Vec<f64>) {
    let dim = emb.dim;
    (0..emb.rows())
        .into_par_iter()
        .map(|i| nearest(centroids, dim, emb.row(i)))
        .unzip()
}

fn init_plus_plus(emb: &EmbeddingMatrix, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let n = emb.rows();
    let mut centroids = Vec::with_capacity(k * emb.dim);
    centroids.extend_from_slice(emb.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = emb.iter_rows().map(|r| sq_dist(r, &centroids[..emb.dim])).collect();
    for _ in 1..k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.random_range(0..n),
        };
        let c = emb.row(next).to_vec();
        for (i, r) in emb.iter_rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centroids.extend(c);
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations.
///
/// A cluster left empty by an update step is moved onto the point farthest
/// from its own centroid (each such point used at most once per step).
pub fn fit_kmeans(emb: &EmbeddingMatrix, config: &KMeansConfig) -> Result<KMeans> {
    let n = emb.rows();
    let k = config.k;
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    if n < k {
        return Err(Error::Validation(format!("k-means with K={k} needs at least {k} rows, got {n}")));
    }
    let dim = emb.dim;
    let mut rng = seed::rng(seed::derive(config.seed, seed::stream::KMEANS));
    let mut centroids = init_plus_plus(emb, k, &mut rng);
    let (mut labels, mut dists) = assign_all(&centroids, emb);
    let mut history = vec![dists.iter().sum::<f64>()];

    for _ in 0..config.max_iter {
        let mut sums = vec![0.0; k * dim];
        let mut sizes = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            sizes[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(emb.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                let inv = 1.0 / sizes[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                    *dst = s * inv;
                }
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&c| sizes[c] == 0).collect();
        if !empty.is_empty() {
            for (i, d) in dists.iter_mut().enumerate() {
                let c = labels[i];
                *d = sq_dist(emb.row(i), &centroids[c * dim..(c + 1) * dim]);
            }
            let mut far: Vec<usize> = (0..n).collect();
            far.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
            for (&c, &i) in empty.iter().zip(&far) {
                centroids[c * dim..(c + 1) * dim].copy_from_slice(emb.row(i));
            }
        }

        let (new_labels, new_dists) = assign_all(&centroids, emb);
        let obj: f64 = new_dists.iter().sum();
        let prev = *history.last().unwrap();
        history.push(obj);
        let changed = new_labels != labels;
        labels = new_labels;
        dists = new_dists;
        if !changed || prev - obj <= config.tolerance * prev {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        k,
        dim,
        seed: config.seed,
        objective_history: history,
    })
}

// ---------------------------------------------------------------------------
// ClusterModel
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub variance_target: f64,
    pub kmeans: KMeansConfig,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            variance_target: 0.9,
            kmeans: KMeansConfig::default(),
        }
    }
}

/// PCA basis plus k-means centroids in the reduced space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub basis: PcaBasis,
    pub kmeans: KMeans,
}

impl ClusterModel {
    pub fn fit(emb: &EmbeddingMatrix, config: &ClusterConfig) -> Result<Self> {
        let basis = fit_pca(emb, config.variance_target)?;
        let reduced = project(&basis, emb)?;
        let kmeans = fit_kmeans(&reduced, &config.kmeans)?;
        Ok(ClusterModel { basis, kmeans })
    }

    pub fn k(&self) -> usize {
        self.kmeans.k
    }

    pub fn assign_raw(&self, x: &[f64]) -> Result<usize> {
        let z = self.basis.project_row(x)?;
        self.kmeans.assign(&z)
    }

    pub fn assign_projected(&self, z: &[f64]) -> Result<usize> {
        self.kmeans.assign(z)
    }

    /// Assign every raw row.
    pub fn assign_batch(&self, emb: &EmbeddingMatrix) -> Result<Vec<usize>> {
        let reduced = project(&self.basis, emb)?;
        self.kmeans.assign_batch(&reduced)
    }
}

// ---------------------------------------------------------------------------
// Hash embedder
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn feature_hash(seed_val: u64, gram: &[String]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed::mix64(seed_val).to_le_bytes());
    h = fnv1a(h, &[gram.len() as u8]);
    for t in gram {
        h = fnv1a(h, t.as_bytes());
        h = fnv1a(h, &[0x1f]);
    }
    seed::mix64(h)
}

/// Signed feature hashing of token 1-, 2- and 3-grams into `dim` buckets,
/// L2-normalized. An empty document maps to the zero vector.
pub fn hash_embed(doc: &TokenizedDoc, dim: usize, seed_val: u64) -> Result<Vec<f64>> {
    if dim < 8 {
        return Err(Error::config("dim", format!("hash embedding needs dim >= 8, got {dim}")));
    }
    let mut v = vec![0.0; dim];
    for n in 1..=3 {
        for gram in doc.tokens.windows(n) {
            let h = feature_hash(seed_val, gram);
            let bucket = (h % dim as u64) as usize;
            v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(v)
}

/// Hash-embed every document into an [`EmbeddingMatrix`].
pub fn hash_embed_corpus(docs: &[TokenizedDoc], dim: usize, seed_val: u64) -> Result<EmbeddingMatrix> {
    let rows: Vec<Vec<f64>> = docs
        .par_iter()
        .map(|d| hash_embed(d, dim, seed_val))
        .collect::<Result<_>>()?;
    let ids = docs.iter().map(|d| d.doc_id.clone()).collect();
    EmbeddingMatrix::new(ids, dim, rows.concat())
}
