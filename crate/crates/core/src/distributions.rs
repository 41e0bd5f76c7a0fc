//! Finite discrete distributions: smoothed histograms, mixtures and
//! push-forwards through a deterministic coarsening map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-9;

/// Kahan-compensated sum.
pub fn kahan_sum<'a>(xs: impl IntoIterator<Item = &'a f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    #[serde(rename = "K")]
    support_size: usize,
    alpha: f64,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validate and wrap a probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_alpha(probs, 0.0)
    }

    fn with_alpha(probs: Vec<f64>, alpha: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Validation(format!("invalid probability {p}")));
        }
        let total = kahan_sum(&probs);
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Validation(format!("probabilities sum to {total}")));
        }
        Ok(DiscreteDistribution {
            support_size: probs.len(),
            alpha,
            probs,
        })
    }

    /// Normalize non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total = kahan_sum(weights);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Validation(format!("weights sum to {total}")));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("support"));
        }
        Self::new(vec![1.0 / k as f64; k])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support_size(&self) -> usize {
        self.support_size
    }

    pub fn len(&self) -> usize {
        self.support_size
    }

    pub fn is_empty(&self) -> bool {
        self.support_size == 0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("distribution serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: DiscreteDistribution =
            serde_json::from_str(s).map_err(|e| Error::parse("distribution JSON", e.to_string()))?;
        if raw.support_size != raw.probs.len() {
            return Err(Error::Validation(format!(
                "K = {} but {} probabilities",
                raw.support_size,
                raw.probs.len()
            )));
        }
        Self::with_alpha(raw.probs, raw.alpha)
    }
}

/// Add-`alpha` smoothed histogram of cluster ids over `k` bins:
/// `(count_i + alpha) / (N + alpha * k)`.
pub fn histogram(assignments: &[usize], k: usize, alpha: f64) -> Result<DiscreteDistribution> {
    if k == 0 {
        return Err(Error::config("K", "must be at least 1"));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config("alpha", format!("{alpha} is not a finite value >= 0")));
    }
    if assignments.is_empty() && alpha == 0.0 {
        return Err(Error::Empty("assignments with alpha = 0"));
    }
    let mut counts = vec![0u64; k];
    for &a in assignments {
        if a >= k {
            return Err(Error::Validation(format!("cluster id {a} out of range [0, {k})")));
        }
        counts[a] += 1;
    }
    let denom = assignments.len() as f64 + alpha * k as f64;
    let probs = counts.iter().map(|&c| (c as f64 + alpha) / denom).collect();
    DiscreteDistribution::with_alpha(probs, alpha)
}

/// `lambda * p + (1 - lambda) * q`.
pub fn mixture(p: &DiscreteDistribution, q: &DiscreteDistribution, lambda: f64) -> Result<DiscreteDistribution> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config("lambda", format!("{lambda} is not in [0, 1]")));
    }
    let probs = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    DiscreteDistribution::with_alpha(probs, 0.0)
}

/// Push `p` forward through `map`: outcome `i` lands in bin `map[i]` of `k`.
pub fn pushforward(p: &DiscreteDistribution, map: &[usize], k: usize) -> Result<DiscreteDistribution> {
    if map.len() != p.len() {
        return Err(Error::SupportMismatch(p.len(), map.len()));
    }
    let mut out = vec![0.0; k];
    for (&pi, &c) in p.probs.iter().zip(map) {
        if c >= k {
            return Err(Error::Validation(format!("bin {c} out of range [0, {k})")));
        }
        out[c] += pi;
    }
    DiscreteDistribution::with_alpha(out, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-15, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0, 0, 0, 1], 3, 1.0).unwrap();
        close(h.probs(), &[4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]);
        let h = histogram(&[0, 1, 0, 1], 2, 0.0).unwrap();
        close(h.probs(), &[0.5, 0.5]);
        let h = histogram(&[], 4, 1.0).unwrap();
        close(h.probs(), &[0.25; 4]);
    }

    #[test]
    fn histogram_errors() {
        assert!(histogram(&[3], 3, 1.0).is_err());
        assert!(histogram(&[], 3, 0.0).is_err());
        assert!(histogram(&[0], 3, -1.0).is_err());
    }

    #[test]
    fn mixture_examples() {
        let p = DiscreteDistribution::new(vec![1.0, 0.0]).unwrap();
        let q = DiscreteDistribution::new(vec![0.0, 1.0]).unwrap();
        close(mixture(&p, &q, 0.25).unwrap().probs(), &[0.25, 0.75]);
        assert_eq!(mixture(&p, &q, 1.0).unwrap().probs(), p.probs());
        assert_eq!(
            mixture(&p, &q, 0.5).unwrap().probs(),
            mixture(&q, &p, 0.5).unwrap().probs()
        );
        let r = DiscreteDistribution::uniform(3).unwrap();
        assert!(matches!(mixture(&p, &r, 0.5), Err(Error::SupportMismatch(2, 3))));
        assert!(mixture(&p, &q, 1.5).is_err());
    }

    #[test]
    fn pushforward_sums_bins() {
        let p = DiscreteDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let c = pushforward(&p, &[1, 0, 1, 1], 2).unwrap();
        close(c.probs(), &[0.2, 0.8]);
        assert!(pushforward(&p, &[0, 0], 2).is_err());
    }

    #[test]
    fn json_shape() {
        let h = histogram(&[0, 1], 2, 1.0).unwrap();
        let s = h.to_json();
        assert_eq!(s, r#"{"K":2,"alpha":1.0,"probs":[0.5,0.5]}"#);
        assert_eq!(DiscreteDistribution::from_json(&s).unwrap(), h);
        assert!(DiscreteDistribution::from_json(r#"{"K":3,"alpha":0.0,"probs":[0.5,0.5]}"#).is_err());
        assert!(DiscreteDistribution::from_json(r#"{"K":2,"alpha":0.0,"probs":[0.7,0.5]}"#).is_err());
    }
}
