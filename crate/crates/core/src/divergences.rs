//! Divergences between finite distributions.
//!
//! All values are in nats. Infinite divergences are returned as
//! `f64::INFINITY`; reports serialize it as the string `"inf"`.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::{mixture, DiscreteDistribution};
use crate::error::{Error, Result};

/// Default number of interior mixture weights on the frontier grid.
pub const DEFAULT_GRID: usize = 99;

fn check_support(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    Ok(())
}

fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    total.max(0.0)
}

/// `KL(p || q)`; infinite iff some `p_i > 0` has `q_i = 0`.
pub fn kl(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_support(p, q)?;
    Ok(kl_unchecked(p.probs(), q.probs()))
}

/// `KL(q || p)`.
pub fn backward_kl(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    kl(q, p)
}

/// `exp(KL(p || q))`, in `[1, inf]`.
pub fn exp_kl(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    Ok(kl(p, q)?.exp())
}

/// Jensen-Shannon divergence, in `[0, ln 2]`.
pub fn js(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_support(p, q)?;
    let m = mixture(p, q, 0.5)?;
    let v = 0.5 * kl_unchecked(p.probs(), m.probs()) + 0.5 * kl_unchecked(q.probs(), m.probs());
    Ok(v.min(std::f64::consts::LN_2))
}

/// Interior mixture grid `i / (L + 1)` for `i = 1..=L`.
pub fn lambda_grid(l: usize) -> Vec<f64> {
    (1..=l).map(|i| i as f64 / (l + 1) as f64).collect()
}

/// Divergence frontier: one point per mixture weight, plus the boundary
/// points `(0, 1)` and `(1, 0)` (which carry no weight).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCurve {
    pub lambdas: Vec<Option<f64>>,
    pub points: Vec<(f64, f64)>,
    pub scale: f64,
}

impl DivergenceCurve {
    /// Build the curve from per-weight KL pairs `(KL(p || r), KL(q || r))`.
    /// Negative KL estimates are clamped to zero so that points stay in the
    /// unit square.
    pub fn from_kl_pairs(lambdas: &[f64], kls: &[(f64, f64)], scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::config("s", format!("scaling constant {scale} must be > 0")));
        }
        if lambdas.len() != kls.len() {
            return Err(Error::Validation(format!(
                "{} weights but {} KL pairs",
                lambdas.len(),
                kls.len()
            )));
        }
        let mut points = Vec::with_capacity(kls.len() + 2);
        let mut lams = Vec::with_capacity(kls.len() + 2);
        points.push((0.0, 1.0));
        lams.push(None);
        for (&l, &(kp, kq)) in lambdas.iter().zip(kls) {
            points.push(((-scale * kp.max(0.0)).exp(), (-scale * kq.max(0.0)).exp()));
            lams.push(Some(l));
        }
        points.push((1.0, 0.0));
        lams.push(None);
        Ok(DivergenceCurve {
            lambdas: lams,
            points,
            scale,
        })
    }

    /// CSV with columns `lambda,x,y`; boundary rows leave `lambda` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,x,y\n");
        for (l, (x, y)) in self.lambdas.iter().zip(&self.points) {
            match l {
                Some(l) => writeln!(out, "{l},{x},{y}").unwrap(),
                None => writeln!(out, ",{x},{y}").unwrap(),
            }
        }
        out
    }
}

/// Frontier of `p` against `q` with scaling constant `s` over `l` interior weights.
pub fn divergence_curve(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    s: f64,
    l: usize,
) -> Result<DivergenceCurve> {
    check_support(p, q)?;
    if l < 3 {
        return Err(Error::config("L", format!("grid size {l} must be at least 3")));
    }
    let lambdas = lambda_grid(l);
    let kls: Vec<(f64, f64)> = lambdas
        .iter()
        .map(|&lam| {
            let r = mixture(p, q, lam)?;
            Ok((kl_unchecked(p.probs(), r.probs()), kl_unchecked(q.probs(), r.probs())))
        })
        .collect::<Result<_>>()?;
    DivergenceCurve::from_kl_pairs(&lambdas, &kls, s)
}

/// `1 - area` under the frontier, by the trapezoid rule over points sorted by
/// `x` (stable, so ties keep grid order).
pub fn auc_divergence(curve: &DivergenceCurve) -> Result<f64> {
    if curve.points.len() < 2 {
        return Err(Error::Validation(format!(
            "curve has {} points, need at least 2",
            curve.points.len()
        )));
    }
    let mut pts = curve.points.clone();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum();
    Ok((1.0 - area).clamp(0.0, 1.0))
}

/// The five measures for one pair of distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub forward: f64,
    pub backward: f64,
    pub exp: f64,
    pub js: f64,
    pub auc: f64,
}

impl Measures {
    pub const NAMES: [&'static str; 5] = ["forward", "backward", "exp", "js", "auc"];

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "forward" => Some(self.forward),
            "backward" => Some(self.backward),
            "exp" => Some(self.exp),
            "js" => Some(self.js),
            "auc" => Some(self.auc),
            _ => None,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.forward, self.backward, self.exp, self.js, self.auc]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Measures {
            forward: v[0],
            backward: v[1],
            exp: v[2],
            js: v[3],
            auc: v[4],
        }
    }
}

/// All five measures of `q` against reference `p`.
pub fn all_measures(p: &DiscreteDistribution, q: &DiscreteDistribution, s: f64, l: usize) -> Result<(Measures, DivergenceCurve)> {
    let curve = divergence_curve(p, q, s, l)?;
    let forward = kl(p, q)?;
    let m = Measures {
        forward,
        backward: backward_kl(p, q)?,
        exp: forward.exp(),
        js: js(p, q)?,
        auc: auc_divergence(&curve)?,
    };
    Ok((m, curve))
}
