//! Versioned divergence report (`divrep/1`).

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::divergences::{DivergenceCurve, Measures};
use crate::error::{Error, Result};

pub const SCHEMA: &str = "divrep/1";

/// Frontier convention recorded in every report.
pub const FRONTIER_CONVENTION: &str =
    "interior grid lambda_i = i/(L+1); boundary points (0,1) and (1,0); trapezoid rule over x-sorted points";

/// A real number that may be infinite. Serializes `+inf` as `"inf"`, `-inf`
/// as `"-inf"` and NaN as `null`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Real(pub f64);

impl Real {
    pub fn get(self) -> f64 {
        self.0
    }
}

impl From<f64> for Real {
    fn from(v: f64) -> Self {
        Real(v)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_nan() {
            s.serialize_none()
        } else if v == f64::INFINITY {
            s.serialize_str("inf")
        } else if v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(v)
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct RealVisitor;
        impl<'de> Visitor<'de> for RealVisitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, \"inf\", \"-inf\" or null")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Real, E> {
                parse_real(v).map_err(E::custom)
            }
            fn visit_unit<E: de::Error>(self) -> std::result::Result<Real, E> {
                Ok(Real(f64::NAN))
            }
            fn visit_none<E: de::Error>(self) -> std::result::Result<Real, E> {
                Ok(Real(f64::NAN))
            }
        }
        d.deserialize_any(RealVisitor)
    }
}

/// Parse a real, accepting the `inf` sentinel spellings.
pub fn parse_real(s: &str) -> std::result::Result<Real, String> {
    match s.trim() {
        "inf" | "+inf" | "Infinity" => Ok(Real(f64::INFINITY)),
        "-inf" | "-Infinity" => Ok(Real(f64::NEG_INFINITY)),
        t => t.parse::<f64>().map(Real).map_err(|e| format!("{t:?}: {e}")),
    }
}

pub type ValueMap = BTreeMap<String, Real>;

pub fn measures_map(m: &Measures) -> ValueMap {
    Measures::NAMES
        .iter()
        .zip(m.values())
        .map(|(n, v)| (n.to_string(), Real(v)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    StringPlugin,
    Cluster,
    MonteCarlo,
}

/// Echo of every parameter that influenced the numbers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(skip_serializing_if = "Option::is_none", rename = "K")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", rename = "K_effective")]
    pub k_effective: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", rename = "L")]
    pub grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unigram_discount: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub seed: Option<u64>,
    pub values: ValueMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub schema: String,
    pub method: Method,
    /// Mean over replicates.
    pub values: ValueMap,
    /// Sample standard deviation, present iff there are at least 2 replicates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<ValueMap>,
    pub replicates: Vec<Replicate>,
    pub config: ConfigEcho,
    pub frontier_convention: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Frontier of the first replicate, kept for CSV export.
    #[serde(skip)]
    pub curve: Option<DivergenceCurve>,
}

impl DivergenceReport {
    /// A single-run report.
    pub fn single(method: Method, seed: Option<u64>, values: ValueMap, config: ConfigEcho) -> Self {
        DivergenceReport {
            schema: SCHEMA.to_string(),
            method,
            values: values.clone(),
            std: None,
            replicates: vec![Replicate { seed, values }],
            config,
            frontier_convention: FRONTIER_CONVENTION.to_string(),
            warnings: Vec::new(),
            curve: None,
        }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.get(name).map(|r| r.0)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: DivergenceReport =
            serde_json::from_str(s).map_err(|e| Error::parse("divergence report", e.to_string()))?;
        if r.schema != SCHEMA {
            return Err(Error::Validation(format!("unsupported schema {:?}", r.schema)));
        }
        Ok(r)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.iter().any(|x| x.is_infinite()) {
        let mean = xs.iter().sum::<f64>();
        return (mean, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Run `run` once per seed and merge the single-run reports in seed order.
///
/// Replicates keep their own values; `values` holds the per-measure mean and
/// `std` the sample standard deviation when there are two or more seeds. A
/// measure that is infinite in any replicate has an infinite mean and an
/// undefined (null) deviation.
pub fn replicate<F>(seeds: &[u64], run: F) -> Result<DivergenceReport>
where
    F: Fn(u64) -> Result<DivergenceReport> + Sync,
{
    use rayon::prelude::*;
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let runs: Vec<DivergenceReport> = seeds.par_iter().map(|&s| run(s)).collect::<Result<_>>()?;
    let first = &runs[0];
    let mut values = ValueMap::new();
    let mut std = ValueMap::new();
    for name in first.values.keys() {
        let xs: Vec<f64> = runs
            .iter()
            .map(|r| r.values.get(name).map_or(f64::NAN, |v| v.0))
            .collect();
        let (m, s) = mean_std(&xs);
        values.insert(name.clone(), Real(m));
        std.insert(name.clone(), Real(s));
    }
    let mut warnings: Vec<String> = Vec::new();
    for r in &runs {
        for w in &r.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
    }
    let mut config = first.config.clone();
    config.seeds = seeds.to_vec();
    Ok(DivergenceReport {
        schema: SCHEMA.to_string(),
        method: first.method,
        values,
        std: (seeds.len() >= 2).then_some(std),
        replicates: runs
            .iter()
            .zip(seeds)
            .map(|(r, &s)| Replicate {
                seed: Some(s),
                values: r.values.clone(),
            })
            .collect(),
        config,
        frontier_convention: FRONTIER_CONVENTION.to_string(),
        warnings,
        curve: first.curve.clone(),
    })
}
