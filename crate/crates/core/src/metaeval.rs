//! Metric meta-evaluation: correlation of metric scores with human scores
//! across systems.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::parse_real;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Validation(format!("correlation needs at least 3 points, got {}", x.len())));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite value {v}")));
    }
    Ok(())
}

/// Sample Pearson correlation (two-pass, centered).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

impl CorrelationKind {
    pub fn correlate(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            CorrelationKind::Pearson => pearson(x, y),
            CorrelationKind::Spearman => spearman(x, y),
        }
    }
}

/// `|corr(human, metric)|`.
pub fn metric_quality(human: &[f64], metric: &[f64], kind: CorrelationKind) -> Result<f64> {
    Ok(kind.correlate(human, metric)?.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentRow {
    pub system_id: String,
    pub human_score: f64,
    pub metric_scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InfinitePolicy {
    /// Keep infinite metric values; they are excluded per metric when scoring.
    #[default]
    Exclude,
    /// Fail the load on the first infinite metric value.
    Reject,
}

/// Human and metric scores per system.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgmentTable {
    pub metrics: Vec<String>,
    pub rows: Vec<JudgmentRow>,
}

impl JudgmentTable {
    pub fn new(metrics: Vec<String>, rows: Vec<JudgmentRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.system_id.as_str()) {
                return Err(Error::Validation(format!("duplicate system id {:?}", r.system_id)));
            }
            if !r.human_score.is_finite() {
                return Err(Error::Validation(format!("non-finite human score for {:?}", r.system_id)));
            }
        }
        Ok(JudgmentTable { metrics, rows })
    }

    /// Parse CSV with header `system_id,human_score,<metric>...`. Metric
    /// cells may hold the `inf` sentinel.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, policy: InfinitePolicy) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::parse("judgment CSV header", e.to_string()))?.clone();
        if header.len() < 3 || &header[0] != "system_id" || &header[1] != "human_score" {
            return Err(Error::parse(
                "judgment CSV header",
                "expected system_id,human_score,<metric>...",
            ));
        }
        let metrics: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = format!("judgment CSV line {}", i + 2);
            let rec = rec.map_err(|e| Error::parse(line.clone(), e.to_string()))?;
            let system_id = rec[0].to_string();
            let human_score = parse_real(&rec[1]).map_err(|e| Error::parse(line.clone(), e))?.0;
            let mut metric_scores = BTreeMap::new();
            for (m, cell) in metrics.iter().zip(rec.iter().skip(2)) {
                let v = parse_real(cell).map_err(|e| Error::parse(line.clone(), e))?.0;
                if v.is_nan() {
                    return Err(Error::parse(line.clone(), format!("NaN for metric {m:?}")));
                }
                if v.is_infinite() && policy == InfinitePolicy::Reject {
                    return Err(Error::InfiniteScore {
                        system: system_id,
                        metric: m.clone(),
                    });
                }
                metric_scores.insert(m.clone(), v);
            }
            rows.push(JudgmentRow {
                system_id,
                human_score,
                metric_scores,
            });
        }
        Self::new(metrics, rows)
    }

    pub fn from_csv(path: &Path, policy: InfinitePolicy) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(f, policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricQuality {
    pub metric: String,
    /// Systems used after dropping infinite values.
    pub n: usize,
    pub excluded_infinite: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub quality_pearson: Option<f64>,
    pub quality_spearman: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub schema: String,
    pub systems: usize,
    pub metrics: Vec<MetricQuality>,
}

/// Quality of every metric column under both correlation kinds.
pub fn quality_report(table: &JudgmentTable) -> QualityReport {
    let metrics = table
        .metrics
        .iter()
        .map(|m| {
            let (mut human, mut metric) = (Vec::new(), Vec::new());
            let mut excluded = 0;
            for r in &table.rows {
                match r.metric_scores.get(m) {
                    Some(v) if v.is_finite() => {
                        human.push(r.human_score);
                        metric.push(*v);
                    }
                    _ => excluded += 1,
                }
            }
            let p = pearson(&human, &metric);
            let s = spearman(&human, &metric);
            let error = p.as_ref().err().or(s.as_ref().err()).map(|e| e.to_string());
            let p = p.ok();
            let s = s.ok();
            MetricQuality {
                metric: m.clone(),
                n: human.len(),
                excluded_infinite: excluded,
                pearson: p,
                spearman: s,
                quality_pearson: p.map(f64::abs),
                quality_spearman: s.map(f64::abs),
                error,
            }
        })
        .collect();
    QualityReport {
        schema: "quality/1".into(),
        systems: table.rows.len(),
        metrics,
    }
}
