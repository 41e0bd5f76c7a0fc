//! Run configuration: defaults, JSON config file, flag overrides.

use std::path::Path;

use divergelab::Scheme;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every numeric knob of a run. Fields absent from a config file keep
/// their defaults; command-line flags override both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub s_string: f64,
    pub s_cluster: f64,
    #[serde(rename = "L")]
    pub grid: usize,
    pub order: usize,
    pub discount: f64,
    pub unigram_discount: f64,
    pub seeds: Vec<u64>,
    pub scheme: Scheme,
    pub variance_target: f64,
    pub max_iter: usize,
    pub tolerance: f64,
    pub hash_dim: usize,
    pub hash_seed: u64,
    pub k_grid: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 500,
            alpha: 1.0,
            s_string: 0.2,
            s_cluster: 5.0,
            grid: 99,
            order: 5,
            discount: 0.75,
            unigram_discount: 0.75,
            seeds: vec![0],
            scheme: Scheme::UnicodeWord,
            variance_target: 0.9,
            max_iter: 300,
            tolerance: 1e-6,
            hash_dim: 256,
            hash_seed: 0,
            k_grid: vec![2, 5, 10, 50, 100, 500],
        }
    }
}

fn bad(field: &'static str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field,
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k < 1 {
            return Err(bad("K", "must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(bad("alpha", format!("{} must be finite and >= 0", self.alpha)));
        }
        for (field, s) in [("s_string", self.s_string), ("s_cluster", self.s_cluster)] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(bad(field, format!("{s} must be finite and > 0")));
            }
        }
        if self.grid < 3 {
            return Err(bad("L", format!("{} must be at least 3", self.grid)));
        }
        if self.order < 1 {
            return Err(bad("order", "must be at least 1"));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(bad("discount", format!("{} must lie in (0, 1)", self.discount)));
        }
        if !(self.unigram_discount >= 0.0 && self.unigram_discount < 1.0) {
            return Err(bad("unigram_discount", format!("{} must lie in [0, 1)", self.unigram_discount)));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "at least one seed is required"));
        }
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return Err(bad("variance_target", format!("{} must lie in (0, 1]", self.variance_target)));
        }
        if self.max_iter < 1 {
            return Err(bad("max_iter", "must be at least 1"));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(bad("tolerance", format!("{} must be finite and >= 0", self.tolerance)));
        }
        if self.hash_dim < 8 {
            return Err(bad("hash_dim", format!("{} must be at least 8", self.hash_dim)));
        }
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return Err(bad("k_grid", "must be a non-empty list of positive integers"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"K": 20, "seeds": [1, 2]}"#).unwrap();
        assert_eq!(c.k, 20);
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.s_cluster, 5.0);
        assert_eq!(c.order, 5);
        assert!(serde_json::from_str::<RunConfig>(r#"{"k": 20}"#).is_err());
    }

    #[test]
    fn validation_names_field() {
        let c = RunConfig { s_cluster: 0.0, ..Default::default() };
        match c.validate() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "s_cluster"),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::default().validate().is_ok());
    }
}
