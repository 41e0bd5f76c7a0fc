//! Divergence measures between text distributions: string-level plug-in
//! estimates from Kneser-Ney models, cluster-level estimates from embedding
//! histograms, and the tooling around them (perturbations, probing,
//! metric meta-evaluation).

pub mod corpus;
pub mod distributions;
pub mod divergences;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod metaeval;
pub mod ngram;
pub mod probing;
pub mod report;
pub mod seed;

pub use corpus::{Corpus, Document, PerturbationKind, Scheme, Stopwords, TokenizedDoc};
pub use distributions::DiscreteDistribution;
pub use divergences::{DivergenceCurve, Measures};
pub use error::{Error, Result};
pub use estimators::{ClusterSuiteConfig, StringSuiteConfig};
pub use geometry::{ClusterModel, EmbeddingMatrix};
pub use ngram::{KnConfig, NGramModel};
pub use report::DivergenceReport;
