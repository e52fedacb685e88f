//! Scoring capabilities consumed by the pipeline.
//!
//! Three capabilities are kept as separate traits so a bundle can mix
//! backends, e.g. a remote masked LM with the local hash embedder. Every call
//! carries the target [`Locale`].

mod feature;
mod hash_embed;
mod ngram;
mod remote;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use feature::{FeatureHumorScorer, FeatureWeights};
pub use hash_embed::HashEmbedder;
pub use ngram::{lm_tokens, NgramModel, NgramScorer, BOUNDARY};
pub use remote::{EmbeddingLayer, RemoteScorer};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("response schema violation: {0}")]
    Schema(String),
    #[error("response invariant violated: {0}")]
    Invariant(String),
    #[error("invalid query: {0}")]
    Query(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("n-gram order {0} outside 2..=5")]
    Order(usize),
    #[error("cannot embed an empty token list")]
    EmptyEmbedding,
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Locale {
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "US")]
    Us,
    #[serde(rename = "neutral")]
    Neutral,
}

impl fmt::Display for Locale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Locale::In => "IN",
            Locale::Us => "US",
            Locale::Neutral => "neutral",
        })
    }
}

impl FromStr for Locale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "in" => Ok(Locale::In),
            "us" => Ok(Locale::Us),
            "neutral" | "-" => Ok(Locale::Neutral),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskScore {
    pub word: String,
    pub log_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct HumorScore {
    pub p_funny: f64,
}

impl HumorScore {
    pub fn new(p_funny: f64) -> Result<Self, ScorerError> {
        if (0.0..=1.0).contains(&p_funny) {
            Ok(HumorScore { p_funny })
        } else {
            Err(ScorerError::Invariant(format!("p_funny {p_funny} outside [0, 1]")))
        }
    }

    pub fn p_not_funny(self) -> f64 {
        1.0 - self.p_funny
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEmbedding(pub Vec<f64>);

impl TokenEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub trait MaskScorer: Send + Sync {
    /// At most `top_k` candidates for the `mask_index`-th mask marker in
    /// `masked`, sorted by descending log-probability, ties by word.
    fn mask_distribution(
        &self,
        masked: &str,
        mask_index: usize,
        top_k: usize,
        locale: Locale,
    ) -> Result<Vec<MaskScore>, ScorerError>;
}

pub trait HumorScorer: Send + Sync {
    fn humor_probability(&self, masked: &str, filled: &str, locale: Locale) -> Result<HumorScore, ScorerError>;
}

pub trait TokenEmbedder: Send + Sync {
    /// One vector per whitespace-separated word of `text`.
    fn token_embeddings(&self, text: &str, locale: Locale) -> Result<Vec<TokenEmbedding>, ScorerError>;
}

/// The capabilities one pipeline run needs, plus the locale it runs for.
#[derive(Clone)]
pub struct ScorerBundle {
    pub mask: Arc<dyn MaskScorer>,
    pub humor: Arc<dyn HumorScorer>,
    pub embed: Arc<dyn TokenEmbedder>,
    pub locale: Locale,
}

impl fmt::Debug for ScorerBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScorerBundle").field("locale", &self.locale).finish_non_exhaustive()
    }
}

/// Sorts by descending log-probability, breaking ties by word.
pub fn sort_mask_scores(scores: &mut [MaskScore]) {
    scores.sort_by(|a, b| b.log_probability.total_cmp(&a.log_probability).then_with(|| a.word.cmp(&b.word)));
}

/// Component-wise mean of token vectors.
pub fn sentence_embedding(tokens: &[TokenEmbedding]) -> Result<TokenEmbedding, ScorerError> {
    let first = tokens.first().ok_or(ScorerError::EmptyEmbedding)?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for t in tokens {
        if t.dim() != dim {
            return Err(ScorerError::DimensionMismatch(dim, t.dim()));
        }
        for (a, x) in acc.iter_mut().zip(&t.0) {
            *a += x;
        }
    }
    let n = tokens.len() as f64;
    Ok(TokenEmbedding(acc.into_iter().map(|a| a / n).collect()))
}

pub fn cosine_similarity(a: &TokenEmbedding, b: &TokenEmbedding) -> Result<f64, ScorerError> {
    if a.dim() != b.dim() {
        return Err(ScorerError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(ScorerError::ZeroVector);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn v(xs: &[f64]) -> TokenEmbedding {
        TokenEmbedding(xs.to_vec())
    }

    #[test]
    fn mean_of_singleton_is_identity() {
        assert_eq!(sentence_embedding(&[v(&[0.3, -2.0])]).unwrap(), v(&[0.3, -2.0]));
    }

    #[test]
    fn mean_of_unit_vectors() {
        assert_eq!(sentence_embedding(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap(), v(&[0.5, 0.5]));
    }

    #[test]
    fn mean_matches_summation_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let vs: Vec<TokenEmbedding> =
            (0..3).map(|_| TokenEmbedding((0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect();
        let mean = sentence_embedding(&vs).unwrap();
        for d in 0..16 {
            let oracle = (vs[0].0[d] + vs[1].0[d] + vs[2].0[d]) / 3.0;
            assert!((mean.0[d] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_errors() {
        assert!(matches!(sentence_embedding(&[]), Err(ScorerError::EmptyEmbedding)));
        assert!(matches!(sentence_embedding(&[v(&[1.0]), v(&[1.0, 2.0])]), Err(ScorerError::DimensionMismatch(1, 2))));
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_similarity(&v(&[0.2, 0.4]), &v(&[0.2, 0.4])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 3.0])).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let c = cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        assert!((c - 0.9746318).abs() < 1e-6);
        assert!(matches!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(ScorerError::ZeroVector)));
    }

    #[test]
    fn locale_parsing() {
        assert_eq!("in".parse::<Locale>().unwrap(), Locale::In);
        assert_eq!("US".parse::<Locale>().unwrap(), Locale::Us);
        assert!("fr".parse::<Locale>().is_err());
    }
}
