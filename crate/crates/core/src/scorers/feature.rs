//! Deterministic stand-in for a trained sentence-pair humor classifier.
//!
//! `p_funny = logistic(w · f)` with features
//!
//! * incongruity: mean negated LM log-probability of the fills in context,
//! * frequency: mean lexicon frequency percentile of the fills,
//! * topic: fraction of fills whose vector is within `topic_threshold`
//!   cosine of the mean vector of the sentence's literal words,
//! * bias: constant 1.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::ngram::lm_tokens;
use super::{
    cosine_similarity, sentence_embedding, HashEmbedder, HumorScore, HumorScorer, Locale, NgramScorer, ScorerError,
};
use crate::lexicon::Lexicon;
use crate::template::MASK;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureWeights {
    pub incongruity: f64,
    pub frequency: f64,
    pub topic: f64,
    pub bias: f64,
    pub topic_threshold: f64,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights { incongruity: 0.4, frequency: -1.0, topic: -0.5, bias: -1.0, topic_threshold: 0.2 }
    }
}

impl FeatureWeights {
    pub const ZERO: FeatureWeights =
        FeatureWeights { incongruity: 0.0, frequency: 0.0, topic: 0.0, bias: 0.0, topic_threshold: 0.2 };

    /// Parses `key = value` lines. `incongruity`, `frequency`, `topic` and
    /// `bias` are required; `topic_threshold` defaults to 0.2.
    pub fn parse(text: &str) -> Result<Self, ScorerError> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |why: &str| ScorerError::Config(format!("weights line {}: {why}", i + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
            let k = k.trim();
            if !matches!(k, "incongruity" | "frequency" | "topic" | "bias" | "topic_threshold") {
                return Err(bad(&format!("unknown key `{k}`")));
            }
            let v: f64 = v.trim().parse().map_err(|_| bad("value is not a number"))?;
            if !v.is_finite() {
                return Err(bad("value is not finite"));
            }
            if values.insert(k.to_string(), v).is_some() {
                return Err(bad(&format!("duplicate key `{k}`")));
            }
        }
        let get =
            |k: &str| values.get(k).copied().ok_or_else(|| ScorerError::Config(format!("weights file lacks `{k}`")));
        Ok(FeatureWeights {
            incongruity: get("incongruity")?,
            frequency: get("frequency")?,
            topic: get("topic")?,
            bias: get("bias")?,
            topic_threshold: values.get("topic_threshold").copied().unwrap_or(0.2),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FeatureHumorScorer {
    weights: FeatureWeights,
    lm: Arc<NgramScorer>,
    lexicon: Arc<Lexicon>,
    embedder: HashEmbedder,
}

/// Feature values for one (masked, filled) pair, bias excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumorFeatures {
    pub incongruity: f64,
    pub frequency: f64,
    pub topic: f64,
}

impl FeatureHumorScorer {
    pub fn new(weights: FeatureWeights, lm: Arc<NgramScorer>, lexicon: Arc<Lexicon>, embedder: HashEmbedder) -> Self {
        FeatureHumorScorer { weights, lm, lexicon, embedder }
    }

    pub fn features(&self, masked: &str, filled: &str, locale: Locale) -> Result<HumorFeatures, ScorerError> {
        let m = lm_tokens(masked);
        let f = lm_tokens(filled);
        if m.len() != f.len() {
            return Err(ScorerError::Query(format!(
                "masked and filled sentences do not align ({} vs {} tokens)",
                m.len(),
                f.len()
            )));
        }
        let mut fill_positions = Vec::new();
        for (i, (a, b)) in m.iter().zip(&f).enumerate() {
            if a == MASK {
                if b != MASK {
                    fill_positions.push(i);
                }
            } else if a != b {
                return Err(ScorerError::Query(format!("sentences differ outside blanks at token {i}")));
            }
        }
        if fill_positions.is_empty() {
            return Ok(HumorFeatures { incongruity: 0.0, frequency: 0.0, topic: 0.0 });
        }
        let n = fill_positions.len() as f64;
        let model = self.lm.model(locale);
        let incongruity = fill_positions.iter().map(|&p| -model.word_log_prob(&f, p, &f[p])).sum::<f64>() / n;
        let frequency = fill_positions.iter().map(|&p| self.lexicon.frequency_percentile(&f[p])).sum::<f64>() / n;

        let literal: Vec<_> = m
            .iter()
            .filter(|t| *t != MASK && t.chars().any(char::is_alphanumeric))
            .map(|t| self.embedder.embed_word(t))
            .collect();
        let topic = if literal.is_empty() {
            0.0
        } else {
            let centre = sentence_embedding(&literal)?;
            let mut hits = 0usize;
            for &p in &fill_positions {
                // A centre of cancelling vectors is possible in principle; count it as no match.
                if let Ok(c) = cosine_similarity(&self.embedder.embed_word(&f[p]), &centre) {
                    if c >= self.weights.topic_threshold {
                        hits += 1;
                    }
                }
            }
            hits as f64 / n
        };
        Ok(HumorFeatures { incongruity, frequency, topic })
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl HumorScorer for FeatureHumorScorer {
    fn humor_probability(&self, masked: &str, filled: &str, locale: Locale) -> Result<HumorScore, ScorerError> {
        let f = self.features(masked, filled, locale)?;
        let w = &self.weights;
        let z = w.incongruity * f.incongruity + w.frequency * f.frequency + w.topic * f.topic + w.bias;
        HumorScore::new(logistic(z))
    }
}
