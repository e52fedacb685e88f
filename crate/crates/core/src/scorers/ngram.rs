//! Pseudo-bidirectional n-gram masked LM.
//!
//! Two additive-smoothed models are counted, one over sentences read
//! forwards and one over sentences read backwards. A candidate for a mask is
//! scored by the mean of its forward log-probability given the left context
//! and its backward log-probability given the right context. Histories are
//! cut short at other mask markers and at out-of-vocabulary words.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{sort_mask_scores, Locale, MaskScore, MaskScorer, ScorerError};
use crate::template::MASK;

/// Sentence padding symbol. It is part of the prediction vocabulary but is
/// never offered as a fill candidate.
pub const BOUNDARY: &str = "<b>";

/// Lower-cased word and punctuation tokens; mask markers survive intact.
pub fn lm_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        let mut word = String::new();
        while let Some(ch) = rest.chars().next() {
            if rest.starts_with(MASK) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(MASK.to_string());
                rest = &rest[MASK.len()..];
                continue;
            }
            if ch.is_alphanumeric() || ch == '-' || ch == '\'' {
                word.extend(ch.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            }
            rest = &rest[ch.len_utf8()..];
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
struct DirectionCounts {
    ngrams: HashMap<Vec<u32>, u64>,
    contexts: HashMap<Vec<u32>, u64>,
}

impl DirectionCounts {
    fn add(&mut self, gram: &[u32], count: u64) {
        *self.ngrams.entry(gram.to_vec()).or_default() += count;
        *self.contexts.entry(gram[..gram.len() - 1].to_vec()).or_default() += count;
    }

    fn count_sentence(&mut self, ids: &[u32], order: usize, boundary: u32) {
        let mut padded = vec![boundary; order - 1];
        padded.extend_from_slice(ids);
        padded.push(boundary);
        for i in order - 1..padded.len() {
            for h in 0..order {
                self.add(&padded[i - h..=i], 1);
            }
        }
    }

    fn sorted(&self) -> Vec<(Vec<u32>, u64)> {
        let mut v: Vec<_> = self.ngrams.iter().map(|(k, c)| (k.clone(), *c)).collect();
        v.sort();
        v
    }
}

#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    smoothing: f64,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    boundary: u32,
    forward: DirectionCounts,
    backward: DirectionCounts,
}

#[derive(Serialize, Deserialize)]
struct Artifact {
    format: String,
    order: usize,
    smoothing: f64,
    vocab: Vec<String>,
    forward: Vec<(Vec<u32>, u64)>,
    backward: Vec<(Vec<u32>, u64)>,
}

const ARTIFACT_FORMAT: &str = "funlib-ngram-v1";

impl NgramModel {
    /// Counts a model from pre-split sentences.
    pub fn train<I, S>(sentences: I, order: usize, smoothing: f64) -> Result<Self, ScorerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if !(2..=5).contains(&order) {
            return Err(ScorerError::Order(order));
        }
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(ScorerError::Config(format!("smoothing must be positive, got {smoothing}")));
        }
        let tokenized: Vec<Vec<String>> = sentences
            .into_iter()
            .map(|s| lm_tokens(s.as_ref()).into_iter().filter(|t| t != MASK).collect::<Vec<_>>())
            .filter(|t| !t.is_empty())
            .collect();
        if tokenized.is_empty() {
            return Err(ScorerError::EmptyCorpus);
        }
        let types: BTreeSet<&str> = tokenized.iter().flatten().map(String::as_str).chain([BOUNDARY]).collect();
        let vocab: Vec<String> = types.into_iter().map(str::to_string).collect();
        let mut model = Self::empty(order, smoothing, vocab);
        for sentence in &tokenized {
            let ids: Vec<u32> = sentence.iter().map(|t| model.index[t]).collect();
            model.forward.count_sentence(&ids, order, model.boundary);
            let reversed: Vec<u32> = ids.iter().rev().copied().collect();
            model.backward.count_sentence(&reversed, order, model.boundary);
        }
        Ok(model)
    }

    fn empty(order: usize, smoothing: f64, vocab: Vec<String>) -> Self {
        let index: HashMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        let boundary = index[BOUNDARY];
        NgramModel {
            order,
            smoothing,
            vocab,
            index,
            boundary,
            forward: DirectionCounts::default(),
            backward: DirectionCounts::default(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Prediction vocabulary, boundary symbol included.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn unigram_count(&self, word: &str) -> u64 {
        self.index.get(word).and_then(|&id| self.forward.ngrams.get([id].as_slice())).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let artifact = Artifact {
            format: ARTIFACT_FORMAT.into(),
            order: self.order,
            smoothing: self.smoothing,
            vocab: self.vocab.clone(),
            forward: self.forward.sorted(),
            backward: self.backward.sorted(),
        };
        serde_json::to_string(&artifact).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScorerError> {
        let a: Artifact = serde_json::from_str(text).map_err(|e| ScorerError::Config(e.to_string()))?;
        if a.format != ARTIFACT_FORMAT {
            return Err(ScorerError::Config(format!("unknown artifact format `{}`", a.format)));
        }
        if !(2..=5).contains(&a.order) {
            return Err(ScorerError::Order(a.order));
        }
        if !a.vocab.iter().any(|w| w == BOUNDARY) {
            return Err(ScorerError::Config("artifact vocabulary lacks the boundary symbol".into()));
        }
        let size = a.vocab.len() as u32;
        let mut model = Self::empty(a.order, a.smoothing, a.vocab);
        for (dir, grams) in [(&mut model.forward, a.forward), (&mut model.backward, a.backward)] {
            for (gram, count) in grams {
                if gram.is_empty() || gram.len() > a.order || gram.iter().any(|&id| id >= size) {
                    return Err(ScorerError::Config("artifact n-gram out of range".into()));
                }
                dir.add(&gram, count);
            }
        }
        Ok(model)
    }

    fn log_prob(&self, counts: &DirectionCounts, key: &mut Vec<u32>, word: u32) -> f64 {
        let ctx = counts.contexts.get(key.as_slice()).copied().unwrap_or(0);
        key.push(word);
        let joint = counts.ngrams.get(key.as_slice()).copied().unwrap_or(0);
        key.pop();
        let v = self.vocab.len() as f64;
        ((joint as f64 + self.smoothing) / (ctx as f64 + self.smoothing * v)).ln()
    }

    /// Left history for position `pos`, oldest first. Stops at masks and
    /// unknown words; padded with the boundary at sentence start.
    fn left_history(&self, tokens: &[String], pos: usize) -> Vec<u32> {
        let mut hist = Vec::new();
        let mut i = pos;
        while hist.len() < self.order - 1 {
            if i == 0 {
                hist.push(self.boundary);
                continue;
            }
            i -= 1;
            match self.index.get(&tokens[i]) {
                Some(&id) if tokens[i] != MASK => hist.push(id),
                _ => break,
            }
        }
        hist.reverse();
        hist
    }

    /// Right history in backward-model order (farthest token first).
    fn right_history(&self, tokens: &[String], pos: usize) -> Vec<u32> {
        let mut hist = Vec::new();
        let mut i = pos + 1;
        while hist.len() < self.order - 1 {
            if i >= tokens.len() {
                hist.push(self.boundary);
                continue;
            }
            match self.index.get(&tokens[i]) {
                Some(&id) if tokens[i] != MASK => hist.push(id),
                _ => break,
            }
            i += 1;
        }
        hist.reverse();
        hist
    }

    /// Full forward distribution over the vocabulary after the given
    /// history (oldest word first). Unknown history words shorten it.
    pub fn forward_distribution(&self, history: &[&str]) -> Vec<(String, f64)> {
        self.distribution(&self.forward, history)
    }

    /// Full backward distribution before the given right context (nearest
    /// word first).
    pub fn backward_distribution(&self, right_context: &[&str]) -> Vec<(String, f64)> {
        let reversed: Vec<&str> = right_context.iter().rev().copied().collect();
        self.distribution(&self.backward, &reversed)
    }

    fn distribution(&self, counts: &DirectionCounts, history: &[&str]) -> Vec<(String, f64)> {
        let start = history.len().saturating_sub(self.order - 1);
        let mut key: Vec<u32> = Vec::new();
        for w in &history[start..] {
            match self.index.get(*w) {
                Some(&id) => key.push(id),
                None => key.clear(),
            }
        }
        (0..self.vocab.len() as u32)
            .map(|id| (self.vocab[id as usize].clone(), self.log_prob(counts, &mut key, id)))
            .collect()
    }

    /// Mean of forward and backward log-probabilities of `word` at `pos`.
    /// Out-of-vocabulary words get the smoothing mass of an unseen type.
    pub fn word_log_prob(&self, tokens: &[String], pos: usize, word: &str) -> f64 {
        let mut left = self.left_history(tokens, pos);
        let mut right = self.right_history(tokens, pos);
        match self.index.get(&word.to_lowercase()) {
            Some(&id) => {
                0.5 * (self.log_prob(&self.forward, &mut left, id) + self.log_prob(&self.backward, &mut right, id))
            }
            None => {
                let unseen = |counts: &DirectionCounts, key: &[u32]| {
                    let ctx = counts.contexts.get(key).copied().unwrap_or(0) as f64;
                    (self.smoothing / (ctx + self.smoothing * self.vocab.len() as f64)).ln()
                };
                0.5 * (unseen(&self.forward, &left) + unseen(&self.backward, &right))
            }
        }
    }

    pub fn score_candidates(&self, tokens: &[String], pos: usize, top_k: usize) -> Vec<MaskScore> {
        let mut left = self.left_history(tokens, pos);
        let mut right = self.right_history(tokens, pos);
        let mut scores: Vec<MaskScore> = (0..self.vocab.len() as u32)
            .filter(|&id| id != self.boundary)
            .map(|id| MaskScore {
                word: self.vocab[id as usize].clone(),
                log_probability: 0.5
                    * (self.log_prob(&self.forward, &mut left, id) + self.log_prob(&self.backward, &mut right, id)),
            })
            .collect();
        sort_mask_scores(&mut scores);
        scores.truncate(top_k);
        scores
    }
}

/// Position of the `mask_index`-th marker in an LM token list.
pub(crate) fn find_mask(tokens: &[String], mask_index: usize) -> Result<usize, ScorerError> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| *t == MASK)
        .nth(mask_index)
        .map(|(i, _)| i)
        .ok_or_else(|| ScorerError::Query(format!("no mask marker with index {mask_index}")))
}

impl MaskScorer for NgramModel {
    fn mask_distribution(
        &self,
        masked: &str,
        mask_index: usize,
        top_k: usize,
        _locale: Locale,
    ) -> Result<Vec<MaskScore>, ScorerError> {
        let tokens = lm_tokens(masked);
        let pos = find_mask(&tokens, mask_index)?;
        Ok(self.score_candidates(&tokens, pos, top_k))
    }
}

/// Per-locale n-gram models with a neutral fallback.
#[derive(Debug, Clone)]
pub struct NgramScorer {
    models: Vec<(Locale, std::sync::Arc<NgramModel>)>,
}

impl NgramScorer {
    pub fn new(neutral: std::sync::Arc<NgramModel>) -> Self {
        NgramScorer { models: vec![(Locale::Neutral, neutral)] }
    }

    pub fn with_locale(mut self, locale: Locale, model: std::sync::Arc<NgramModel>) -> Self {
        self.models.retain(|(l, _)| *l != locale);
        self.models.push((locale, model));
        self
    }

    pub fn model(&self, locale: Locale) -> &NgramModel {
        self.models
            .iter()
            .find(|(l, _)| *l == locale)
            .or_else(|| self.models.iter().find(|(l, _)| *l == Locale::Neutral))
            .map(|(_, m)| m.as_ref())
            .expect("neutral model present")
    }
}

impl MaskScorer for NgramScorer {
    fn mask_distribution(
        &self,
        masked: &str,
        mask_index: usize,
        top_k: usize,
        locale: Locale,
    ) -> Result<Vec<MaskScore>, ScorerError> {
        self.model(locale).mask_distribution(masked, mask_index, top_k, locale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> NgramModel {
        NgramModel::train(["the cat sat . the cat ran ."], 2, 0.1).unwrap()
    }

    #[test]
    fn tokenizes_masks_and_punctuation() {
        assert_eq!(lm_tokens("A [MASK]. Don't"), vec!["a", "[MASK]", ".", "don't"]);
    }

    #[test]
    fn bigram_ranks_cat_first() {
        let m = toy();
        let out = m.mask_distribution("the [MASK] sat", 0, 10, Locale::Neutral).unwrap();
        assert_eq!(out[0].word, "cat");
        // Forward: c(the cat)=2, c(the)=2, V=6 ({<b>, ., cat, ran, sat, the}).
        // Backward: c(cat <- sat)=1, c(sat as history)=1.
        let fwd = (2.1f64 / 2.6).ln();
        let bwd = (1.1f64 / 1.6).ln();
        assert!((out[0].log_probability - 0.5 * (fwd + bwd)).abs() < 1e-12);
        assert!(out.iter().all(|s| s.word != BOUNDARY));
    }

    #[test]
    fn top_k_truncates() {
        let out = toy().mask_distribution("the [MASK] sat", 0, 1, Locale::Neutral).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn unseen_context_still_scores() {
        let out = toy().mask_distribution("zebra [MASK] quux", 0, 100, Locale::Neutral).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.windows(2).all(|w| w[0].log_probability >= w[1].log_probability));
    }

    #[test]
    fn distributions_sum_to_one() {
        let m = NgramModel::train(["a b c a b", "b c d", "c a"], 3, 0.5).unwrap();
        for hist in [&["a", "b"][..], &["b"][..], &[][..], &["zz", "c"][..]] {
            let f: f64 = m.forward_distribution(hist).iter().map(|(_, lp)| lp.exp()).sum();
            let b: f64 = m.backward_distribution(hist).iter().map(|(_, lp)| lp.exp()).sum();
            assert!((f - 1.0).abs() < 1e-9, "{f}");
            assert!((b - 1.0).abs() < 1e-9, "{b}");
        }
    }

    #[test]
    fn training_errors() {
        assert!(matches!(NgramModel::train(Vec::<&str>::new(), 2, 0.1), Err(ScorerError::EmptyCorpus)));
        assert!(matches!(NgramModel::train(["a b"], 1, 0.1), Err(ScorerError::Order(1))));
        assert!(matches!(NgramModel::train(["a b"], 6, 0.1), Err(ScorerError::Order(6))));
        assert!(NgramModel::train(["a b"], 2, 0.0).is_err());
    }

    #[test]
    fn missing_mask_is_a_query_error() {
        assert!(matches!(toy().mask_distribution("the cat sat", 0, 3, Locale::Neutral), Err(ScorerError::Query(_))));
    }

    #[test]
    fn artifact_round_trip() {
        let m = NgramModel::train(["the cat sat .", "a dog ran"], 3, 0.25).unwrap();
        let json = m.to_json();
        let back = NgramModel::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        let q = "the [MASK] ran";
        assert_eq!(
            m.mask_distribution(q, 0, 50, Locale::Neutral).unwrap(),
            back.mask_distribution(q, 0, 50, Locale::Neutral).unwrap()
        );
    }
}
