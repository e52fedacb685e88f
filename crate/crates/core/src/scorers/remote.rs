//! HTTP client for the model service (`/v1` JSON protocol).
//!
//! Every response is checked against the protocol schema and the scorer
//! invariants. Violations surface as [`ScorerError::Schema`] or
//! [`ScorerError::Invariant`]; nothing is patched up client-side.

use std::sync::OnceLock;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{HumorScore, HumorScorer, Locale, MaskScore, MaskScorer, ScorerError, TokenEmbedder, TokenEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingLayer {
    #[default]
    SecondToLast,
    SumLast4,
}

#[derive(Debug)]
pub struct RemoteScorer {
    base: String,
    agent: ureq::Agent,
    layer: EmbeddingLayer,
    dim: OnceLock<usize>,
}

#[derive(Serialize)]
struct MaskRequest<'a> {
    text: &'a str,
    mask_index: usize,
    top_k: usize,
    locale: Locale,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskResponse {
    candidates: Vec<Candidate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Candidate {
    word: String,
    log_prob: f64,
}

#[derive(Serialize)]
struct HumorRequest<'a> {
    masked_text: &'a str,
    filled_text: &'a str,
    locale: Locale,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HumorResponse {
    p_funny: f64,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
    locale: Locale,
    layer: EmbeddingLayer,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbedResponse {
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Health {
    pub status: String,
    pub locales: Vec<String>,
    pub layer: EmbeddingLayer,
}

impl RemoteScorer {
    pub fn new(endpoint: &str) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(120))
            .build();
        RemoteScorer {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
            layer: EmbeddingLayer::default(),
            dim: OnceLock::new(),
        }
    }

    pub fn with_layer(mut self, layer: EmbeddingLayer) -> Self {
        self.layer = layer;
        self
    }

    pub fn health(&self) -> Result<Health, ScorerError> {
        let resp = self.agent.get(&format!("{}/v1/health", self.base)).call();
        decode(resp)
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, ScorerError> {
        let resp = self.agent.post(&format!("{}{path}", self.base)).send_json(body);
        decode(resp)
    }
}

fn decode<T: DeserializeOwned>(resp: Result<ureq::Response, ureq::Error>) -> Result<T, ScorerError> {
    let resp = match resp {
        Ok(r) => r,
        Err(ureq::Error::Status(code, r)) => {
            let body = r.into_string().unwrap_or_default();
            return Err(ScorerError::Transport(format!("HTTP {code}: {}", body.trim())));
        }
        Err(e) => return Err(ScorerError::Transport(e.to_string())),
    };
    let text = resp.into_string().map_err(|e| ScorerError::Transport(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| ScorerError::Schema(e.to_string()))
}

impl MaskScorer for RemoteScorer {
    fn mask_distribution(
        &self,
        masked: &str,
        mask_index: usize,
        top_k: usize,
        locale: Locale,
    ) -> Result<Vec<MaskScore>, ScorerError> {
        if top_k == 0 {
            return Err(ScorerError::Query("top_k must be at least 1".into()));
        }
        let resp: MaskResponse =
            self.post("/v1/mask_scores", &MaskRequest { text: masked, mask_index, top_k, locale })?;
        validate_candidates(resp.candidates, top_k)
    }
}

fn validate_candidates(candidates: Vec<Candidate>, top_k: usize) -> Result<Vec<MaskScore>, ScorerError> {
    if candidates.len() > top_k {
        return Err(ScorerError::Invariant(format!("{} candidates for top_k {top_k}", candidates.len())));
    }
    let mut seen = std::collections::HashSet::new();
    for c in &candidates {
        if c.word.is_empty() {
            return Err(ScorerError::Invariant("empty candidate word".into()));
        }
        if !c.log_prob.is_finite() || c.log_prob > 0.0 {
            return Err(ScorerError::Invariant(format!("log_prob {} for `{}`", c.log_prob, c.word)));
        }
        if !seen.insert(c.word.as_str()) {
            return Err(ScorerError::Invariant(format!("duplicate candidate `{}`", c.word)));
        }
    }
    if candidates.windows(2).any(|w| w[0].log_prob < w[1].log_prob) {
        return Err(ScorerError::Invariant("candidates not sorted by descending log_prob".into()));
    }
    let mut out: Vec<MaskScore> =
        candidates.into_iter().map(|c| MaskScore { word: c.word, log_probability: c.log_prob }).collect();
    // Only reorders exact ties, which the service may emit in any order.
    super::sort_mask_scores(&mut out);
    Ok(out)
}

impl HumorScorer for RemoteScorer {
    fn humor_probability(&self, masked: &str, filled: &str, locale: Locale) -> Result<HumorScore, ScorerError> {
        let resp: HumorResponse =
            self.post("/v1/humor", &HumorRequest { masked_text: masked, filled_text: filled, locale })?;
        if !resp.p_funny.is_finite() {
            return Err(ScorerError::Invariant("p_funny is not finite".into()));
        }
        HumorScore::new(resp.p_funny)
    }
}

impl TokenEmbedder for RemoteScorer {
    fn token_embeddings(&self, text: &str, locale: Locale) -> Result<Vec<TokenEmbedding>, ScorerError> {
        let resp: EmbedResponse = self.post("/v1/embed", &EmbedRequest { text, locale, layer: self.layer })?;
        let words = text.split_whitespace().count();
        if resp.tokens.len() != resp.vectors.len() {
            return Err(ScorerError::Invariant(format!(
                "{} tokens but {} vectors",
                resp.tokens.len(),
                resp.vectors.len()
            )));
        }
        if resp.vectors.len() != words {
            return Err(ScorerError::Invariant(format!("{} vectors for {words} words", resp.vectors.len())));
        }
        let mut out = Vec::with_capacity(words);
        for v in resp.vectors {
            let expected = *self.dim.get_or_init(|| v.len());
            if v.len() != expected || v.is_empty() {
                return Err(ScorerError::Invariant(format!("vector of length {} (expected {expected})", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ScorerError::Invariant("non-finite embedding entry".into()));
            }
            out.push(TokenEmbedding(v));
        }
        Ok(out)
    }
}
