//! Story-level beam: chains one transformation per sentence, left to right.
//!
//! At each sentence with blanks the candidate transformations are first
//! shortlisted to those classified funny (`p_funny >= funny_threshold`),
//! backfilled with the best unfunny ones when fewer than `N` qualify. Every
//! (prefix, candidate) pair is then ranked by mean `p_funny` so far, cosine
//! similarity of the candidate's sentence embedding to the mean embedding of
//! the sentences already chosen, and finally by the fill words. The top `N`
//! prefixes advance.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scorers::{cosine_similarity, sentence_embedding, Locale, ScorerError, TokenEmbedder, TokenEmbedding};
use crate::sentence_fill::Transformation;
use crate::template::StoryTemplate;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("sentence {0} has no transformations")]
    EmptyTransformations(usize),
    #[error("sentence {0}: options do not match the template")]
    Misaligned(usize),
    #[error("sentence {0}: transformation lacks a humor score")]
    Unscored(usize),
    #[error("story has no sentence with blanks")]
    NoBlankSentences,
    #[error("embedder returned {got} vectors for {expected} words")]
    EmbeddingCount { expected: usize, got: usize },
    #[error("invalid compose parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "alpha")]
pub enum FinalRank {
    /// Funniness, then coherence, then fill words.
    Lexicographic,
    /// `alpha * funniness + (1 - alpha) * coherence`.
    Weighted(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComposeParams {
    pub beam_width: usize,
    pub funny_threshold: f64,
    pub final_rank: FinalRank,
}

impl Default for ComposeParams {
    fn default() -> Self {
        ComposeParams { beam_width: 100, funny_threshold: 0.5, final_rank: FinalRank::Lexicographic }
    }
}

impl ComposeParams {
    pub fn validate(&self) -> Result<(), ComposeError> {
        if self.beam_width == 0 {
            return Err(ComposeError::Params("beam width must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.funny_threshold) {
            return Err(ComposeError::Params(format!("funny threshold {} outside [0, 1]", self.funny_threshold)));
        }
        if let FinalRank::Weighted(a) = self.final_rank {
            if !(0.0..=1.0).contains(&a) {
                return Err(ComposeError::Params(format!("alpha {a} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// What the beam may place at one sentence position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceOptions {
    /// Blank-free sentence, passed through verbatim.
    Fixed(String),
    /// Ranked transformations of a sentence with blanks.
    Ranked(Vec<Transformation>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChosenSentence {
    Fixed(String),
    Filled(Transformation),
}

impl ChosenSentence {
    pub fn text(&self) -> &str {
        match self {
            ChosenSentence::Fixed(t) => t,
            ChosenSentence::Filled(t) => &t.filled_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletedStory {
    pub template_ref: String,
    pub chosen: Vec<ChosenSentence>,
    pub story_funniness: f64,
    pub avg_word_coherence: f64,
    /// Set when the story has fewer than two fills and coherence is
    /// vacuously 1.
    pub coherence_vacuous: bool,
}

impl CompletedStory {
    pub fn fills(&self) -> BTreeMap<usize, String> {
        self.chosen
            .iter()
            .filter_map(|c| match c {
                ChosenSentence::Filled(t) => Some(t.fills.clone()),
                ChosenSentence::Fixed(_) => None,
            })
            .flatten()
            .collect()
    }

    pub fn text(&self) -> String {
        self.chosen.iter().map(ChosenSentence::text).collect::<Vec<_>>().join("\n")
    }
}

/// Mean of the chosen `p_funny` over sentences with blanks.
pub fn story_funniness(chosen: &[ChosenSentence]) -> Result<f64, ComposeError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, c) in chosen.iter().enumerate() {
        if let ChosenSentence::Filled(t) = c {
            sum += t.p_funny.ok_or(ComposeError::Unscored(i))?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(ComposeError::NoBlankSentences);
    }
    Ok(sum / n as f64)
}

/// Mean cosine over all unordered pairs. Fewer than two vectors give
/// `(1.0, true)`.
pub fn mean_pairwise_cosine(vectors: &[TokenEmbedding]) -> Result<(f64, bool), ScorerError> {
    if vectors.len() < 2 {
        return Ok((1.0, true));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            sum += cosine_similarity(&vectors[i], &vectors[j])?;
            pairs += 1;
        }
    }
    Ok((sum / pairs as f64, false))
}

/// Mean pairwise similarity of the filled-word embeddings of a story,
/// taken in context from the embedder's per-word vectors.
pub fn avg_word_coherence(
    template: &StoryTemplate,
    chosen: &[ChosenSentence],
    embedder: &dyn TokenEmbedder,
    locale: Locale,
) -> Result<(f64, bool), ComposeError> {
    let mut vectors = Vec::new();
    for (i, c) in chosen.iter().enumerate() {
        if let ChosenSentence::Filled(t) = c {
            let sentence = template.sentences.get(i).ok_or(ComposeError::Misaligned(i))?;
            vectors.extend(embed_candidate(sentence, t, embedder, locale)?.fill_vectors);
        }
    }
    Ok(mean_pairwise_cosine(&vectors)?)
}

struct Embedded {
    sentence: TokenEmbedding,
    fill_vectors: Vec<TokenEmbedding>,
}

fn embed_candidate(
    sentence: &crate::template::SentenceTemplate,
    t: &Transformation,
    embedder: &dyn TokenEmbedder,
    locale: Locale,
) -> Result<Embedded, ComposeError> {
    let words = t.filled_text.split_whitespace().count();
    let tokens = embedder.token_embeddings(&t.filled_text, locale)?;
    if tokens.len() != words {
        return Err(ComposeError::EmbeddingCount { expected: words, got: tokens.len() });
    }
    let positions = sentence.blank_word_positions();
    let fill_vectors = t
        .fills
        .keys()
        .map(|o| positions.get(o).and_then(|&p| tokens.get(p)).cloned())
        .collect::<Option<Vec<_>>>()
        .ok_or(ComposeError::EmbeddingCount { expected: words, got: tokens.len() })?;
    Ok(Embedded { sentence: sentence_embedding(&tokens)?, fill_vectors })
}

fn embed_text(text: &str, embedder: &dyn TokenEmbedder, locale: Locale) -> Result<TokenEmbedding, ComposeError> {
    let tokens = embedder.token_embeddings(text, locale)?;
    Ok(sentence_embedding(&tokens)?)
}

/// Shortlist for one sentence: funny ones first (at most `n`), backfilled
/// from below the threshold when fewer than `n` qualify.
fn shortlist(cands: &[Transformation], n: usize, threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| transformation_order(&cands[a], &cands[b]));
    let (funny, rest): (Vec<usize>, Vec<usize>) =
        order.into_iter().partition(|&i| cands[i].p_funny.unwrap_or(0.0) >= threshold);
    funny.into_iter().chain(rest).take(n).collect()
}

fn transformation_order(a: &Transformation, b: &Transformation) -> Ordering {
    let pa = a.p_funny.unwrap_or(f64::NEG_INFINITY);
    let pb = b.p_funny.unwrap_or(f64::NEG_INFINITY);
    pb.total_cmp(&pa)
        .then_with(|| b.summed_logprob().total_cmp(&a.summed_logprob()))
        .then_with(|| a.fill_words().cmp(b.fill_words()))
}

#[derive(Clone)]
struct Prefix {
    picks: Vec<Option<usize>>,
    funny_sum: f64,
    funny_n: usize,
    context_sum: Option<Vec<f64>>,
    context_n: usize,
    words: Vec<String>,
}

impl Prefix {
    fn mean_funny(&self) -> f64 {
        if self.funny_n == 0 {
            0.0
        } else {
            self.funny_sum / self.funny_n as f64
        }
    }

    fn add_context(&mut self, v: &TokenEmbedding) -> Result<(), ComposeError> {
        match &mut self.context_sum {
            None => self.context_sum = Some(v.0.clone()),
            Some(sum) => {
                if sum.len() != v.dim() {
                    return Err(ScorerError::DimensionMismatch(sum.len(), v.dim()).into());
                }
                for (s, x) in sum.iter_mut().zip(&v.0) {
                    *s += x;
                }
            }
        }
        self.context_n += 1;
        Ok(())
    }

    fn similarity(&self, v: &TokenEmbedding) -> Result<f64, ScorerError> {
        match &self.context_sum {
            None => Ok(0.0),
            Some(sum) => {
                let mean = TokenEmbedding(sum.iter().map(|s| s / self.context_n as f64).collect());
                cosine_similarity(v, &mean)
            }
        }
    }
}

pub fn compose_story(
    template: &StoryTemplate,
    per_sentence: &[SentenceOptions],
    embedder: &dyn TokenEmbedder,
    locale: Locale,
    params: &ComposeParams,
) -> Result<Vec<CompletedStory>, ComposeError> {
    params.validate()?;
    if per_sentence.len() != template.sentences.len() {
        return Err(ComposeError::Misaligned(per_sentence.len().min(template.sentences.len())));
    }
    let n = params.beam_width;

    // Shortlists and embeddings per sentence.
    let mut shortlists: Vec<Vec<usize>> = Vec::with_capacity(per_sentence.len());
    let mut embedded: Vec<Vec<Embedded>> = Vec::with_capacity(per_sentence.len());
    let mut fixed_vectors: Vec<Option<TokenEmbedding>> = Vec::with_capacity(per_sentence.len());
    let mut dim: Option<usize> = None;
    let mut check_dim = |d: usize| -> Result<(), ComposeError> {
        match dim {
            Some(e) if e != d => Err(ScorerError::DimensionMismatch(e, d).into()),
            _ => {
                dim = Some(d);
                Ok(())
            }
        }
    };
    for (i, (opts, sentence)) in per_sentence.iter().zip(&template.sentences).enumerate() {
        match opts {
            SentenceOptions::Fixed(text) => {
                if sentence.has_blanks() {
                    return Err(ComposeError::Misaligned(i));
                }
                let v = embed_text(text, embedder, locale)?;
                check_dim(v.dim())?;
                fixed_vectors.push(Some(v));
                shortlists.push(Vec::new());
                embedded.push(Vec::new());
            }
            SentenceOptions::Ranked(cands) => {
                if !sentence.has_blanks() {
                    return Err(ComposeError::Misaligned(i));
                }
                if cands.is_empty() {
                    return Err(ComposeError::EmptyTransformations(i));
                }
                if cands.iter().any(|t| t.p_funny.is_none()) {
                    return Err(ComposeError::Unscored(i));
                }
                let list = shortlist(cands, n, params.funny_threshold);
                let mut emb: Vec<Option<Embedded>> = (0..cands.len()).map(|_| None).collect();
                let computed: Vec<(usize, Embedded)> = list
                    .par_iter()
                    .map(|&c| embed_candidate(sentence, &cands[c], embedder, locale).map(|e| (c, e)))
                    .collect::<Result<_, _>>()?;
                for (c, e) in computed {
                    check_dim(e.sentence.dim())?;
                    for f in &e.fill_vectors {
                        check_dim(f.dim())?;
                    }
                    emb[c] = Some(e);
                }
                // Only shortlisted entries are ever read.
                embedded.push(emb.into_iter().map(|e| e.unwrap_or_else(placeholder)).collect());
                fixed_vectors.push(None);
                shortlists.push(list);
            }
        }
    }
    if !per_sentence.iter().any(|o| matches!(o, SentenceOptions::Ranked(_))) {
        return Err(ComposeError::NoBlankSentences);
    }

    let mut beam = vec![Prefix {
        picks: Vec::new(),
        funny_sum: 0.0,
        funny_n: 0,
        context_sum: None,
        context_n: 0,
        words: Vec::new(),
    }];
    for (i, opts) in per_sentence.iter().enumerate() {
        match opts {
            SentenceOptions::Fixed(_) => {
                let v = fixed_vectors[i].as_ref().expect("fixed sentence embedded");
                for p in &mut beam {
                    p.picks.push(None);
                    p.add_context(v)?;
                }
            }
            SentenceOptions::Ranked(cands) => {
                let scored: Vec<Vec<(Prefix, f64)>> = beam
                    .par_iter()
                    .map(|prefix| {
                        shortlists[i]
                            .iter()
                            .map(|&c| {
                                let e = &embedded[i][c];
                                let sim = prefix.similarity(&e.sentence)?;
                                let mut next = prefix.clone();
                                next.picks.push(Some(c));
                                next.funny_sum += cands[c].p_funny.expect("checked above");
                                next.funny_n += 1;
                                next.add_context(&e.sentence)?;
                                next.words.extend(cands[c].fills.values().cloned());
                                Ok((next, sim))
                            })
                            .collect::<Result<Vec<_>, ComposeError>>()
                    })
                    .collect::<Result<_, _>>()?;
                let mut pairs: Vec<(Prefix, f64)> = scored.into_iter().flatten().collect();
                pairs.sort_by(|(a, sa), (b, sb)| {
                    b.mean_funny()
                        .total_cmp(&a.mean_funny())
                        .then_with(|| sb.total_cmp(sa))
                        .then_with(|| a.words.cmp(&b.words))
                });
                pairs.truncate(n);
                beam = pairs.into_iter().map(|(p, _)| p).collect();
            }
        }
    }

    let mut stories = beam
        .into_iter()
        .map(|p| {
            let mut fill_vectors = Vec::new();
            let chosen: Vec<ChosenSentence> = p
                .picks
                .iter()
                .zip(per_sentence)
                .enumerate()
                .map(|(i, (pick, opts))| match (pick, opts) {
                    (Some(c), SentenceOptions::Ranked(cands)) => {
                        fill_vectors.extend(embedded[i][*c].fill_vectors.iter().cloned());
                        ChosenSentence::Filled(cands[*c].clone())
                    }
                    (_, SentenceOptions::Fixed(t)) => ChosenSentence::Fixed(t.clone()),
                    (None, SentenceOptions::Ranked(_)) => unreachable!("ranked sentence always picked"),
                })
                .collect();
            let (avg_word_coherence, coherence_vacuous) = mean_pairwise_cosine(&fill_vectors)?;
            Ok(CompletedStory {
                template_ref: template.story_id.clone(),
                story_funniness: story_funniness(&chosen)?,
                chosen,
                avg_word_coherence,
                coherence_vacuous,
            })
        })
        .collect::<Result<Vec<_>, ComposeError>>()?;
    finalize_ranking(&mut stories, params.final_rank);
    Ok(stories)
}

fn placeholder() -> Embedded {
    Embedded { sentence: TokenEmbedding(Vec::new()), fill_vectors: Vec::new() }
}

fn fill_key(s: &CompletedStory) -> Vec<String> {
    s.fills().into_values().collect()
}

/// Sorts stories best first.
pub fn finalize_ranking(stories: &mut [CompletedStory], mode: FinalRank) {
    match mode {
        FinalRank::Lexicographic => stories.sort_by(|a, b| {
            b.story_funniness
                .total_cmp(&a.story_funniness)
                .then_with(|| b.avg_word_coherence.total_cmp(&a.avg_word_coherence))
                .then_with(|| fill_key(a).cmp(&fill_key(b)))
        }),
        FinalRank::Weighted(alpha) => {
            let score = |s: &CompletedStory| alpha * s.story_funniness + (1.0 - alpha) * s.avg_word_coherence;
            stories.sort_by(|a, b| score(b).total_cmp(&score(a)).then_with(|| fill_key(a).cmp(&fill_key(b))))
        }
    }
}

/// LM baseline story assembly: a left-to-right beam ranked by the mean fill
/// log-probability over the whole story, ties by fill words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineStory {
    pub template_ref: String,
    pub chosen: Vec<ChosenSentence>,
    pub mean_logprob: f64,
}

impl BaselineStory {
    pub fn fills(&self) -> BTreeMap<usize, String> {
        self.chosen
            .iter()
            .filter_map(|c| match c {
                ChosenSentence::Filled(t) => Some(t.fills.clone()),
                ChosenSentence::Fixed(_) => None,
            })
            .flatten()
            .collect()
    }
}

pub fn compose_mlm_baseline(
    template: &StoryTemplate,
    per_sentence: &[SentenceOptions],
    beam_width: usize,
) -> Result<Vec<BaselineStory>, ComposeError> {
    if beam_width == 0 {
        return Err(ComposeError::Params("beam width must be at least 1".into()));
    }
    if per_sentence.len() != template.sentences.len() {
        return Err(ComposeError::Misaligned(per_sentence.len().min(template.sentences.len())));
    }
    if !per_sentence.iter().any(|o| matches!(o, SentenceOptions::Ranked(_))) {
        return Err(ComposeError::NoBlankSentences);
    }
    struct Item {
        chosen: Vec<ChosenSentence>,
        sum: f64,
        count: usize,
        words: Vec<String>,
    }
    let mean = |it: &Item| if it.count == 0 { 0.0 } else { it.sum / it.count as f64 };
    let mut beam = vec![Item { chosen: Vec::new(), sum: 0.0, count: 0, words: Vec::new() }];
    for (i, opts) in per_sentence.iter().enumerate() {
        match opts {
            SentenceOptions::Fixed(t) => {
                beam.iter_mut().for_each(|it| it.chosen.push(ChosenSentence::Fixed(t.clone())))
            }
            SentenceOptions::Ranked(cands) => {
                if cands.is_empty() {
                    return Err(ComposeError::EmptyTransformations(i));
                }
                let mut next = Vec::with_capacity(beam.len() * cands.len());
                for it in &beam {
                    for c in cands {
                        let mut chosen = it.chosen.clone();
                        chosen.push(ChosenSentence::Filled(c.clone()));
                        let mut words = it.words.clone();
                        words.extend(c.fills.values().cloned());
                        next.push(Item {
                            chosen,
                            sum: it.sum + c.summed_logprob(),
                            count: it.count + c.fill_logprobs.len(),
                            words,
                        });
                    }
                }
                next.sort_by(|a, b| mean(b).total_cmp(&mean(a)).then_with(|| a.words.cmp(&b.words)));
                next.truncate(beam_width);
                beam = next;
            }
        }
    }
    Ok(beam
        .into_iter()
        .map(|it| BaselineStory { template_ref: template.story_id.clone(), mean_logprob: mean(&it), chosen: it.chosen })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::template::parse_template;

    struct TableEmbedder(BTreeMap<String, Vec<f64>>);
    impl TokenEmbedder for TableEmbedder {
        fn token_embeddings(&self, text: &str, _l: Locale) -> Result<Vec<TokenEmbedding>, ScorerError> {
            Ok(text
                .split_whitespace()
                .map(|w| {
                    let w = w.trim_matches(|c: char| !c.is_alphanumeric());
                    TokenEmbedding(self.0.get(w).cloned().unwrap_or_else(|| vec![1.0, 1.0]))
                })
                .collect())
        }
    }

    fn table(pairs: &[(&str, [f64; 2])]) -> TableEmbedder {
        TableEmbedder(pairs.iter().map(|(w, v)| (w.to_string(), v.to_vec())).collect())
    }

    fn tr(template: &StoryTemplate, sentence: usize, fills: &[(usize, &str)], p: f64) -> Transformation {
        let s = &template.sentences[sentence];
        let f: BTreeMap<usize, String> = fills.iter().map(|(o, w)| (*o, w.to_string())).collect();
        Transformation {
            masked_text: s.fully_masked(),
            filled_text: s.render_partial(&f),
            fill_logprobs: f.keys().map(|o| (*o, -1.0)).collect(),
            fills: f,
            p_funny: Some(p),
        }
    }

    fn story(f: f64, c: f64, word: &str) -> CompletedStory {
        let t = Transformation {
            masked_text: String::new(),
            filled_text: String::new(),
            fills: BTreeMap::from([(0, word.to_string())]),
            p_funny: Some(f),
            fill_logprobs: BTreeMap::new(),
        };
        CompletedStory {
            template_ref: "s".into(),
            chosen: vec![ChosenSentence::Filled(t)],
            story_funniness: f,
            avg_word_coherence: c,
            coherence_vacuous: false,
        }
    }

    #[test]
    fn funniness_means() {
        let t = parse_template("t", "# T\nA {{noun}}.\nB {{noun}}.").unwrap();
        let chosen = |ps: &[f64]| -> Vec<ChosenSentence> {
            ps.iter().map(|&p| ChosenSentence::Filled(tr(&t, 0, &[(0, "x")], p))).collect()
        };
        assert!((story_funniness(&chosen(&[0.8, 0.6])).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(story_funniness(&chosen(&[0.93])).unwrap(), 0.93);
        let five = [0.11, 0.52, 0.97, 0.33, 0.48];
        let oracle = five.iter().fold(0.0, |a, b| a + b) / 5.0;
        assert!((story_funniness(&chosen(&five)).unwrap() - oracle).abs() < 1e-15);
        assert!(matches!(story_funniness(&[ChosenSentence::Fixed("x".into())]), Err(ComposeError::NoBlankSentences)));
    }

    #[test]
    fn pairwise_cosine_cases() {
        let same = vec![TokenEmbedding(vec![0.3, 0.4]); 3];
        assert!((mean_pairwise_cosine(&same).unwrap().0 - 1.0).abs() < 1e-15);
        let ortho = [TokenEmbedding(vec![1.0, 0.0]), TokenEmbedding(vec![0.0, 1.0])];
        assert_eq!(mean_pairwise_cosine(&ortho).unwrap(), (0.0, false));
        assert_eq!(mean_pairwise_cosine(&ortho[..1]).unwrap(), (1.0, true));
    }

    #[test]
    fn lexicographic_final_ranking() {
        let mut s = vec![story(0.8, 0.99, "a"), story(0.9, 0.1, "b")];
        finalize_ranking(&mut s, FinalRank::Lexicographic);
        assert_eq!(s[0].story_funniness, 0.9);
        let mut s = vec![story(0.8, 0.5, "a"), story(0.8, 0.7, "b")];
        finalize_ranking(&mut s, FinalRank::Lexicographic);
        assert_eq!(s[0].avg_word_coherence, 0.7);
        let mut s = vec![story(0.9, 0.2, "a"), story(0.1, 0.3, "b"), story(0.5, 0.25, "c")];
        finalize_ranking(&mut s, FinalRank::Weighted(0.0));
        let c: Vec<f64> = s.iter().map(|x| x.avg_word_coherence).collect();
        assert_eq!(c, vec![0.3, 0.25, 0.2]);
    }

    #[test]
    fn exact_ties_fall_back_to_fill_words() {
        let mut s = vec![story(0.5, 0.5, "zebra"), story(0.5, 0.5, "apple"), story(0.5, 0.5, "mango")];
        finalize_ranking(&mut s, FinalRank::Lexicographic);
        let words: Vec<String> = s.iter().map(|x| x.fills()[&0].clone()).collect();
        assert_eq!(words, ["apple", "mango", "zebra"]);
    }

    #[test]
    fn single_sentence_story() {
        let t = parse_template("t", "# T\nThe {{noun}} sings.").unwrap();
        let cands = vec![tr(&t, 0, &[(0, "cat")], 0.3), tr(&t, 0, &[(0, "dog")], 0.9)];
        let e = table(&[("cat", [1.0, 0.0]), ("dog", [0.0, 1.0])]);
        let out = compose_story(&t, &[SentenceOptions::Ranked(cands)], &e, Locale::Neutral, &ComposeParams::default())
            .unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].story_funniness, 0.9);
        assert_eq!(out[1].story_funniness, 0.3);
        assert!(out[0].coherence_vacuous);
        assert_eq!(out[0].avg_word_coherence, 1.0);
    }

    #[test]
    fn fixed_middle_sentence_passes_through() {
        let t = parse_template("t", "# T\nThe {{noun}} sings.\nNothing here.\nA {{noun}} dances.").unwrap();
        let s0 = vec![tr(&t, 0, &[(0, "cat")], 0.6), tr(&t, 0, &[(0, "dog")], 0.7)];
        let s2 = vec![tr(&t, 2, &[(1, "cat")], 0.8), tr(&t, 2, &[(1, "dog")], 0.4)];
        let e = table(&[("cat", [1.0, 0.0]), ("dog", [0.0, 1.0])]);
        let opts =
            [SentenceOptions::Ranked(s0), SentenceOptions::Fixed("Nothing here.".into()), SentenceOptions::Ranked(s2)];
        let out = compose_story(&t, &opts, &e, Locale::Neutral, &ComposeParams::default()).unwrap();
        assert_eq!(out.len(), 4);
        for s in &out {
            assert_eq!(s.chosen[1], ChosenSentence::Fixed("Nothing here.".into()));
            let ps: Vec<f64> = s
                .chosen
                .iter()
                .filter_map(|c| match c {
                    ChosenSentence::Filled(t) => t.p_funny,
                    _ => None,
                })
                .collect();
            assert_eq!(s.story_funniness, (ps[0] + ps[1]) / 2.0);
        }
        assert_eq!(out[0].text(), "The dog sings.\nNothing here.\nA cat dances.");
    }

    #[test]
    fn threshold_shortlist_backfills() {
        let t = parse_template("t", "# T\nThe {{noun}} sings.").unwrap();
        let c = vec![
            tr(&t, 0, &[(0, "a")], 0.2),
            tr(&t, 0, &[(0, "b")], 0.7),
            tr(&t, 0, &[(0, "c")], 0.4),
            tr(&t, 0, &[(0, "d")], 0.9),
        ];
        assert_eq!(shortlist(&c, 3, 0.5), vec![3, 1, 2]);
        assert_eq!(shortlist(&c, 1, 0.5), vec![3]);
        assert_eq!(shortlist(&c, 10, 0.95), vec![3, 1, 2, 0]);
    }

    #[test]
    fn errors() {
        let t = parse_template("t", "# T\nThe {{noun}} sings.").unwrap();
        let e = table(&[]);
        let p = ComposeParams::default();
        assert!(matches!(
            compose_story(&t, &[SentenceOptions::Ranked(vec![])], &e, Locale::Neutral, &p),
            Err(ComposeError::EmptyTransformations(0))
        ));
        assert!(matches!(
            compose_story(&t, &[SentenceOptions::Fixed("x".into())], &e, Locale::Neutral, &p),
            Err(ComposeError::Misaligned(0))
        ));
        let mixed = TableEmbedder(BTreeMap::from([("cat".to_string(), vec![1.0, 0.0, 0.0])]));
        let two = parse_template("t", "# T\nThe {{noun}} sings.\nThe {{noun}} sings.").unwrap();
        let opts = [
            SentenceOptions::Ranked(vec![tr(&two, 0, &[(0, "cat")], 0.5)]),
            SentenceOptions::Ranked(vec![tr(&two, 1, &[(1, "dog")], 0.5)]),
        ];
        assert!(matches!(
            compose_story(&two, &opts, &mixed, Locale::Neutral, &p),
            Err(ComposeError::Scorer(ScorerError::DimensionMismatch(..)))
        ));
    }

    #[test]
    fn baseline_ranks_by_mean_logprob() {
        let t = parse_template("t", "# T\nThe {{noun}} sings.\nA {{noun}} {{verb}}.").unwrap();
        let mut a = tr(&t, 0, &[(0, "cat")], 0.0);
        a.fill_logprobs.insert(0, -1.0);
        let mut b = tr(&t, 0, &[(0, "dog")], 0.0);
        b.fill_logprobs.insert(0, -3.0);
        let mut c = tr(&t, 1, &[(1, "owl"), (2, "ran")], 0.0);
        c.fill_logprobs = BTreeMap::from([(1, -2.0), (2, -2.0)]);
        let out = compose_mlm_baseline(&t, &[SentenceOptions::Ranked(vec![b, a]), SentenceOptions::Ranked(vec![c])], 5)
            .unwrap();
        assert_eq!(out.len(), 2);
        assert!((out[0].mean_logprob - (-5.0 / 3.0)).abs() < 1e-12);
        assert_eq!(out[0].fills()[&0], "cat");
    }
}
