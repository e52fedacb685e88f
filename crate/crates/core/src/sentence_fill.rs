//! Candidate selection and humor-ranked beam search over one sentence.
//!
//! Blanks are processed left to right. Each surviving partial fill is
//! extended with the legal candidates for the next blank (top `k` from the
//! masked LM, then filtered by hint), every extension is scored by the humor
//! scorer on `(fully masked sentence, partially filled sentence)`, and the
//! beam is pruned to the best `n`. Blanks not reached yet stay as mask
//! markers in the sentence the humor scorer sees.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::scorers::{Locale, MaskScore, MaskScorer, ScorerBundle, ScorerError};
use crate::template::{mask_sentence, HintType, RightBlanks, SentenceTemplate, TemplateError};

#[derive(Debug, Error)]
pub enum FillError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("no blank in sentence")]
    NoBlank,
    #[error("unfillable blank {0}")]
    Unfillable(usize),
    #[error("invalid fill parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillParams {
    /// Candidates kept from the masked LM per blank, before filtering.
    pub k: usize,
    /// Beam width.
    pub n: usize,
}

impl Default for FillParams {
    fn default() -> Self {
        FillParams { k: 10_000, n: 100 }
    }
}

impl FillParams {
    pub fn new(k: usize, n: usize) -> Result<Self, FillError> {
        let p = FillParams { k, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FillError> {
        if self.n == 0 || self.k < self.n {
            return Err(FillError::Params(format!("need k >= n >= 1, got k={} n={}", self.k, self.n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformation {
    pub masked_text: String,
    pub filled_text: String,
    pub fills: BTreeMap<usize, String>,
    /// Humor probability from the scorer that ranked this fill. Absent for
    /// LM-ranked baseline output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_funny: Option<f64>,
    pub fill_logprobs: BTreeMap<usize, f64>,
}

impl Transformation {
    pub fn summed_logprob(&self) -> f64 {
        self.fill_logprobs.values().sum()
    }

    pub fn mean_logprob(&self) -> f64 {
        if self.fill_logprobs.is_empty() {
            0.0
        } else {
            self.summed_logprob() / self.fill_logprobs.len() as f64
        }
    }

    /// Words in ordinal order, the final tie-break key.
    pub fn fill_words(&self) -> impl Iterator<Item = &str> + Clone {
        self.fills.values().map(String::as_str)
    }
}

/// Top-`k` masked-LM candidates for `blank`, filtered to those legal for its
/// hint, in LM order. Blanks left of `blank` must already be in `fills`.
pub fn select_candidates(
    sentence: &SentenceTemplate,
    blank: usize,
    fills: &BTreeMap<usize, String>,
    mask: &dyn MaskScorer,
    lexicon: &Lexicon,
    params: &FillParams,
    locale: Locale,
) -> Result<Vec<MaskScore>, FillError> {
    if !sentence.has_blanks() {
        return Err(FillError::NoBlank);
    }
    let hint = sentence.hint_of(blank).ok_or(TemplateError::NoSuchBlank(blank))?;
    if fills.contains_key(&blank) {
        return Err(FillError::Params(format!("blank {blank} is already filled")));
    }
    let query = mask_sentence(sentence, blank, fills, RightBlanks::Mask)?;
    let scores = mask.mask_distribution(&query.text, query.mask_index, params.k, locale)?;
    Ok(legal(lexicon, scores, hint))
}

fn legal(lexicon: &Lexicon, scores: Vec<MaskScore>, hint: HintType) -> Vec<MaskScore> {
    scores.into_iter().filter(|s| lexicon.satisfies_hint(&s.word, hint)).collect()
}

#[derive(Debug, Clone)]
struct Partial {
    fills: BTreeMap<usize, String>,
    logprobs: BTreeMap<usize, f64>,
    p_funny: Option<f64>,
}

impl Partial {
    fn summed(&self) -> f64 {
        self.logprobs.values().sum()
    }

    fn mean(&self) -> f64 {
        self.summed() / self.logprobs.len().max(1) as f64
    }
}

fn lexicographic(a: &BTreeMap<usize, String>, b: &BTreeMap<usize, String>) -> Ordering {
    a.values().cmp(b.values())
}

/// p_funny desc, then summed fill log-prob desc, then fills ascending.
fn humor_order(a: &Partial, b: &Partial) -> Ordering {
    let pa = a.p_funny.unwrap_or(f64::NEG_INFINITY);
    let pb = b.p_funny.unwrap_or(f64::NEG_INFINITY);
    pb.total_cmp(&pa).then_with(|| b.summed().total_cmp(&a.summed())).then_with(|| lexicographic(&a.fills, &b.fills))
}

/// Mean fill log-prob desc, then fills ascending.
fn lm_order(a: &Partial, b: &Partial) -> Ordering {
    b.mean().total_cmp(&a.mean()).then_with(|| lexicographic(&a.fills, &b.fills))
}

/// Extends every partial with the legal candidates for `blank`, keeping
/// beam order then candidate order.
fn extend(
    sentence: &SentenceTemplate,
    blank: usize,
    beam: &[Partial],
    mask: &dyn MaskScorer,
    locale: Locale,
    lexicon: &Lexicon,
    params: &FillParams,
) -> Result<Vec<Partial>, FillError> {
    let per_item: Vec<Vec<Partial>> = beam
        .par_iter()
        .map(|item| {
            let cands = select_candidates(sentence, blank, &item.fills, mask, lexicon, params, locale)?;
            Ok(cands
                .into_iter()
                .map(|c| {
                    let mut next = item.clone();
                    next.fills.insert(blank, c.word);
                    next.logprobs.insert(blank, c.log_probability);
                    next.p_funny = None;
                    next
                })
                .collect())
        })
        .collect::<Result<_, FillError>>()?;
    let out: Vec<Partial> = per_item.into_iter().flatten().collect();
    if out.is_empty() {
        return Err(FillError::Unfillable(blank));
    }
    Ok(out)
}

fn finish(sentence: &SentenceTemplate, beam: Vec<Partial>) -> Vec<Transformation> {
    let masked_text = sentence.fully_masked();
    beam.into_iter()
        .map(|p| Transformation {
            masked_text: masked_text.clone(),
            filled_text: sentence.render_partial(&p.fills),
            fills: p.fills,
            p_funny: p.p_funny,
            fill_logprobs: p.logprobs,
        })
        .collect()
}

fn empty_beam() -> Vec<Partial> {
    vec![Partial { fills: BTreeMap::new(), logprobs: BTreeMap::new(), p_funny: None }]
}

/// Humor-ranked left-to-right beam search. Returns at most `n`
/// transformations, best first.
pub fn fill_sentence_beam(
    sentence: &SentenceTemplate,
    bundle: &ScorerBundle,
    lexicon: &Lexicon,
    params: &FillParams,
) -> Result<Vec<Transformation>, FillError> {
    params.validate()?;
    let blanks: Vec<usize> = sentence.blanks().map(|(o, _)| o).collect();
    if blanks.is_empty() {
        return Err(FillError::NoBlank);
    }
    let masked_text = sentence.fully_masked();
    let mut beam = empty_beam();
    for blank in blanks {
        let mut next = extend(sentence, blank, &beam, bundle.mask.as_ref(), bundle.locale, lexicon, params)?;
        let scores: Vec<f64> = next
            .par_iter()
            .map(|p| {
                let filled = sentence.render_partial(&p.fills);
                bundle.humor.humor_probability(&masked_text, &filled, bundle.locale).map(|h| h.p_funny)
            })
            .collect::<Result<_, ScorerError>>()?;
        for (p, s) in next.iter_mut().zip(scores) {
            p.p_funny = Some(s);
        }
        next.sort_by(humor_order);
        next.truncate(params.n);
        beam = next;
    }
    Ok(finish(sentence, beam))
}

/// Baseline ranking by mean fill log-probability; the humor scorer is not
/// consulted.
pub fn fill_sentence_mlm_baseline(
    sentence: &SentenceTemplate,
    mask: &dyn MaskScorer,
    lexicon: &Lexicon,
    params: &FillParams,
    locale: Locale,
) -> Result<Vec<Transformation>, FillError> {
    params.validate()?;
    let blanks: Vec<usize> = sentence.blanks().map(|(o, _)| o).collect();
    if blanks.is_empty() {
        return Err(FillError::NoBlank);
    }
    let mut beam = empty_beam();
    for blank in blanks {
        let mut next = extend(sentence, blank, &beam, mask, locale, lexicon, params)?;
        next.sort_by(lm_order);
        next.truncate(params.n);
        beam = next;
    }
    Ok(finish(sentence, beam))
}
