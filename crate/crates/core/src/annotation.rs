//! Crowd judgements: qualification rules, humor labels, and classifier
//! datasets.
//!
//! Judgement files are JSON lines, one [`JudgementRecord`] per line. Filled
//! variants come from a FilledStory record file; a variant's id is its
//! 0-based position among the records of the same story.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Lexicon, Pos};
use crate::scorers::{Locale, MaskScorer, ScorerError};
use crate::template::{parse_template, FilledStory, StoryTemplate, Token};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("grade {0} outside 0..=3")]
    Grade(u8),
    #[error("judge qualification needs 3 Wikipedia and 4 player stories, got {wiki} and {player}")]
    StoryCount { wiki: usize, player: usize },
    #[error("cannot aggregate an empty list")]
    Empty,
    #[error("judgement line {line}: {reason}")]
    BadJudgement { line: usize, reason: String },
    #[error("unknown story `{0}`")]
    UnknownStory(String),
    #[error("story `{0}` variant `{1}` not found")]
    UnknownVariant(String, String),
    #[error("story `{0}` has no split assignment")]
    NoSplit(String),
    #[error("story `{story}` variant `{variant}`: word labels do not cover the template's blanks")]
    BlankMismatch { story: String, variant: String },
    #[error("split map line {line}: {reason}")]
    BadSplit { line: usize, reason: String },
    #[error("no eligible word")]
    NoEligibleWord,
    #[error("no legal replacement for `{0}`")]
    NoLegalReplacement(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Grade(u8);

impl Grade {
    pub fn new(value: u8) -> Result<Self, AnnotationError> {
        if value <= 3 {
            Ok(Grade(value))
        } else {
            Err(AnnotationError::Grade(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Grade {
    type Error = AnnotationError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Grade::new(v)
    }
}

impl From<Grade> for u8 {
    fn from(g: Grade) -> u8 {
        g.0
    }
}

/// Grades from a slice of integers; panics on out-of-range values. Meant
/// for fixtures and tests.
pub fn grades(values: &[u8]) -> Vec<Grade> {
    values.iter().map(|&v| Grade::new(v).expect("grade in 0..=3")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumorLabel {
    Funny,
    NotFunny,
}

impl HumorLabel {
    pub fn complement(self) -> Self {
        match self {
            HumorLabel::Funny => HumorLabel::NotFunny,
            HumorLabel::NotFunny => HumorLabel::Funny,
        }
    }
}

impl fmt::Display for HumorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HumorLabel::Funny => "funny",
            HumorLabel::NotFunny => "not_funny",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgementRecord {
    pub story_id: String,
    pub variant_id: String,
    pub judge_id: String,
    pub judge_country: Locale,
    pub funniness: Grade,
    pub coherence: Grade,
    pub deviation: Grade,
    pub incongruity: bool,
    pub word_labels: BTreeMap<usize, HumorLabel>,
    pub verification_passed: bool,
    pub time_spent_sec: f64,
}

pub fn parse_judgements(text: &str) -> Result<Vec<JudgementRecord>, AnnotationError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| AnnotationError::BadJudgement { line: i + 1, reason };
        let r: JudgementRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if r.judge_country == Locale::Neutral {
            return Err(bad("judge_country must be IN or US".into()));
        }
        if r.time_spent_sec.is_nan() || r.time_spent_sec < 0.0 {
            return Err(bad("time_spent_sec must be non-negative".into()));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn judgements_to_jsonl(records: &[JudgementRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
}

/// Responses of one candidate judge on the qualification task.
#[derive(Debug, Clone, PartialEq)]
pub struct QualificationResponses {
    pub wikipedia_grades: Vec<Grade>,
    pub player_grades: Vec<Grade>,
    pub verification_passed: bool,
    pub time_spent_sec: f64,
}

pub const MIN_JUDGE_SECONDS: f64 = 240.0;

/// Judges qualify by grading all Wikipedia stories 0, at least three of the
/// four player stories 1..=3, answering the checks, and spending at least
/// four minutes.
pub fn qualify_judge(r: &QualificationResponses) -> Result<bool, AnnotationError> {
    if r.wikipedia_grades.len() != 3 || r.player_grades.len() != 4 {
        return Err(AnnotationError::StoryCount { wiki: r.wikipedia_grades.len(), player: r.player_grades.len() });
    }
    let wiki_zero = r.wikipedia_grades.iter().all(|g| g.value() == 0);
    let graded_funny = r.player_grades.iter().filter(|g| g.value() >= 1).count();
    Ok(wiki_zero && graded_funny >= 3 && r.verification_passed && r.time_spent_sec >= MIN_JUDGE_SECONDS)
}

/// Mean funniness grade.
pub fn mfg(grades: &[Grade]) -> Result<f64, AnnotationError> {
    if grades.is_empty() {
        return Err(AnnotationError::Empty);
    }
    Ok(grades.iter().map(|g| f64::from(g.value())).sum::<f64>() / grades.len() as f64)
}

/// Players qualify with an MFG of at least 1 on some story.
pub fn qualify_player(story_mfgs: &[f64]) -> Result<bool, AnnotationError> {
    if story_mfgs.is_empty() {
        return Err(AnnotationError::Empty);
    }
    Ok(story_mfgs.iter().any(|&m| m >= 1.0))
}

/// Strict majority over judges; an even split is not funny.
pub fn word_label(votes: &[HumorLabel]) -> Result<HumorLabel, AnnotationError> {
    if votes.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let funny = votes.iter().filter(|v| **v == HumorLabel::Funny).count();
    Ok(if 2 * funny > votes.len() { HumorLabel::Funny } else { HumorLabel::NotFunny })
}

/// Funny when at least half the filled words are funny. Sentences without
/// blanks yield `None` and are left out of datasets.
pub fn sentence_label(words: &[HumorLabel]) -> Option<HumorLabel> {
    if words.is_empty() {
        return None;
    }
    let funny = words.iter().filter(|v| **v == HumorLabel::Funny).count();
    Some(if 2 * funny >= words.len() { HumorLabel::Funny } else { HumorLabel::NotFunny })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(other.to_string()),
        }
    }
}

/// `story_id<TAB>split` lines.
pub fn parse_split_map(text: &str) -> Result<BTreeMap<String, Split>, AnnotationError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| AnnotationError::BadSplit { line: i + 1, reason: reason.to_string() };
        let (id, split) = line.split_once('\t').ok_or_else(|| bad("expected `story_id<TAB>split`"))?;
        let split = split.trim().parse().map_err(|s| bad(&format!("unknown split `{s}`")))?;
        if out.insert(id.trim().to_string(), split).is_some() {
            return Err(bad("story listed twice"));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrigin {
    Annotated,
    WikiAugmented,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub masked_sentence: String,
    pub filled_sentence: String,
    pub label: HumorLabel,
    pub locale: Locale,
    pub split: Split,
    pub origin: PairOrigin,
}

/// Keys FilledStory records by `(story_id, variant_id)`.
pub fn index_variants(records: &[FilledStory]) -> BTreeMap<(String, String), FilledStory> {
    let mut per_story: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for r in records {
        let n = per_story.entry(&r.template_ref).or_default();
        out.insert((r.template_ref.clone(), n.to_string()), r.clone());
        *n += 1;
    }
    out
}

/// Class counts keyed by split, locale and label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub counts: BTreeMap<(Split, Locale, HumorLabel), usize>,
}

impl DatasetStats {
    pub fn get(&self, split: Split, locale: Locale, label: HumorLabel) -> usize {
        self.counts.get(&(split, locale, label)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Rows per split; funny and not-funny columns per locale.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,funny_IN,funny_US,not_funny_IN,not_funny_US\n");
        for split in Split::ALL {
            let cells = [
                self.get(split, Locale::In, HumorLabel::Funny),
                self.get(split, Locale::Us, HumorLabel::Funny),
                self.get(split, Locale::In, HumorLabel::NotFunny),
                self.get(split, Locale::Us, HumorLabel::NotFunny),
            ];
            out.push_str(&format!("{split},{},{},{},{}\n", cells[0], cells[1], cells[2], cells[3]));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub pairs: Vec<LabeledPair>,
    pub stats: DatasetStats,
}

impl Dataset {
    pub fn to_jsonl(&self) -> String {
        self.pairs.iter().map(|p| serde_json::to_string(p).expect("pair serializes") + "\n").collect()
    }
}

/// Labels every blank-bearing sentence of every judged variant, once per
/// judge locale, then appends the augmentation pairs.
pub fn build_dataset(
    templates: &[StoryTemplate],
    variants: &BTreeMap<(String, String), FilledStory>,
    judgements: &[JudgementRecord],
    split_map: &BTreeMap<String, Split>,
    augmentation: &[LabeledPair],
) -> Result<Dataset, AnnotationError> {
    let by_id: BTreeMap<&str, &StoryTemplate> = templates.iter().map(|t| (t.story_id.as_str(), t)).collect();
    let mut groups: BTreeMap<(&str, &str, Locale), Vec<&JudgementRecord>> = BTreeMap::new();
    for j in judgements {
        groups.entry((&j.story_id, &j.variant_id, j.judge_country)).or_default().push(j);
    }
    let mut pairs = Vec::new();
    for ((story, variant, locale), records) in groups {
        let template = by_id.get(story).ok_or_else(|| AnnotationError::UnknownStory(story.to_string()))?;
        let filled = variants
            .get(&(story.to_string(), variant.to_string()))
            .ok_or_else(|| AnnotationError::UnknownVariant(story.to_string(), variant.to_string()))?;
        let split = *split_map.get(story).ok_or_else(|| AnnotationError::NoSplit(story.to_string()))?;
        let blanks: Vec<usize> = template.blanks().map(|(o, _)| o).collect();
        let mismatch = || AnnotationError::BlankMismatch { story: story.to_string(), variant: variant.to_string() };
        if records.iter().any(|r| !r.word_labels.keys().copied().eq(blanks.iter().copied())) {
            return Err(mismatch());
        }
        crate::template::check_fills(template, &filled.fills).map_err(|_| mismatch())?;
        let mut labels = BTreeMap::new();
        for &b in &blanks {
            let votes: Vec<HumorLabel> = records.iter().map(|r| r.word_labels[&b]).collect();
            labels.insert(b, word_label(&votes)?);
        }
        for sentence in &template.sentences {
            let words: Vec<HumorLabel> = sentence.blanks().map(|(o, _)| labels[&o]).collect();
            if let Some(label) = sentence_label(&words) {
                pairs.push(LabeledPair {
                    masked_sentence: sentence.fully_masked(),
                    filled_sentence: sentence.render_partial(&filled.fills),
                    label,
                    locale,
                    split,
                    origin: PairOrigin::Annotated,
                });
            }
        }
    }
    pairs.extend(augmentation.iter().cloned());
    let mut stats = DatasetStats::default();
    for p in &pairs {
        *stats.counts.entry((p.split, p.locale, p.label)).or_default() += 1;
    }
    Ok(Dataset { pairs, stats })
}

/// Median word count of `train`, with an even-length median rounded half up.
pub fn median_word_count(train: &[String]) -> Result<usize, AnnotationError> {
    let mut counts: Vec<usize> = train.iter().map(|s| s.split_whitespace().count()).collect();
    if counts.is_empty() {
        return Err(AnnotationError::Empty);
    }
    counts.sort_unstable();
    let mid = counts.len() / 2;
    Ok(if counts.len() % 2 == 1 { counts[mid] } else { (counts[mid - 1] + counts[mid]).div_ceil(2) })
}

/// Corpus sentences whose word count lies within 5 of the median training
/// sentence length.
pub fn sample_augmentation_sentences(corpus: &[String], train: &[String]) -> Result<Vec<String>, AnnotationError> {
    if corpus.is_empty() {
        return Err(AnnotationError::Empty);
    }
    let m = median_word_count(train)?;
    let (lo, hi) = (m.saturating_sub(5), m + 5);
    Ok(corpus.iter().filter(|s| (lo..=hi).contains(&s.split_whitespace().count())).cloned().collect())
}

/// Masks the first word of the given POS and fills it with the LM's best
/// legal candidate, giving a not-funny pair. The replacement may equal the
/// original word.
#[allow(clippy::too_many_arguments)]
pub fn make_augmented_pair(
    sentence: &str,
    lexicon: &Lexicon,
    mask: &dyn MaskScorer,
    pos: Pos,
    top_k: usize,
    locale: Locale,
    split: Split,
) -> Result<LabeledPair, AnnotationError> {
    let parsed = parse_template("augment", &format!("# augment\n{sentence}"))?;
    let mut template = parsed.sentences.into_iter().next().ok_or(AnnotationError::NoEligibleWord)?;
    if template.has_blanks() {
        return Err(AnnotationError::NoEligibleWord);
    }
    let (idx, hint) = template
        .tokens
        .iter()
        .enumerate()
        .find_map(|(i, t)| match t {
            Token::Literal(w) => lexicon.hint_for_occurrence(w, pos).map(|h| (i, h)),
            Token::Blank { .. } => None,
        })
        .ok_or(AnnotationError::NoEligibleWord)?;
    let original = match &template.tokens[idx] {
        Token::Literal(w) => w.clone(),
        Token::Blank { .. } => unreachable!(),
    };
    template.tokens[idx] = Token::Blank { ordinal: 0, hint };
    let masked = template.fully_masked();
    let scores = mask.mask_distribution(&masked, 0, top_k, locale)?;
    let best = scores
        .into_iter()
        .find(|s| lexicon.satisfies_hint(&s.word, hint))
        .ok_or_else(|| AnnotationError::NoLegalReplacement(original.clone()))?;
    let word = match original.chars().next() {
        Some(c) if c.is_uppercase() => capitalize(&best.word),
        _ => best.word,
    };
    let filled = template.render_partial(&BTreeMap::from([(0, word)]));
    Ok(LabeledPair {
        masked_sentence: masked,
        filled_sentence: filled,
        label: HumorLabel::NotFunny,
        locale,
        split,
        origin: PairOrigin::WikiAugmented,
    })
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
}
