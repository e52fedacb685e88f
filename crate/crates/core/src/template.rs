//! Story templates with typed blanks.
//!
//! A template document is UTF-8 text. The first line is `# <title>`; every
//! following non-empty line is one sentence. Blanks are written `{{hint}}`,
//! optionally with an explicit ordinal `{{hint:3}}`. Ordinals default to
//! "previous + 1" and must be strictly increasing through the story.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker emitted in place of a blank that a scorer should predict.
pub const MASK: &str = "[MASK]";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("line {line}: unknown hint `{hint}`")]
    UnknownHint { line: usize, hint: String },
    #[error("line {line}: unbalanced blank delimiters")]
    Unbalanced { line: usize },
    #[error("empty title")]
    EmptyTitle,
    #[error("missing `# <title>` header line")]
    MissingTitle,
    #[error("template has no sentences")]
    NoSentences,
    #[error("line {line}: duplicate blank ordinal {ordinal}")]
    DuplicateOrdinal { line: usize, ordinal: usize },
    #[error("line {line}: blank ordinal {ordinal} is not increasing")]
    NonIncreasingOrdinal { line: usize, ordinal: usize },
    #[error("line {line}: bad explicit ordinal `{text}`")]
    BadOrdinal { line: usize, text: String },
    #[error("no such blank {0}")]
    NoSuchBlank(usize),
    #[error("blank {0} left of the target has no fill")]
    MissingFill(usize),
    #[error("fill given for blank {0}, which the template does not have")]
    ExtraFill(usize),
    #[error("fill `{0}` is not a single word")]
    InvalidFill(String),
    #[error("malformed filled-story record on line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintType {
    Noun,
    NounPlural,
    Verb,
    VerbPast,
    VerbIng,
    Adjective,
    Adverb,
    Bodypart,
    Food,
    Liquid,
    Place,
    Animal,
}

impl HintType {
    pub const ALL: [HintType; 12] = [
        HintType::Noun,
        HintType::NounPlural,
        HintType::Verb,
        HintType::VerbPast,
        HintType::VerbIng,
        HintType::Adjective,
        HintType::Adverb,
        HintType::Bodypart,
        HintType::Food,
        HintType::Liquid,
        HintType::Place,
        HintType::Animal,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            HintType::Noun => "noun",
            HintType::NounPlural => "noun_plural",
            HintType::Verb => "verb",
            HintType::VerbPast => "verb_past",
            HintType::VerbIng => "verb_ing",
            HintType::Adjective => "adjective",
            HintType::Adverb => "adverb",
            HintType::Bodypart => "bodypart",
            HintType::Food => "food",
            HintType::Liquid => "liquid",
            HintType::Place => "place",
            HintType::Animal => "animal",
        }
    }
}

impl fmt::Display for HintType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

impl FromStr for HintType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HintType::ALL.iter().copied().find(|h| h.keyword() == s).ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Token {
    Literal(String),
    Blank { ordinal: usize, hint: HintType },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SentenceTemplate {
    pub tokens: Vec<Token>,
}

impl SentenceTemplate {
    /// Blanks in left-to-right order as `(ordinal, hint)`.
    pub fn blanks(&self) -> impl Iterator<Item = (usize, HintType)> + '_ {
        self.tokens.iter().filter_map(|t| match t {
            Token::Blank { ordinal, hint } => Some((*ordinal, *hint)),
            Token::Literal(_) => None,
        })
    }

    pub fn has_blanks(&self) -> bool {
        self.blanks().next().is_some()
    }

    pub fn hint_of(&self, ordinal: usize) -> Option<HintType> {
        self.blanks().find(|(o, _)| *o == ordinal).map(|(_, h)| h)
    }

    /// Renders the sentence with every blank as a mask marker.
    pub fn fully_masked(&self) -> String {
        self.render_with(|_, _| MASK.to_string())
    }

    /// Renders with the given fills; blanks without a fill become mask markers.
    pub fn render_partial(&self, fills: &BTreeMap<usize, String>) -> String {
        self.render_with(|o, _| fills.get(&o).cloned().unwrap_or_else(|| MASK.to_string()))
    }

    fn render_with(&self, mut blank: impl FnMut(usize, HintType) -> String) -> String {
        let pieces: Vec<String> = self
            .tokens
            .iter()
            .map(|t| match t {
                Token::Literal(s) => s.clone(),
                Token::Blank { ordinal, hint } => blank(*ordinal, *hint),
            })
            .collect();
        detokenize(&pieces)
    }

    /// Index of the whitespace-separated word each blank lands on after
    /// rendering. Embedders report one vector per such word.
    pub fn blank_word_positions(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        let mut word = 0usize;
        let mut started = false;
        let mut glue_next = false;
        for t in &self.tokens {
            let attaches = match t {
                Token::Literal(s) => started && (glue_next || is_closing(s)),
                Token::Blank { .. } => started && glue_next,
            };
            if started && !attaches {
                word += 1;
            }
            started = true;
            if let Token::Blank { ordinal, .. } = t {
                out.insert(*ordinal, word);
            }
            glue_next = matches!(t, Token::Literal(s) if is_opening(s));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryTemplate {
    pub story_id: String,
    pub title: String,
    pub sentences: Vec<SentenceTemplate>,
}

impl StoryTemplate {
    pub fn blanks(&self) -> impl Iterator<Item = (usize, HintType)> + '_ {
        self.sentences.iter().flat_map(|s| s.blanks())
    }

    pub fn blank_count(&self) -> usize {
        self.blanks().count()
    }

    pub fn hint_of(&self, ordinal: usize) -> Option<HintType> {
        self.blanks().find(|(o, _)| *o == ordinal).map(|(_, h)| h)
    }

    /// Serializes back into the template grammar.
    pub fn serialize(&self) -> String {
        let mut out = format!("# {}\n", self.title);
        let mut expected = 0usize;
        for s in &self.sentences {
            let pieces: Vec<String> = s
                .tokens
                .iter()
                .map(|t| match t {
                    Token::Literal(l) => l.clone(),
                    Token::Blank { ordinal, hint } => {
                        let piece = if *ordinal == expected {
                            format!("{{{{{hint}}}}}")
                        } else {
                            format!("{{{{{hint}:{ordinal}}}}}")
                        };
                        expected = ordinal + 1;
                        piece
                    }
                })
                .collect();
            out.push_str(&detokenize(&pieces));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FillSource {
    FreeText,
    #[serde(rename = "MLM")]
    Mlm,
    YodaLib,
}

impl fmt::Display for FillSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FillSource::FreeText => "FreeText",
            FillSource::Mlm => "MLM",
            FillSource::YodaLib => "YodaLib",
        })
    }
}

impl FromStr for FillSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FreeText" | "FT" => Ok(FillSource::FreeText),
            "MLM" => Ok(FillSource::Mlm),
            "YodaLib" => Ok(FillSource::YodaLib),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledStory {
    pub template_ref: String,
    pub fills: BTreeMap<usize, String>,
    pub source: FillSource,
}

impl FilledStory {
    /// `story_id<TAB>source<TAB>ordinal=word;ordinal=word;...`
    pub fn to_record(&self) -> String {
        let fills: Vec<String> = self.fills.iter().map(|(o, w)| format!("{o}={w}")).collect();
        format!("{}\t{}\t{}", self.template_ref, self.source, fills.join(";"))
    }

    pub fn from_record(line: &str, line_no: usize) -> Result<Self, TemplateError> {
        let bad = |reason: &str| TemplateError::BadRecord { line: line_no, reason: reason.to_string() };
        let mut cols = line.split('\t');
        let (Some(id), Some(source), Some(fills), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
            return Err(bad("expected three tab-separated columns"));
        };
        if id.is_empty() {
            return Err(bad("empty story id"));
        }
        let source = source.parse().map_err(|s| bad(&format!("unknown source `{s}`")))?;
        let mut map = BTreeMap::new();
        for pair in fills.split(';').filter(|p| !p.is_empty()) {
            let (o, w) = pair.split_once('=').ok_or_else(|| bad("fill without `=`"))?;
            let o: usize = o.parse().map_err(|_| bad("non-numeric ordinal"))?;
            if map.insert(o, w.to_string()).is_some() {
                return Err(bad("ordinal repeated"));
            }
        }
        Ok(FilledStory { template_ref: id.to_string(), fills: map, source })
    }
}

/// Reads a FilledStory file; blank lines are skipped.
pub fn parse_filled_records(text: &str) -> Result<Vec<FilledStory>, TemplateError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| FilledStory::from_record(l, i + 1))
        .collect()
}

/// A sentence rendered for a scorer query, with the target given as the
/// position of the designated marker among all markers in `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSentence {
    pub text: String,
    pub mask_index: usize,
}

/// How blanks right of the target are rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RightBlanks {
    /// As mask markers.
    #[default]
    Mask,
    /// As their `{{hint}}` placeholders, so only the target is a marker.
    Placeholder,
}

pub fn mask_sentence(
    sentence: &SentenceTemplate,
    target: usize,
    fills: &BTreeMap<usize, String>,
    right: RightBlanks,
) -> Result<MaskedSentence, TemplateError> {
    if sentence.hint_of(target).is_none() {
        return Err(TemplateError::NoSuchBlank(target));
    }
    for (o, _) in sentence.blanks().filter(|(o, _)| *o < target) {
        if !fills.contains_key(&o) {
            return Err(TemplateError::MissingFill(o));
        }
    }
    let mut pieces = Vec::with_capacity(sentence.tokens.len());
    for t in &sentence.tokens {
        pieces.push(match t {
            Token::Literal(s) => s.clone(),
            Token::Blank { ordinal, .. } if *ordinal < target => fills[ordinal].clone(),
            Token::Blank { ordinal, .. } if *ordinal == target => MASK.to_string(),
            Token::Blank { hint, .. } => match right {
                RightBlanks::Mask => MASK.to_string(),
                RightBlanks::Placeholder => format!("{{{{{hint}}}}}"),
            },
        });
    }
    // Left blanks are filled, so the target is always the first marker.
    Ok(MaskedSentence { text: detokenize(&pieces), mask_index: 0 })
}

/// Renders a complete story, one sentence per line.
pub fn render_story(template: &StoryTemplate, fills: &BTreeMap<usize, String>) -> Result<String, TemplateError> {
    check_fills(template, fills)?;
    let lines: Vec<String> = template.sentences.iter().map(|s| s.render_partial(fills)).collect();
    Ok(lines.join("\n"))
}

pub fn check_fills(template: &StoryTemplate, fills: &BTreeMap<usize, String>) -> Result<(), TemplateError> {
    for (o, _) in template.blanks() {
        if !fills.contains_key(&o) {
            return Err(TemplateError::MissingFill(o));
        }
    }
    for (o, w) in fills {
        if template.hint_of(*o).is_none() {
            return Err(TemplateError::ExtraFill(*o));
        }
        if w.is_empty() || w.chars().any(char::is_whitespace) {
            return Err(TemplateError::InvalidFill(w.clone()));
        }
    }
    Ok(())
}

pub fn parse_template(story_id: &str, text: &str) -> Result<StoryTemplate, TemplateError> {
    let mut lines = text.lines().enumerate().skip_while(|(_, l)| l.trim().is_empty());
    let (_, header) = lines.next().ok_or(TemplateError::MissingTitle)?;
    let title = header.strip_prefix('#').ok_or(TemplateError::MissingTitle)?.trim();
    if title.is_empty() {
        return Err(TemplateError::EmptyTitle);
    }
    let mut next_ordinal = 0usize;
    let mut seen = std::collections::BTreeSet::new();
    let mut sentences = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let tokens = tokenize_line(line, line_no, &mut next_ordinal, &mut seen)?;
        sentences.push(SentenceTemplate { tokens });
    }
    if sentences.is_empty() {
        return Err(TemplateError::NoSentences);
    }
    Ok(StoryTemplate { story_id: story_id.to_string(), title: title.to_string(), sentences })
}

fn tokenize_line(
    line: &str,
    line_no: usize,
    next_ordinal: &mut usize,
    seen: &mut std::collections::BTreeSet<usize>,
) -> Result<Vec<Token>, TemplateError> {
    let mut tokens = Vec::new();
    let mut rest = line;
    while !rest.is_empty() {
        match (rest.find("{{"), rest.find("}}")) {
            (Some(open), close) if close.is_none_or(|c| c > open) => {
                push_literals(&rest[..open], &mut tokens);
                let after = &rest[open + 2..];
                let end = after.find("}}").ok_or(TemplateError::Unbalanced { line: line_no })?;
                let body = after[..end].trim();
                if body.contains("{{") {
                    return Err(TemplateError::Unbalanced { line: line_no });
                }
                let (hint_text, explicit) = match body.split_once(':') {
                    Some((h, o)) => {
                        let o = o
                            .trim()
                            .parse::<usize>()
                            .map_err(|_| TemplateError::BadOrdinal { line: line_no, text: o.to_string() })?;
                        (h.trim(), Some(o))
                    }
                    None => (body, None),
                };
                let hint: HintType =
                    hint_text.parse().map_err(|hint| TemplateError::UnknownHint { line: line_no, hint })?;
                let ordinal = explicit.unwrap_or(*next_ordinal);
                if !seen.insert(ordinal) {
                    return Err(TemplateError::DuplicateOrdinal { line: line_no, ordinal });
                }
                if ordinal < *next_ordinal {
                    return Err(TemplateError::NonIncreasingOrdinal { line: line_no, ordinal });
                }
                *next_ordinal = ordinal + 1;
                tokens.push(Token::Blank { ordinal, hint });
                rest = &after[end + 2..];
            }
            (_, Some(_)) => return Err(TemplateError::Unbalanced { line: line_no }),
            _ => {
                push_literals(rest, &mut tokens);
                rest = "";
            }
        }
    }
    Ok(tokens)
}

const CLOSING: &[char] = &['.', ',', '!', '?', ';', ':', ')', ']', '”', '’'];
const OPENING: &[char] = &['(', '[', '“', '‘'];

fn is_closing(s: &str) -> bool {
    let mut c = s.chars();
    matches!((c.next(), c.next()), (Some(ch), None) if CLOSING.contains(&ch))
}

fn is_opening(s: &str) -> bool {
    let mut c = s.chars();
    matches!((c.next(), c.next()), (Some(ch), None) if OPENING.contains(&ch))
}

/// Splits literal text into words and single punctuation marks.
fn push_literals(text: &str, out: &mut Vec<Token>) {
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if CLOSING.contains(&ch) || OPENING.contains(&ch) {
                if !word.is_empty() {
                    out.push(Token::Literal(std::mem::take(&mut word)));
                }
                out.push(Token::Literal(ch.to_string()));
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            out.push(Token::Literal(word));
        }
    }
}

/// Space-joins pieces, dropping the space before closing punctuation and
/// after opening brackets or quotes.
pub fn detokenize<S: AsRef<str>>(pieces: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for p in pieces {
        let p = p.as_ref();
        if !glue_next && !is_closing(p) {
            out.push(' ');
        }
        out.push_str(p);
        glue_next = is_opening(p);
    }
    out
}
