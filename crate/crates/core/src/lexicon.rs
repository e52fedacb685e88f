//! Word legality for blanks: dictionary membership, agreement with the
//! blank's hint, slang blocking and the single-word rule.
//!
//! Morphology is table driven. Each entry lists the inflectional forms it
//! can stand for, so agreement checks are plain set lookups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::template::HintType;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("lexicon has no entries")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Number {
    Singular,
    Plural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TenseForm {
    Base,
    Past,
    Ing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticClass {
    Bodypart,
    Food,
    Liquid,
    Place,
    Animal,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:ident => $kw:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($kw => Ok(<$ty>::$variant),)+
                    other => Err(other.to_string()),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$ty>::$variant => $kw,)+ })
            }
        }
    };
}

keyword_enum!(Pos { Noun => "noun", Verb => "verb", Adjective => "adjective", Adverb => "adverb", Other => "other" });
keyword_enum!(Number { Singular => "singular", Plural => "plural" });
keyword_enum!(TenseForm { Base => "base", Past => "past", Ing => "ing" });
keyword_enum!(SemanticClass {
    Bodypart => "bodypart",
    Food => "food",
    Liquid => "liquid",
    Place => "place",
    Animal => "animal",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub surface: String,
    pub lemma: String,
    pub pos_tags: BTreeSet<Pos>,
    /// Empty when no noun reading exists.
    pub numbers: BTreeSet<Number>,
    /// Empty when no verb reading exists.
    pub tense_forms: BTreeSet<TenseForm>,
    pub semantic_classes: BTreeSet<SemanticClass>,
    pub corpus_frequency: u64,
}

impl LexiconEntry {
    fn merge(&mut self, other: LexiconEntry) {
        self.pos_tags.extend(other.pos_tags);
        self.numbers.extend(other.numbers);
        self.tense_forms.extend(other.tense_forms);
        self.semantic_classes.extend(other.semantic_classes);
        self.corpus_frequency = self.corpus_frequency.max(other.corpus_frequency);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, LexiconEntry>,
    blocklist: BTreeSet<String>,
    /// Sorted corpus frequencies, for percentile lookups.
    frequencies: Vec<u64>,
}

/// One word written in the Latin alphabet. Hyphens may join letters.
pub fn is_single_latin_word(word: &str) -> bool {
    !word.is_empty()
        && !word.starts_with('-')
        && !word.ends_with('-')
        && !word.contains("--")
        && word.chars().all(|c| c.is_ascii_alphabetic() || c == '-')
}

impl Lexicon {
    pub fn from_entries(entries: impl IntoIterator<Item = LexiconEntry>) -> Self {
        let mut map: BTreeMap<String, LexiconEntry> = BTreeMap::new();
        for e in entries {
            match map.get_mut(&e.surface) {
                Some(existing) => existing.merge(e),
                None => {
                    map.insert(e.surface.clone(), e);
                }
            }
        }
        let mut frequencies: Vec<u64> = map.values().map(|e| e.corpus_frequency).collect();
        frequencies.sort_unstable();
        Lexicon { entries: map, blocklist: BTreeSet::new(), frequencies }
    }

    pub fn with_blocklist(mut self, words: impl IntoIterator<Item = String>) -> Self {
        self.blocklist.extend(words.into_iter().map(|w| w.to_lowercase()));
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&LexiconEntry> {
        self.entries.get(&word.to_lowercase())
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.values()
    }

    pub fn is_blocked(&self, word: &str) -> bool {
        self.blocklist.contains(&word.to_lowercase())
    }

    /// Fraction of entries whose corpus frequency is at most this word's.
    /// Unknown words sit at 0.
    pub fn frequency_percentile(&self, word: &str) -> f64 {
        match self.get(word) {
            Some(e) if !self.frequencies.is_empty() => {
                let at_most = self.frequencies.partition_point(|&f| f <= e.corpus_frequency);
                at_most as f64 / self.frequencies.len() as f64
            }
            _ => 0.0,
        }
    }

    pub fn satisfies_hint(&self, word: &str, hint: HintType) -> bool {
        if !is_single_latin_word(word) || self.is_blocked(word) {
            return false;
        }
        let Some(e) = self.get(word) else {
            return false;
        };
        let has = |p: Pos| e.pos_tags.contains(&p);
        match hint {
            HintType::Noun => has(Pos::Noun) && e.numbers.contains(&Number::Singular),
            HintType::NounPlural => has(Pos::Noun) && e.numbers.contains(&Number::Plural),
            HintType::Verb => has(Pos::Verb) && e.tense_forms.contains(&TenseForm::Base),
            HintType::VerbPast => has(Pos::Verb) && e.tense_forms.contains(&TenseForm::Past),
            HintType::VerbIng => has(Pos::Verb) && e.tense_forms.contains(&TenseForm::Ing),
            HintType::Adjective => has(Pos::Adjective),
            HintType::Adverb => has(Pos::Adverb),
            HintType::Bodypart => e.semantic_classes.contains(&SemanticClass::Bodypart),
            HintType::Food => e.semantic_classes.contains(&SemanticClass::Food),
            HintType::Liquid => e.semantic_classes.contains(&SemanticClass::Liquid),
            HintType::Place => e.semantic_classes.contains(&SemanticClass::Place),
            HintType::Animal => e.semantic_classes.contains(&SemanticClass::Animal),
        }
    }

    /// Order-preserving subsequence of `candidates` that may fill `hint`.
    pub fn filter_candidates<S: AsRef<str> + Clone>(&self, candidates: &[S], hint: HintType) -> Vec<S> {
        candidates.iter().filter(|w| self.satisfies_hint(w.as_ref(), hint)).cloned().collect()
    }

    /// The hint a word of the given POS would need to be filled back into
    /// its own slot, used when masking running text.
    pub fn hint_for_occurrence(&self, word: &str, pos: Pos) -> Option<HintType> {
        let e = self.get(word)?;
        if !e.pos_tags.contains(&pos) {
            return None;
        }
        match pos {
            Pos::Noun if e.numbers.contains(&Number::Singular) => Some(HintType::Noun),
            Pos::Noun if e.numbers.contains(&Number::Plural) => Some(HintType::NounPlural),
            Pos::Verb if e.tense_forms.contains(&TenseForm::Base) => Some(HintType::Verb),
            Pos::Verb if e.tense_forms.contains(&TenseForm::Past) => Some(HintType::VerbPast),
            Pos::Verb if e.tense_forms.contains(&TenseForm::Ing) => Some(HintType::VerbIng),
            Pos::Adjective => Some(HintType::Adjective),
            Pos::Adverb => Some(HintType::Adverb),
            _ => None,
        }
    }

    pub fn parse_tsv(text: &str) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            entries.push(parse_entry(line, i + 1)?);
        }
        if entries.is_empty() {
            return Err(LexiconError::Empty);
        }
        Ok(Lexicon::from_entries(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        Lexicon::parse_tsv(&read(path.as_ref())?)
    }

    pub fn load_blocklist(self, path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let text = read(path.as_ref())?;
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect::<Vec<_>>();
        Ok(self.with_blocklist(words))
    }
}

fn read(path: &Path) -> Result<String, LexiconError> {
    std::fs::read_to_string(path).map_err(|source| LexiconError::Io { path: path.display().to_string(), source })
}

fn is_na(s: &str) -> bool {
    matches!(s, "" | "-" | "n/a")
}

/// `surface<TAB>lemma<TAB>pos<TAB>number<TAB>tense<TAB>classes<TAB>frequency`
fn parse_entry(line: &str, line_no: usize) -> Result<LexiconEntry, LexiconError> {
    let bad = |reason: String| LexiconError::Malformed { line: line_no, reason };
    let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
    if cols.len() != 7 {
        return Err(bad(format!("expected 7 tab-separated columns, found {}", cols.len())));
    }
    let surface = cols[0].to_lowercase();
    if !is_single_latin_word(&surface) {
        return Err(bad(format!("surface `{}` is not a single Latin-alphabet word", cols[0])));
    }
    let pos: Pos = cols[2].parse().map_err(|p| bad(format!("unknown POS `{p}`")))?;
    let mut numbers = BTreeSet::new();
    if !is_na(cols[3]) {
        numbers.insert(cols[3].parse::<Number>().map_err(|n| bad(format!("unknown number `{n}`")))?);
    }
    let mut tense_forms = BTreeSet::new();
    if !is_na(cols[4]) {
        tense_forms.insert(cols[4].parse::<TenseForm>().map_err(|t| bad(format!("unknown tense `{t}`")))?);
    }
    if pos == Pos::Noun && numbers.is_empty() {
        return Err(bad("noun entry without number".into()));
    }
    if pos == Pos::Verb && tense_forms.is_empty() {
        return Err(bad("verb entry without tense form".into()));
    }
    let mut semantic_classes = BTreeSet::new();
    if !is_na(cols[5]) {
        for c in cols[5].split(',').map(str::trim).filter(|c| !c.is_empty()) {
            semantic_classes.insert(c.parse::<SemanticClass>().map_err(|c| bad(format!("unknown class `{c}`")))?);
        }
    }
    let corpus_frequency = cols[6].parse().map_err(|_| bad(format!("bad frequency `{}`", cols[6])))?;
    Ok(LexiconEntry {
        surface,
        lemma: cols[1].to_lowercase(),
        pos_tags: BTreeSet::from([pos]),
        numbers,
        tense_forms,
        semantic_classes,
        corpus_frequency,
    })
}
