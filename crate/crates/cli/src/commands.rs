use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use funlib_core::annotation::{
    build_dataset, index_variants, make_augmented_pair, parse_judgements, parse_split_map,
    sample_augmentation_sentences, AnnotationError, LabeledPair, PairOrigin,
};
use funlib_core::metrics::{
    correlation_csv, correlation_report, krippendorff_alpha, mfg_report, parse_manifest, per_story_csv, MetricsError,
    ReliabilityMatrix,
};
use funlib_core::scorers::{FeatureHumorScorer, FeatureWeights, HashEmbedder, NgramModel, NgramScorer, RemoteScorer};
use funlib_core::sentence_fill::{fill_sentence_beam, fill_sentence_mlm_baseline};
use funlib_core::story_compose::{compose_mlm_baseline, compose_story, ChosenSentence, SentenceOptions};
use funlib_core::template::{parse_filled_records, parse_template, FillSource, FilledStory};
use funlib_core::{Lexicon, Locale, ScorerBundle, Split, StoryTemplate};
use serde::{Deserialize, Serialize};

use crate::config::{Backend, RunConfig};
use crate::output::write_atomic;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn story_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn load_template(path: &Path) -> Result<StoryTemplate> {
    parse_template(&story_id(path), &read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn templates(cfg: &RunConfig, args: &[PathBuf]) -> Result<Vec<StoryTemplate>> {
    let paths = if args.is_empty() { &cfg.paths.templates } else { args };
    if paths.is_empty() {
        bail!(crate::config::ConfigError("no templates given".into()));
    }
    paths.iter().map(|p| load_template(p)).collect()
}

fn lexicon(cfg: &RunConfig) -> Result<Lexicon> {
    let lex = Lexicon::load(cfg.require(&cfg.paths.lexicon, "lexicon")?)?;
    Ok(match &cfg.paths.blocklist {
        Some(b) => lex.load_blocklist(b)?,
        None => lex,
    })
}

fn corpus_lines(path: &Path) -> Result<Vec<String>> {
    Ok(read(path)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

fn train(cfg: &RunConfig, corpus: &Path) -> Result<NgramModel> {
    Ok(NgramModel::train(corpus_lines(corpus)?, cfg.ngram_order, cfg.ngram_smoothing)?)
}

fn ngram_scorer(cfg: &RunConfig) -> Result<NgramScorer> {
    let neutral = match &cfg.paths.ngram {
        Some(p) if p.exists() => NgramModel::from_json(&read(p)?)?,
        _ => train(cfg, cfg.require(&cfg.paths.corpus, "corpus")?)?,
    };
    let mut scorer = NgramScorer::new(Arc::new(neutral));
    for (locale, path) in [(Locale::In, &cfg.paths.corpus_in), (Locale::Us, &cfg.paths.corpus_us)] {
        if let Some(p) = path {
            scorer = scorer.with_locale(locale, Arc::new(train(cfg, p)?));
        }
    }
    Ok(scorer)
}

fn bundle(cfg: &RunConfig, lexicon: &Arc<Lexicon>) -> Result<ScorerBundle> {
    match cfg.backend {
        Backend::Builtin => {
            let lm = Arc::new(ngram_scorer(cfg)?);
            let weights = match &cfg.paths.weights {
                Some(p) => FeatureWeights::parse(&read(p)?)?,
                None => FeatureWeights::default(),
            };
            let embedder = HashEmbedder::new(cfg.seed);
            let humor = FeatureHumorScorer::new(weights, lm.clone(), lexicon.clone(), embedder.clone());
            Ok(ScorerBundle { mask: lm, humor: Arc::new(humor), embed: Arc::new(embedder), locale: cfg.locale })
        }
        Backend::Remote => {
            let endpoint = cfg.endpoint.as_deref().expect("checked at load");
            let remote = Arc::new(RemoteScorer::new(endpoint).with_layer(cfg.embedding_layer));
            Ok(ScorerBundle { mask: remote.clone(), humor: remote.clone(), embed: remote, locale: cfg.locale })
        }
    }
}

pub fn validate(args: &[PathBuf], cfg: &RunConfig) -> Result<String> {
    let mut out = String::new();
    for t in templates(cfg, args)? {
        writeln!(out, "{}\t{}\t{} sentences\t{} blanks", t.story_id, t.title, t.sentences.len(), t.blank_count())?;
        for (o, h) in t.blanks() {
            writeln!(out, "  {o}\t{h}")?;
        }
    }
    Ok(out)
}

pub fn train_ngram(cfg: &RunConfig) -> Result<PathBuf> {
    let model = train(cfg, cfg.require(&cfg.paths.corpus, "corpus")?)?;
    let dest = cfg.paths.ngram.clone().unwrap_or_else(|| cfg.out.join("ngram.json"));
    write_atomic(&dest, model.to_json().as_bytes())?;
    Ok(dest)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TransformationsFile {
    pub story_id: String,
    pub locale: Locale,
    pub k: usize,
    pub n: usize,
    pub sentences: Vec<SentenceOptions>,
}

fn fill_story(
    t: &StoryTemplate,
    bundle: &ScorerBundle,
    lexicon: &Lexicon,
    cfg: &RunConfig,
) -> Result<TransformationsFile> {
    let mut sentences = Vec::new();
    if t.blank_count() > 0 {
        for (i, s) in t.sentences.iter().enumerate() {
            sentences.push(if s.has_blanks() {
                let ranked = fill_sentence_beam(s, bundle, lexicon, &cfg.fill)
                    .with_context(|| format!("story `{}` sentence {}", t.story_id, i + 1))?;
                SentenceOptions::Ranked(ranked)
            } else {
                SentenceOptions::Fixed(s.render_partial(&BTreeMap::new()))
            });
        }
    } else {
        log::warn!("story `{}` has no blanks; no transformations produced", t.story_id);
    }
    Ok(TransformationsFile {
        story_id: t.story_id.clone(),
        locale: cfg.locale,
        k: cfg.fill.k,
        n: cfg.fill.n,
        sentences,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn fill(args: &[PathBuf], cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let lex = Arc::new(lexicon(cfg)?);
    let bundle = bundle(cfg, &lex)?;
    let mut written = Vec::new();
    for t in templates(cfg, args)? {
        let file = fill_story(&t, &bundle, &lex, cfg)?;
        let dest = cfg.out.join(format!("{}.transformations.json", t.story_id));
        write_atomic(&dest, &to_json(&file)?)?;
        written.push(dest);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct StoryReport {
    rank: usize,
    fills: BTreeMap<usize, String>,
    /// One entry per sentence; `None` for sentences without blanks.
    sentence_p_funny: Vec<Option<f64>>,
    story_funniness: f64,
    avg_word_coherence: f64,
    coherence_vacuous: bool,
    text: String,
}

#[derive(Debug, Serialize)]
struct ComposeReport {
    story_id: String,
    locale: Locale,
    stories: Vec<StoryReport>,
}

fn records(stories: impl Iterator<Item = FilledStory>) -> String {
    stories.map(|s| s.to_record() + "\n").collect()
}

pub fn compose(args: &[PathBuf], transformations: Option<&Path>, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let lex = Arc::new(lexicon(cfg)?);
    let bundle = bundle(cfg, &lex)?;
    let templates = templates(cfg, args)?;
    if transformations.is_some() && templates.len() != 1 {
        bail!(crate::config::ConfigError("--transformations needs exactly one template".into()));
    }
    let mut written = Vec::new();
    for t in templates {
        let file = match transformations {
            Some(p) => {
                let f: TransformationsFile =
                    serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
                if f.story_id != t.story_id {
                    bail!(crate::config::ConfigError(format!(
                        "transformations are for `{}`, template is `{}`",
                        f.story_id, t.story_id
                    )));
                }
                f
            }
            None => fill_story(&t, &bundle, &lex, cfg)?,
        };
        let stories = if file.sentences.is_empty() {
            log::warn!("story `{}` has no blanks; no stories composed", t.story_id);
            Vec::new()
        } else {
            let mut s = compose_story(&t, &file.sentences, bundle.embed.as_ref(), cfg.locale, &cfg.compose)
                .with_context(|| format!("composing `{}`", t.story_id))?;
            s.truncate(cfg.best);
            s
        };
        let report = ComposeReport {
            story_id: t.story_id.clone(),
            locale: cfg.locale,
            stories: stories
                .iter()
                .enumerate()
                .map(|(i, s)| StoryReport {
                    rank: i + 1,
                    fills: s.fills(),
                    sentence_p_funny: s
                        .chosen
                        .iter()
                        .map(|c| match c {
                            ChosenSentence::Filled(tr) => tr.p_funny,
                            ChosenSentence::Fixed(_) => None,
                        })
                        .collect(),
                    story_funniness: s.story_funniness,
                    avg_word_coherence: s.avg_word_coherence,
                    coherence_vacuous: s.coherence_vacuous,
                    text: s.text(),
                })
                .collect(),
        };
        let tsv = records(stories.iter().map(|s| FilledStory {
            template_ref: t.story_id.clone(),
            fills: s.fills(),
            source: FillSource::YodaLib,
        }));
        let stories_path = cfg.out.join(format!("{}.stories.tsv", t.story_id));
        let report_path = cfg.out.join(format!("{}.report.json", t.story_id));
        write_atomic(&stories_path, tsv.as_bytes())?;
        write_atomic(&report_path, &to_json(&report)?)?;
        written.extend([stories_path, report_path]);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct BaselineReport {
    story_id: String,
    locale: Locale,
    stories: Vec<BaselineEntry>,
}

#[derive(Debug, Serialize)]
struct BaselineEntry {
    rank: usize,
    fills: BTreeMap<usize, String>,
    mean_logprob: f64,
}

pub fn baseline_mlm(args: &[PathBuf], cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let lex = Arc::new(lexicon(cfg)?);
    let bundle = bundle(cfg, &lex)?;
    let mut written = Vec::new();
    for t in templates(cfg, args)? {
        let stories = if t.blank_count() == 0 {
            log::warn!("story `{}` has no blanks; no stories composed", t.story_id);
            Vec::new()
        } else {
            let mut per_sentence = Vec::new();
            for (i, s) in t.sentences.iter().enumerate() {
                per_sentence.push(if s.has_blanks() {
                    let ranked = fill_sentence_mlm_baseline(s, bundle.mask.as_ref(), &lex, &cfg.fill, cfg.locale)
                        .with_context(|| format!("story `{}` sentence {}", t.story_id, i + 1))?;
                    SentenceOptions::Ranked(ranked)
                } else {
                    SentenceOptions::Fixed(s.render_partial(&BTreeMap::new()))
                });
            }
            let mut s = compose_mlm_baseline(&t, &per_sentence, cfg.compose.beam_width)?;
            s.truncate(cfg.best);
            s
        };
        let tsv = records(stories.iter().map(|s| FilledStory {
            template_ref: t.story_id.clone(),
            fills: s.fills(),
            source: FillSource::Mlm,
        }));
        let report = BaselineReport {
            story_id: t.story_id.clone(),
            locale: cfg.locale,
            stories: stories
                .iter()
                .enumerate()
                .map(|(i, s)| BaselineEntry { rank: i + 1, fills: s.fills(), mean_logprob: s.mean_logprob })
                .collect(),
        };
        let stories_path = cfg.out.join(format!("{}.mlm.tsv", t.story_id));
        let report_path = cfg.out.join(format!("{}.mlm.json", t.story_id));
        write_atomic(&stories_path, tsv.as_bytes())?;
        write_atomic(&report_path, &to_json(&report)?)?;
        written.extend([stories_path, report_path]);
    }
    Ok(written)
}

pub fn dataset(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let templates = templates(cfg, &[])?;
    let variants = index_variants(&parse_filled_records(&read(cfg.require(&cfg.paths.variants, "variants")?)?)?);
    let judgements = parse_judgements(&read(cfg.require(&cfg.paths.judgements, "judgements")?)?)?;
    let splits = parse_split_map(&read(cfg.require(&cfg.paths.splits, "splits")?)?)?;
    let annotated = build_dataset(&templates, &variants, &judgements, &splits, &[])?;

    let augmentation = match &cfg.paths.augmentation_corpus {
        None => Vec::new(),
        Some(path) => {
            if cfg.locale == Locale::Neutral {
                bail!(crate::config::ConfigError("augmentation needs locale in or us".into()));
            }
            let lex = Arc::new(lexicon(cfg)?);
            let bundle = bundle(cfg, &lex)?;
            let train: Vec<String> = annotated
                .pairs
                .iter()
                .filter(|p| p.split == Split::Train && p.origin == PairOrigin::Annotated)
                .map(|p| p.filled_sentence.clone())
                .collect();
            let sampled = sample_augmentation_sentences(&corpus_lines(path)?, &train)?;
            let mut pairs: Vec<LabeledPair> = Vec::new();
            for s in sampled {
                match make_augmented_pair(
                    &s,
                    &lex,
                    bundle.mask.as_ref(),
                    cfg.augmentation_pos,
                    cfg.fill.k,
                    cfg.locale,
                    Split::Train,
                ) {
                    Ok(p) => pairs.push(p),
                    Err(AnnotationError::NoEligibleWord | AnnotationError::NoLegalReplacement(_)) => {
                        log::debug!("skipping augmentation sentence: {s}");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            pairs
        }
    };
    let data = build_dataset(&templates, &variants, &judgements, &splits, &augmentation)?;
    let pairs_path = cfg.out.join("dataset.jsonl");
    let stats_path = cfg.out.join("dataset_stats.csv");
    write_atomic(&pairs_path, data.to_jsonl().as_bytes())?;
    write_atomic(&stats_path, data.stats.to_csv().as_bytes())?;
    Ok(vec![pairs_path, stats_path])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportKind {
    Mfg,
    Corr,
    PerStory,
    Alpha,
}

pub fn report(kind: ReportKind, cfg: &RunConfig) -> Result<(PathBuf, String)> {
    let judgements = parse_judgements(&read(cfg.require(&cfg.paths.judgements, "judgements")?)?)?;
    let manifest = || -> Result<_> { Ok(parse_manifest(&read(cfg.require(&cfg.paths.manifest, "manifest")?)?)?) };
    let (name, body) = match kind {
        ReportKind::Mfg => ("mfg.csv", mfg_report(&judgements, &manifest()?)?.to_csv()),
        ReportKind::Corr => ("corr.csv", correlation_csv(&correlation_report(&judgements, &manifest()?))),
        ReportKind::PerStory => ("per_story.csv", per_story_csv(&judgements, &manifest()?, cfg.top_selection)?),
        ReportKind::Alpha => {
            let metric = match cfg.alpha_metric {
                funlib_core::AlphaMetric::Interval => "interval",
                funlib_core::AlphaMetric::Ordinal => "ordinal",
            };
            let mut out = String::from("judges,metric,alpha\n");
            for (label, country) in [("all", None), ("IN", Some(Locale::In)), ("US", Some(Locale::Us))] {
                let cell = match ReliabilityMatrix::from_judgements(&judgements, country) {
                    Ok(m) => format!("{}", krippendorff_alpha(&m, cfg.alpha_metric)),
                    Err(MetricsError::NoPairableValues) => "undefined (no pairable values)".into(),
                    Err(e) => return Err(e.into()),
                };
                writeln!(out, "{label},{metric},{cell}")?;
            }
            ("alpha.csv", out)
        }
    };
    let dest = cfg.out.join(name);
    write_atomic(&dest, body.as_bytes())?;
    Ok((dest, body))
}
