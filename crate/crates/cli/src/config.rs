//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! locale = "in"            # in | us | neutral
//! seed = 7
//! scorer = "builtin"       # builtin | remote
//! endpoint = "http://127.0.0.1:8000"
//! embedding_layer = "second_to_last"
//! jobs = 4
//!
//! [params]
//! k = 10000
//! n = 100
//! N = 100
//! funny_threshold = 0.5
//! final_rank = "lexicographic"   # or "weighted:0.7"
//! best = 10
//! ngram_order = 3
//! ngram_smoothing = 0.1
//! augmentation_pos = "noun"
//! alpha_metric = "interval"
//! top_selection = "top3"
//!
//! [paths]                  # relative to the config file
//! templates = ["templates/zoo.funlib"]
//! lexicon = "lexicon.tsv"
//! blocklist = "blocklist.txt"
//! corpus = "corpus.txt"
//! corpus_in = "corpus_in.txt"
//! corpus_us = "corpus_us.txt"
//! ngram = "ngram.json"
//! weights = "weights.txt"
//! judgements = "judgements.jsonl"
//! variants = "filled.tsv"
//! splits = "splits.tsv"
//! manifest = "manifest.tsv"
//! augmentation_corpus = "wiki.txt"
//! out = "out"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use funlib_core::lexicon::Pos;
use funlib_core::metrics::{AlphaMetric, Selection};
use funlib_core::scorers::EmbeddingLayer;
use funlib_core::story_compose::{ComposeParams, FinalRank};
use funlib_core::{FillParams, Locale};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Builtin,
    Remote,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    locale: Option<String>,
    seed: Option<u64>,
    scorer: Option<Backend>,
    endpoint: Option<String>,
    embedding_layer: Option<EmbeddingLayer>,
    jobs: Option<usize>,
    #[serde(default)]
    params: ParamsSection,
    #[serde(default)]
    paths: PathsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSection {
    k: Option<usize>,
    n: Option<usize>,
    #[serde(rename = "N")]
    big_n: Option<usize>,
    funny_threshold: Option<f64>,
    final_rank: Option<String>,
    best: Option<usize>,
    ngram_order: Option<usize>,
    ngram_smoothing: Option<f64>,
    augmentation_pos: Option<String>,
    alpha_metric: Option<String>,
    top_selection: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    #[serde(default)]
    templates: Vec<PathBuf>,
    lexicon: Option<PathBuf>,
    blocklist: Option<PathBuf>,
    corpus: Option<PathBuf>,
    corpus_in: Option<PathBuf>,
    corpus_us: Option<PathBuf>,
    ngram: Option<PathBuf>,
    weights: Option<PathBuf>,
    judgements: Option<PathBuf>,
    variants: Option<PathBuf>,
    splits: Option<PathBuf>,
    manifest: Option<PathBuf>,
    augmentation_corpus: Option<PathBuf>,
    out: Option<PathBuf>,
}

/// Values given on the command line; each wins over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub locale: Option<Locale>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub big_n: Option<usize>,
    pub scorer: Option<Backend>,
    pub endpoint: Option<String>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub templates: Vec<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub blocklist: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub corpus_in: Option<PathBuf>,
    pub corpus_us: Option<PathBuf>,
    pub ngram: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub judgements: Option<PathBuf>,
    pub variants: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub augmentation_corpus: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub locale: Locale,
    pub seed: u64,
    pub backend: Backend,
    pub endpoint: Option<String>,
    pub embedding_layer: EmbeddingLayer,
    pub jobs: usize,
    pub fill: FillParams,
    pub compose: ComposeParams,
    pub best: usize,
    pub ngram_order: usize,
    pub ngram_smoothing: f64,
    pub augmentation_pos: Pos,
    pub alpha_metric: AlphaMetric,
    pub top_selection: Selection,
    pub paths: Paths,
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub fn parse_final_rank(s: &str) -> Result<FinalRank> {
    match s.split_once(':') {
        None if s == "lexicographic" => Ok(FinalRank::Lexicographic),
        Some(("weighted", a)) => {
            let alpha: f64 = a.trim().parse().map_err(|_| config_error(format!("bad weighted alpha `{a}`")))?;
            Ok(FinalRank::Weighted(alpha))
        }
        _ => Err(config_error(format!("final_rank must be `lexicographic` or `weighted:<alpha>`, got `{s}`"))),
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>, cli: &Overrides, env_endpoint: Option<String>) -> Result<Self> {
        let (file, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let file: FileConfig =
                    toml::from_str(&text).map_err(|e| config_error(format!("{}: {}", p.display(), e.message())))?;
                (file, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let resolve = |p: Option<PathBuf>| p.map(|p| base.join(p));
        let params = file.params;

        let locale = match (cli.locale, file.locale) {
            (Some(l), _) => l,
            (None, Some(s)) => s.parse().map_err(|s| config_error(format!("unknown locale `{s}`")))?,
            (None, None) => Locale::In,
        };
        let fill = FillParams {
            k: cli.k.or(params.k).unwrap_or(FillParams::default().k),
            n: cli.n.or(params.n).unwrap_or(FillParams::default().n),
        };
        fill.validate().map_err(|e| config_error(e.to_string()))?;
        let defaults = ComposeParams::default();
        let compose = ComposeParams {
            beam_width: cli.big_n.or(params.big_n).unwrap_or(defaults.beam_width),
            funny_threshold: params.funny_threshold.unwrap_or(defaults.funny_threshold),
            final_rank: match params.final_rank {
                Some(s) => parse_final_rank(&s)?,
                None => defaults.final_rank,
            },
        };
        compose.validate().map_err(|e| config_error(e.to_string()))?;
        let best = params.best.unwrap_or(10);
        if best == 0 {
            bail!(config_error("best must be at least 1"));
        }
        let augmentation_pos = match params.augmentation_pos {
            Some(s) => s.parse().map_err(|p| config_error(format!("unknown POS `{p}`")))?,
            None => Pos::Noun,
        };
        let alpha_metric = match params.alpha_metric {
            Some(s) => s.parse().map_err(|e: funlib_core::metrics::MetricsError| config_error(e.to_string()))?,
            None => AlphaMetric::Interval,
        };
        let top_selection = match params.top_selection {
            Some(s) => s.parse().map_err(|s| config_error(format!("unknown selection `{s}`")))?,
            None => Selection::Top3,
        };
        let p = file.paths;
        let paths = Paths {
            templates: p.templates.into_iter().map(|t| base.join(t)).collect(),
            lexicon: resolve(p.lexicon),
            blocklist: resolve(p.blocklist),
            corpus: resolve(p.corpus),
            corpus_in: resolve(p.corpus_in),
            corpus_us: resolve(p.corpus_us),
            ngram: resolve(p.ngram),
            weights: resolve(p.weights),
            judgements: resolve(p.judgements),
            variants: resolve(p.variants),
            splits: resolve(p.splits),
            manifest: resolve(p.manifest),
            augmentation_corpus: resolve(p.augmentation_corpus),
        };
        let cfg = RunConfig {
            locale,
            seed: cli.seed.or(file.seed).unwrap_or(0),
            backend: cli.scorer.or(file.scorer).unwrap_or(Backend::Builtin),
            endpoint: cli.endpoint.clone().or(file.endpoint).or(env_endpoint),
            embedding_layer: file.embedding_layer.unwrap_or_default(),
            jobs: cli.jobs.or(file.jobs).unwrap_or(0),
            fill,
            compose,
            best,
            ngram_order: params.ngram_order.unwrap_or(3),
            ngram_smoothing: params.ngram_smoothing.unwrap_or(0.1),
            augmentation_pos,
            alpha_metric,
            top_selection,
            out: cli.out.clone().or(resolve(p.out)).unwrap_or_else(|| PathBuf::from("out")),
            paths,
        };
        cfg.check_paths()?;
        if cfg.backend == Backend::Remote && cfg.endpoint.is_none() {
            bail!(config_error("remote scorer needs --endpoint, `endpoint` in the config, or MADLIB_ENDPOINT"));
        }
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<()> {
        let p = &self.paths;
        let singles = [
            &p.lexicon,
            &p.blocklist,
            &p.corpus,
            &p.corpus_in,
            &p.corpus_us,
            &p.weights,
            &p.judgements,
            &p.variants,
            &p.splits,
            &p.manifest,
            &p.augmentation_corpus,
        ];
        // The n-gram artifact may be an output of train-ngram, so it is not checked.
        for path in p.templates.iter().chain(singles.into_iter().flatten()) {
            if !path.exists() {
                bail!(config_error(format!("path does not exist: {}", path.display())));
            }
        }
        Ok(())
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref().ok_or_else(|| config_error(format!("no {what} path configured")))
    }
}
