use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use funlib_core::annotation::AnnotationError;
use funlib_core::lexicon::LexiconError;
use funlib_core::metrics::MetricsError;
use funlib_core::scorers::ScorerError;
use funlib_core::sentence_fill::FillError;
use funlib_core::story_compose::ComposeError;
use funlib_core::template::TemplateError;
use funlib_core::Locale;

mod commands;
mod config;
mod output;

use commands::ReportKind;
use config::{Backend, ConfigError, Overrides, RunConfig};

/// Humor-driven fill-in-the-blank story generator.
#[derive(Debug, Parser)]
#[command(name = "funlib", version)]
struct Cli {
    /// TOML run configuration; paths inside are relative to it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_locale)]
    locale: Option<Locale>,
    /// Candidates kept per blank from the mask scorer.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Sentence beam width.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Story beam width.
    #[arg(long = "N", global = true)]
    big_n: Option<usize>,
    #[arg(long, global = true, value_enum)]
    scorer: Option<Backend>,
    /// Remote scorer URL. Falls back to the config, then MADLIB_ENDPOINT.
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse templates and list their blanks.
    Validate { templates: Vec<PathBuf> },
    /// Train the builtin n-gram model from the configured corpus.
    TrainNgram,
    /// Rank sentence transformations for each template.
    Fill { templates: Vec<PathBuf> },
    /// Compose the best stories for each template.
    Compose {
        templates: Vec<PathBuf>,
        /// Reuse a transformations file written by `fill`.
        #[arg(long)]
        transformations: Option<PathBuf>,
    },
    /// Fill stories by language-model likelihood alone.
    BaselineMlm { templates: Vec<PathBuf> },
    /// Build the labeled humor dataset from judgements.
    Dataset {
        #[arg(long)]
        judgements: Option<PathBuf>,
        #[arg(long)]
        variants: Option<PathBuf>,
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long)]
        augmentation_corpus: Option<PathBuf>,
    },
    /// Evaluation reports over judgements.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
        #[arg(long)]
        judgements: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn parse_locale(s: &str) -> Result<Locale, String> {
    s.parse().map_err(|_| format!("unknown locale `{s}` (expected in, us or neutral)"))
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        let kind = if cause.is::<ConfigError>() {
            "config"
        } else if cause.is::<TemplateError>() {
            "template"
        } else if cause.is::<LexiconError>() {
            "lexicon"
        } else if cause.is::<ScorerError>() {
            "scorer"
        } else if cause.is::<FillError>() {
            "fill"
        } else if cause.is::<ComposeError>() {
            "compose"
        } else if cause.is::<AnnotationError>() {
            "annotation"
        } else if cause.is::<MetricsError>() {
            "metrics"
        } else if cause.is::<serde_json::Error>() {
            "json"
        } else if cause.is::<std::io::Error>() {
            "io"
        } else {
            continue;
        };
        return kind;
    }
    "internal"
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format(|buf, record| {
            let label = match record.level() {
                log::Level::Error => "error",
                log::Level::Warn => "warning",
                log::Level::Info => "info",
                log::Level::Debug => "debug",
                log::Level::Trace => "trace",
            };
            writeln!(buf, "{label}: {}", record.args())
        })
        .init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        locale: cli.locale,
        k: cli.k,
        n: cli.n,
        big_n: cli.big_n,
        scorer: cli.scorer,
        endpoint: cli.endpoint,
        seed: cli.seed,
        jobs: cli.jobs,
        out: cli.out,
    };
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides, std::env::var("MADLIB_ENDPOINT").ok())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    pool.install(|| {
        let written = match cli.command {
            Command::Validate { templates } => {
                print!("{}", commands::validate(&templates, &cfg)?);
                return Ok(());
            }
            Command::TrainNgram => vec![commands::train_ngram(&cfg)?],
            Command::Fill { templates } => commands::fill(&templates, &cfg)?,
            Command::Compose { templates, transformations } => {
                commands::compose(&templates, transformations.as_deref(), &cfg)?
            }
            Command::BaselineMlm { templates } => commands::baseline_mlm(&templates, &cfg)?,
            Command::Dataset { judgements, variants, splits, augmentation_corpus } => {
                override_path(&mut cfg.paths.judgements, judgements)?;
                override_path(&mut cfg.paths.variants, variants)?;
                override_path(&mut cfg.paths.splits, splits)?;
                override_path(&mut cfg.paths.augmentation_corpus, augmentation_corpus)?;
                commands::dataset(&cfg)?
            }
            Command::Report { kind, judgements, manifest } => {
                override_path(&mut cfg.paths.judgements, judgements)?;
                override_path(&mut cfg.paths.manifest, manifest)?;
                let (path, body) = commands::report(kind, &cfg)?;
                print!("{body}");
                vec![path]
            }
        };
        for path in written {
            log::info!("wrote {}", path.display());
        }
        Ok(())
    })
}

fn override_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) -> anyhow::Result<()> {
    if let Some(p) = value {
        if !p.exists() {
            return Err(ConfigError(format!("path does not exist: {}", p.display())).into());
        }
        *slot = Some(p);
    }
    Ok(())
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&message).trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = error_kind(&err);
            let line = serde_json::json!({ "error": kind, "message": format!("{err:#}") });
            eprintln!("{line}");
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}
