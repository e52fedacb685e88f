//! Fixture loading shared by the benchmarks.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use funlib_core::lexicon::Lexicon;
use funlib_core::scorers::{FeatureHumorScorer, FeatureWeights, HashEmbedder, NgramModel, NgramScorer};
use funlib_core::template::parse_template;
use funlib_core::{Locale, ScorerBundle, StoryTemplate};

pub fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(toy_dir().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn toy_template(id: &str) -> StoryTemplate {
    parse_template(id, &read(&format!("templates/{id}.funlib"))).expect("toy template parses")
}

pub fn toy_lexicon() -> Arc<Lexicon> {
    let lex = Lexicon::load(toy_dir().join("lexicon.tsv")).expect("toy lexicon parses");
    Arc::new(lex.load_blocklist(toy_dir().join("blocklist.txt")).expect("toy blocklist reads"))
}

/// Builtin scorers trained on the toy corpus, as the CLI builds them.
pub fn toy_bundle(lexicon: &Arc<Lexicon>, locale: Locale, seed: u64) -> ScorerBundle {
    let corpus: Vec<String> = read("corpus.txt").lines().map(str::to_string).collect();
    let lm = Arc::new(NgramScorer::new(Arc::new(NgramModel::train(corpus, 3, 0.1).expect("corpus trains"))));
    let weights = FeatureWeights::parse(&read("weights.txt")).expect("weights parse");
    let embedder = HashEmbedder::new(seed);
    let humor = FeatureHumorScorer::new(weights, lm.clone(), lexicon.clone(), embedder.clone());
    ScorerBundle { mask: lm, humor: Arc::new(humor), embed: Arc::new(embedder), locale }
}
