//! Fill-in-the-blank humorous story generation.
//!
//! The pipeline runs in three stages over a [`template::StoryTemplate`]:
//! candidate selection from a masked LM filtered by the [`lexicon`],
//! humor ranking of partially filled sentences ([`sentence_fill`]), and a
//! story-level beam that balances funniness against similarity to the
//! sentences already chosen ([`story_compose`]). The [`annotation`] and
//! [`metrics`] modules cover crowd judgements: labeling rules, dataset
//! construction, agreement and correlation statistics, and MFG reports.

pub mod annotation;
pub mod lexicon;
pub mod metrics;
pub mod scorers;
pub mod sentence_fill;
pub mod story_compose;
pub mod template;

pub use annotation::{Grade, HumorLabel, JudgementRecord, LabeledPair, Split};
pub use lexicon::Lexicon;
pub use metrics::{AlphaMetric, Method, ReliabilityMatrix, Selection};
pub use scorers::{Locale, ScorerBundle};
pub use sentence_fill::{FillParams, Transformation};
pub use story_compose::{CompletedStory, ComposeParams};
pub use template::{FillSource, FilledStory, HintType, StoryTemplate};
