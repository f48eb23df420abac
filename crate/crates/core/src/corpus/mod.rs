//! Loaders for tagged captions, lexicons and image features.

mod captions;
mod features;
mod lexicon;
mod tags;

pub use captions::{load_captions, parse_captions, CaptionRecord};
pub use features::{
    load_features, parse_features, write_features, FeatureStore, ImageFeature, FEATURE_MAGIC,
};
pub use lexicon::{load_lexicon, parse_lexicon, HypernymLexicon, SpellingLexicon};
pub use tags::{first_bio_violation, ChunkTag, PhraseKind, Pos, TaggedToken, TokenParseError};
