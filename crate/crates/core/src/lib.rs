//! Subject entity detection for enumerations and tables of wiki pages.
//!
//! The crate covers every stage around the token classifier: parsing
//! wikitext into [`Listing`]s, distant-supervision labeling against a typed
//! knowledge base, encoding listings into special-token sequences, shuffled
//! negative sampling, aggregating token predictions into mentions and
//! scoring them under four matching scenarios. The classifier itself runs out of process and
//! talks to this crate through line-delimited JSON files.

pub mod aggregator;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod jsonl;
pub mod labeler;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod scorer;
pub mod wikitext;

pub use diagnostics::Diagnostic;
pub use error::{Error, Result};
pub use model::{
    validate_listing, EntityMention, EntityType, Listing, ListingContext, ListingItem, ListingKind,
    TokenLabel,
};
