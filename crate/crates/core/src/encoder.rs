//! Listings as model input sequences.
//!
//! Every chunk has the shape
//! `[CLS] <page> ([CXS] <heading>)* ([CXS] <header row>)? [CXE] <items> [SEP]`
//! where an enumeration entry starts with `[E<depth>]` and a table row is
//! `[ROW] cell ([COL] cell)*`. Items are packed greedily in order and never
//! split across chunks; every chunk of a listing repeats the same context.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::error::{Error, Result};
use crate::model::{Listing, ListingContext, ListingItem, ListingKind, TokenLabel};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const CXS: &str = "[CXS]";
pub const CXE: &str = "[CXE]";
pub const ROW: &str = "[ROW]";
pub const COL: &str = "[COL]";

pub fn entry_token(depth: usize) -> String {
    format!("[E{depth}]")
}

pub fn is_special_token(tok: &str) -> bool {
    matches!(tok, CLS | SEP | CXS | CXE | ROW | COL)
        || tok
            .strip_prefix("[E")
            .and_then(|r| r.strip_suffix(']'))
            .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

/// Estimated model length (in subword tokens) of a single word token.
pub trait LengthEstimator: Send + Sync {
    fn token_len(&self, token: &str) -> usize;

    fn sequence_len(&self, tokens: &[String]) -> usize {
        tokens.iter().map(|t| self.token_len(t)).sum()
    }
}

/// 1.5 subwords per word rounded up (so 2 per word), 1 per special token.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEstimator;

impl LengthEstimator for HeuristicEstimator {
    fn token_len(&self, token: &str) -> usize {
        if is_special_token(token) {
            1
        } else {
            // ceil(1.5)
            2
        }
    }
}

impl<F> LengthEstimator for F
where
    F: Fn(&str) -> usize + Send + Sync,
{
    fn token_len(&self, token: &str) -> usize {
        self(token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub max_seq_len: usize,
    pub max_items_per_chunk: usize,
    pub max_enum_depth: usize,
    pub chunking_enabled: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            max_seq_len: 512,
            max_items_per_chunk: 20,
            max_enum_depth: 4,
            chunking_enabled: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_seq_len < 16 {
            return Err(Error::InvalidConfig(format!(
                "max_seq_len {} < 16",
                self.max_seq_len
            )));
        }
        if self.max_items_per_chunk == 0 {
            return Err(Error::InvalidConfig("max_items_per_chunk must be ≥ 1".into()));
        }
        if self.max_enum_depth == 0 {
            return Err(Error::InvalidConfig("max_enum_depth must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One model input sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedChunk {
    pub listing_id: String,
    pub chunk_index: usize,
    pub tokens: Vec<String>,
    /// Listing item index to its half-open token range.
    pub item_spans: BTreeMap<usize, (usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<TokenLabel>>,
}

impl EncodedChunk {
    /// Position of `[CXE]`.
    pub fn context_end(&self) -> Option<usize> {
        self.tokens.iter().position(|t| t == CXE)
    }

    /// Word tokens of one item grouped by cell (special tokens removed).
    pub fn item_cells(&self, item_index: usize) -> Option<Vec<Vec<&str>>> {
        let &(start, end) = self.item_spans.get(&item_index)?;
        let mut cells: Vec<Vec<&str>> = Vec::new();
        for tok in &self.tokens[start..end] {
            if tok == COL || cells.is_empty() && is_special_token(tok) {
                cells.push(Vec::new());
            } else if !is_special_token(tok) {
                if cells.is_empty() {
                    cells.push(Vec::new());
                }
                cells.last_mut().expect("non-empty").push(tok);
            }
        }
        Some(cells)
    }

    /// Checks the structural invariants of a chunk.
    pub fn check_structure(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.tokens.first().map(String::as_str) != Some(CLS) {
            out.push("first token is not [CLS]".into());
        }
        if self.tokens.last().map(String::as_str) != Some(SEP) {
            out.push("last token is not [SEP]".into());
        }
        let cxe: Vec<usize> = self
            .tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| *t == CXE)
            .map(|(i, _)| i)
            .collect();
        if cxe.len() != 1 {
            out.push(format!("{} [CXE] tokens", cxe.len()));
            return out;
        }
        let mut expected = cxe[0] + 1;
        for (&item, &(s, e)) in &self.item_spans {
            if s != expected || e <= s {
                out.push(format!("item {item}: span ({s}, {e}) does not start at {expected}"));
            }
            expected = e;
        }
        if expected + 1 != self.tokens.len() {
            out.push("item spans do not end right before [SEP]".into());
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.tokens.len() {
                out.push(format!("{} labels for {} tokens", labels.len(), self.tokens.len()));
            }
        }
        out
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_owned)
}

/// `[CLS] <page> ([CXS] <heading>)* ([CXS] [ROW] h0 ([COL] hi)*)? [CXE]`
pub fn encode_context(ctx: &ListingContext) -> Vec<String> {
    let mut toks = vec![CLS.to_owned()];
    toks.extend(words(&ctx.page_title));
    for heading in &ctx.section_path {
        toks.push(CXS.to_owned());
        toks.extend(words(heading));
    }
    if let Some(header) = &ctx.header_cells {
        toks.push(CXS.to_owned());
        push_row(&mut toks, header);
    }
    toks.push(CXE.to_owned());
    toks
}

fn push_row(toks: &mut Vec<String>, cells: &[String]) {
    toks.push(ROW.to_owned());
    for (i, cell) in cells.iter().enumerate() {
        if i > 0 {
            toks.push(COL.to_owned());
        }
        toks.extend(words(cell));
    }
}

pub fn encode_item(item: &ListingItem, kind: ListingKind, max_enum_depth: usize) -> Vec<String> {
    let mut toks = Vec::new();
    match kind {
        ListingKind::Enum => {
            toks.push(entry_token(item.depth.clamp(1, max_enum_depth)));
            for cell in &item.cells {
                toks.extend(words(cell));
            }
        }
        ListingKind::Table => push_row(&mut toks, &item.cells),
    }
    toks
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChunkedListing {
    pub chunks: Vec<EncodedChunk>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone)]
pub struct Encoder {
    config: EncoderConfig,
    estimator: Arc<dyn LengthEstimator>,
}

impl std::fmt::Debug for Encoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Encoder").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        Self::with_estimator(config, Arc::new(HeuristicEstimator))
    }

    pub fn with_estimator(config: EncoderConfig, estimator: Arc<dyn LengthEstimator>) -> Result<Self> {
        config.validate()?;
        Ok(Encoder { config, estimator })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn estimator(&self) -> &dyn LengthEstimator {
        self.estimator.as_ref()
    }

    pub fn chunk_listing(&self, listing: &Listing) -> ChunkedListing {
        let cfg = &self.config;
        let est = self.estimator.as_ref();
        let mut diagnostics = Vec::new();

        let mut prefix = encode_context(&listing.context);
        let prefix_budget = cfg.max_seq_len / 2;
        if est.sequence_len(&prefix) > prefix_budget {
            let before = prefix.len();
            // Drop context words from the end, keeping [CLS] and [CXE].
            prefix.pop();
            while prefix.len() > 1 && est.sequence_len(&prefix) + est.token_len(CXE) > prefix_budget {
                prefix.pop();
            }
            prefix.push(CXE.to_owned());
            diagnostics.push(Diagnostic::new(
                &listing.id,
                format!("context truncated from {before} to {} tokens", prefix.len()),
            ));
        }
        let prefix_len = est.sequence_len(&prefix);
        let item_budget = cfg.max_seq_len - prefix_len - est.token_len(SEP);

        let mut chunks = Vec::new();
        let mut current: Vec<(usize, Vec<String>)> = Vec::new();
        let mut current_len = 0;

        let flush = |current: &mut Vec<(usize, Vec<String>)>, chunks: &mut Vec<EncodedChunk>| {
            if current.is_empty() {
                return;
            }
            let mut tokens = prefix.clone();
            let mut item_spans = BTreeMap::new();
            for (idx, run) in current.drain(..) {
                let start = tokens.len();
                tokens.extend(run);
                item_spans.insert(idx, (start, tokens.len()));
            }
            tokens.push(SEP.to_owned());
            chunks.push(EncodedChunk {
                listing_id: listing.id.clone(),
                chunk_index: chunks.len(),
                tokens,
                item_spans,
                labels: None,
            });
        };

        for (idx, item) in listing.items.iter().enumerate() {
            let mut run = encode_item(item, listing.kind, cfg.max_enum_depth);
            let mut run_len = est.sequence_len(&run);
            if run_len > item_budget {
                let before = run.len();
                while run.len() > 1 && run_len > item_budget {
                    let t = run.pop().expect("len > 1");
                    run_len -= est.token_len(&t);
                }
                while run.len() > 1 && run.last().is_some_and(|t| t == COL) {
                    run.pop();
                }
                diagnostics.push(Diagnostic::new(
                    &listing.id,
                    format!("item {idx} truncated from {before} to {} tokens", run.len()),
                ));
                run_len = est.sequence_len(&run);
            }

            let full = !current.is_empty()
                && (!cfg.chunking_enabled
                    || current.len() >= cfg.max_items_per_chunk
                    || current_len + run_len > item_budget);
            if full {
                flush(&mut current, &mut chunks);
                current_len = 0;
            }
            current_len += run_len;
            current.push((idx, run));
        }
        flush(&mut current, &mut chunks);

        ChunkedListing { chunks, diagnostics }
    }
}
