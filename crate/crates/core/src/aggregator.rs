//! Token predictions back to subject-entity mentions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::encoder::{is_special_token, EncodedChunk};
use crate::error::{Error, Result};
use crate::model::{EntityMention, EntityType, Listing, TokenLabel};

/// Model output for one chunk, aligned with its tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub listing_id: String,
    pub chunk_index: usize,
    pub labels: Vec<TokenLabel>,
}

impl PredictionRecord {
    /// Echoes the chunk's gold labels, if it has any.
    pub fn echo(chunk: &EncodedChunk) -> Option<Self> {
        Some(PredictionRecord {
            listing_id: chunk.listing_id.clone(),
            chunk_index: chunk.chunk_index,
            labels: chunk.labels.clone()?,
        })
    }
}

/// A subject entity found in one item. The span is in item-level words
/// (all cells read in order) and half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedMention {
    pub listing_id: String,
    pub item_index: usize,
    pub start_word: usize,
    pub end_word: usize,
    pub surface: String,
    pub label: EntityType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_entity: Option<String>,
}

impl ExtractedMention {
    pub fn overlaps(&self, other: &ExtractedMention) -> bool {
        self.listing_id == other.listing_id
            && self.item_index == other.item_index
            && self.start_word < other.end_word
            && other.start_word < self.end_word
    }

    pub fn same_span(&self, other: &ExtractedMention) -> bool {
        self.start_word == other.start_word && self.end_word == other.end_word
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decoded {
    pub mentions: Vec<ExtractedMention>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Collapses runs of one entity label per item and keeps the first run.
pub fn decode_mentions(chunk: &EncodedChunk, pred: &PredictionRecord) -> Result<Decoded> {
    if pred.listing_id != chunk.listing_id || pred.chunk_index != chunk.chunk_index {
        return Err(Error::InvalidInput(format!(
            "prediction {}/{} paired with chunk {}/{}",
            pred.listing_id, pred.chunk_index, chunk.listing_id, chunk.chunk_index
        )));
    }
    if pred.labels.len() != chunk.tokens.len() {
        return Err(Error::Misaligned {
            listing_id: chunk.listing_id.clone(),
            chunk_index: chunk.chunk_index,
            tokens: chunk.tokens.len(),
            labels: pred.labels.len(),
        });
    }

    let mut out = Decoded::default();
    for (&item_index, &(start, end)) in &chunk.item_spans {
        let runs = label_runs(&chunk.tokens[start..end], &pred.labels[start..end]);
        if runs.len() > 1 {
            out.diagnostics.push(Diagnostic::new(
                format!("{}/{}", chunk.listing_id, chunk.chunk_index),
                format!("item {item_index}: {} predicted mentions, keeping the first", runs.len()),
            ));
        }
        if let Some(run) = runs.into_iter().next() {
            out.mentions.push(ExtractedMention {
                listing_id: chunk.listing_id.clone(),
                item_index,
                start_word: run.start_word,
                end_word: run.end_word,
                surface: run.words.join(" "),
                label: run.label,
                linked_entity: None,
            });
        }
    }
    Ok(out)
}

struct Run<'a> {
    label: EntityType,
    start_word: usize,
    end_word: usize,
    words: Vec<&'a str>,
}

fn label_runs<'a>(tokens: &'a [String], labels: &[TokenLabel]) -> Vec<Run<'a>> {
    let mut runs: Vec<Run> = Vec::new();
    let mut open = false;
    let mut w = 0;
    for (tok, label) in tokens.iter().zip(labels) {
        if is_special_token(tok) {
            open = false;
            continue;
        }
        match label.entity_type() {
            Some(t) if open && runs.last().is_some_and(|r| r.label == t) => {
                let r = runs.last_mut().expect("open run");
                r.end_word = w + 1;
                r.words.push(tok);
            }
            Some(t) => {
                runs.push(Run {
                    label: t,
                    start_word: w,
                    end_word: w + 1,
                    words: vec![tok],
                });
                open = true;
            }
            None => open = false,
        }
        w += 1;
    }
    runs
}

/// Parsed link mentions of an item as item-level spans, in word order.
fn link_spans(listing: &Listing, item_index: usize) -> Vec<(usize, usize, &str)> {
    let Some(item) = listing.items.get(item_index) else {
        return Vec::new();
    };
    let offsets = item.cell_offsets();
    item.mentions_in_word_order()
        .into_iter()
        .filter_map(|m| {
            let base = *offsets.get(m.cell_index)?;
            let id = m.entity_id.as_deref()?;
            Some((base + m.start_word, base + m.end_word, id))
        })
        .collect()
}

/// Sets `linked_entity` from the first parsed link the mention overlaps.
pub fn attach_links(mentions: &mut [ExtractedMention], listing: &Listing) {
    for m in mentions.iter_mut().filter(|m| m.listing_id == listing.id) {
        m.linked_entity = link_spans(listing, m.item_index)
            .into_iter()
            .find(|&(s, e, _)| s < m.end_word && m.start_word < e)
            .map(|(_, _, id)| id.to_owned());
    }
}

/// The labeled subject of every item as an extracted mention.
pub fn gold_mentions(listing: &Listing) -> Vec<ExtractedMention> {
    listing
        .items
        .iter()
        .enumerate()
        .filter_map(|(i, item)| {
            let s = item.subject()?;
            let base = *item.cell_offsets().get(s.cell_index)?;
            Some(ExtractedMention {
                listing_id: listing.id.clone(),
                item_index: i,
                start_word: base + s.start_word,
                end_word: base + s.end_word,
                surface: s.surface.clone(),
                label: s.label.unwrap_or(EntityType::Other),
                linked_entity: s.entity_id.clone(),
            })
        })
        .collect()
}

/// Groups mentions by listing id; `listing_ids` fixes which listings
/// appear, including those without any mention.
pub fn group_by_listing<'a>(
    listing_ids: impl IntoIterator<Item = &'a str>,
    mentions: &[ExtractedMention],
) -> BTreeMap<String, Vec<ExtractedMention>> {
    let mut grouped: BTreeMap<String, Vec<ExtractedMention>> =
        listing_ids.into_iter().map(|id| (id.to_owned(), Vec::new())).collect();
    for m in mentions {
        grouped.entry(m.listing_id.clone()).or_default().push(m.clone());
    }
    grouped
}

/// Ids of listings whose mentions all share one type. Listings without
/// mentions are kept only when `keep_empty` is set.
pub fn filter_multi_type_listings(
    grouped: &BTreeMap<String, Vec<ExtractedMention>>,
    keep_empty: bool,
) -> Vec<String> {
    grouped
        .iter()
        .filter(|(_, ms)| {
            let types: BTreeSet<EntityType> = ms.iter().map(|m| m.label).collect();
            match types.len() {
                0 => keep_empty,
                1 => true,
                _ => false,
            }
        })
        .map(|(id, _)| id.clone())
        .collect()
}

/// Rewrites a listing's subjects from extracted mentions, producing a
/// noisily labeled training listing. Existing link mentions with the same
/// span become the subject; otherwise a new mention is added.
pub fn apply_predictions(listing: &Listing, mentions: &[ExtractedMention]) -> Listing {
    let mut out = listing.clone();
    for item in &mut out.items {
        item.mentions.retain(|m| m.entity_id.is_some() || !m.is_subject);
        for m in &mut item.mentions {
            m.is_subject = false;
            m.label = None;
        }
    }
    for em in mentions.iter().filter(|m| m.listing_id == listing.id) {
        let Some(item) = out.items.get_mut(em.item_index) else { continue };
        let offsets = item.cell_offsets();
        let Some(cell) = offsets.iter().rposition(|&o| o <= em.start_word) else { continue };
        let (start, end) = (em.start_word - offsets[cell], em.end_word - offsets[cell]);
        if end > item.words(cell).len() {
            continue;
        }
        match item
            .mentions
            .iter_mut()
            .find(|m| m.cell_index == cell && m.start_word == start && m.end_word == end)
        {
            Some(m) => {
                m.is_subject = true;
                m.label = Some(em.label);
            }
            None => item.mentions.push(EntityMention {
                cell_index: cell,
                start_word: start,
                end_word: end,
                surface: item.words(cell)[start..end].join(" "),
                entity_id: None,
                label: Some(em.label),
                is_subject: true,
            }),
        }
    }
    out
}

/// Labels the first linked mention of every item as `OTHER`.
pub fn pick_first_entity_baseline(listing: &Listing) -> Vec<ExtractedMention> {
    (0..listing.items.len())
        .filter_map(|i| {
            let (s, e, id) = link_spans(listing, i).into_iter().next()?;
            let words = listing.items[i].item_words();
            Some(ExtractedMention {
                listing_id: listing.id.clone(),
                item_index: i,
                start_word: s,
                end_word: e,
                surface: words.get(s..e).map(|w| w.join(" ")).unwrap_or_default(),
                label: EntityType::Other,
                linked_entity: Some(id.to_owned()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    per_type: BTreeMap<EntityType, u64>,
    total: u64,
    linked: u64,
    entities: BTreeSet<String>,
}

impl StatsAccumulator {
    pub fn add(&mut self, m: &ExtractedMention) {
        *self.per_type.entry(m.label).or_default() += 1;
        self.total += 1;
        if let Some(e) = &m.linked_entity {
            self.linked += 1;
            self.entities.insert(e.clone());
        }
    }

    pub fn merge(mut self, other: StatsAccumulator) -> Self {
        for (t, n) in other.per_type {
            *self.per_type.entry(t).or_default() += n;
        }
        self.total += other.total;
        self.linked += other.linked;
        self.entities.extend(other.entities);
        self
    }

    pub fn finish(&self) -> ExtractionStats {
        let distinct = self.entities.len() as u64;
        ExtractionStats {
            per_type: self.per_type.clone(),
            total: self.total,
            linked: self.linked,
            unlinked: self.total - self.linked,
            distinct_linked_entities: distinct,
            mentions_per_entity: if distinct == 0 {
                0.0
            } else {
                self.linked as f64 / distinct as f64
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractionStats {
    pub per_type: BTreeMap<EntityType, u64>,
    pub total: u64,
    pub linked: u64,
    pub unlinked: u64,
    pub distinct_linked_entities: u64,
    pub mentions_per_entity: f64,
}

pub fn extraction_stats<'a>(mentions: impl IntoIterator<Item = &'a ExtractedMention>) -> ExtractionStats {
    let mut acc = StatsAccumulator::default();
    for m in mentions {
        acc.add(m);
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ListingContext, ListingItem, ListingKind};
    use proptest::prelude::*;

    const WOA: TokenLabel = TokenLabel::Entity(EntityType::WorkOfArt);
    const PER: TokenLabel = TokenLabel::Entity(EntityType::Person);
    const ORG: TokenLabel = TokenLabel::Entity(EntityType::Org);
    const N: TokenLabel = TokenLabel::None;
    const I: TokenLabel = TokenLabel::Ignore;

    fn chunk(items: &[&[&str]]) -> EncodedChunk {
        let mut tokens = vec!["[CLS]".to_owned(), "T".to_owned(), "[CXE]".to_owned()];
        let mut item_spans = BTreeMap::new();
        for (i, toks) in items.iter().enumerate() {
            let s = tokens.len();
            tokens.extend(toks.iter().map(|t| t.to_string()));
            item_spans.insert(i, (s, tokens.len()));
        }
        tokens.push("[SEP]".into());
        EncodedChunk {
            listing_id: "L".into(),
            chunk_index: 0,
            tokens,
            item_spans,
            labels: None,
        }
    }

    fn pred(labels: Vec<TokenLabel>) -> PredictionRecord {
        PredictionRecord {
            listing_id: "L".into(),
            chunk_index: 0,
            labels,
        }
    }

    #[test]
    fn run_becomes_typed_mention() {
        let c = chunk(&[&["[E1]", "The", "Spaghetti", "Incident?", "(1993)"]]);
        let d = decode_mentions(&c, &pred(vec![I, I, I, I, WOA, WOA, WOA, N, I])).unwrap();
        assert_eq!(d.mentions.len(), 1);
        let m = &d.mentions[0];
        assert_eq!((m.surface.as_str(), m.label, m.start_word, m.end_word), ("The Spaghetti Incident?", EntityType::WorkOfArt, 0, 3));
        assert!(d.diagnostics.is_empty());
    }

    #[test]
    fn all_none_yields_nothing() {
        let c = chunk(&[&["[E1]", "a", "b"]]);
        assert!(decode_mentions(&c, &pred(vec![I, I, I, I, N, N, I])).unwrap().mentions.is_empty());
    }

    #[test]
    fn first_run_kept_with_diagnostic() {
        let c = chunk(&[&["[E1]", "a", "b", "c", "d"]]);
        let d = decode_mentions(&c, &pred(vec![I, I, I, I, PER, PER, N, ORG, I])).unwrap();
        assert_eq!(d.mentions.len(), 1);
        assert_eq!(d.mentions[0].label, EntityType::Person);
        assert_eq!(d.diagnostics.len(), 1);
    }

    #[test]
    fn special_tokens_break_runs() {
        let c = chunk(&[&["[ROW]", "a", "[COL]", "b"]]);
        let d = decode_mentions(&c, &pred(vec![I, I, I, I, PER, PER, PER, I])).unwrap();
        assert_eq!((d.mentions[0].start_word, d.mentions[0].end_word), (0, 1));
        assert_eq!(d.diagnostics.len(), 1);
    }

    #[test]
    fn misaligned_prediction_is_an_error() {
        let c = chunk(&[&["[E1]", "a"]]);
        let err = decode_mentions(&c, &pred(vec![I; 3])).unwrap_err();
        assert!(err.to_string().contains("L/0"));
    }

    fn listing() -> Listing {
        let m = |cell, s, e, id: &str| EntityMention {
            cell_index: cell,
            start_word: s,
            end_word: e,
            surface: String::new(),
            entity_id: Some(id.into()),
            label: None,
            is_subject: false,
        };
        Listing {
            id: "L".into(),
            kind: ListingKind::Table,
            context: ListingContext {
                page_title: "T".into(),
                section_path: vec![],
                header_cells: None,
            },
            items: vec![
                ListingItem {
                    cells: vec!["1998".into(), "Rubber Band x y".into()],
                    depth: 1,
                    mentions: vec![m(1, 3, 4, "Y"), m(1, 0, 2, "Rubber")],
                },
                ListingItem {
                    cells: vec!["2001".into(), "Swag".into()],
                    depth: 1,
                    mentions: vec![],
                },
            ],
        }
    }

    #[test]
    fn baseline_takes_first_link() {
        let b = pick_first_entity_baseline(&listing());
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].start_word, b[0].end_word, b[0].surface.as_str()), (1, 3, "Rubber Band"));
        assert_eq!(b[0].label, EntityType::Other);
    }

    #[test]
    fn links_attach_on_overlap() {
        let l = listing();
        let mk = |s, e| ExtractedMention {
            listing_id: "L".into(),
            item_index: 0,
            start_word: s,
            end_word: e,
            surface: String::new(),
            label: EntityType::WorkOfArt,
            linked_entity: None,
        };
        let mut ms = vec![mk(2, 3), mk(0, 1), mk(3, 5)];
        attach_links(&mut ms, &l);
        assert_eq!(ms[0].linked_entity.as_deref(), Some("Rubber"));
        assert_eq!(ms[1].linked_entity, None);
        assert_eq!(ms[2].linked_entity.as_deref(), Some("Y"));
    }

    #[test]
    fn predictions_round_trip_through_listing() {
        let l = listing();
        let em = ExtractedMention {
            listing_id: "L".into(),
            item_index: 0,
            start_word: 1,
            end_word: 3,
            surface: "Rubber Band".into(),
            label: EntityType::WorkOfArt,
            linked_entity: None,
        };
        let noisy = apply_predictions(&l, std::slice::from_ref(&em));
        let gold = gold_mentions(&noisy);
        assert_eq!(gold.len(), 1);
        assert_eq!((gold[0].start_word, gold[0].end_word, gold[0].label), (1, 3, EntityType::WorkOfArt));
        assert_eq!(gold[0].linked_entity.as_deref(), Some("Rubber"));
        assert_eq!(noisy.items[0].mentions.len(), 2);
    }

    #[test]
    fn multi_type_filter() {
        let mk = |id: &str, t| ExtractedMention {
            listing_id: id.into(),
            item_index: 0,
            start_word: 0,
            end_word: 1,
            surface: String::new(),
            label: t,
            linked_entity: None,
        };
        let ms = vec![
            mk("a", EntityType::Person),
            mk("a", EntityType::Person),
            mk("b", EntityType::Person),
            mk("b", EntityType::WorkOfArt),
        ];
        let g = group_by_listing(["a", "b", "c"], &ms);
        assert_eq!(filter_multi_type_listings(&g, false), vec!["a"]);
        assert_eq!(filter_multi_type_listings(&g, true), vec!["a", "c"]);
    }

    #[test]
    fn stats_ratio_and_empty() {
        assert_eq!(extraction_stats([]), ExtractionStats::default());
        let ms: Vec<ExtractedMention> = (0..10)
            .map(|i| ExtractedMention {
                listing_id: "L".into(),
                item_index: i,
                start_word: 0,
                end_word: 1,
                surface: String::new(),
                label: EntityType::Person,
                linked_entity: Some(format!("E{}", i % 2)),
            })
            .collect();
        let s = extraction_stats(&ms);
        assert_eq!(s.mentions_per_entity, 5.0);
        assert_eq!(s.per_type[&EntityType::Person], 10);
        let (a, b) = ms.split_at(3);
        let mut x = StatsAccumulator::default();
        a.iter().for_each(|m| x.add(m));
        let mut y = StatsAccumulator::default();
        b.iter().for_each(|m| y.add(m));
        assert_eq!(x.merge(y).finish(), s);
    }

    /// Every maximal constant-type interval free of special tokens, first by start.
    fn brute_force(tokens: &[String], labels: &[TokenLabel]) -> Option<(usize, usize, EntityType)> {
        let words: Vec<(usize, Option<EntityType>)> = tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| !is_special_token(t))
            .map(|(p, _)| (p, labels[p].entity_type()))
            .collect();
        let mut found = Vec::new();
        for a in 0..words.len() {
            for b in a + 1..=words.len() {
                let Some(t) = words[a].1 else { continue };
                let same = words[a..b].iter().all(|w| w.1 == Some(t));
                let contiguous = words[a..b].windows(2).all(|p| p[1].0 == p[0].0 + 1);
                let left_max = a == 0 || words[a - 1].1 != Some(t) || words[a - 1].0 + 1 != words[a].0;
                let right_max = b == words.len() || words[b].1 != Some(t) || words[b].0 != words[b - 1].0 + 1;
                if same && contiguous && left_max && right_max {
                    found.push((a, b, t));
                }
            }
        }
        found.into_iter().min_by_key(|f| f.0)
    }

    fn arb_label() -> impl Strategy<Value = TokenLabel> {
        prop_oneof![
            Just(TokenLabel::None),
            Just(TokenLabel::Ignore),
            Just(PER),
            Just(ORG),
        ]
    }

    proptest! {
        #[test]
        fn decode_matches_brute_force(
            items in prop::collection::vec(
                prop::collection::vec((any::<bool>(), arb_label()), 1..8), 1..5)
        ) {
            let toks: Vec<Vec<String>> = items
                .iter()
                .map(|it| {
                    let mut v = vec!["[E1]".to_owned()];
                    v.extend(it.iter().enumerate().map(|(k, (col, _))| if *col && k > 0 { "[COL]".to_owned() } else { format!("w{k}") }));
                    v
                })
                .collect();
            let refs: Vec<Vec<&str>> = toks.iter().map(|v| v.iter().map(String::as_str).collect()).collect();
            let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
            let c = chunk(&slices);
            let mut labels = vec![I; 3];
            for it in &items {
                labels.push(I);
                labels.extend(it.iter().map(|(_, l)| *l));
            }
            labels.push(I);
            let d = decode_mentions(&c, &pred(labels.clone())).unwrap();
            prop_assert!(d.mentions.len() <= items.len());
            for (&idx, &(s, e)) in &c.item_spans {
                let want = brute_force(&c.tokens[s..e], &labels[s..e]);
                let got = d.mentions.iter().find(|m| m.item_index == idx).map(|m| (m.start_word, m.end_word, m.label));
                prop_assert_eq!(got, want);
            }
        }
    }
}
