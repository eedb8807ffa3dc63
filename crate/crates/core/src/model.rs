//! Listing domain types and the token-label vocabulary.
//!
//! Spans are expressed in whitespace-delimited word offsets within a cell.
//! Cell text is stored already normalized (words joined by single spaces), so
//! `cell.split_whitespace()` is the canonical word sequence everywhere.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Minimum number of items a listing needs to be considered at all.
pub const MIN_ITEMS: usize = 3;

/// Coarse-grained subject entity type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EntityType {
    Person,
    Org,
    Loc,
    Gpe,
    Fac,
    Event,
    Norp,
    Language,
    Law,
    Product,
    Species,
    WorkOfArt,
    Other,
}

impl EntityType {
    pub const ALL: [EntityType; 13] = [
        EntityType::Person,
        EntityType::Org,
        EntityType::Loc,
        EntityType::Gpe,
        EntityType::Fac,
        EntityType::Event,
        EntityType::Norp,
        EntityType::Language,
        EntityType::Law,
        EntityType::Product,
        EntityType::Species,
        EntityType::WorkOfArt,
        EntityType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Person => "PERSON",
            EntityType::Org => "ORG",
            EntityType::Loc => "LOC",
            EntityType::Gpe => "GPE",
            EntityType::Fac => "FAC",
            EntityType::Event => "EVENT",
            EntityType::Norp => "NORP",
            EntityType::Language => "LANGUAGE",
            EntityType::Law => "LAW",
            EntityType::Product => "PRODUCT",
            EntityType::Species => "SPECIES",
            EntityType::WorkOfArt => "WORK_OF_ART",
            EntityType::Other => "OTHER",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown label `{}`", self.0)
    }
}

impl std::error::Error for UnknownLabel {}

impl FromStr for EntityType {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_owned()))
    }
}

/// Per-word classification target.
///
/// `Ignore` marks context words and special tokens, `None` marks item words
/// that are not part of a subject entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenLabel {
    Ignore,
    None,
    Entity(EntityType),
}

impl TokenLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenLabel::Ignore => "IGNORE",
            TokenLabel::None => "NONE",
            TokenLabel::Entity(t) => t.as_str(),
        }
    }

    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            TokenLabel::Entity(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for TokenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IGNORE" => Ok(TokenLabel::Ignore),
            "NONE" => Ok(TokenLabel::None),
            other => other.parse().map(TokenLabel::Entity),
        }
    }
}

impl Serialize for TokenLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TokenLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ListingKind {
    Enum,
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingContext {
    pub page_title: String,
    /// Section headings enclosing the listing, outermost first.
    #[serde(default)]
    pub section_path: Vec<String>,
    /// Present only for tables with a recognized header row.
    #[serde(default)]
    pub header_cells: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub cell_index: usize,
    pub start_word: usize,
    /// Exclusive.
    pub end_word: usize,
    pub surface: String,
    #[serde(default)]
    pub entity_id: Option<String>,
    #[serde(default)]
    pub label: Option<EntityType>,
    #[serde(default)]
    pub is_subject: bool,
}

impl EntityMention {
    pub fn overlaps(&self, other: &EntityMention) -> bool {
        self.cell_index == other.cell_index
            && self.start_word < other.end_word
            && other.start_word < self.end_word
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListingItem {
    pub cells: Vec<String>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub mentions: Vec<EntityMention>,
}

fn default_depth() -> usize {
    1
}

impl ListingItem {
    pub fn words(&self, cell_index: usize) -> Vec<&str> {
        self.cells
            .get(cell_index)
            .map(|c| c.split_whitespace().collect())
            .unwrap_or_default()
    }

    /// Word offset of the first word of each cell when all cells are read as
    /// one item-level word sequence.
    pub fn cell_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.cells.len());
        let mut acc = 0;
        for cell in &self.cells {
            offsets.push(acc);
            acc += cell.split_whitespace().count();
        }
        offsets
    }

    pub fn item_words(&self) -> Vec<&str> {
        self.cells.iter().flat_map(|c| c.split_whitespace()).collect()
    }

    pub fn subject(&self) -> Option<&EntityMention> {
        self.mentions.iter().find(|m| m.is_subject)
    }

    /// Mentions sorted by position (cell first, then start word).
    pub fn mentions_in_word_order(&self) -> Vec<&EntityMention> {
        let mut ms: Vec<&EntityMention> = self.mentions.iter().collect();
        ms.sort_by_key(|m| (m.cell_index, m.start_word, m.end_word));
        ms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Listing {
    pub id: String,
    pub kind: ListingKind,
    pub context: ListingContext,
    pub items: Vec<ListingItem>,
}

impl Listing {
    pub fn column_count(&self) -> Option<usize> {
        match self.kind {
            ListingKind::Table => self.items.first().map(|it| it.cells.len()),
            ListingKind::Enum => None,
        }
    }
}

/// Checks every listing invariant and returns one description per violation.
pub fn validate_listing(listing: &Listing) -> Vec<String> {
    validate_listing_with(listing, MIN_ITEMS)
}

pub fn validate_listing_with(listing: &Listing, min_items: usize) -> Vec<String> {
    let mut out = Vec::new();
    if listing.items.len() < min_items {
        out.push(format!(
            "listing: {} items < minimum {}",
            listing.items.len(),
            min_items
        ));
    }

    let header_len = listing.context.header_cells.as_ref().map(Vec::len);
    let expected_cells = match listing.kind {
        ListingKind::Enum => {
            if header_len.is_some() {
                out.push("context: header cells on an enumeration".to_owned());
            }
            None
        }
        ListingKind::Table => header_len.or_else(|| listing.items.first().map(|i| i.cells.len())),
    };

    for (i, item) in listing.items.iter().enumerate() {
        match listing.kind {
            ListingKind::Enum => {
                if item.cells.len() != 1 {
                    out.push(format!("item {i}: enumeration entry has {} cells", item.cells.len()));
                }
                if item.depth == 0 {
                    out.push(format!("item {i}: depth 0"));
                }
            }
            ListingKind::Table => {
                if let Some(expected) = expected_cells {
                    if item.cells.len() != expected {
                        out.push(format!("item {i}: cell count {} ≠ {expected}", item.cells.len()));
                    }
                }
                if item.depth != 1 {
                    out.push(format!("item {i}: table depth {} ≠ 1", item.depth));
                }
            }
        }

        let subjects = item.mentions.iter().filter(|m| m.is_subject).count();
        if subjects > 1 {
            out.push(format!("item {i}: {subjects} subject mentions"));
        }

        for (j, m) in item.mentions.iter().enumerate() {
            let Some(cell) = item.cells.get(m.cell_index) else {
                out.push(format!("item {i} mention {j}: cell index {} out of range", m.cell_index));
                continue;
            };
            if m.end_word <= m.start_word {
                out.push(format!("item {i} mention {j}: empty span"));
                continue;
            }
            let words: Vec<&str> = cell.split_whitespace().collect();
            if m.end_word > words.len() {
                out.push(format!(
                    "item {i} mention {j}: span end {} exceeds {} words",
                    m.end_word,
                    words.len()
                ));
                continue;
            }
            let covered = words[m.start_word..m.end_word].join(" ");
            if covered != m.surface {
                out.push(format!(
                    "item {i} mention {j}: surface {:?} ≠ {:?}",
                    m.surface, covered
                ));
            }
            if m.is_subject && m.label.is_none() {
                out.push(format!("item {i} mention {j}: subject without label"));
            }
        }
    }
    out
}
