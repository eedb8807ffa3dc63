//! Distant supervision for list pages.
//!
//! A list page is mapped to a target class of the type knowledge base. A
//! linked mention is positive when its entity is an instance of the target
//! class (or a subclass), negative when one of its classes is disjoint with
//! the target, unknown otherwise. Items holding a positive mention, or only
//! negative mentions, become training items; the rest are dropped because
//! the knowledge base may simply be missing the entity.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::encoder::{is_special_token, EncodedChunk};
use crate::error::{Error, Result};
use crate::model::{EntityType, Listing, TokenLabel, MIN_ITEMS};

const DEFAULT_CLASS_TYPES: &str = include_str!("../data/class_types.tsv");

/// One line of a knowledge-base file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KbRecord {
    EntityTypes { entity: String, classes: Vec<String> },
    Disjoint { a: String, b: String },
    Subclass { class: String, parent: String },
}

#[derive(Debug, Clone, Default)]
pub struct TypeKb {
    entity_types: HashMap<String, BTreeSet<String>>,
    disjoint: HashSet<(String, String)>,
    subclass_of: HashMap<String, BTreeSet<String>>,
    classes: HashSet<String>,
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl TypeKb {
    pub fn from_records(records: impl IntoIterator<Item = KbRecord>) -> Result<Self> {
        let mut kb = TypeKb::default();
        for r in records {
            match r {
                KbRecord::EntityTypes { entity, classes } => {
                    kb.classes.extend(classes.iter().cloned());
                    kb.entity_types.entry(entity).or_default().extend(classes);
                }
                KbRecord::Disjoint { a, b } => {
                    kb.classes.insert(a.clone());
                    kb.classes.insert(b.clone());
                    kb.disjoint.insert(unordered(&a, &b));
                }
                KbRecord::Subclass { class, parent } => {
                    if class == parent {
                        return Err(Error::Kb(format!("class {class} is its own parent")));
                    }
                    kb.classes.insert(class.clone());
                    kb.classes.insert(parent.clone());
                    kb.subclass_of.entry(class).or_default().insert(parent);
                }
            }
        }
        kb.check_acyclic()?;
        Ok(kb)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_records(crate::jsonl::read::<KbRecord>(path)?)
    }

    fn check_acyclic(&self) -> Result<()> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: HashMap<&str, u8> = HashMap::new();
        let mut roots: Vec<&str> = self.subclass_of.keys().map(String::as_str).collect();
        roots.sort_unstable();
        for root in roots {
            if state.get(root).copied().unwrap_or(0) != 0 {
                continue;
            }
            let mut stack: Vec<(&str, Vec<&str>)> = vec![(root, self.parents(root))];
            state.insert(root, 1);
            while let Some((node, pending)) = stack.last_mut() {
                match pending.pop() {
                    Some(p) => match state.get(p).copied().unwrap_or(0) {
                        1 => return Err(Error::Kb(format!("subclass cycle through {p}"))),
                        0 => {
                            state.insert(p, 1);
                            let ps = self.parents(p);
                            stack.push((p, ps));
                        }
                        _ => {}
                    },
                    None => {
                        state.insert(node, 2);
                        stack.pop();
                    }
                }
            }
        }
        Ok(())
    }

    fn parents(&self, class: &str) -> Vec<&str> {
        self.subclass_of
            .get(class)
            .map(|ps| ps.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.classes.contains(class)
    }

    pub fn classes_of(&self, entity: &str) -> Option<&BTreeSet<String>> {
        self.entity_types.get(entity)
    }

    /// The class itself and all of its transitive parents.
    pub fn ancestors<'a>(&'a self, class: &'a str) -> BTreeSet<&'a str> {
        self.ancestors_by_distance(class).into_iter().map(|(c, _)| c).collect()
    }

    /// Breadth-first ancestors with their distance, nearest first (ties by name).
    fn ancestors_by_distance<'a>(&'a self, class: &'a str) -> Vec<(&'a str, usize)> {
        let mut seen = HashSet::from([class]);
        let mut out = vec![(class, 0)];
        let mut queue = VecDeque::from([(class, 0usize)]);
        while let Some((c, d)) = queue.pop_front() {
            for p in self.parents(c) {
                if seen.insert(p) {
                    out.push((p, d + 1));
                    queue.push_back((p, d + 1));
                }
            }
        }
        out.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)));
        out
    }

    pub fn is_subclass_of(&self, class: &str, target: &str) -> bool {
        self.ancestors(class).contains(target)
    }

    /// Disjointness inherited upward along the subclass graph.
    pub fn are_disjoint(&self, a: &str, b: &str) -> bool {
        let aa = self.ancestors(a);
        let bb = self.ancestors(b);
        aa.iter()
            .any(|x| bb.iter().any(|y| self.disjoint.contains(&unordered(x, y))))
    }
}

/// Maps knowledge-base classes to coarse entity types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTypeMap {
    map: HashMap<String, EntityType>,
}

impl Default for ClassTypeMap {
    fn default() -> Self {
        Self::parse(DEFAULT_CLASS_TYPES.as_bytes()).expect("bundled class_types.tsv is valid")
    }
}

impl ClassTypeMap {
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut map = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidInput(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (class, ty) = line
                .split_once('\t')
                .ok_or_else(|| Error::InvalidInput(format!("class map line {}: expected two columns", n + 1)))?;
            let ty: EntityType = ty
                .trim()
                .parse()
                .map_err(|e| Error::InvalidInput(format!("class map line {}: {e}", n + 1)))?;
            map.insert(class.trim().to_owned(), ty);
        }
        Ok(ClassTypeMap { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(f))
    }

    /// Type of the nearest mapped ancestor, `OTHER` when none is mapped.
    pub fn resolve(&self, class: &str, kb: &TypeKb) -> EntityType {
        kb.ancestors_by_distance(class)
            .into_iter()
            .find_map(|(c, _)| self.map.get(c).copied())
            .unwrap_or(EntityType::Other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListPageTarget {
    pub target_class: String,
    pub token_type: EntityType,
}

/// List page title to its target class.
#[derive(Debug, Clone, Default)]
pub struct ListPageTargets {
    targets: HashMap<String, ListPageTarget>,
}

impl ListPageTargets {
    /// Two tab-separated columns: page title, target class.
    pub fn parse(reader: impl BufRead, kb: &TypeKb, class_types: &ClassTypeMap) -> Result<Self> {
        let mut targets = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidInput(e.to_string()))?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (page, class) = line
                .split_once('\t')
                .ok_or_else(|| Error::InvalidInput(format!("targets line {}: expected two columns", n + 1)))?;
            let class = class.trim();
            if !kb.has_class(class) {
                return Err(Error::Kb(format!(
                    "targets line {}: class {class} not in knowledge base",
                    n + 1
                )));
            }
            targets.insert(
                page.trim().to_owned(),
                ListPageTarget {
                    target_class: class.to_owned(),
                    token_type: class_types.resolve(class, kb),
                },
            );
        }
        Ok(ListPageTargets { targets })
    }

    pub fn load(path: impl AsRef<Path>, kb: &TypeKb, class_types: &ClassTypeMap) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(std::io::BufReader::new(f), kb, class_types)
    }

    pub fn get(&self, page_title: &str) -> Option<&ListPageTarget> {
        self.targets.get(page_title)
    }

    pub fn insert(&mut self, page_title: impl Into<String>, target: ListPageTarget) {
        self.targets.insert(page_title.into(), target);
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Positive,
    Negative,
    Unknown,
}

/// One verdict per mention, item by item, in the listing's mention order.
pub fn label_entities(listing: &Listing, target: &ListPageTarget, kb: &TypeKb) -> Vec<Vec<Verdict>> {
    listing
        .items
        .iter()
        .map(|item| {
            item.mentions
                .iter()
                .map(|m| match m.entity_id.as_deref().and_then(|e| kb.classes_of(e)) {
                    None => Verdict::Unknown,
                    Some(classes) => {
                        if classes.iter().any(|c| kb.is_subclass_of(c, &target.target_class)) {
                            Verdict::Positive
                        } else if classes.iter().any(|c| kb.are_disjoint(c, &target.target_class)) {
                            Verdict::Negative
                        } else {
                            Verdict::Unknown
                        }
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemOutcome {
    Positive,
    AllNegative,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// The listing restricted to kept items, with subject flags set.
    pub listing: Listing,
    /// Outcome per original item.
    pub outcomes: Vec<ItemOutcome>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn select_training_items(listing: &Listing, target: &ListPageTarget, verdicts: &[Vec<Verdict>]) -> Selection {
    let mut items = Vec::new();
    let mut outcomes = Vec::with_capacity(listing.items.len());
    let mut diagnostics = Vec::new();

    for (i, item) in listing.items.iter().enumerate() {
        let v = verdicts.get(i).map(Vec::as_slice).unwrap_or(&[]);
        let mut order: Vec<usize> = (0..item.mentions.len()).collect();
        order.sort_by_key(|&j| {
            let m = &item.mentions[j];
            (m.cell_index, m.start_word, m.end_word)
        });
        let positives: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&j| v.get(j) == Some(&Verdict::Positive))
            .collect();

        let outcome = if !positives.is_empty() {
            ItemOutcome::Positive
        } else if !item.mentions.is_empty() && v.len() == item.mentions.len() && v.iter().all(|x| *x == Verdict::Negative) {
            ItemOutcome::AllNegative
        } else {
            ItemOutcome::Dropped
        };
        outcomes.push(outcome);
        if outcome == ItemOutcome::Dropped {
            continue;
        }
        if positives.len() > 1 {
            diagnostics.push(Diagnostic::new(
                &listing.id,
                format!("item {i}: {} positive mentions, keeping the first", positives.len()),
            ));
        }
        let mut kept = item.clone();
        for (j, m) in kept.mentions.iter_mut().enumerate() {
            let subject = positives.first() == Some(&j);
            m.is_subject = subject;
            m.label = subject.then_some(target.token_type);
        }
        items.push(kept);
    }

    Selection {
        listing: Listing {
            items,
            ..listing.clone()
        },
        outcomes,
        diagnostics,
    }
}

/// Labels a list-page listing end to end. `None` when the page has no
/// target or fewer than `min_items` items survive selection.
pub fn label_listing(
    listing: &Listing,
    targets: &ListPageTargets,
    kb: &TypeKb,
    min_items: usize,
) -> Option<Selection> {
    let target = targets.get(&listing.context.page_title)?;
    let verdicts = label_entities(listing, target, kb);
    let mut sel = select_training_items(listing, target, &verdicts);
    if sel.listing.items.len() < min_items.max(1) {
        return None;
    }
    if sel.listing.items.len() < MIN_ITEMS {
        sel.diagnostics.push(Diagnostic::new(
            &listing.id,
            format!("only {} items kept", sel.listing.items.len()),
        ));
    }
    Some(sel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelMode {
    #[default]
    Typed,
    /// Every entity type collapses to `OTHER`.
    Binary,
}

impl LabelMode {
    pub fn apply(self, t: EntityType) -> EntityType {
        match self {
            LabelMode::Typed => t,
            LabelMode::Binary => EntityType::Other,
        }
    }
}

/// Gold token labels for a chunk of `listing`: `IGNORE` for context and
/// special tokens, the subject's type for its words, `NONE` elsewhere.
pub fn gold_token_labels(chunk: &EncodedChunk, listing: &Listing, mode: LabelMode) -> Result<Vec<TokenLabel>> {
    if chunk.listing_id != listing.id {
        return Err(Error::InvalidInput(format!(
            "chunk of {} labeled with listing {}",
            chunk.listing_id, listing.id
        )));
    }
    let mut labels = vec![TokenLabel::Ignore; chunk.tokens.len()];
    for (&idx, &(start, end)) in &chunk.item_spans {
        let item = listing.items.get(idx).ok_or_else(|| {
            Error::InvalidInput(format!("chunk of {} spans missing item {idx}", listing.id))
        })?;
        let offsets = item.cell_offsets();
        let mut word_labels = vec![TokenLabel::None; item.item_words().len()];
        if let Some(s) = item.subject() {
            let base = offsets.get(s.cell_index).copied().unwrap_or(0);
            let ty = s.label.map(|t| mode.apply(t)).unwrap_or(EntityType::Other);
            for w in base + s.start_word..(base + s.end_word).min(word_labels.len()) {
                word_labels[w] = TokenLabel::Entity(ty);
            }
        }
        let mut w = 0;
        for (label, tok) in labels[start..end].iter_mut().zip(&chunk.tokens[start..end]) {
            if is_special_token(tok) {
                continue;
            }
            *label = word_labels.get(w).copied().unwrap_or(TokenLabel::None);
            w += 1;
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{Encoder, EncoderConfig};
    use crate::model::{EntityMention, ListingContext, ListingItem, ListingKind};

    fn kb() -> TypeKb {
        TypeKb::from_records([
            KbRecord::Subclass { class: "Writer".into(), parent: "Person".into() },
            KbRecord::Subclass { class: "SpeculativeFictionWriter".into(), parent: "Writer".into() },
            KbRecord::Subclass { class: "City".into(), parent: "Place".into() },
            KbRecord::Disjoint { a: "Person".into(), b: "Place".into() },
            KbRecord::EntityTypes { entity: "Kobo Abe".into(), classes: vec!["SpeculativeFictionWriter".into()] },
            KbRecord::EntityTypes { entity: "Tokyo".into(), classes: vec!["City".into()] },
            KbRecord::EntityTypes { entity: "Hokusai".into(), classes: vec!["Person".into()] },
        ])
        .unwrap()
    }

    fn writer_target() -> ListPageTarget {
        ListPageTarget {
            target_class: "Writer".into(),
            token_type: EntityType::Person,
        }
    }

    fn mention(i: usize, entity: Option<&str>) -> EntityMention {
        EntityMention {
            cell_index: 0,
            start_word: i,
            end_word: i + 1,
            surface: format!("w{i}"),
            entity_id: entity.map(str::to_owned),
            label: None,
            is_subject: false,
        }
    }

    fn item(entities: &[Option<&str>]) -> ListingItem {
        ListingItem {
            cells: vec![(0..entities.len().max(1)).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")],
            depth: 1,
            mentions: entities.iter().enumerate().map(|(i, e)| mention(i, *e)).collect(),
        }
    }

    fn listing(items: Vec<ListingItem>) -> Listing {
        Listing {
            id: "List of Japanese speculative fiction writers#0".into(),
            kind: ListingKind::Enum,
            context: ListingContext {
                page_title: "List of Japanese speculative fiction writers".into(),
                section_path: vec![],
                header_cells: None,
            },
            items,
        }
    }

    #[test]
    fn verdicts_follow_hierarchy_and_disjointness() {
        let l = listing(vec![item(&[Some("Kobo Abe"), Some("Tokyo"), None, Some("Unlisted"), Some("Hokusai")])]);
        let v = label_entities(&l, &writer_target(), &kb());
        assert_eq!(
            v[0],
            vec![Verdict::Positive, Verdict::Negative, Verdict::Unknown, Verdict::Unknown, Verdict::Unknown]
        );
    }

    #[test]
    fn item_selection_rules() {
        let l = listing(vec![
            item(&[Some("Kobo Abe"), None]),
            item(&[Some("Tokyo"), Some("Tokyo")]),
            item(&[None]),
            item(&[]),
        ]);
        let t = writer_target();
        let sel = select_training_items(&l, &t, &label_entities(&l, &t, &kb()));
        assert_eq!(
            sel.outcomes,
            vec![ItemOutcome::Positive, ItemOutcome::AllNegative, ItemOutcome::Dropped, ItemOutcome::Dropped]
        );
        assert_eq!(sel.listing.items.len(), 2);
        let s = sel.listing.items[0].subject().unwrap();
        assert_eq!((s.start_word, s.label), (0, Some(EntityType::Person)));
        assert!(sel.listing.items[1].subject().is_none());
    }

    #[test]
    fn two_positives_keep_first_in_word_order() {
        let mut it = item(&[Some("Kobo Abe"), Some("Kobo Abe")]);
        it.mentions.reverse();
        let l = listing(vec![it]);
        let t = writer_target();
        let sel = select_training_items(&l, &t, &label_entities(&l, &t, &kb()));
        assert_eq!(sel.diagnostics.len(), 1);
        let subjects: Vec<&EntityMention> = sel.listing.items[0].mentions.iter().filter(|m| m.is_subject).collect();
        assert_eq!(subjects.len(), 1);
        assert_eq!(subjects[0].start_word, 0);
    }

    #[test]
    fn cycles_are_rejected() {
        let err = TypeKb::from_records([
            KbRecord::Subclass { class: "A".into(), parent: "B".into() },
            KbRecord::Subclass { class: "B".into(), parent: "C".into() },
            KbRecord::Subclass { class: "C".into(), parent: "A".into() },
        ])
        .unwrap_err();
        assert!(err.to_string().contains("cycle"));
    }

    #[test]
    fn class_types_resolve_through_ancestors() {
        let kb = kb();
        let map = ClassTypeMap::default();
        assert_eq!(map.resolve("SpeculativeFictionWriter", &kb), EntityType::Person);
        assert_eq!(map.resolve("City", &kb), EntityType::Gpe);
        assert_eq!(map.resolve("Unmapped", &kb), EntityType::Other);
    }

    #[test]
    fn targets_file_requires_known_classes() {
        let kb = kb();
        let map = ClassTypeMap::default();
        let t = ListPageTargets::parse("List of Japanese speculative fiction writers\tWriter\n".as_bytes(), &kb, &map).unwrap();
        assert_eq!(t.get("List of Japanese speculative fiction writers"), Some(&writer_target()));
        assert!(ListPageTargets::parse("X\tNope\n".as_bytes(), &kb, &map).is_err());
    }

    #[test]
    fn gold_labels_cover_subject_span() {
        let mut it = ListingItem {
            cells: vec!["a b c d e".into()],
            depth: 1,
            mentions: vec![EntityMention {
                cell_index: 0,
                start_word: 0,
                end_word: 3,
                surface: "a b c".into(),
                entity_id: None,
                label: Some(EntityType::Person),
                is_subject: true,
            }],
        };
        let plain = ListingItem { mentions: vec![], ..it.clone() };
        it.depth = 1;
        let l = listing(vec![it, plain.clone(), plain]);
        let chunk = &Encoder::new(EncoderConfig::default()).unwrap().chunk_listing(&l).chunks[0];
        let labels = gold_token_labels(chunk, &l, LabelMode::Typed).unwrap();
        let (s, e) = chunk.item_spans[&0];
        let p = TokenLabel::Entity(EntityType::Person);
        assert_eq!(
            labels[s..e],
            [TokenLabel::Ignore, p, p, p, TokenLabel::None, TokenLabel::None]
        );
        let (s1, e1) = chunk.item_spans[&1];
        assert!(labels[s1 + 1..e1].iter().all(|l| *l == TokenLabel::None));
        assert!(labels[..s].iter().all(|l| *l == TokenLabel::Ignore));
        let binary = gold_token_labels(chunk, &l, LabelMode::Binary).unwrap();
        assert_eq!(binary[s + 1], TokenLabel::Entity(EntityType::Other));
    }

    #[test]
    fn table_subject_in_second_cell() {
        let row = |subject: bool| ListingItem {
            cells: vec!["1998".into(), "Rubber Band".into()],
            depth: 1,
            mentions: vec![EntityMention {
                cell_index: 1,
                start_word: 0,
                end_word: 2,
                surface: "Rubber Band".into(),
                entity_id: Some("Rubber".into()),
                label: Some(EntityType::WorkOfArt),
                is_subject: subject,
            }],
        };
        let mut l = listing(vec![row(true), row(false), row(true)]);
        l.kind = ListingKind::Table;
        let chunk = &Encoder::new(EncoderConfig::default()).unwrap().chunk_listing(&l).chunks[0];
        let labels = gold_token_labels(chunk, &l, LabelMode::Typed).unwrap();
        let (s, e) = chunk.item_spans[&0];
        let w = TokenLabel::Entity(EntityType::WorkOfArt);
        assert_eq!(
            labels[s..e],
            [TokenLabel::Ignore, TokenLabel::None, TokenLabel::Ignore, w, w]
        );
    }
}
