//! Synthetic negative listings: the context of one positive listing joined
//! with items drawn from other positives, so the items no longer share a
//! common subject type and every word is labeled `NONE`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::error::{Error, Result};
use crate::model::{Listing, ListingItem, ListingKind, MIN_ITEMS};
use crate::rng::DetRng;

/// Guards `floor(p * n)` against products such as `0.3 * 10 = 2.9999...`.
const FLOOR_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub proportion: f64,
    pub seed: u64,
    pub min_items: usize,
    pub max_items: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            proportion: 0.5,
            seed: 0,
            min_items: MIN_ITEMS,
            max_items: 20,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.proportion) {
            return Err(Error::InvalidConfig(format!(
                "sampler proportion {} outside [0, 1]",
                self.proportion
            )));
        }
        if self.min_items == 0 || self.min_items > self.max_items {
            return Err(Error::InvalidConfig(format!(
                "sampler item bounds {}..={} are invalid",
                self.min_items, self.max_items
            )));
        }
        Ok(())
    }

    /// Number of negatives for `positives` listings.
    pub fn count_for(&self, positives: usize) -> usize {
        (self.proportion * positives as f64 + FLOOR_EPSILON).floor() as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NegativeSample {
    pub listings: Vec<Listing>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    Enum,
    Table(usize),
}

fn group_of(l: &Listing) -> Group {
    match l.kind {
        ListingKind::Enum => Group::Enum,
        ListingKind::Table => Group::Table(l.column_count().unwrap_or(0)),
    }
}

/// Draws `floor(proportion * positives.len())` negatives.
///
/// Enumerations form one group and tables are grouped by column count; a
/// listing can donate its context only when its group holds at least one
/// other listing to take items from. Per negative the draws are: donor
/// index among eligible listings, item count `k`, then `k` distinct indices
/// into the concatenated items of the donor's group minus the donor.
pub fn sample_negatives(positives: &[Listing], cfg: &SamplerConfig) -> Result<NegativeSample> {
    cfg.validate()?;
    let count = cfg.count_for(positives.len());
    let mut out = NegativeSample::default();
    if count == 0 {
        return Ok(out);
    }

    let mut groups: BTreeMap<Group, Vec<usize>> = BTreeMap::new();
    for (i, l) in positives.iter().enumerate() {
        groups.entry(group_of(l)).or_default().push(i);
    }
    for (g, members) in &groups {
        if members.len() < 2 {
            let what = match g {
                Group::Enum => "enumeration group".to_owned(),
                Group::Table(c) => format!("table group with {c} columns"),
            };
            out.diagnostics.push(Diagnostic::new(
                "sample-negatives",
                format!("{what} has a single listing, skipped as donor"),
            ));
        }
    }
    let eligible: Vec<usize> = (0..positives.len())
        .filter(|&i| groups[&group_of(&positives[i])].len() >= 2)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleDonor);
    }

    let mut rng = DetRng::new(cfg.seed);
    for s in 0..count {
        let donor_idx = eligible[rng.index(eligible.len())];
        let donor = &positives[donor_idx];
        let pool: Vec<&ListingItem> = groups[&group_of(donor)]
            .iter()
            .filter(|&&i| i != donor_idx)
            .flat_map(|&i| positives[i].items.iter())
            .collect();
        let k = rng.range_inclusive(cfg.min_items, cfg.max_items);
        if k > pool.len() {
            out.diagnostics.push(Diagnostic::new(
                format!("negative-{s}"),
                format!("only {} foreign items available for {k} requested", pool.len()),
            ));
        }
        let items = rng
            .sample_indices(pool.len(), k)
            .into_iter()
            .map(|j| {
                let mut item = pool[j].clone();
                for m in &mut item.mentions {
                    m.is_subject = false;
                    m.label = None;
                }
                item
            })
            .collect();
        out.listings.push(Listing {
            id: format!("negative-{s}"),
            kind: donor.kind,
            context: donor.context.clone(),
            items,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EntityMention, EntityType, ListingContext};

    fn listing(id: &str, kind: ListingKind, cols: usize, n: usize) -> Listing {
        Listing {
            id: id.into(),
            kind,
            context: ListingContext {
                page_title: id.into(),
                section_path: vec!["S".into()],
                header_cells: None,
            },
            items: (0..n)
                .map(|i| ListingItem {
                    cells: (0..cols).map(|c| format!("{id} {i} {c}")).collect(),
                    depth: 1,
                    mentions: vec![EntityMention {
                        cell_index: 0,
                        start_word: 0,
                        end_word: 1,
                        surface: id.into(),
                        entity_id: None,
                        label: Some(EntityType::Person),
                        is_subject: true,
                    }],
                })
                .collect(),
        }
    }

    #[test]
    fn count_is_floor_of_proportion() {
        let cfg = |p| SamplerConfig { proportion: p, ..Default::default() };
        assert_eq!(cfg(0.3).count_for(10), 3);
        assert_eq!(cfg(0.5).count_for(7), 3);
        assert_eq!(cfg(1.0).count_for(10), 10);
        assert_eq!(cfg(0.0).count_for(10), 0);
    }

    #[test]
    fn ten_positives_half_proportion() {
        let pos: Vec<Listing> = (0..10).map(|i| listing(&format!("p{i}"), ListingKind::Enum, 1, 5)).collect();
        let cfg = SamplerConfig { proportion: 0.5, seed: 7, ..Default::default() };
        let out = sample_negatives(&pos, &cfg).unwrap();
        assert_eq!(out.listings.len(), 5);
        for n in &out.listings {
            assert!((3..=20).contains(&n.items.len()));
            assert!(n.items.iter().all(|it| it.mentions.iter().all(|m| !m.is_subject && m.label.is_none())));
            let donor = &n.context.page_title;
            assert!(n.items.iter().all(|it| !it.cells[0].starts_with(&format!("{donor} "))));
        }
        assert_eq!(out, sample_negatives(&pos, &cfg).unwrap());
    }

    #[test]
    fn tables_stay_within_column_groups() {
        let mut pos = vec![
            listing("a", ListingKind::Table, 2, 4),
            listing("b", ListingKind::Table, 2, 4),
            listing("c", ListingKind::Table, 3, 4),
            listing("d", ListingKind::Table, 3, 4),
            listing("e", ListingKind::Table, 5, 4),
        ];
        pos.push(listing("f", ListingKind::Enum, 1, 4));
        let cfg = SamplerConfig { proportion: 1.0, seed: 1, min_items: 3, max_items: 4 };
        let out = sample_negatives(&pos, &cfg).unwrap();
        assert_eq!(out.listings.len(), 6);
        for n in &out.listings {
            assert_eq!(n.kind, ListingKind::Table);
            let donor = pos.iter().find(|p| p.id == n.context.page_title).unwrap();
            assert!(n.items.iter().all(|it| it.cells.len() == donor.items[0].cells.len()));
            assert_ne!(donor.id, "e");
        }
        assert_eq!(out.diagnostics.len(), 2);
    }

    #[test]
    fn no_eligible_donor_is_an_error() {
        let pos = vec![listing("a", ListingKind::Enum, 1, 4), listing("b", ListingKind::Table, 2, 4)];
        let cfg = SamplerConfig { proportion: 1.0, ..Default::default() };
        assert!(matches!(sample_negatives(&pos, &cfg), Err(Error::NoEligibleDonor)));
    }

    #[test]
    fn invalid_bounds_rejected() {
        let cfg = SamplerConfig { min_items: 5, max_items: 4, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
