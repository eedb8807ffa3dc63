use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Listing;
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions {}/{}/{} must be in [0, 1] and sum to 1",
                self.train, self.validation, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Listing>,
    pub validation: Vec<Listing>,
    pub test: Vec<Listing>,
}

/// Page counts per partition for `n` pages: train and validation are
/// rounded, test takes the rest, and every partition with a nonzero
/// fraction receives at least one page.
pub fn partition_sizes(n: usize, f: &SplitFractions) -> Result<[usize; 3]> {
    f.validate()?;
    if n < 3 {
        return Err(Error::TooFewPages { pages: n, partitions: 3 });
    }
    let train = ((f.train * n as f64).round() as usize).min(n);
    let validation = ((f.validation * n as f64).round() as usize).min(n - train);
    let mut sizes = [train, validation, n - train - validation];
    let fracs = [f.train, f.validation, f.test];
    for i in 0..3 {
        if sizes[i] == 0 && fracs[i] > 0.0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).expect("three partitions");
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }
    Ok(sizes)
}

/// Page-level split: distinct page titles are sorted, shuffled with the
/// seeded generator and cut into train, validation and test in that order.
/// Listings keep their input order within each partition.
pub fn split_corpus(listings: Vec<Listing>, fractions: &SplitFractions, seed: u64) -> Result<CorpusSplit> {
    let mut pages: Vec<String> = listings
        .iter()
        .map(|l| l.context.page_title.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let [n_train, n_val, _] = partition_sizes(pages.len(), fractions)?;
    DetRng::new(seed).shuffle(&mut pages);
    let train: HashSet<&str> = pages[..n_train].iter().map(String::as_str).collect();
    let validation: HashSet<&str> = pages[n_train..n_train + n_val].iter().map(String::as_str).collect();

    let mut out = CorpusSplit::default();
    for l in listings {
        let p = l.context.page_title.as_str();
        if train.contains(p) {
            out.train.push(l);
        } else if validation.contains(p) {
            out.validation.push(l);
        } else {
            out.test.push(l);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ListingContext, ListingKind};

    fn listing(page: &str, n: usize) -> Listing {
        Listing {
            id: format!("{page}#{n}"),
            kind: ListingKind::Enum,
            context: ListingContext {
                page_title: page.into(),
                section_path: vec![],
                header_cells: None,
            },
            items: vec![],
        }
    }

    fn corpus() -> Vec<Listing> {
        (0..10).flat_map(|p| (0..3).map(move |n| listing(&format!("P{p}"), n))).collect()
    }

    fn pages(ls: &[Listing]) -> BTreeSet<String> {
        ls.iter().map(|l| l.context.page_title.clone()).collect()
    }

    #[test]
    fn ten_pages_six_two_two() {
        let s = split_corpus(corpus(), &SplitFractions::default(), 5).unwrap();
        assert_eq!((pages(&s.train).len(), pages(&s.validation).len(), pages(&s.test).len()), (6, 2, 2));
        assert!(pages(&s.train).is_disjoint(&pages(&s.test)));
        assert!(pages(&s.train).is_disjoint(&pages(&s.validation)));
        assert_eq!(s.train.len() + s.validation.len() + s.test.len(), 30);
        assert_eq!(s, split_corpus(corpus(), &SplitFractions::default(), 5).unwrap());
    }

    #[test]
    fn too_few_pages() {
        let ls = vec![listing("a", 0), listing("b", 0)];
        assert!(matches!(
            split_corpus(ls, &SplitFractions::default(), 0),
            Err(Error::TooFewPages { pages: 2, partitions: 3 })
        ));
    }

    #[test]
    fn small_counts_fill_every_partition() {
        assert_eq!(partition_sizes(3, &SplitFractions::default()).unwrap(), [1, 1, 1]);
        assert_eq!(partition_sizes(4, &SplitFractions::default()).unwrap(), [2, 1, 1]);
        let f = SplitFractions { train: 0.8, validation: 0.0, test: 0.2 };
        assert_eq!(partition_sizes(5, &f).unwrap(), [4, 0, 1]);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let f = SplitFractions { train: 0.6, validation: 0.3, test: 0.2 };
        assert!(f.validate().is_err());
    }
}
