//! Mention scoring under the Partial, Exact, EntType and Strict scenarios.
//!
//! Each item holds at most one gold and one predicted subject, so pairing
//! is decided per item: the two mentions match when their spans overlap.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::aggregator::ExtractedMention;
use crate::error::{Error, Result};
use crate::model::EntityType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    Partial,
    Exact,
    EntType,
    Strict,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Partial, Scenario::Exact, Scenario::EntType, Scenario::Strict];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Partial => "Partial",
            Scenario::Exact => "Exact",
            Scenario::EntType => "EntType",
            Scenario::Strict => "Strict",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub struct MatchCounts {
    pub cor: u64,
    pub inc: u64,
    pub par: u64,
    pub mis: u64,
    pub spu: u64,
}

impl MatchCounts {
    pub fn possible(&self) -> u64 {
        self.cor + self.inc + self.par + self.mis
    }

    pub fn actual(&self) -> u64 {
        self.cor + self.inc + self.par + self.spu
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            cor: self.cor + o.cor,
            inc: self.inc + o.inc,
            par: self.par + o.par,
            mis: self.mis + o.mis,
            spu: self.spu + o.spu,
        }
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, o: MatchCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> Self {
        iter.fold(MatchCounts::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

pub fn compute_metrics(c: &MatchCounts) -> Metrics {
    let hit = c.cor as f64 + 0.5 * c.par as f64;
    let precision = ratio(hit, c.actual());
    let recall = ratio(hit, c.possible());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics { precision, recall, f1 }
}

/// Outcome of one overlapping gold/prediction pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Cor,
    Inc,
    Par,
}

fn judge(gold: &ExtractedMention, pred: &ExtractedMention, scenario: Scenario) -> Outcome {
    let same_span = gold.same_span(pred);
    let same_type = gold.label == pred.label;
    match scenario {
        Scenario::Exact if same_span => Outcome::Cor,
        Scenario::Exact => Outcome::Inc,
        Scenario::Partial if same_span => Outcome::Cor,
        Scenario::Partial => Outcome::Par,
        Scenario::EntType if same_type => Outcome::Cor,
        Scenario::EntType => Outcome::Inc,
        Scenario::Strict if same_span && same_type => Outcome::Cor,
        Scenario::Strict => Outcome::Inc,
    }
}

type ItemKey<'a> = (&'a str, usize);

fn index_by_item<'a>(side: &'static str, ms: &'a [ExtractedMention]) -> Result<BTreeMap<ItemKey<'a>, &'a ExtractedMention>> {
    let mut out = BTreeMap::new();
    for m in ms {
        if out.insert((m.listing_id.as_str(), m.item_index), m).is_some() {
            return Err(Error::DuplicateMention {
                side,
                listing_id: m.listing_id.clone(),
                item_index: m.item_index,
            });
        }
    }
    Ok(out)
}

/// Paired mentions per item: `(gold, pred)`, either side possibly absent.
fn pair_items<'a>(
    gold: &'a [ExtractedMention],
    pred: &'a [ExtractedMention],
) -> Result<Vec<(Option<&'a ExtractedMention>, Option<&'a ExtractedMention>)>> {
    let g = index_by_item("gold", gold)?;
    let mut p = index_by_item("predicted", pred)?;
    let mut pairs = Vec::with_capacity(g.len() + p.len());
    for (key, gm) in g {
        pairs.push((Some(gm), p.remove(&key)));
    }
    pairs.extend(p.into_values().map(|pm| (None, Some(pm))));
    Ok(pairs)
}

type Typed = (EntityType, MatchCounts);

/// Adds one item's outcome under `scenario` to `gold_side` (attributed to
/// the gold type) and `pred_side` (spurious predictions, by predicted type).
fn tally(
    g: Option<&ExtractedMention>,
    p: Option<&ExtractedMention>,
    scenario: Scenario,
) -> (Option<Typed>, Option<Typed>) {
    let one = |f: fn(&mut MatchCounts)| {
        let mut c = MatchCounts::default();
        f(&mut c);
        c
    };
    match (g, p) {
        (Some(g), Some(p)) if g.overlaps(p) => {
            let c = match judge(g, p, scenario) {
                Outcome::Cor => one(|c| c.cor = 1),
                Outcome::Inc => one(|c| c.inc = 1),
                Outcome::Par => one(|c| c.par = 1),
            };
            (Some((g.label, c)), None)
        }
        (g, p) => (
            g.map(|g| (g.label, one(|c| c.mis = 1))),
            p.map(|p| (p.label, one(|c| c.spu = 1))),
        ),
    }
}

pub fn match_mentions(gold: &[ExtractedMention], pred: &[ExtractedMention], scenario: Scenario) -> Result<MatchCounts> {
    let mut total = MatchCounts::default();
    for (g, p) in pair_items(gold, pred)? {
        let (a, b) = tally(g, p, scenario);
        for (_, c) in a.into_iter().chain(b) {
            total += c;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<MatchCounts> for ScenarioResult {
    fn from(counts: MatchCounts) -> Self {
        let m = compute_metrics(&counts);
        ScenarioResult {
            counts,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenarios: BTreeMap<Scenario, ScenarioResult>,
    pub per_type: BTreeMap<EntityType, BTreeMap<Scenario, ScenarioResult>>,
}

/// Additive counts for incremental evaluation, e.g. one listing at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScoreAccumulator {
    totals: BTreeMap<Scenario, MatchCounts>,
    per_type: BTreeMap<EntityType, BTreeMap<Scenario, MatchCounts>>,
}

impl ScoreAccumulator {
    pub fn add(&mut self, gold: &[ExtractedMention], pred: &[ExtractedMention]) -> Result<()> {
        let pairs = pair_items(gold, pred)?;
        for s in Scenario::ALL {
            for &(g, p) in &pairs {
                let (a, b) = tally(g, p, s);
                for (t, c) in a.into_iter().chain(b) {
                    *self.totals.entry(s).or_default() += c;
                    *self.per_type.entry(t).or_default().entry(s).or_default() += c;
                }
            }
            self.totals.entry(s).or_default();
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ScoreAccumulator) {
        for (s, c) in &other.totals {
            *self.totals.entry(*s).or_default() += *c;
        }
        for (t, m) in &other.per_type {
            let mine = self.per_type.entry(*t).or_default();
            for (s, c) in m {
                *mine.entry(*s).or_default() += *c;
            }
        }
    }

    pub fn report(&self) -> EvalReport {
        let scenarios = Scenario::ALL
            .iter()
            .map(|s| (*s, self.totals.get(s).copied().unwrap_or_default().into()))
            .collect();
        let per_type = self
            .per_type
            .iter()
            .map(|(t, m)| (*t, m.iter().map(|(s, c)| (*s, (*c).into())).collect()))
            .collect();
        EvalReport { scenarios, per_type }
    }
}

pub fn evaluate(gold: &[ExtractedMention], pred: &[ExtractedMention]) -> Result<EvalReport> {
    let mut acc = ScoreAccumulator::default();
    acc.add(gold, pred)?;
    Ok(acc.report())
}

impl EvalReport {
    pub fn get(&self, s: Scenario) -> ScenarioResult {
        self.scenarios.get(&s).copied().unwrap_or_default()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut table = |title: &str, rows: &BTreeMap<Scenario, ScenarioResult>| {
            let _ = writeln!(out, "{title}");
            let _ = writeln!(
                out,
                "  {:<8} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7} {:>7} {:>7}",
                "scenario", "COR", "INC", "PAR", "MIS", "SPU", "P", "R", "F1"
            );
            for (s, r) in rows {
                let c = r.counts;
                let _ = writeln!(
                    out,
                    "  {:<8} {:>6} {:>6} {:>6} {:>6} {:>6} {:>7.4} {:>7.4} {:>7.4}",
                    s.as_str(),
                    c.cor,
                    c.inc,
                    c.par,
                    c.mis,
                    c.spu,
                    r.precision,
                    r.recall,
                    r.f1
                );
            }
        };
        table("overall", &self.scenarios);
        for (t, rows) in &self.per_type {
            table(&format!("type {t}"), rows);
        }
        out
    }
}
