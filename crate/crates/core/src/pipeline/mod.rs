//! Stage wiring for end-to-end runs.
//!
//! Each stage reads and writes line-delimited files in the run directory.
//! Work inside a stage runs in parallel; outputs are merged in a fixed order
//! so reruns produce identical files.

mod config;
mod split;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{PredictorKind, ProfileOverrides, RunConfig, RunInputs, RunProfile, Stage};
pub use split::{partition_sizes, split_corpus, CorpusSplit, SplitFractions};

use crate::aggregator::{
    apply_predictions, attach_links, decode_mentions, filter_multi_type_listings, gold_mentions, group_by_listing,
    ExtractedMention, PredictionRecord,
};
use crate::diagnostics::Diagnostic;
use crate::encoder::{EncodedChunk, Encoder};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::labeler::{gold_token_labels, label_listing, ClassTypeMap, LabelMode, ListPageTargets, TypeKb};
use crate::model::Listing;
use crate::sampler::sample_negatives;
use crate::scorer::{EvalReport, ScoreAccumulator};
use crate::wikitext::{parse_page_with, ParserConfig, RawPage};

#[derive(Debug, Clone, PartialEq)]
pub struct Output<T> {
    pub records: Vec<T>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Default for Output<T> {
    fn default() -> Self {
        Output {
            records: Vec::new(),
            diagnostics: Vec::new(),
        }
    }
}

/// Parses pages in parallel; listings come out sorted by id.
pub fn parse_corpus(pages: impl IntoIterator<Item = Result<RawPage>>, cfg: &ParserConfig) -> Result<Output<Listing>> {
    let pages: Vec<RawPage> = pages.into_iter().collect::<Result<_>>()?;
    let parsed: Vec<_> = pages.par_iter().map(|p| parse_page_with(p, cfg)).collect();
    let mut out = Output::default();
    for p in parsed {
        out.records.extend(p.listings);
        out.diagnostics.extend(p.diagnostics);
    }
    out.records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Distant-supervision labels for every listing whose page has a target.
pub fn label_corpus(listings: &[Listing], targets: &ListPageTargets, kb: &TypeKb, min_items: usize) -> Output<Listing> {
    let selected: Vec<_> = listings
        .par_iter()
        .map(|l| label_listing(l, targets, kb, min_items))
        .collect();
    let mut out = Output::default();
    for sel in selected.into_iter().flatten() {
        out.records.push(sel.listing);
        out.diagnostics.extend(sel.diagnostics);
    }
    out
}

/// Chunks listings, attaching gold labels when `labels` is set.
pub fn encode_corpus(listings: &[Listing], encoder: &Encoder, labels: Option<LabelMode>) -> Result<Output<EncodedChunk>> {
    let encoded: Vec<Result<_>> = listings
        .par_iter()
        .map(|l| {
            let mut chunked = encoder.chunk_listing(l);
            if let Some(mode) = labels {
                for c in &mut chunked.chunks {
                    c.labels = Some(gold_token_labels(c, l, mode)?);
                }
            }
            Ok(chunked)
        })
        .collect();
    let mut out = Output::default();
    for c in encoded {
        let c = c?;
        out.records.extend(c.chunks);
        out.diagnostics.extend(c.diagnostics);
    }
    Ok(out)
}

/// Decodes every chunk with its prediction and attaches parsed links.
/// Mentions are ordered by listing id, then item.
pub fn aggregate_predictions(
    chunks: &[EncodedChunk],
    predictions: &[PredictionRecord],
    listings: &[Listing],
) -> Result<Output<ExtractedMention>> {
    let by_key: HashMap<(&str, usize), &PredictionRecord> = predictions
        .iter()
        .map(|p| ((p.listing_id.as_str(), p.chunk_index), p))
        .collect();
    let by_id: HashMap<&str, &Listing> = listings.iter().map(|l| (l.id.as_str(), l)).collect();
    let decoded: Vec<Result<_>> = chunks
        .par_iter()
        .map(|c| {
            let pred = by_key
                .get(&(c.listing_id.as_str(), c.chunk_index))
                .ok_or_else(|| Error::MissingPrediction {
                    listing_id: c.listing_id.clone(),
                    chunk_index: c.chunk_index,
                })?;
            let mut d = decode_mentions(c, pred)?;
            if let Some(l) = by_id.get(c.listing_id.as_str()) {
                attach_links(&mut d.mentions, l);
            }
            Ok(d)
        })
        .collect();
    let mut out = Output::default();
    for d in decoded {
        let d = d?;
        out.records.extend(d.mentions);
        out.diagnostics.extend(d.diagnostics);
    }
    out.records
        .sort_by(|a, b| (a.listing_id.as_str(), a.item_index).cmp(&(b.listing_id.as_str(), b.item_index)));
    Ok(out)
}

/// Noisy training listings: single-type predictions written back as
/// subjects, multi-type listings discarded.
pub fn noisy_training_set(listings: &[Listing], mentions: &[ExtractedMention], keep_empty: bool) -> Vec<Listing> {
    let grouped = group_by_listing(listings.iter().map(|l| l.id.as_str()), mentions);
    let kept: std::collections::HashSet<String> = filter_multi_type_listings(&grouped, keep_empty).into_iter().collect();
    listings
        .iter()
        .filter(|l| kept.contains(&l.id))
        .map(|l| apply_predictions(l, &grouped[&l.id]))
        .collect()
}

pub fn score_listings(gold: &[Listing], predicted: &[ExtractedMention]) -> Result<EvalReport> {
    let gold: Vec<ExtractedMention> = gold.iter().flat_map(gold_mentions).collect();
    let mut acc = ScoreAccumulator::default();
    acc.add(&gold, predicted)?;
    Ok(acc.report())
}

/// Where the predict stage gets its labels from.
#[derive(Debug, Clone)]
pub enum Predictor {
    GoldEcho,
    /// Polls for `path` until it exists and its size settles.
    External { path: PathBuf, timeout: Duration, poll: Duration },
}

impl Predictor {
    pub fn predict(&self, chunks: &[EncodedChunk]) -> Result<Vec<PredictionRecord>> {
        match self {
            Predictor::GoldEcho => chunks
                .iter()
                .map(|c| {
                    PredictionRecord::echo(c).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "chunk {}/{} has no gold labels to echo",
                            c.listing_id, c.chunk_index
                        ))
                    })
                })
                .collect(),
            Predictor::External { path, timeout, poll } => {
                wait_for_file(path, *timeout, *poll)?;
                jsonl::read(path)
            }
        }
    }
}

fn wait_for_file(path: &Path, timeout: Duration, poll: Duration) -> Result<()> {
    let start = Instant::now();
    let mut last_len = None;
    loop {
        let len = fs::metadata(path).ok().map(|m| m.len());
        if len.is_some() && len == last_len {
            return Ok(());
        }
        if start.elapsed() >= timeout {
            return Err(Error::InvalidInput(format!(
                "timed out after {}s waiting for {}",
                timeout.as_secs(),
                path.display()
            )));
        }
        if len.is_none() && last_len.is_none() {
            info!("waiting for predictions at {}", path.display());
        }
        last_len = len;
        thread::sleep(poll);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut bytes = 0;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: format!("{:x}", hasher.finalize()),
        bytes,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: BTreeMap<String, u64>,
    pub diagnostics: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub profile: RunProfile,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage.as_str())
    }
}

/// Stable digest of the resolved profile, stage list and inputs.
pub fn config_hash(cfg: &RunConfig, profile: &RunProfile) -> Result<String> {
    #[derive(Serialize)]
    struct Hashed<'a> {
        profile: &'a RunProfile,
        stages: Vec<Stage>,
        predictor: PredictorKind,
        inputs: &'a RunInputs,
    }
    let bytes = serde_json::to_vec(&Hashed {
        profile,
        stages: cfg.stages(),
        predictor: cfg.predictor,
        inputs: &cfg.inputs,
    })
    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// File names inside the run directory.
pub mod files {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const LABELED: &str = "labeled.jsonl";
    pub const TRAIN: &str = "train.jsonl";
    pub const VALIDATION: &str = "validation.jsonl";
    pub const TEST: &str = "test.jsonl";
    pub const NEGATIVES: &str = "negatives.jsonl";
    pub const TRAIN_CHUNKS: &str = "train_chunks.jsonl";
    pub const VALIDATION_CHUNKS: &str = "validation_chunks.jsonl";
    pub const TEST_CHUNKS: &str = "test_chunks.jsonl";
    pub const TRAIN_SETTINGS: &str = "train_settings.json";
    pub const PREDICTIONS: &str = "test_predictions.jsonl";
    pub const MENTIONS: &str = "test_mentions.jsonl";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const MANIFEST: &str = "manifest.json";
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    profile: RunProfile,
    out: PathBuf,
}

/// What a stage produced, before digests are taken.
#[derive(Default)]
struct StageResult {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    counts: BTreeMap<String, u64>,
    diagnostics: Vec<Diagnostic>,
}

impl StageResult {
    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_owned(), n as u64);
    }
}

fn required<'p>(p: &'p Option<PathBuf>, what: &str) -> Result<&'p Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidConfig(format!("inputs.{what} is required")))
}

impl Runner<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input_or(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.path(name))
    }

    fn write<T: Serialize>(&self, r: &mut StageResult, name: &str, records: &[T]) -> Result<()> {
        let p = self.path(name);
        jsonl::write(&p, records)?;
        r.outputs.push(p);
        Ok(())
    }

    fn run_stage(&self, stage: Stage) -> Result<StageResult> {
        let mut r = StageResult::default();
        let p = &self.profile;
        match stage {
            Stage::Parse => {
                let dump = required(&self.cfg.inputs.dump, "dump")?;
                r.inputs.push(dump.to_owned());
                let parsed = parse_corpus(
                    crate::wikitext::PageSource::open(dump)?,
                    &ParserConfig { min_items: p.min_items },
                )?;
                r.count("listings", parsed.records.len());
                self.write(&mut r, files::CORPUS, &parsed.records)?;
                r.diagnostics = parsed.diagnostics;
            }
            Stage::Label => {
                let corpus = self.input_or(&self.cfg.inputs.corpus, files::CORPUS);
                let kb_path = required(&self.cfg.inputs.kb, "kb")?;
                let targets_path = required(&self.cfg.inputs.targets, "targets")?;
                let kb = TypeKb::load(kb_path)?;
                let class_types = match &self.cfg.inputs.class_types {
                    Some(path) => {
                        r.inputs.push(path.clone());
                        ClassTypeMap::load(path)?
                    }
                    None => ClassTypeMap::default(),
                };
                let targets = ListPageTargets::load(targets_path, &kb, &class_types)?;
                let listings: Vec<Listing> = jsonl::read(&corpus)?;
                let labeled = label_corpus(&listings, &targets, &kb, p.min_items);
                r.inputs.extend([corpus, kb_path.to_owned(), targets_path.to_owned()]);
                r.count("listings_in", listings.len());
                r.count("listings_labeled", labeled.records.len());
                r.count(
                    "subjects",
                    labeled.records.iter().flat_map(|l| &l.items).filter(|i| i.subject().is_some()).count(),
                );
                self.write(&mut r, files::LABELED, &labeled.records)?;
                r.diagnostics = labeled.diagnostics;
            }
            Stage::Split => {
                let labeled = self.input_or(&self.cfg.inputs.labeled, files::LABELED);
                let listings: Vec<Listing> = jsonl::read(&labeled)?;
                r.inputs.push(labeled);
                let s = split_corpus(listings, &p.split, p.seed)?;
                r.count("train", s.train.len());
                r.count("validation", s.validation.len());
                r.count("test", s.test.len());
                self.write(&mut r, files::TRAIN, &s.train)?;
                self.write(&mut r, files::VALIDATION, &s.validation)?;
                self.write(&mut r, files::TEST, &s.test)?;
            }
            Stage::SampleNegatives => {
                let train_path = self.path(files::TRAIN);
                let train: Vec<Listing> = jsonl::read(&train_path)?;
                r.inputs.push(train_path);
                let neg = sample_negatives(&train, &p.sampler)?;
                r.count("negatives", neg.listings.len());
                self.write(&mut r, files::NEGATIVES, &neg.listings)?;
                r.diagnostics = neg.diagnostics;
            }
            Stage::Encode => self.encode(&mut r)?,
            Stage::Predict => {
                let chunks_path = self.path(files::TEST_CHUNKS);
                let chunks: Vec<EncodedChunk> = jsonl::read(&chunks_path)?;
                r.inputs.push(chunks_path);
                let predictor = match self.cfg.predictor {
                    PredictorKind::GoldEcho => Predictor::GoldEcho,
                    PredictorKind::External => Predictor::External {
                        path: self.input_or(&self.cfg.inputs.predictions, files::PREDICTIONS),
                        timeout: Duration::from_secs(self.cfg.wait_secs),
                        poll: Duration::from_millis(500),
                    },
                };
                let preds = predictor.predict(&chunks)?;
                r.count("predictions", preds.len());
                let target = self.path(files::PREDICTIONS);
                match &predictor {
                    Predictor::External { path, .. } if *path == target => r.outputs.push(target),
                    _ => self.write(&mut r, files::PREDICTIONS, &preds)?,
                }
            }
            Stage::Aggregate => {
                let chunks_path = self.path(files::TEST_CHUNKS);
                let preds_path = self.path(files::PREDICTIONS);
                let test_path = self.path(files::TEST);
                let chunks: Vec<EncodedChunk> = jsonl::read(&chunks_path)?;
                let preds: Vec<PredictionRecord> = jsonl::read(&preds_path)?;
                let test: Vec<Listing> = jsonl::read(&test_path)?;
                r.inputs.extend([chunks_path, preds_path, test_path]);
                let agg = aggregate_predictions(&chunks, &preds, &test)?;
                r.count("mentions", agg.records.len());
                r.count(
                    "linked",
                    agg.records.iter().filter(|m| m.linked_entity.is_some()).count(),
                );
                self.write(&mut r, files::MENTIONS, &agg.records)?;
                r.diagnostics = agg.diagnostics;
            }
            Stage::Score => {
                let test_path = self.path(files::TEST);
                let mentions_path = self.path(files::MENTIONS);
                let test: Vec<Listing> = jsonl::read(&test_path)?;
                let mentions: Vec<ExtractedMention> = jsonl::read(&mentions_path)?;
                r.inputs.extend([test_path, mentions_path]);
                let report = score_listings(&test, &mentions)?;
                let json = self.path(files::REPORT_JSON);
                let text = self.path(files::REPORT_TEXT);
                write_file(&json, &to_pretty_json(&report)?)?;
                write_file(&text, &report.render_text())?;
                r.outputs.extend([json, text]);
                r.count("gold", test.iter().flat_map(|l| &l.items).filter(|i| i.subject().is_some()).count());
                r.count("predicted", mentions.len());
            }
        }
        Ok(r)
    }

    fn encode(&self, r: &mut StageResult) -> Result<()> {
        let p = &self.profile;
        let encoder = Encoder::new(p.encoder.clone())?;
        let mut train: Vec<Listing> = jsonl::read(self.path(files::TRAIN))?;
        r.inputs.push(self.path(files::TRAIN));
        let neg_path = self.path(files::NEGATIVES);
        if neg_path.exists() {
            let negatives: Vec<Listing> = jsonl::read(&neg_path)?;
            r.count("negatives", negatives.len());
            train.extend(negatives);
            r.inputs.push(neg_path);
        }
        for (src, dst, key) in [
            (None, files::TRAIN_CHUNKS, "train_chunks"),
            (Some(files::VALIDATION), files::VALIDATION_CHUNKS, "validation_chunks"),
            (Some(files::TEST), files::TEST_CHUNKS, "test_chunks"),
        ] {
            let listings = match src {
                None => std::mem::take(&mut train),
                Some(name) => {
                    r.inputs.push(self.path(name));
                    jsonl::read(self.path(name))?
                }
            };
            let enc = encode_corpus(&listings, &encoder, Some(p.label_mode))?;
            r.count(key, enc.records.len());
            self.write(r, dst, &enc.records)?;
            r.diagnostics.extend(enc.diagnostics);
        }
        let settings = serde_json::json!({
            "profile": p.name,
            "epochs": p.epochs,
            "noisy_epochs": p.noisy_epochs,
            "label_mode": p.label_mode,
            "max_seq_len": p.encoder.max_seq_len,
        });
        let settings_path = self.path(files::TRAIN_SETTINGS);
        write_file(&settings_path, &to_pretty_json(&settings)?)?;
        r.outputs.push(settings_path);
        Ok(())
    }
}

fn to_pretty_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Digests each path; a directory contributes its files in name order.
fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file())
                .collect();
            files.sort();
            for f in files {
                out.push(digest_file(&f)?);
            }
        } else {
            out.push(digest_file(p)?);
        }
    }
    Ok(out)
}

/// Runs the configured stages in order and writes `manifest.json` after
/// each one. A failing stage is recorded in the manifest and its
/// diagnostics are written before the error is returned.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    let profile = cfg.resolved_profile()?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = RunManifest {
        config_hash: config_hash(cfg, &profile)?,
        profile: profile.clone(),
        stages: Vec::new(),
    };
    let runner = Runner { cfg, profile, out };
    let manifest_path = runner.path(files::MANIFEST);

    for stage in cfg.stages() {
        info!("stage {stage}");
        let result = runner.run_stage(stage);
        let (record, err) = match result {
            Ok(r) => {
                let diag_path = runner.path(&format!("{stage}.diagnostics.jsonl"));
                if r.diagnostics.is_empty() {
                    let _ = fs::remove_file(&diag_path);
                } else {
                    jsonl::write(&diag_path, &r.diagnostics)?;
                }
                for d in r.diagnostics.iter().take(20) {
                    warn!("{stage}: {d}");
                }
                (
                    StageRecord {
                        stage: stage.as_str().to_owned(),
                        inputs: digests(&r.inputs)?,
                        outputs: digests(&r.outputs)?,
                        counts: r.counts,
                        diagnostics: r.diagnostics.len() as u64,
                        error: None,
                    },
                    None,
                )
            }
            Err(e) => (
                StageRecord {
                    stage: stage.as_str().to_owned(),
                    error: Some(e.to_string()),
                    ..Default::default()
                },
                Some(e),
            ),
        };
        manifest.stages.push(record);
        write_file(&manifest_path, &to_pretty_json(&manifest)?)?;
        if let Some(e) = err {
            return Err(Error::Stage {
                stage: stage.as_str().to_owned(),
                source: Box::new(e),
            });
        }
    }
    Ok(manifest)
}
