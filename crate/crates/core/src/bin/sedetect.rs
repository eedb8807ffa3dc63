use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use sedetect::aggregator::{extraction_stats, gold_mentions, pick_first_entity_baseline, ExtractedMention, PredictionRecord};
use sedetect::encoder::{EncodedChunk, Encoder, EncoderConfig};
use sedetect::labeler::{ClassTypeMap, LabelMode, ListPageTargets, TypeKb};
use sedetect::pipeline::{self, ProfileOverrides, RunConfig, SplitFractions, Stage};
use sedetect::sampler::{sample_negatives, SamplerConfig};
use sedetect::scorer::ScoreAccumulator;
use sedetect::wikitext::{corpus_stats, PageSource, ParserConfig};
use sedetect::{jsonl, Diagnostic, Error, Listing, Result};

#[derive(Parser)]
#[command(name = "sedetect", version, about = "Subject entity detection in wiki listings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract enumerations and tables from a dump, a page directory or a page file.
    Parse {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_items: usize,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Mark subject entities through a type knowledge base.
    Label {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Class to entity type mapping; the bundled one by default.
        #[arg(long)]
        class_types: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        min_items: usize,
    },
    /// Encode listings into model input chunks.
    Encode {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_chunking: bool,
        #[arg(long, default_value_t = 512)]
        max_seq_len: usize,
        #[arg(long, default_value_t = 20)]
        max_items_per_chunk: usize,
        #[arg(long, value_enum, default_value_t = Labels::Typed)]
        labels: Labels,
    },
    /// Assemble negative listings from positive ones.
    SampleNegatives {
        #[arg(long)]
        positives: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        proportion: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        min_items: usize,
        #[arg(long, default_value_t = 20)]
        max_items: usize,
    },
    /// Page-level train/validation/test split.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, num_args = 3, value_names = ["TRAIN", "VALIDATION", "TEST"])]
        fractions: Option<Vec<f64>>,
    },
    /// Turn token predictions into subject mentions.
    Aggregate {
        #[arg(long)]
        chunks: PathBuf,
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Listings the chunks came from, used to attach parsed links.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Score predicted mentions against gold listings or gold mentions.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Mention statistics, or listing statistics with --corpus.
    Stats {
        #[arg(long, required_unless_present = "corpus")]
        mentions: Option<PathBuf>,
        #[arg(long, conflicts_with = "mentions")]
        corpus: Option<PathBuf>,
    },
    /// Label the first linked entity of every item.
    Baseline {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild training listings from single-type predictions.
    Noisy {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        mentions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        keep_empty: bool,
    },
    /// Run pipeline stages from a config file.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Labels {
    Typed,
    Binary,
    None,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Stages to run, in pipeline order; all when omitted.
    #[arg(long = "stage", value_parser = parse_stage)]
    stages: Vec<Stage>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    proportion: Option<f64>,
    #[arg(long)]
    no_chunking: bool,
    #[arg(long)]
    binary: bool,
    #[arg(long)]
    max_seq_len: Option<usize>,
}

fn parse_stage(s: &str) -> std::result::Result<Stage, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write_diagnostics(path: Option<&Path>, diags: &[Diagnostic]) -> Result<()> {
    match path {
        Some(p) => {
            jsonl::write(p, diags)?;
        }
        None => {
            for d in diags.iter().take(20) {
                warn!("{d}");
            }
            if diags.len() > 20 {
                warn!("{} more diagnostics", diags.len() - 20);
            }
        }
    }
    Ok(())
}

/// Gold input of `score`: labeled listings or extracted mentions.
fn read_gold(path: &Path) -> Result<Vec<ExtractedMention>> {
    let raw: Vec<serde_json::Value> = jsonl::read(path)?;
    let is_listing = raw.first().is_some_and(|v| v.get("items").is_some());
    let line_err = |i: usize, source| Error::Json {
        path: path.to_owned(),
        line: i + 1,
        source,
    };
    if is_listing {
        let mut out = Vec::new();
        for (i, v) in raw.into_iter().enumerate() {
            let l: Listing = serde_json::from_value(v).map_err(|e| line_err(i, e))?;
            out.extend(gold_mentions(&l));
        }
        Ok(out)
    } else {
        raw.into_iter()
            .enumerate()
            .map(|(i, v)| serde_json::from_value(v).map_err(|e| line_err(i, e)))
            .collect()
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Parse {
            dump,
            out,
            min_items,
            diagnostics,
        } => {
            let parsed = pipeline::parse_corpus(PageSource::open(&dump)?, &ParserConfig { min_items })?;
            let n = jsonl::write(&out, &parsed.records)?;
            write_diagnostics(diagnostics.as_deref(), &parsed.diagnostics)?;
            info!("{n} listings written to {}", out.display());
        }
        Command::Label {
            corpus,
            kb,
            targets,
            out,
            class_types,
            min_items,
        } => {
            let kb = TypeKb::load(&kb)?;
            let class_types = match class_types {
                Some(p) => ClassTypeMap::load(p)?,
                None => ClassTypeMap::default(),
            };
            let targets = ListPageTargets::load(&targets, &kb, &class_types)?;
            let listings: Vec<Listing> = jsonl::read(&corpus)?;
            let labeled = pipeline::label_corpus(&listings, &targets, &kb, min_items);
            let n = jsonl::write(&out, &labeled.records)?;
            write_diagnostics(None, &labeled.diagnostics)?;
            info!("{n} of {} listings labeled", listings.len());
        }
        Command::Encode {
            corpus,
            out,
            no_chunking,
            max_seq_len,
            max_items_per_chunk,
            labels,
        } => {
            let encoder = Encoder::new(EncoderConfig {
                max_seq_len,
                max_items_per_chunk,
                chunking_enabled: !no_chunking,
                ..EncoderConfig::default()
            })?;
            let mode = match labels {
                Labels::Typed => Some(LabelMode::Typed),
                Labels::Binary => Some(LabelMode::Binary),
                Labels::None => None,
            };
            let listings: Vec<Listing> = jsonl::read(&corpus)?;
            let enc = pipeline::encode_corpus(&listings, &encoder, mode)?;
            let n = jsonl::write(&out, &enc.records)?;
            write_diagnostics(None, &enc.diagnostics)?;
            info!("{n} chunks from {} listings", listings.len());
        }
        Command::SampleNegatives {
            positives,
            proportion,
            seed,
            out,
            min_items,
            max_items,
        } => {
            let pos: Vec<Listing> = jsonl::read(&positives)?;
            let neg = sample_negatives(
                &pos,
                &SamplerConfig {
                    proportion,
                    seed,
                    min_items,
                    max_items,
                },
            )?;
            let n = jsonl::write(&out, &neg.listings)?;
            write_diagnostics(None, &neg.diagnostics)?;
            info!("{n} negatives from {} positives", pos.len());
        }
        Command::Split {
            corpus,
            out_dir,
            seed,
            fractions,
        } => {
            let fractions = match fractions.as_deref() {
                Some(&[train, validation, test]) => SplitFractions { train, validation, test },
                _ => SplitFractions::default(),
            };
            let listings: Vec<Listing> = jsonl::read(&corpus)?;
            let s = pipeline::split_corpus(listings, &fractions, seed)?;
            for (name, part) in [("train", &s.train), ("validation", &s.validation), ("test", &s.test)] {
                let n = jsonl::write(out_dir.join(format!("{name}.jsonl")), part)?;
                info!("{name}: {n} listings");
            }
        }
        Command::Aggregate {
            chunks,
            preds,
            out,
            corpus,
        } => {
            let chunks: Vec<EncodedChunk> = jsonl::read(&chunks)?;
            let preds: Vec<PredictionRecord> = jsonl::read(&preds)?;
            let listings: Vec<Listing> = match corpus {
                Some(p) => jsonl::read(p)?,
                None => Vec::new(),
            };
            let agg = pipeline::aggregate_predictions(&chunks, &preds, &listings)?;
            let n = jsonl::write(&out, &agg.records)?;
            write_diagnostics(None, &agg.diagnostics)?;
            info!("{n} mentions from {} chunks", chunks.len());
        }
        Command::Score { gold, pred, report } => {
            let gold = read_gold(&gold)?;
            let pred: Vec<ExtractedMention> = jsonl::read(&pred)?;
            let mut acc = ScoreAccumulator::default();
            acc.add(&gold, &pred)?;
            let r = acc.report();
            let json = serde_json::to_string_pretty(&r).map_err(|e| Error::InvalidInput(e.to_string()))?;
            std::fs::write(&report, json + "\n").map_err(|e| Error::Io {
                path: report.clone(),
                source: e,
            })?;
            print!("{}", r.render_text());
        }
        Command::Stats { mentions, corpus } => {
            let json = if let Some(corpus) = corpus {
                let listings: Vec<Listing> = jsonl::read(&corpus)?;
                serde_json::to_string_pretty(&corpus_stats(&listings))
            } else {
                let ms: Vec<ExtractedMention> = jsonl::read(mentions.expect("required by clap"))?;
                serde_json::to_string_pretty(&extraction_stats(&ms))
            };
            println!("{}", json.map_err(|e| Error::InvalidInput(e.to_string()))?);
        }
        Command::Baseline { corpus, out } => {
            let listings: Vec<Listing> = jsonl::read(&corpus)?;
            let ms: Vec<ExtractedMention> = listings.iter().flat_map(pick_first_entity_baseline).collect();
            let n = jsonl::write(&out, &ms)?;
            info!("{n} baseline mentions");
        }
        Command::Noisy {
            corpus,
            mentions,
            out,
            keep_empty,
        } => {
            let listings: Vec<Listing> = jsonl::read(&corpus)?;
            let ms: Vec<ExtractedMention> = jsonl::read(&mentions)?;
            let noisy = pipeline::noisy_training_set(&listings, &ms, keep_empty);
            let n = jsonl::write(&out, &noisy)?;
            info!("{n} of {} listings kept", listings.len());
        }
        Command::Run(args) => {
            let mut cfg = match &args.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(p) = args.profile {
                cfg.profile = p;
            }
            if let Some(d) = args.out_dir {
                cfg.out_dir = d;
            }
            if !args.stages.is_empty() {
                cfg.stages = args.stages;
            }
            cfg.overrides.merge(&ProfileOverrides {
                seed: args.seed,
                proportion: args.proportion,
                chunking: args.no_chunking.then_some(false),
                label_mode: args.binary.then_some(LabelMode::Binary),
                max_seq_len: args.max_seq_len,
                ..Default::default()
            });
            let manifest = pipeline::run_pipeline(&cfg)?;
            for s in &manifest.stages {
                let counts: Vec<String> = s.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:<17} {}", s.stage, counts.join(" "));
            }
            if let Some(report) = manifest.stage(Stage::Score).map(|_| cfg.out_dir.join(pipeline::files::REPORT_TEXT)) {
                if let Ok(text) = std::fs::read_to_string(report) {
                    print!("{text}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!("\n  caused by: {s}"));
                src = s.source();
            }
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
