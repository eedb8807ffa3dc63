use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::split::SplitFractions;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::labeler::LabelMode;
use crate::model::MIN_ITEMS;
use crate::sampler::SamplerConfig;

/// A named model configuration. Epoch counts are not used here; they are
/// handed to the external training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunProfile {
    pub name: String,
    pub encoder: EncoderConfig,
    pub sampler: SamplerConfig,
    pub label_mode: LabelMode,
    pub split: SplitFractions,
    pub seed: u64,
    pub min_items: usize,
    pub epochs: u32,
    /// Extra epoch(s) on noisily labeled pages.
    pub noisy_epochs: u32,
    /// Keep listings without any predicted mention in the noisy set.
    pub keep_empty: bool,
}

impl RunProfile {
    fn base(name: &str, proportion: f64, epochs: u32, noisy_epochs: u32) -> Self {
        let encoder = EncoderConfig::default();
        let seed = 42;
        RunProfile {
            name: name.to_owned(),
            sampler: SamplerConfig {
                proportion,
                seed,
                min_items: MIN_ITEMS,
                max_items: encoder.max_items_per_chunk,
            },
            encoder,
            label_mode: LabelMode::Typed,
            split: SplitFractions::default(),
            seed,
            min_items: MIN_ITEMS,
            epochs,
            noisy_epochs,
            keep_empty: false,
        }
    }

    /// Trained on list pages.
    pub fn lp() -> Self {
        Self::base("lp", 0.5, 3, 0)
    }

    /// Trained on pages.
    pub fn p() -> Self {
        Self::base("p", 0.3, 2, 0)
    }

    /// `p` followed by one epoch on noisy page labels.
    pub fn final_profile() -> Self {
        Self::base("final", 0.3, 2, 1)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "lp" => Ok(Self::lp()),
            "p" => Ok(Self::p()),
            "final" => Ok(Self::final_profile()),
            other => Err(Error::InvalidConfig(format!(
                "unknown profile `{other}` (expected lp, p or final)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.sampler.validate()?;
        self.split.validate()?;
        if self.min_items == 0 {
            return Err(Error::InvalidConfig("min_items must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Field-level overrides applied on top of a profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOverrides {
    pub proportion: Option<f64>,
    pub seed: Option<u64>,
    pub max_seq_len: Option<usize>,
    pub max_items_per_chunk: Option<usize>,
    pub chunking: Option<bool>,
    pub label_mode: Option<LabelMode>,
    pub keep_empty: Option<bool>,
    pub min_items: Option<usize>,
    pub split: Option<SplitFractions>,
}

impl ProfileOverrides {
    pub fn apply(&self, p: &mut RunProfile) {
        if let Some(v) = self.proportion {
            p.sampler.proportion = v;
        }
        if let Some(v) = self.seed {
            p.seed = v;
            p.sampler.seed = v;
        }
        if let Some(v) = self.max_seq_len {
            p.encoder.max_seq_len = v;
        }
        if let Some(v) = self.max_items_per_chunk {
            p.encoder.max_items_per_chunk = v;
            p.sampler.max_items = v.max(p.sampler.min_items);
        }
        if let Some(v) = self.chunking {
            p.encoder.chunking_enabled = v;
        }
        if let Some(v) = self.label_mode {
            p.label_mode = v;
        }
        if let Some(v) = self.keep_empty {
            p.keep_empty = v;
        }
        if let Some(v) = self.min_items {
            p.min_items = v;
            p.sampler.min_items = v;
            p.sampler.max_items = p.sampler.max_items.max(v);
        }
        if let Some(v) = self.split {
            p.split = v;
        }
    }

    /// Later values win.
    pub fn merge(&mut self, other: &ProfileOverrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(proportion, seed, max_seq_len, max_items_per_chunk, chunking, label_mode, keep_empty, min_items, split);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Parse,
    Label,
    Split,
    SampleNegatives,
    Encode,
    Predict,
    Aggregate,
    Score,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Parse,
        Stage::Label,
        Stage::Split,
        Stage::SampleNegatives,
        Stage::Encode,
        Stage::Predict,
        Stage::Aggregate,
        Stage::Score,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Label => "label",
            Stage::Split => "split",
            Stage::SampleNegatives => "sample-negatives",
            Stage::Encode => "encode",
            Stage::Predict => "predict",
            Stage::Aggregate => "aggregate",
            Stage::Score => "score",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    /// Predictions copied from the gold labels of each chunk.
    #[default]
    GoldEcho,
    /// Predictions written by an outside process; the run waits for them.
    External,
}

/// Input files. Stages after the first fall back to files in the output
/// directory written by earlier stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunInputs {
    pub dump: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub labeled: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub class_types: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

impl RunInputs {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.dump,
            &mut self.corpus,
            &mut self.labeled,
            &mut self.kb,
            &mut self.targets,
            &mut self.class_types,
            &mut self.predictions,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

fn default_profile() -> String {
    "lp".into()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("run")
}

fn default_wait() -> u64 {
    3600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Empty means every stage.
    #[serde(default)]
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub predictor: PredictorKind,
    /// Seconds to wait for external predictions.
    #[serde(default = "default_wait")]
    pub wait_secs: u64,
    #[serde(default)]
    pub inputs: RunInputs,
    #[serde(default)]
    pub overrides: ProfileOverrides,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            profile: default_profile(),
            out_dir: default_out_dir(),
            stages: Vec::new(),
            predictor: PredictorKind::default(),
            wait_secs: default_wait(),
            inputs: RunInputs::default(),
            overrides: ProfileOverrides::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Reads a TOML file; relative paths are taken from the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        cfg.inputs.resolve(base);
        Ok(cfg)
    }

    /// The named profile with overrides applied, validated.
    pub fn resolved_profile(&self) -> Result<RunProfile> {
        let mut p = RunProfile::by_name(&self.profile)?;
        self.overrides.apply(&mut p);
        p.validate()?;
        Ok(p)
    }

    pub fn stages(&self) -> Vec<Stage> {
        let mut s = if self.stages.is_empty() {
            Stage::ALL.to_vec()
        } else {
            self.stages.clone()
        };
        s.sort();
        s.dedup();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_profiles() {
        let lp = RunProfile::lp();
        assert_eq!((lp.sampler.proportion, lp.epochs, lp.noisy_epochs), (0.5, 3, 0));
        let p = RunProfile::p();
        assert_eq!((p.sampler.proportion, p.epochs), (0.3, 2));
        let f = RunProfile::by_name("final").unwrap();
        assert_eq!((f.sampler.proportion, f.epochs, f.noisy_epochs), (0.3, 2, 1));
        assert_eq!(lp.sampler.max_items, lp.encoder.max_items_per_chunk);
        assert!(RunProfile::by_name("x").is_err());
    }

    #[test]
    fn toml_with_overrides() {
        let cfg = RunConfig::from_toml(
            r#"
profile = "p"
stages = ["encode", "parse"]
[inputs]
dump = "pages.xml"
[overrides]
seed = 9
chunking = false
label_mode = "BINARY"
"#,
        )
        .unwrap();
        assert_eq!(cfg.stages(), vec![Stage::Parse, Stage::Encode]);
        let p = cfg.resolved_profile().unwrap();
        assert_eq!((p.seed, p.sampler.seed), (9, 9));
        assert!(!p.encoder.chunking_enabled);
        assert_eq!(p.label_mode, LabelMode::Binary);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("profil = \"lp\"").is_err());
        assert!("nope".parse::<Stage>().is_err());
        assert_eq!("sample-negatives".parse::<Stage>().unwrap(), Stage::SampleNegatives);
    }
}
