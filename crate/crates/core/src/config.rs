//! Run configuration: a TOML document layered over preset defaults.
//!
//! ```toml
//! [run]
//! preset = "add3"      # or "mul3"
//! seed = 0
//! out_dir = "runs/add3"
//!
//! [train]
//! max_iterations = 20000
//! ```
//!
//! Any key may be omitted; omitted keys take the preset value. `[corpus].rng_seed`,
//! `[train].rng_seed` and the probe seeds default to `[run].seed`; model
//! initialization always uses `[run].seed`. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSpec, FormatSpec, OpKind};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::probes::LatticeSpec;
use crate::train::{LossMaskKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Add3,
    Mul3,
}

impl Preset {
    pub fn op(self) -> OpKind {
        match self {
            Preset::Add3 => OpKind::Add,
            Preset::Mul3 => OpKind::Mul,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Add3 => "add3",
            Preset::Mul3 => "mul3",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add3" => Ok(Preset::Add3),
            "mul3" => Ok(Preset::Mul3),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected add3 or mul3)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub preset: Preset,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub n: u32,
    pub m: u32,
    pub operand_width: usize,
    pub d1_size: usize,
    pub d2_size: usize,
    pub d3_size: usize,
    pub rng_seed: u64,
    pub ood_both_operands: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// Checkpoint probed by `eval` and `probe`; defaults to `<out_dir>/final.ckpt`.
    pub checkpoint: String,
    pub lattice: LatticeSpec,
    pub exhaustive: bool,
    pub perturb_base_pairs: usize,
    pub perturb_seed: u64,
    pub digit_position: u32,
    pub digit_values: Vec<(u8, u8)>,
    pub pca_k: usize,
    pub pca_pairs: usize,
    pub pca_seed: u64,
    /// Token position whose representation is analysed.
    pub position: usize,
    /// Grid stride for the principal-component heatmaps.
    pub heatmap_stride: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub corpus: CorpusSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub probe: ProbeSection,
}

impl RunConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let op = preset.op();
        let corpus = CorpusSpec::preset(op, seed);
        let train = TrainConfig {
            rng_seed: seed,
            loss_mask: LossMaskKind::AnswerOnly,
            ..TrainConfig::default()
        };
        let format = corpus.format;
        RunConfig {
            run: RunSection {
                preset,
                seed,
                out_dir: PathBuf::from(format!("runs/{}", preset.name())),
            },
            corpus: CorpusSection {
                n: corpus.n,
                m: corpus.m,
                operand_width: format.operand_width,
                d1_size: corpus.d1_size,
                d2_size: corpus.d2_size,
                d3_size: corpus.d3_size,
                rng_seed: seed,
                ood_both_operands: corpus.ood_both_operands,
            },
            model: ModelConfig::preset(op),
            train,
            probe: ProbeSection {
                checkpoint: String::new(),
                lattice: LatticeSpec::four_digit(seed),
                exhaustive: false,
                perturb_base_pairs: 1_000,
                perturb_seed: seed,
                digit_position: 3,
                digit_values: vec![(1, 2), (3, 4)],
                pca_k: 4,
                pca_pairs: 10_000,
                pca_seed: seed,
                position: format.last_operand_position(),
                heatmap_stride: 101,
            },
        }
    }

    /// Re-seeds every component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self.corpus.rng_seed = seed;
        self.train.rng_seed = seed;
        self.probe.lattice.rng_seed = seed;
        self.probe.perturb_seed = seed;
        self.probe.pca_seed = seed;
        self
    }

    pub fn parse(text: &str) -> Result<Self> {
        let user: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        let run = user.get("run").and_then(|v| v.as_table());
        let preset = match run.and_then(|r| r.get("preset")) {
            Some(v) => v
                .as_str()
                .ok_or_else(|| Error::Config("run.preset must be a string".into()))?
                .parse()?,
            None => Preset::Add3,
        };
        let seed = match run.and_then(|r| r.get("seed")) {
            Some(v) => v
                .as_integer()
                .and_then(|s| u64::try_from(s).ok())
                .ok_or_else(|| Error::Config("run.seed must be a non-negative integer".into()))?,
            None => 0,
        };
        let mut merged = toml::Table::try_from(Self::preset(preset, seed))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user, "")?;
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn format(&self) -> Result<FormatSpec> {
        FormatSpec::new(self.run.preset.op(), self.corpus.n, self.corpus.operand_width)
    }

    pub fn corpus_spec(&self) -> Result<CorpusSpec> {
        Ok(CorpusSpec {
            format: self.format()?,
            n: self.corpus.n,
            m: self.corpus.m,
            d1_size: self.corpus.d1_size,
            d2_size: self.corpus.d2_size,
            d3_size: self.corpus.d3_size,
            rng_seed: self.corpus.rng_seed,
            ood_both_operands: self.corpus.ood_both_operands,
        })
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        if self.probe.checkpoint.is_empty() {
            self.run.out_dir.join(crate::train::FINAL_CHECKPOINT)
        } else {
            PathBuf::from(&self.probe.checkpoint)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let format = self.format()?;
        self.corpus_spec()?.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.context_window + 1 < format.sequence_len() {
            return Err(Error::Config(format!(
                "context window {} cannot hold {}-token sequences",
                self.model.context_window,
                format.sequence_len()
            )));
        }
        if self.probe.position >= format.prefix_len() {
            return Err(Error::Config(format!(
                "probe position {} lies outside the {}-token prefix",
                self.probe.position,
                format.prefix_len()
            )));
        }
        if self.probe.heatmap_stride == 0 || self.probe.pca_k == 0 {
            return Err(Error::Config("heatmap stride and pca k must be positive".into()));
        }
        self.probe.lattice.validate()
    }
}

fn merge(base: &mut toml::Table, over: toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in over {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (base.get_mut(&key), value) {
            (None, _) => return Err(Error::Config(format!("unknown key {path}"))),
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o, &path)?,
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}
