//! Run configuration: a TOML document with per-stage sections. Flags
//! override file values; the fully resolved config is echoed to
//! `config.lock` in every run directory, and the default run directory is
//! derived from a hash of that lock, so identical configs land in
//! identical paths with identical outputs.

use std::path::{Path, PathBuf};

use genprobe::error::{Error, Result};
use genprobe::eval::ConditionTag;
use genprobe::model::{Arch, ModelConfig};
use genprobe::schedule::TrainSchedule;
use genprobe::wordlab::UpdateScope;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; resolution order is flag, then file, then the GP_SEED
    /// environment variable, then 42.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub corpus: CorpusSection,
    pub grammar: GrammarSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub wordlab: WordlabSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out_dir: None,
            corpus: CorpusSection::default(),
            grammar: GrammarSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            wordlab: WordlabSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub raw_path: Option<PathBuf>,
    pub vocab_size: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            raw_path: None,
            vocab_size: 600,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrammarSection {
    /// Path to a grammar document; `None` uses the built-in preset.
    pub spec_path: Option<PathBuf>,
    /// `balanced` (0.5 masculine) or `biased` (0.7 masculine).
    pub preset: String,
    pub n_sentences: usize,
}

impl Default for GrammarSection {
    fn default() -> Self {
        GrammarSection {
            spec_path: None,
            preset: "balanced".into(),
            n_sentences: 55_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub arch: String,
    pub d_emb: usize,
    pub d_hidden: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub seq_len: usize,
    pub dropout: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            arch: "lstm".into(),
            d_emb: 64,
            d_hidden: 64,
            n_layers: 2,
            n_heads: 4,
            seq_len: 32,
            dropout: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub warmup: usize,
    pub max_lr: Option<f64>,
    pub momentum: f64,
    pub batch: usize,
    pub grad_clip: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 4,
            warmup: 1,
            max_lr: None,
            momentum: 0.9,
            batch: 0,
            grad_clip: Some(0.25),
        }
    }
}

impl TrainSection {
    /// Architecture-calibrated defaults for fields left unset.
    pub fn resolved_lr(&self, arch: Arch) -> f64 {
        self.max_lr.unwrap_or(match arch {
            Arch::Lstm => 2.0,
            Arch::Transformer => 1.0,
        })
    }

    pub fn resolved_batch(&self, arch: Arch) -> usize {
        if self.batch > 0 {
            self.batch
        } else {
            match arch {
                Arch::Lstm => 32,
                Arch::Transformer => 64,
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_per_gender: usize,
    pub min_count: u64,
    pub distances_adjacent: Vec<usize>,
    pub distances_relative: Vec<usize>,
    pub bootstrap_resamples: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_per_gender: 20,
            min_count: 50,
            distances_adjacent: vec![0, 1, 3, 6],
            distances_relative: vec![1, 2, 3, 4, 5],
            bootstrap_resamples: 1000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WordlabSection {
    pub n_novel: usize,
    pub shots: Vec<usize>,
    pub repetitions: usize,
    pub pool_size: usize,
    pub lr: f64,
    pub scope: UpdateScope,
    pub conditions: Vec<ConditionTag>,
    pub include_control: bool,
}

impl Default for WordlabSection {
    fn default() -> Self {
        WordlabSection {
            n_novel: 20,
            shots: vec![1, 2, 3, 5, 10],
            repetitions: 5,
            pool_size: 15,
            lr: 1.0,
            scope: UpdateScope::EmbeddingOnly,
            conditions: ConditionTag::all().to_vec(),
            include_control: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lrs: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lrs: vec![0.01, 0.1, 0.5, 1.0, 2.0],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("config parse: {e}")))
    }

    pub fn to_lock_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Internal(format!("config encode: {e}")))
    }

    pub fn arch(&self) -> Result<Arch> {
        self.model.arch.parse()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let config = ModelConfig {
            arch: self.arch()?,
            vocab_size: 0, // filled once the vocabulary is known
            d_emb: self.model.d_emb,
            d_hidden: self.model.d_hidden,
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            seq_len: self.model.seq_len,
            dropout: self.model.dropout,
            seed: self.seed(),
        };
        Ok(config)
    }

    pub fn train_schedule(&self) -> Result<TrainSchedule> {
        let arch = self.arch()?;
        let schedule = TrainSchedule {
            n_epochs: self.train.epochs,
            warmup_epochs: self.train.warmup,
            max_lr: self.train.resolved_lr(arch),
            momentum: self.train.momentum,
            batch_size: self.train.resolved_batch(arch),
            seq_len: self.model.seq_len,
            grad_clip: self.train.grad_clip,
            seed: self.seed(),
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Resolved output directory: explicit `out_dir`, or a content-stamped
    /// default under `runs/` so identical configs reuse identical paths.
    pub fn run_dir(&self, subcommand: &str) -> Result<PathBuf> {
        if let Some(dir) = &self.out_dir {
            return Ok(dir.clone());
        }
        let lock = self.to_lock_string()?;
        let mut hasher = Sha256::new();
        hasher.update(subcommand.as_bytes());
        hasher.update([0]);
        hasher.update(lock.as_bytes());
        let digest = hasher.finalize();
        let stamp: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
        Ok(PathBuf::from("runs").join(format!("{subcommand}-{stamp}")))
    }

    pub fn write_lock(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let path = dir.join("config.lock");
        std::fs::write(&path, self.to_lock_string()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}
