//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Parsing starts from
//! the full-size defaults (or a preset) and applies keys in order, so later
//! values win. Every problem in a file is reported at once.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::embedding::{Corruption, ModelKind};
use crate::error::{Error, Result};
use crate::federation::{Mode, RoundConfig};
use crate::losses::{Interference, LossWeights};
use crate::unlearning::UnlearnConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub model: ModelKind,
    pub dim: usize,
    pub margin: f64,
    pub lr: f64,
    pub rounds: usize,
    pub fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub corrupt_heads: bool,
    pub mu_distill: f64,
    pub mu_soft: f64,
    pub mu_prox: f64,
    pub adversarial_temperature: f64,
    pub eval_interval: usize,
    pub patience: usize,
    pub seed: u64,
    pub forget_proportion: f64,
    pub interference_epochs: usize,
    pub decay_epochs: usize,
    pub unlearn_rounds: usize,
    pub unlearn_batch_size: usize,
    pub unlearn_lr: f64,
    pub hard_confusion: bool,
    pub soft_confusion: bool,
    pub relations_in_global_step: bool,
    pub reset_unlearn_optimizer: bool,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::FedLU,
            model: ModelKind::TransE,
            dim: 256,
            margin: 9.0,
            lr: 1e-4,
            rounds: 100,
            fraction: 1.0,
            local_epochs: 3,
            batch_size: 1024,
            negatives: 256,
            corrupt_heads: false,
            mu_distill: 2.0,
            mu_soft: 0.1,
            mu_prox: 0.1,
            adversarial_temperature: 0.0,
            eval_interval: 5,
            patience: 3,
            seed: 0,
            forget_proportion: 0.01,
            interference_epochs: 5,
            decay_epochs: 5,
            unlearn_rounds: 1,
            unlearn_batch_size: 1024,
            unlearn_lr: 1e-4,
            hard_confusion: true,
            soft_confusion: true,
            relations_in_global_step: true,
            reset_unlearn_optimizer: false,
            data_dir: PathBuf::from("shards"),
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Full,
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config(vec![format!("unknown preset `{s}` (expected full or desk)")])),
        }
    }
}

pub const KEYS: &[&str] = &[
    "mode",
    "model",
    "dim",
    "margin",
    "lr",
    "rounds",
    "fraction",
    "local_epochs",
    "batch_size",
    "negatives",
    "corrupt_heads",
    "mu_distill",
    "mu_soft",
    "mu_prox",
    "adversarial_temperature",
    "eval_interval",
    "patience",
    "seed",
    "forget_proportion",
    "interference_epochs",
    "decay_epochs",
    "unlearn_rounds",
    "unlearn_batch_size",
    "unlearn_lr",
    "hard_confusion",
    "soft_confusion",
    "relations_in_global_step",
    "reset_unlearn_optimizer",
    "data_dir",
    "out_dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse `{value}`"))
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Full => Self::default(),
            // Small enough for a laptop CPU. The training learning rate is
            // raised so that 50 rounds converge; unlearning keeps a smaller
            // one, as a short fine-tuning phase. Margin 9 is too wide for
            // 64 dimensions.
            Preset::Desk => Self {
                dim: 64,
                batch_size: 256,
                negatives: 64,
                rounds: 50,
                margin: 1.0,
                lr: 1e-2,
                unlearn_batch_size: 256,
                unlearn_lr: 1e-3,
                ..Self::default()
            },
        }
    }

    /// Sets one key. Errors describe the key and value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "mode" => self.mode = v.parse().map_err(|e: Error| e.to_string())?,
            "model" => self.model = v.parse().map_err(|e: Error| e.to_string())?,
            "dim" => self.dim = parse(key, v)?,
            "margin" => self.margin = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "rounds" => self.rounds = parse(key, v)?,
            "fraction" => self.fraction = parse(key, v)?,
            "local_epochs" => self.local_epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "negatives" => self.negatives = parse(key, v)?,
            "corrupt_heads" => self.corrupt_heads = parse(key, v)?,
            "mu_distill" => self.mu_distill = parse(key, v)?,
            "mu_soft" => self.mu_soft = parse(key, v)?,
            "mu_prox" => self.mu_prox = parse(key, v)?,
            "adversarial_temperature" => self.adversarial_temperature = parse(key, v)?,
            "eval_interval" => self.eval_interval = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "forget_proportion" => self.forget_proportion = parse(key, v)?,
            "interference_epochs" => self.interference_epochs = parse(key, v)?,
            "decay_epochs" => self.decay_epochs = parse(key, v)?,
            "unlearn_rounds" => self.unlearn_rounds = parse(key, v)?,
            "unlearn_batch_size" => self.unlearn_batch_size = parse(key, v)?,
            "unlearn_lr" => self.unlearn_lr = parse(key, v)?,
            "hard_confusion" => self.hard_confusion = parse(key, v)?,
            "soft_confusion" => self.soft_confusion = parse(key, v)?,
            "relations_in_global_step" => self.relations_in_global_step = parse(key, v)?,
            "reset_unlearn_optimizer" => self.reset_unlearn_optimizer = parse(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut problems = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k, v) {
                        problems.push(format!("line {}: {e}", i + 1));
                    }
                }
                None => problems.push(format!("line {}: expected key = value", i + 1)),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every key with its effective value, in [`KEYS`] order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = match *key {
                "mode" => self.mode.to_string(),
                "model" => self.model.to_string(),
                "dim" => self.dim.to_string(),
                "margin" => self.margin.to_string(),
                "lr" => self.lr.to_string(),
                "rounds" => self.rounds.to_string(),
                "fraction" => self.fraction.to_string(),
                "local_epochs" => self.local_epochs.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "negatives" => self.negatives.to_string(),
                "corrupt_heads" => self.corrupt_heads.to_string(),
                "mu_distill" => self.mu_distill.to_string(),
                "mu_soft" => self.mu_soft.to_string(),
                "mu_prox" => self.mu_prox.to_string(),
                "adversarial_temperature" => self.adversarial_temperature.to_string(),
                "eval_interval" => self.eval_interval.to_string(),
                "patience" => self.patience.to_string(),
                "seed" => self.seed.to_string(),
                "forget_proportion" => self.forget_proportion.to_string(),
                "interference_epochs" => self.interference_epochs.to_string(),
                "decay_epochs" => self.decay_epochs.to_string(),
                "unlearn_rounds" => self.unlearn_rounds.to_string(),
                "unlearn_batch_size" => self.unlearn_batch_size.to_string(),
                "unlearn_lr" => self.unlearn_lr.to_string(),
                "hard_confusion" => self.hard_confusion.to_string(),
                "soft_confusion" => self.soft_confusion.to_string(),
                "relations_in_global_step" => self.relations_in_global_step.to_string(),
                "reset_unlearn_optimizer" => self.reset_unlearn_optimizer.to_string(),
                "data_dir" => self.data_dir.display().to_string(),
                "out_dir" => self.out_dir.display().to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// SHA-256 of [`Self::dump`] without the two paths, hex encoded. Runs
    /// that differ only in where they read and write hash the same.
    pub fn hash(&self) -> String {
        let plan = Self { data_dir: PathBuf::new(), out_dir: PathBuf::new(), ..self.clone() };
        hex::encode(Sha256::digest(plan.dump().as_bytes()))
    }

    pub fn round_config(&self) -> RoundConfig {
        RoundConfig {
            model: self.model,
            dim: self.dim,
            margin: self.margin,
            lr: self.lr,
            rounds: self.rounds,
            fraction: self.fraction,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            negatives: self.negatives,
            corruption: if self.corrupt_heads { Corruption::Either } else { Corruption::Tail },
            weights: LossWeights {
                distill: self.mu_distill,
                soft: self.mu_soft,
                prox: self.mu_prox,
                adversarial: self.adversarial_temperature,
            },
            eval_interval: self.eval_interval,
            patience: self.patience,
            seed: self.seed,
            relations_in_global_step: self.relations_in_global_step,
        }
    }

    pub fn unlearn_config(&self) -> UnlearnConfig {
        let round = self.round_config();
        UnlearnConfig {
            interference_epochs: self.interference_epochs,
            decay_epochs: self.decay_epochs,
            rounds: self.unlearn_rounds,
            terms: Interference { hard: self.hard_confusion, soft: self.soft_confusion },
            batch_size: self.unlearn_batch_size,
            lr: self.unlearn_lr,
            reset_optimizer: self.reset_unlearn_optimizer,
            ..UnlearnConfig::from_training(&round)
        }
    }

    /// Every violated constraint.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.round_config().problems();
        out.extend(self.unlearn_config().problems());
        if !(self.forget_proportion > 0.0 && self.forget_proportion < 1.0) {
            out.push(format!("forget_proportion={} must lie in (0, 1)", self.forget_proportion));
        }
        if !(self.margin.is_finite()) {
            out.push("margin must be finite".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}
