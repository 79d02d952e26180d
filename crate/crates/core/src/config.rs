//! Plain-text `key = value` pipeline configuration.
//!
//! Keys are grouped by stage (`canvas.`, `softroi.`, `parser.`, `train.`,
//! `chunk.`, `retrieval.`, `synth.`) plus a top-level `seed`. Lines starting
//! with `#` and blank lines are ignored. Unknown keys are errors.

use std::fmt::Display;
use std::str::FromStr;

use crate::canvas::{DEFAULT_K_MAX, DEFAULT_TAU_DET, DEFAULT_TAU_NMS};
use crate::chunker::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};
use crate::index::{DEFAULT_B, DEFAULT_K1, DEFAULT_RETRIEVAL_K};
use crate::parser::{CandidateConfig, Decoder, HeaderPrior, TrainConfig};
use crate::softroi::DEFAULT_ALPHA;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Retriever {
    #[default]
    Bm25,
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub tau_det: f64,
    pub tau_nms: f64,
    pub k_max: usize,
    pub alpha: f64,
    pub candidates: CandidateConfig,
    pub decoder: Decoder,
    pub train: TrainConfig,
    pub max_len: usize,
    pub include_metadata: bool,
    pub tokenizer: String,
    pub retriever: Retriever,
    pub k: usize,
    pub k1: f64,
    pub b: f64,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            tau_det: DEFAULT_TAU_DET,
            tau_nms: DEFAULT_TAU_NMS,
            k_max: DEFAULT_K_MAX,
            alpha: DEFAULT_ALPHA,
            candidates: CandidateConfig::default(),
            decoder: Decoder::Mst,
            train: TrainConfig::default(),
            max_len: DEFAULT_MAX_LEN,
            include_metadata: true,
            tokenizer: "whitespace".into(),
            retriever: Retriever::Bm25,
            k: DEFAULT_RETRIEVAL_K,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            synth: SynthConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "seed",
    "canvas.tau_det",
    "canvas.tau_nms",
    "canvas.k_max",
    "softroi.alpha",
    "softroi.type_dim",
    "parser.top_k",
    "parser.m_pages",
    "parser.y_tol",
    "parser.header_prior",
    "parser.decode",
    "train.lr",
    "train.epochs",
    "train.batch_size",
    "train.weight_decay",
    "train.dropout",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "train.hidden",
    "train.val_fraction",
    "chunk.max_len",
    "chunk.include_metadata",
    "chunk.tokenizer",
    "retrieval.retriever",
    "retrieval.k",
    "retrieval.k1",
    "retrieval.b",
    "synth.n_docs",
    "synth.test_docs",
    "synth.pages_per_doc",
    "synth.sections_per_doc",
    "synth.blocks_per_section",
    "synth.figure_rate",
    "synth.embedding_dim",
    "synth.signal_strength",
    "synth.noise_std",
    "synth.grid_size",
    "synth.questions_per_doc",
    "synth.distractors",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::ConfigInvalid(format!("{key} = {value:?}: {e}")))
}

fn parse_range(key: &str, value: &str) -> Result<(usize, usize)> {
    let (lo, hi) = value
        .split_once("..")
        .ok_or_else(|| Error::ConfigInvalid(format!("{key} expects lo..hi, got {value:?}")))?;
    Ok((parse(key, lo)?, parse(key, hi)?))
}

/// `key = value` pairs in file order. Duplicate keys are rejected.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::ConfigInvalid(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(Error::ConfigInvalid(format!("line {}: duplicate key {k}", i + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// Environment variable that overrides `key`: `DOCDEP_` + upper-cased key
/// with `.` replaced by `__`, e.g. `DOCDEP_TRAIN__LR`.
pub fn env_var(key: &str) -> String {
    format!("DOCDEP_{}", key.replace('.', "__").to_uppercase())
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
                self.synth.seed = self.seed;
            }
            "canvas.tau_det" => self.tau_det = parse(key, v)?,
            "canvas.tau_nms" => self.tau_nms = parse(key, v)?,
            "canvas.k_max" => self.k_max = parse(key, v)?,
            "softroi.alpha" => self.alpha = parse(key, v)?,
            "softroi.type_dim" => self.train.type_dim = parse(key, v)?,
            "parser.top_k" => self.candidates.top_k = parse(key, v)?,
            "parser.m_pages" => self.candidates.m_pages = parse(key, v)?,
            "parser.y_tol" => self.candidates.y_tol = parse(key, v)?,
            "parser.header_prior" => {
                self.candidates.prior = if parse::<bool>(key, v)? {
                    HeaderPrior::default()
                } else {
                    HeaderPrior::NONE
                }
            }
            "parser.decode" => {
                self.decoder = match v.trim() {
                    "mst" => Decoder::Mst,
                    "argmax" => Decoder::Argmax,
                    _ => return Err(Error::ConfigInvalid(format!("{key} must be mst or argmax"))),
                }
            }
            "train.lr" => self.train.lr = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.weight_decay" => self.train.weight_decay = parse(key, v)?,
            "train.dropout" => self.train.dropout = parse(key, v)?,
            "train.beta1" => self.train.beta1 = parse(key, v)?,
            "train.beta2" => self.train.beta2 = parse(key, v)?,
            "train.eps" => self.train.eps = parse(key, v)?,
            "train.hidden" => self.train.hidden = parse(key, v)?,
            "train.val_fraction" => self.train.val_fraction = parse(key, v)?,
            "chunk.max_len" => self.max_len = parse(key, v)?,
            "chunk.include_metadata" => self.include_metadata = parse(key, v)?,
            "chunk.tokenizer" => {
                if v.trim() != "whitespace" {
                    return Err(Error::ConfigInvalid(format!("{key}: only whitespace is supported")));
                }
                self.tokenizer = "whitespace".into();
            }
            "retrieval.retriever" => {
                self.retriever = match v.trim() {
                    "bm25" => Retriever::Bm25,
                    "dense" => Retriever::Dense,
                    _ => return Err(Error::ConfigInvalid(format!("{key} must be bm25 or dense"))),
                }
            }
            "retrieval.k" => self.k = parse(key, v)?,
            "retrieval.k1" => self.k1 = parse(key, v)?,
            "retrieval.b" => self.b = parse(key, v)?,
            "synth.n_docs" => self.synth.n_docs = parse(key, v)?,
            "synth.test_docs" => self.synth.test_docs = parse(key, v)?,
            "synth.pages_per_doc" => self.synth.pages_per_doc = parse_range(key, v)?,
            "synth.sections_per_doc" => self.synth.sections_per_doc = parse_range(key, v)?,
            "synth.blocks_per_section" => self.synth.blocks_per_section = parse_range(key, v)?,
            "synth.figure_rate" => self.synth.figure_rate = parse(key, v)?,
            "synth.embedding_dim" => self.synth.embedding_dim = parse(key, v)?,
            "synth.signal_strength" => self.synth.signal_strength = parse(key, v)?,
            "synth.noise_std" => self.synth.noise_std = parse(key, v)?,
            "synth.grid_size" => self.synth.grid_size = parse(key, v)?,
            "synth.questions_per_doc" => self.synth.questions_per_doc = parse(key, v)?,
            "synth.distractors" => self.synth.distractors = parse(key, v)?,
            _ => return Err(Error::ConfigInvalid(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let range = |(lo, hi): (usize, usize)| format!("{lo}..{hi}");
        Some(match key {
            "seed" => self.seed.to_string(),
            "canvas.tau_det" => self.tau_det.to_string(),
            "canvas.tau_nms" => self.tau_nms.to_string(),
            "canvas.k_max" => self.k_max.to_string(),
            "softroi.alpha" => self.alpha.to_string(),
            "softroi.type_dim" => self.train.type_dim.to_string(),
            "parser.top_k" => self.candidates.top_k.to_string(),
            "parser.m_pages" => self.candidates.m_pages.to_string(),
            "parser.y_tol" => self.candidates.y_tol.to_string(),
            "parser.header_prior" => (self.candidates.prior != HeaderPrior::NONE).to_string(),
            "parser.decode" => match self.decoder {
                Decoder::Mst => "mst".into(),
                Decoder::Argmax => "argmax".into(),
            },
            "train.lr" => self.train.lr.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.weight_decay" => self.train.weight_decay.to_string(),
            "train.dropout" => self.train.dropout.to_string(),
            "train.beta1" => self.train.beta1.to_string(),
            "train.beta2" => self.train.beta2.to_string(),
            "train.eps" => self.train.eps.to_string(),
            "train.hidden" => self.train.hidden.to_string(),
            "train.val_fraction" => self.train.val_fraction.to_string(),
            "chunk.max_len" => self.max_len.to_string(),
            "chunk.include_metadata" => self.include_metadata.to_string(),
            "chunk.tokenizer" => self.tokenizer.clone(),
            "retrieval.retriever" => match self.retriever {
                Retriever::Bm25 => "bm25".into(),
                Retriever::Dense => "dense".into(),
            },
            "retrieval.k" => self.k.to_string(),
            "retrieval.k1" => self.k1.to_string(),
            "retrieval.b" => self.b.to_string(),
            "synth.n_docs" => self.synth.n_docs.to_string(),
            "synth.test_docs" => self.synth.test_docs.to_string(),
            "synth.pages_per_doc" => range(self.synth.pages_per_doc),
            "synth.sections_per_doc" => range(self.synth.sections_per_doc),
            "synth.blocks_per_section" => range(self.synth.blocks_per_section),
            "synth.figure_rate" => self.synth.figure_rate.to_string(),
            "synth.embedding_dim" => self.synth.embedding_dim.to_string(),
            "synth.signal_strength" => self.synth.signal_strength.to_string(),
            "synth.noise_std" => self.synth.noise_std.to_string(),
            "synth.grid_size" => self.synth.grid_size.to_string(),
            "synth.questions_per_doc" => self.synth.questions_per_doc.to_string(),
            "synth.distractors" => self.synth.distractors.to_string(),
            _ => return None,
        })
    }

    /// Range checks shared by every stage. Synth settings are checked by the
    /// generator itself.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.tau_det) || !(0.0..=1.0).contains(&self.tau_nms) {
            return bad("canvas thresholds must be in [0, 1]");
        }
        if self.k_max == 0 {
            return bad("canvas.k_max must be at least 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("softroi.alpha must be a finite non-negative number");
        }
        if self.max_len == 0 {
            return bad("chunk.max_len must be at least 1");
        }
        if self.k == 0 {
            return bad("retrieval.k must be at least 1");
        }
        if !(self.k1 >= 0.0) || !(0.0..=1.0).contains(&self.b) {
            return bad("retrieval.k1 must be >= 0 and retrieval.b in [0, 1]");
        }
        Ok(())
    }

    /// Applies every pair of a parsed config file.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_kv(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    /// Every key with its current value, one `key = value` line each.
    pub fn to_kv(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }
}
