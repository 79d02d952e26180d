//! Adam training of the edge scorer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::decode::{decode_argmax, decode_mst, flatten_scores};
use super::head::{loss_and_grad, score_document, Dropout, EncodedDoc, HeadParams, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::softroi::DEFAULT_TYPE_DIM;
use crate::tree::{Parent, ParentMap};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub epochs: usize,
    /// Documents per optimizer step.
    pub batch_size: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: usize,
    pub type_dim: usize,
    /// Share of the corpus held out for model selection.
    pub val_fraction: f64,
    /// Compute per-document gradients on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            lr: 3e-5,
            epochs: 5,
            batch_size: 8,
            weight_decay: 1e-4,
            dropout: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hidden: DEFAULT_HIDDEN,
            type_dim: DEFAULT_TYPE_DIM,
            val_fraction: 0.1,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)");
        }
        if self.hidden == 0 {
            return bad("hidden must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HeadParams,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Share of non-trivial children whose gold parent survived pruning.
    pub gold_coverage: f64,
}

/// Decoding strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decoder {
    #[default]
    Mst,
    Argmax,
}

/// Scores a document and decodes it.
pub fn parse_encoded(
    enc: &EncodedDoc,
    params: &HeadParams,
    decoder: Decoder,
) -> Result<(ParentMap, Vec<super::decode::ScoredEdge>)> {
    let edges = flatten_scores(&score_document(enc, params)?);
    let parents = match decoder {
        Decoder::Mst => decode_mst(enc.len(), &edges)?.into_parents(),
        Decoder::Argmax => decode_argmax(enc.len(), &edges).0,
    };
    Ok((parents, edges))
}

fn parent_accuracy(docs: &[(&EncodedDoc, &ParentMap)], params: &HeadParams) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for (enc, gold) in docs {
        let (pred, _) = parse_encoded(enc, params, Decoder::Mst)?;
        for (p, g) in pred.0.iter().zip(&gold.0) {
            if *g == Parent::Root {
                continue;
            }
            total += 1;
            hit += usize::from(p == g);
        }
    }
    Ok(if total == 0 { 1.0 } else { hit as f64 / total as f64 })
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.lr * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * params[i]);
        }
    }
}

/// Trains a head from scratch on `corpus` and returns the parameters with
/// the best held-out parent accuracy.
pub fn train(
    corpus: &[(EncodedDoc, ParentMap)],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::ConfigInvalid("training corpus is empty".into()));
    }
    let embed_dim = corpus[0].0.emb.ncols();
    let init = HeadParams::init(embed_dim, cfg.type_dim, cfg.hidden, cfg.seed);
    train_from(corpus, cfg, init, &mut on_epoch)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_from(
    corpus: &[(EncodedDoc, ParentMap)],
    cfg: &TrainConfig,
    init: HeadParams,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_D0C5);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((corpus.len() as f64) * cfg.val_fraction).round() as usize;
    let n_val = n_val.min(corpus.len().saturating_sub(1));
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val: Vec<(&EncodedDoc, &ParentMap)> = if val_idx.is_empty() {
        train_idx.iter().map(|&i| (&corpus[i].0, &corpus[i].1)).collect()
    } else {
        val_idx.iter().map(|&i| (&corpus[i].0, &corpus[i].1)).collect()
    };

    let mut params = init;
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len());
    let mut best = params.clone();
    let mut best_acc = parent_accuracy(&val, &params)?;
    let mut best_epoch = 0;
    let mut log = Vec::new();
    let mut step = 0usize;
    let (mut retained, mut unreachable) = (0usize, 0usize);

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let batch: Vec<(&EncodedDoc, &ParentMap)> =
                chunk.iter().map(|&i| (&corpus[i].0, &corpus[i].1)).collect();
            let dropout = (cfg.dropout > 0.0).then(|| Dropout {
                rate: cfg.dropout,
                seed: cfg.seed.wrapping_add((step as u64) << 20),
            });
            let out = loss_and_grad(&batch, &params, dropout, cfg.parallel)?;
            if !out.loss.is_finite() || !out.grads.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            if epoch == 1 {
                retained += out.retained;
                unreachable += out.gold_unreachable;
            }
            adam.step(&mut flat, &out.grads.flatten(), cfg);
            params.assign_flat(&flat);
            loss_sum += out.loss;
            batches += 1;
            step += 1;
        }
        let val_accuracy = parent_accuracy(&val, &params)?;
        let entry = EpochLog {
            epoch,
            loss: if batches > 0 { loss_sum / batches as f64 } else { 0.0 },
            val_accuracy,
        };
        on_epoch(&entry);
        log.push(entry);
        if val_accuracy > best_acc {
            best_acc = val_accuracy;
            best = params.clone();
            best_epoch = epoch;
        }
    }
    let covered = retained as f64;
    let gold_coverage = if retained + unreachable == 0 {
        1.0
    } else {
        covered / (retained + unreachable) as f64
    };
    Ok(TrainOutcome {
        params: best,
        best_epoch,
        log,
        gold_coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::candidates::CandidateConfig;
    use crate::parser::head::tests::{random_doc, random_gold};

    fn corpus(seed: u64) -> Vec<(EncodedDoc, ParentMap)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..6)
            .map(|_| {
                let (d, e) = random_doc(&mut rng, 9, 4);
                let enc = EncodedDoc::new(&d, &e, &CandidateConfig::default()).unwrap();
                let g = random_gold(&mut rng, &enc);
                (enc, g)
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: 8,
            type_dim: 3,
            epochs: 2,
            batch_size: 2,
            lr: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let c = corpus(1);
        let cfg = TrainConfig {
            epochs: 0,
            ..small_cfg()
        };
        let out = train(&c, &cfg, |_| {}).unwrap();
        assert_eq!(out.params, HeadParams::init(4, 3, 8, cfg.seed));
        assert!(out.log.is_empty());
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let c = corpus(2);
        let a = train(&c, &small_cfg(), |_| {}).unwrap();
        let b = train(&c, &small_cfg(), |_| {}).unwrap();
        let fa: Vec<u64> = a.params.flatten().iter().map(|x| x.to_bits()).collect();
        let fb: Vec<u64> = b.params.flatten().iter().map(|x| x.to_bits()).collect();
        assert_eq!(fa, fb);
        assert_eq!(a.log.len(), 2);
        let serial = train(
            &c,
            &TrainConfig {
                parallel: false,
                ..small_cfg()
            },
            |_| {},
        )
        .unwrap();
        assert_eq!(serial.params.flatten(), a.params.flatten());
    }

    #[test]
    fn rejects_bad_config() {
        let c = corpus(3);
        let cfg = TrainConfig {
            batch_size: 0,
            ..small_cfg()
        };
        assert!(matches!(train(&c, &cfg, |_| {}), Err(Error::ConfigInvalid(_))));
        assert!(matches!(train(&[], &small_cfg(), |_| {}), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn diverges_on_huge_steps() {
        let c = corpus(4);
        let cfg = TrainConfig {
            lr: 1e200,
            epochs: 3,
            ..small_cfg()
        };
        assert!(matches!(train(&c, &cfg, |_| {}), Err(Error::Diverged { .. })));
    }
}
