//! Full-corpus training over shuffled per-sentence mini-batches. Every
//! sentence starts from a fresh model state, matching the per-sentence
//! evaluation regime; sentences longer than the window are split into
//! independent chunks so no position is dropped.

use std::fmt::Write as _;

use crate::corpus::{TokenId, TokenizedCorpus};
use crate::error::{Error, Result};
use crate::model::{loss_and_gradients, GradScope, ModelState, SgdMomentum};
use crate::schedule::{lr_at, TrainSchedule};
use crate::util::rng_for;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_ppl: f64,
    /// Learning rate at the end of the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainLog {
    /// Validation perplexity of the untrained model (epoch 0).
    pub initial_valid_ppl: f64,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch with the lowest validation perplexity.
    pub best_epoch: usize,
    /// Test perplexity of the best model, when a test corpus was evaluated.
    pub test_ppl: Option<f64>,
}

impl TrainLog {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_ppl,lr\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6}",
                e.epoch, e.train_loss, e.valid_ppl, e.lr
            );
        }
        out
    }
}

/// Split sentences into training units of at most `window + 1` tokens;
/// every predictable position of the corpus is covered exactly once.
fn training_units(corpus: &TokenizedCorpus, window: usize) -> Vec<Vec<TokenId>> {
    let mut units = Vec::with_capacity(corpus.sentences.len());
    for sentence in &corpus.sentences {
        if sentence.len() < 2 {
            continue;
        }
        let mut k = 0;
        while k * window < sentence.len() - 1 {
            let end = ((k + 1) * window + 1).min(sentence.len());
            units.push(sentence[k * window..end].to_vec());
            k += 1;
        }
    }
    units
}

/// Number of optimizer steps one epoch takes, fixed by corpus size and the
/// schedule's batch/window geometry.
pub fn steps_per_epoch(corpus: &TokenizedCorpus, schedule: &TrainSchedule) -> Result<usize> {
    let units = training_units(corpus, schedule.seq_len).len();
    if units == 0 {
        return Err(Error::Config(
            "corpus has no sentences with predictable positions".into(),
        ));
    }
    Ok(units.div_ceil(schedule.batch_size))
}

/// Train with SGD + momentum under the warm-up/cosine schedule, tracking
/// validation perplexity per epoch and returning the best-validation model.
pub fn train(
    model: ModelState,
    train_corpus: &TokenizedCorpus,
    valid_corpus: &TokenizedCorpus,
    schedule: &TrainSchedule,
) -> Result<(ModelState, TrainLog)> {
    schedule.validate()?;
    if train_corpus.sentences.is_empty() || valid_corpus.sentences.is_empty() {
        return Err(Error::Input("empty training or validation corpus".into()));
    }
    let spe = steps_per_epoch(train_corpus, schedule)?;
    let units = training_units(train_corpus, schedule.seq_len);

    let mut model = model;
    let mut opt = SgdMomentum::new(&model, schedule.momentum);
    let mut dropout_rng = rng_for(schedule.seed, &["dropout"]);
    let use_dropout = model.config.dropout > 0.0;

    let initial_valid_ppl = perplexity(&model, valid_corpus)?;
    let mut log = TrainLog {
        initial_valid_ppl,
        epochs: Vec::with_capacity(schedule.n_epochs),
        best_epoch: 0,
        test_ppl: None,
    };
    let mut best = model.clone();
    let mut best_ppl = f64::INFINITY;
    let mut global_step = 0usize;

    // bucket by length so batches pad to similar sizes; the batch order is
    // reshuffled every epoch
    let batches: Vec<Vec<usize>> = {
        let mut by_len: Vec<usize> = (0..units.len()).collect();
        by_len.sort_by_key(|&i| (units[i].len(), i));
        by_len
            .chunks(schedule.batch_size)
            .map(|c| c.to_vec())
            .collect()
    };
    let mut order: Vec<usize> = (0..batches.len()).collect();
    for epoch in 1..=schedule.n_epochs {
        {
            use rand::seq::SliceRandom;
            let mut rng = rng_for(schedule.seed, &["epoch-shuffle", &epoch.to_string()]);
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut position_sum = 0usize;

        for &batch_index in &order {
            let batch: Vec<Vec<TokenId>> = batches[batch_index]
                .iter()
                .map(|&i| units[i].clone())
                .collect();
            let rng = use_dropout.then_some(&mut dropout_rng);
            let (loss, mut grads) = loss_and_gradients(&model, &batch, GradScope::Full, rng)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss at epoch {epoch}, step {global_step}"
                )));
            }
            let positions: usize = batch.iter().map(|s| s.len() - 1).sum();
            loss_sum += loss * positions as f64;
            position_sum += positions;

            if let Some(max_norm) = schedule.grad_clip {
                grads.clip_global_norm(max_norm);
            }
            let lr = lr_at(schedule, global_step, spe);
            opt.step(&mut model, &grads, lr)?;
            global_step += 1;
        }

        let train_loss = loss_sum / position_sum as f64;
        let valid_ppl = perplexity(&model, valid_corpus)?;
        if !valid_ppl.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite validation perplexity after epoch {epoch}"
            )));
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            valid_ppl,
            lr: lr_at(schedule, global_step, spe),
        });
        if valid_ppl < best_ppl {
            best_ppl = valid_ppl;
            best = model.clone();
            log.best_epoch = epoch;
        }
    }

    Ok((best, log))
}

/// Exponential of the token-weighted mean next-token cross-entropy over all
/// predictable positions, dropout disabled. Sentences longer than the
/// model's window are scored in consecutive chunks with context reset at
/// chunk boundaries, so every position is counted exactly once.
pub fn perplexity(model: &ModelState, corpus: &TokenizedCorpus) -> Result<f64> {
    if corpus.sentences.is_empty() {
        return Err(Error::Input("empty corpus".into()));
    }
    let window = model.config.seq_len;
    let mut chunks: Vec<Vec<TokenId>> = Vec::new();
    for sentence in &corpus.sentences {
        if sentence.len() < 2 {
            continue;
        }
        let mut k = 0;
        while k * window < sentence.len() - 1 {
            let end = ((k + 1) * window + 1).min(sentence.len());
            chunks.push(sentence[k * window..end].to_vec());
            k += 1;
        }
    }
    if chunks.is_empty() {
        return Err(Error::Input("corpus has no predictable positions".into()));
    }
    let mut loss_sum = 0.0;
    let mut positions = 0usize;
    for group in chunks.chunks(64) {
        let (l, n) = crate::model::batch_log_loss(model, group)?;
        loss_sum += l;
        positions += n;
    }
    Ok((loss_sum / positions as f64).exp())
}
