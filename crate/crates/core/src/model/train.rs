use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ModelConfig;
use super::eval::{accuracy, mean_loss};
use super::network::{backward, cross_entropy, forward, Inputs, Mode};
use super::optim::Adam;
use super::params::{Parameters, NUM_SLOTS};
use crate::corpus::TargetExample;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean batch loss with dropout active.
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation loss.
    pub params: Parameters,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error("example {dialogue_id}: {reason}")]
    BadExample { dialogue_id: String, reason: String },
    #[error("loss became {loss} at epoch {epoch}, batch {batch} (gradient norm {grad_norm})")]
    Diverged {
        epoch: usize,
        batch: usize,
        loss: f64,
        grad_norm: f64,
    },
}

fn check_examples(
    examples: &[TargetExample],
    vocab_size: usize,
    dialogue: bool,
) -> Result<(), TrainError> {
    for ex in examples {
        let bad = |reason: String| TrainError::BadExample {
            dialogue_id: ex.dialogue_id.clone(),
            reason,
        };
        if ex.label >= NUM_SLOTS {
            return Err(bad(format!("label {} out of range", ex.label)));
        }
        if ex.observation.rows.len() != NUM_SLOTS {
            return Err(bad(format!(
                "{} observation rows",
                ex.observation.rows.len()
            )));
        }
        if dialogue {
            if ex.token_ids.is_empty() {
                return Err(bad("empty token stream".into()));
            }
            if let Some(t) = ex.token_ids.iter().find(|t| **t >= vocab_size) {
                return Err(bad(format!(
                    "token id {t} outside vocabulary of {vocab_size}"
                )));
            }
        }
    }
    Ok(())
}

/// Minibatch training with Adam. Deterministic for a given config and data.
pub fn train(
    train_set: &[TargetExample],
    valid_set: &[TargetExample],
    vocab_size: usize,
    config: &ModelConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    if train_set.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    if valid_set.is_empty() {
        return Err(TrainError::Empty("validation"));
    }
    let dialogue = config.variant.uses_dialogue();
    check_examples(train_set, vocab_size, dialogue)?;
    check_examples(valid_set, vocab_size, dialogue)?;

    let mut params = Parameters::init(config, vocab_size);
    let mut opt = Adam::new(&params, config.lr, config.grad_clip);
    let mut order_rng = rng::seeded(rng::derive_seed(config.seed, 1));
    let mut dropout_rng = rng::seeded(rng::derive_seed(config.seed, 2));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best = (f64::INFINITY, 0, params.clone());
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng::shuffle(&mut order_rng, &mut order);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TargetExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
            let inputs = Inputs::from_examples(&batch);
            let fwd = forward(
                &params,
                &inputs,
                config.dropout,
                Mode::Train(&mut dropout_rng),
            );
            let (loss, dlogits) = cross_entropy(&fwd.logits, &labels);
            let grads = backward(&params, &inputs, &fwd, &dlogits).params;
            let grad_norm = grads.l2_norm();
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: bi,
                    loss,
                    grad_norm,
                });
            }
            opt.update(&mut params, &grads);
            total += loss * batch.len() as f64;
        }
        let valid_loss = mean_loss(&params, valid_set);
        let entry = EpochLog {
            epoch,
            train_loss: total / train_set.len() as f64,
            valid_loss,
            valid_accuracy: accuracy(&params, valid_set),
            train_accuracy: config
                .stop_at_train_accuracy
                .map(|_| accuracy(&params, train_set)),
        };
        if !valid_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                batch: usize::MAX,
                loss: valid_loss,
                grad_norm: f64::NAN,
            });
        }
        if valid_loss < best.0 {
            best = (valid_loss, epoch, params.clone());
        }
        let stop = matches!((config.stop_at_train_accuracy, entry.train_accuracy), (Some(t), Some(a)) if a >= t);
        log.push(entry);
        if stop {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best.2,
        best_epoch: best.1,
        best_valid_loss: best.0,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, make_examples, split_dataset};
    use crate::model::config::Variant;
    use crate::synth;

    fn small_config(variant: Variant, seed: u64) -> ModelConfig {
        let mut c = ModelConfig::new(variant, seed);
        c.hidden = 16;
        c.epochs = 3;
        c
    }

    #[test]
    fn best_checkpoint_and_determinism() {
        let s = split_dataset(&synth::corpus(40, 1), 1);
        let vocab = build_vocab(&s.train);
        let tr = make_examples(&s.train, &vocab).examples;
        let va = make_examples(&s.valid, &vocab).examples;
        for v in Variant::ALL {
            let c = small_config(v, 3);
            let a = train(&tr, &va, vocab.len(), &c).unwrap();
            assert!(
                a.log.iter().all(|e| a.best_valid_loss <= e.valid_loss),
                "{v}"
            );
            assert!((mean_loss(&a.params, &va) - a.best_valid_loss).abs() < 1e-12);
            let b = train(&tr, &va, vocab.len(), &c).unwrap();
            assert_eq!(a.params, b.params, "{v}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = split_dataset(&synth::corpus(20, 2), 2);
        let vocab = build_vocab(&s.train);
        let tr = make_examples(&s.train, &vocab).examples;
        let c = small_config(Variant::FullMlp, 0);
        assert_eq!(
            train(&tr, &[], vocab.len(), &c).unwrap_err(),
            TrainError::Empty("validation")
        );
        assert!(matches!(
            train(&tr, &tr, 2, &c),
            Err(TrainError::BadExample { .. })
        ));
        let mut bad = c.clone();
        bad.dropout = 1.0;
        assert!(matches!(
            train(&tr, &tr, vocab.len(), &bad),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn huge_learning_rate_reports_divergence_or_finishes_finite() {
        let s = split_dataset(&synth::corpus(20, 4), 4);
        let vocab = build_vocab(&s.train);
        let tr = make_examples(&s.train, &vocab).examples;
        let mut c = small_config(Variant::ContextMlp, 1);
        c.lr = 1e300;
        c.init_range = 1e150;
        match train(&tr, &tr, vocab.len(), &c) {
            Err(TrainError::Diverged { .. }) => {}
            Ok(o) => assert!(o.params.is_finite()),
            Err(e) => panic!("{e}"),
        }
    }
}
