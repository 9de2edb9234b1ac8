use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::{Objective, TrainConfig};
use super::loss::{contrastive_loss_grad, mnr_loss_grad, Batch, LossOutput};
use crate::corpus::Corpus;
use crate::encoder::{tokenize, EncoderParams, Forward, Gradients};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::triplets::Examples;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub records: Vec<LossRecord>,
}

impl LossTrace {
    /// Mean batch loss of each epoch, in epoch order.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for r in &self.records {
            if sums.len() <= r.epoch {
                sums.resize(r.epoch + 1, (0.0, 0));
            }
            sums[r.epoch].0 += r.loss;
            sums[r.epoch].1 += 1;
        }
        sums.into_iter()
            .map(|(s, n)| if n == 0 { f64::NAN } else { s / n as f64 })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,step,loss\n");
        for r in &self.records {
            writeln!(out, "{},{},{}", r.epoch, r.step, r.loss).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Token ids of the documents in one mini-batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchIds {
    pub anchors: Vec<Vec<u32>>,
    pub positives: Vec<Vec<u32>>,
    /// Empty for the pairs objective.
    pub negatives: Vec<Vec<u32>>,
}

/// Loss of one batch and its gradient with respect to every encoder parameter.
///
/// Documents are encoded and back-propagated in the fixed order anchors,
/// positives, negatives so gradient sums are reproducible.
pub fn batch_objective(
    params: &EncoderParams,
    ids: &BatchIds,
    temperature: f64,
    objective: Objective,
) -> Result<(LossOutput, Gradients)> {
    let forward = |slot: &[Vec<u32>]| -> Result<Vec<Forward>> {
        slot.iter().map(|t| params.forward(t)).collect()
    };
    let fa = forward(&ids.anchors)?;
    let fp = forward(&ids.positives)?;
    let fnn = forward(&ids.negatives)?;
    let outputs = |f: &[Forward]| f.iter().map(|x| x.output.clone()).collect::<Vec<_>>();

    let (loss, g) = match objective {
        Objective::AspectCse => {
            let batch = Batch {
                anchors: outputs(&fa),
                positives: outputs(&fp),
                negatives: Some(outputs(&fnn)),
            };
            contrastive_loss_grad(&batch, temperature)?
        }
        Objective::MultipleNegativeRanking => {
            if !ids.negatives.is_empty() {
                return Err(Error::InvalidArgument(
                    "multiple negative ranking takes pairs, not triplets".into(),
                ));
            }
            mnr_loss_grad(&outputs(&fa), &outputs(&fp), temperature)?
        }
    };

    let mut grads = Gradients::zeros(params);
    let slots = [
        (&ids.anchors, &fa, &g.anchors),
        (&ids.positives, &fp, &g.positives),
    ];
    for (tokens, fwd, up) in slots {
        for k in 0..tokens.len() {
            params.backward_into(&tokens[k], &fwd[k], &up[k], &mut grads)?;
        }
    }
    if let Some(gn) = &g.negatives {
        for k in 0..ids.negatives.len() {
            params.backward_into(&ids.negatives[k], &fnn[k], &gn[k], &mut grads)?;
        }
    }
    Ok((loss, grads))
}

/// Ids of one training example; `negative` is `None` for pairs.
struct Example<'a> {
    anchor: &'a str,
    positive: &'a str,
    negative: Option<&'a str>,
}

fn examples_for(examples: &Examples, objective: Objective) -> Result<Vec<Example<'_>>> {
    match (examples, objective) {
        (Examples::Triplets(ts), Objective::AspectCse) => Ok(ts
            .iter()
            .map(|t| Example {
                anchor: &t.anchor_id,
                positive: &t.positive_id,
                negative: Some(&t.negative_id),
            })
            .collect()),
        (Examples::Pairs(ps), Objective::MultipleNegativeRanking) => Ok(ps
            .iter()
            .map(|p| Example {
                anchor: &p.anchor_id,
                positive: &p.positive_id,
                negative: None,
            })
            .collect()),
        (Examples::Triplets(_), _) => Err(Error::InvalidArgument(
            "triplets require the aspectcse objective".into(),
        )),
        (Examples::Pairs(_), _) => Err(Error::InvalidArgument(
            "pairs require the multiple negative ranking objective".into(),
        )),
    }
}

/// Trains `params` on `examples` drawn from `corpus`.
///
/// Each epoch visits the examples in a seeded shuffled order in batches of
/// `batch_size` (the last batch may be shorter). Every batch is encoded,
/// scored, back-propagated through the encoder, clipped to `clip_norm` and
/// applied with Adam. The whole run is a deterministic function of its inputs.
pub fn train(
    corpus: &Corpus,
    examples: &Examples,
    mut params: EncoderParams,
    cfg: &TrainConfig,
) -> Result<(EncoderParams, LossTrace)> {
    cfg.validate()?;
    params.check()?;
    let items = examples_for(examples, cfg.objective)?;
    if items.is_empty() {
        return Err(Error::InvalidArgument("no training examples".into()));
    }

    let mut token_cache: HashMap<&str, Vec<u32>> = HashMap::new();
    for item in &items {
        for id in [Some(item.anchor), Some(item.positive), item.negative].into_iter().flatten() {
            if !token_cache.contains_key(id) {
                let doc = corpus.require(id)?;
                let ids = tokenize(&doc.text, &params.vocab, params.max_seq_len);
                token_cache.insert(id, ids.0);
            }
        }
    }

    let mut rng = SeededRng::for_purpose(cfg.seed, "batches");
    let mut adam = AdamState::new(&params, AdamConfig::default());
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut step = 0usize;
    let mut clipped = 0usize;

    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let mut ids = BatchIds::default();
            for &k in chunk {
                let item = &items[k];
                ids.anchors.push(token_cache[item.anchor].clone());
                ids.positives.push(token_cache[item.positive].clone());
                if let Some(neg) = item.negative {
                    ids.negatives.push(token_cache[neg].clone());
                }
            }
            let (loss, mut grads) =
                batch_objective(&params, &ids, cfg.temperature, cfg.objective)
                    .map_err(|e| match e {
                        Error::NonFinite(_) => Error::NonFiniteLoss { epoch, step },
                        other => other,
                    })?;
            if !loss.mean.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let norm = grads.squared_norm().sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            if norm > cfg.clip_norm {
                grads.scale(cfg.clip_norm / norm);
                clipped += 1;
            }
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;
            trace.records.push(LossRecord {
                epoch,
                step,
                loss: loss.mean,
            });
            step += 1;
        }
        log::info!(
            "epoch {epoch}: mean loss {:.6}",
            trace.epoch_means().last().copied().unwrap_or(f64::NAN)
        );
    }
    log::debug!("{clipped} of {step} steps clipped at norm {}", cfg.clip_norm);
    Ok((params, trace))
}
