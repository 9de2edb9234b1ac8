//! Temperature-scaled cosine softmax objectives and their gradients.
//!
//! For anchor `i` the AspectCSE loss is
//!
//! ```text
//! l_i = -log( e^{s(a_i,p_i)/t} / sum_j ( e^{s(a_i,p_j)/t} + e^{s(a_i,n_j)/t} ) )
//! ```
//!
//! with `j` running over the whole batch, `i` included. The multiple negative
//! ranking baseline is the same expression without the negative terms.

use crate::error::{Error, Result};

/// Cosine similarity clamped to `[-1, 1]`; `0.0` if either vector is zero.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> f64 {
    cosine_sim_flagged(u, v).0
}

/// Cosine similarity plus a flag that is set when a zero vector made the
/// value degenerate.
pub fn cosine_sim_flagged(u: &[f64], v: &[f64]) -> (f64, bool) {
    debug_assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return (0.0, true);
    }
    ((dot / (nu * nv)).clamp(-1.0, 1.0), false)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Embeddings of one mini-batch. `negatives` is `None` for the pairs-only
/// objective.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub mean: f64,
    pub per_item: Vec<f64>,
    /// Similarities involving a zero vector (counted, treated as 0).
    pub degenerate: usize,
}

/// Gradients of the mean batch loss, laid out like [`Batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Option<Vec<Vec<f64>>>,
}

/// Unit vector and norm, or `None` for the zero vector.
fn unit(v: &[f64]) -> (Vec<f64>, f64) {
    let n = norm(v);
    if n == 0.0 {
        (vec![0.0; v.len()], 0.0)
    } else {
        (v.iter().map(|x| x / n).collect(), n)
    }
}

fn check_inputs(anchors: &[Vec<f64>], groups: &[&[Vec<f64>]], tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let dim = anchors[0].len();
    for g in groups {
        if g.len() != anchors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} anchors but {} candidates",
                anchors.len(),
                g.len()
            )));
        }
    }
    let all = anchors.iter().chain(groups.iter().flat_map(|g| g.iter()));
    for v in all {
        if v.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding of length {} in a batch of dimension {dim}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("batch embeddings".into()));
        }
    }
    Ok(())
}

/// Shared core: candidate group 0 holds the positives, whose `j == i` entry
/// is the numerator.
/// Per-slot gradient rows: index 0 for the anchors, `1 + g` for group `g`.
type SlotGradients = Vec<Vec<Vec<f64>>>;

fn softmax_objective(
    anchors: &[Vec<f64>],
    groups: &[&[Vec<f64>]],
    tau: f64,
    want_grad: bool,
) -> Result<(LossOutput, Option<SlotGradients>)> {
    check_inputs(anchors, groups, tau)?;
    let n = anchors.len();
    let dim = anchors[0].len();
    let a_units: Vec<_> = anchors.iter().map(|v| unit(v)).collect();
    let c_units: Vec<Vec<_>> = groups
        .iter()
        .map(|g| g.iter().map(|v| unit(v)).collect())
        .collect();

    let mut per_item = Vec::with_capacity(n);
    let mut degenerate = 0usize;
    let mut grads: SlotGradients = (0..=groups.len())
        .map(|_| vec![vec![0.0; dim]; n])
        .collect();

    for i in 0..n {
        let mut sims = Vec::with_capacity(groups.len() * n);
        for group in groups {
            for cand in group.iter() {
                let (s, flagged) = cosine_sim_flagged(&anchors[i], cand);
                degenerate += usize::from(flagged);
                sims.push(s);
            }
        }
        let target = i; // group 0, column i
        let logits: Vec<f64> = sims.iter().map(|s| (s - sims[target]) / tau).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let loss = if max <= 0.0 {
            // The numerator term is the largest: log(1 + sum of the rest).
            let rest: f64 = logits
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != target)
                .map(|(_, l)| l.exp())
                .sum();
            rest.ln_1p()
        } else {
            max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
        };
        per_item.push(loss);

        if !want_grad {
            continue;
        }
        let shift = max.max(0.0);
        let weights: Vec<f64> = logits.iter().map(|l| (l - shift).exp()).collect();
        let total: f64 = weights.iter().sum();
        for g in 0..groups.len() {
            for j in 0..n {
                let k = g * n + j;
                let mut coeff = weights[k] / total;
                if k == target {
                    coeff -= 1.0;
                }
                // d(mean loss)/d sim
                let ds = coeff / (tau * n as f64);
                let (a_hat, a_norm) = &a_units[i];
                let (c_hat, c_norm) = &c_units[g][j];
                if *a_norm == 0.0 || *c_norm == 0.0 || ds == 0.0 {
                    continue;
                }
                let s = sims[k];
                for d in 0..dim {
                    grads[0][i][d] += ds * (c_hat[d] - s * a_hat[d]) / a_norm;
                    grads[1 + g][j][d] += ds * (a_hat[d] - s * c_hat[d]) / c_norm;
                }
            }
        }
    }

    let mean = per_item.iter().sum::<f64>() / n as f64;
    let out = LossOutput {
        mean,
        per_item,
        degenerate,
    };
    Ok((out, want_grad.then_some(grads)))
}

fn batch_groups(batch: &Batch) -> Result<Vec<&[Vec<f64>]>> {
    let mut groups: Vec<&[Vec<f64>]> = vec![&batch.positives];
    match &batch.negatives {
        Some(neg) => groups.push(neg),
        None => {
            return Err(Error::InvalidArgument(
                "contrastive loss needs negatives; use mnr_loss for pairs".into(),
            ))
        }
    }
    Ok(groups)
}

/// AspectCSE triplet loss over a batch.
pub fn contrastive_loss(batch: &Batch, tau: f64) -> Result<LossOutput> {
    let groups = batch_groups(batch)?;
    Ok(softmax_objective(&batch.anchors, &groups, tau, false)?.0)
}

pub fn contrastive_loss_grad(batch: &Batch, tau: f64) -> Result<(LossOutput, BatchGradients)> {
    let groups = batch_groups(batch)?;
    let (out, grads) = softmax_objective(&batch.anchors, &groups, tau, true)?;
    let mut grads = grads.expect("gradients requested");
    let negatives = grads.pop();
    let positives = grads.pop().unwrap();
    let anchors = grads.pop().unwrap();
    Ok((
        out,
        BatchGradients {
            anchors,
            positives,
            negatives,
        },
    ))
}

/// Multiple negative ranking loss: in-batch positives are the negatives.
pub fn mnr_loss(anchors: &[Vec<f64>], positives: &[Vec<f64>], tau: f64) -> Result<LossOutput> {
    Ok(softmax_objective(anchors, &[positives], tau, false)?.0)
}

pub fn mnr_loss_grad(
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    tau: f64,
) -> Result<(LossOutput, BatchGradients)> {
    let (out, grads) = softmax_objective(anchors, &[positives], tau, true)?;
    let mut grads = grads.expect("gradients requested");
    let positives = grads.pop().unwrap();
    let anchors = grads.pop().unwrap();
    Ok((
        out,
        BatchGradients {
            anchors,
            positives,
            negatives: None,
        },
    ))
}
