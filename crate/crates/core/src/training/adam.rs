use crate::encoder::{EncoderParams, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update of one tensor. `t` is the 1-based step count.
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: AdamConfig,
) -> Result<()> {
    if grad.len() != param.len() || m.len() != param.len() || v.len() != param.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam update over {} parameters with {} gradients",
            param.len(),
            grad.len()
        )));
    }
    let t = i32::try_from(t.max(1)).unwrap_or(i32::MAX);
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..param.len() {
        let g = grad[k];
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[k] / c1;
        let v_hat = v[k] / c2;
        param[k] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Moment estimates for every encoder tensor, in the order E, W1, b1, W2, b2.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub cfg: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &EncoderParams, cfg: AdamConfig) -> Self {
        let sizes = [
            params.embeddings.as_slice().len(),
            params.w1.as_slice().len(),
            params.b1.len(),
            params.w2.as_slice().len(),
            params.b2.len(),
        ];
        Self {
            step: 0,
            cfg,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One Adam step over all encoder parameters. Embedding rows without a
/// gradient are updated with a zero gradient (their moments still decay).
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let d = params.embedding_dim();
    if state.first[0].len() != params.embeddings.as_slice().len()
        || grads.w1.as_slice().len() != params.w1.as_slice().len()
        || grads.w2.as_slice().len() != params.w2.as_slice().len()
        || grads.embedding_rows.values().any(|r| r.len() != d)
        || grads
            .embedding_rows
            .keys()
            .any(|&r| r as usize >= params.embeddings.rows())
    {
        return Err(Error::ShapeMismatch("gradients do not match parameters".into()));
    }
    state.step += 1;
    let (t, cfg) = (state.step, state.cfg);

    let mut dense_e = vec![0.0; params.embeddings.as_slice().len()];
    for (&row, g) in &grads.embedding_rows {
        dense_e[row as usize * d..(row as usize + 1) * d].copy_from_slice(g);
    }
    let (m, v) = (&mut state.first, &mut state.second);
    adam_update(params.embeddings.as_mut_slice(), &dense_e, &mut m[0], &mut v[0], t, lr, cfg)?;
    adam_update(params.w1.as_mut_slice(), grads.w1.as_slice(), &mut m[1], &mut v[1], t, lr, cfg)?;
    adam_update(&mut params.b1, &grads.b1, &mut m[2], &mut v[2], t, lr, cfg)?;
    adam_update(params.w2.as_mut_slice(), grads.w2.as_slice(), &mut m[3], &mut v[3], t, lr, cfg)?;
    adam_update(&mut params.b2, &grads.b2, &mut m[4], &mut v[4], t, lr, cfg)
}
