//! Bag-of-embeddings encoder with a two-layer tanh projection:
//!
//! ```text
//! pooled = mean(E[ids])            (or E[ids[0]] for first-token pooling)
//! hidden = tanh(pooled · W1 + b1)
//! h      = hidden · W2 + b2
//! ```
//!
//! `W1` is stored `d × hidden`, `W2` is `hidden × d_out`, both row-major.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::vocab::{tokenize, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    #[default]
    Mean,
    /// Stand-in for CLS pooling: the first token's embedding row.
    FirstToken,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix from {} values",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub pooling: PoolingMode,
    pub max_seq_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            hidden_dim: 64,
            output_dim: 64,
            pooling: PoolingMode::Mean,
            max_seq_len: 320,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub vocab: Vocabulary,
    pub embeddings: Matrix,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub pooling: PoolingMode,
    pub max_seq_len: usize,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
    /// The token sequence was empty and `pooled` is the zero vector.
    pub empty_input: bool,
}

/// Gradients of a scalar with respect to every parameter tensor. Embedding
/// gradients are kept per touched row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding_rows: BTreeMap<u32, Vec<f64>>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros(params: &EncoderParams) -> Self {
        Self {
            embedding_rows: BTreeMap::new(),
            w1: Matrix::zeros(params.w1.rows, params.w1.cols),
            b1: vec![0.0; params.b1.len()],
            w2: Matrix::zeros(params.w2.rows, params.w2.cols),
            b2: vec![0.0; params.b2.len()],
        }
    }

    pub fn squared_norm(&self) -> f64 {
        let dense = [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
        ];
        self.embedding_rows
            .values()
            .map(Vec::as_slice)
            .chain(dense)
            .flatten()
            .map(|g| g * g)
            .sum()
    }

    pub fn scale(&mut self, factor: f64) {
        let tensors = self
            .embedding_rows
            .values_mut()
            .map(Vec::as_mut_slice)
            .chain([
                self.w1.as_mut_slice(),
                self.b1.as_mut_slice(),
                self.w2.as_mut_slice(),
                self.b2.as_mut_slice(),
            ]);
        for t in tensors {
            t.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl EncoderParams {
    /// Seeded initialization: weights uniform in `±1/sqrt(fan_in)`, biases zero.
    /// Tensors are drawn in the order E, W1, W2.
    pub fn init(vocab: Vocabulary, cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        let (d, h, o) = (cfg.embedding_dim, cfg.hidden_dim, cfg.output_dim);
        if d == 0 || h == 0 || o == 0 {
            return Err(Error::InvalidArgument("encoder dimensions must be at least 1".into()));
        }
        if cfg.max_seq_len == 0 {
            return Err(Error::InvalidArgument("max_seq_len must be at least 1".into()));
        }
        let mut rng = SeededRng::for_purpose(seed, "init");
        let mut draw = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.symmetric(bound)).collect();
            Matrix { rows, cols, data }
        };
        let embeddings = draw(vocab.len(), d, d);
        let w1 = draw(d, h, d);
        let w2 = draw(h, o, h);
        Ok(Self {
            vocab,
            embeddings,
            w1,
            b1: vec![0.0; h],
            w2,
            b2: vec![0.0; o],
            pooling: cfg.pooling,
            max_seq_len: cfg.max_seq_len,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            embedding_dim: self.embedding_dim(),
            hidden_dim: self.hidden_dim(),
            output_dim: self.output_dim(),
            pooling: self.pooling,
            max_seq_len: self.max_seq_len,
        }
    }

    /// Checks dimensional consistency and finiteness.
    pub fn check(&self) -> Result<()> {
        let (d, h, o) = (self.embedding_dim(), self.hidden_dim(), self.output_dim());
        if d == 0 || h == 0 || o == 0 {
            return Err(Error::ShapeMismatch("zero-sized encoder dimension".into()));
        }
        if self.embeddings.rows != self.vocab.len()
            || self.w1.rows != d
            || self.b1.len() != h
            || self.w2.rows != h
            || self.b2.len() != o
        {
            return Err(Error::ShapeMismatch("encoder tensors disagree on dimensions".into()));
        }
        let all = [
            self.embeddings.as_slice(),
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
        ];
        if all.iter().flat_map(|t| t.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("encoder parameters".into()));
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&i| i as usize >= self.vocab.len()) {
            Some(bad) => Err(Error::ShapeMismatch(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab.len()
            ))),
            None => Ok(()),
        }
    }

    fn pool(&self, ids: &[u32]) -> Vec<f64> {
        let mut pooled = vec![0.0; self.embedding_dim()];
        match self.pooling {
            _ if ids.is_empty() => {}
            PoolingMode::FirstToken => pooled.copy_from_slice(self.embeddings.row(ids[0] as usize)),
            PoolingMode::Mean => {
                // Summing in sorted id order makes the result bit-identical
                // under any permutation of `ids`.
                let mut sorted = ids.to_vec();
                sorted.sort_unstable();
                for &id in &sorted {
                    axpy(1.0, self.embeddings.row(id as usize), &mut pooled);
                }
                let n = ids.len() as f64;
                pooled.iter_mut().for_each(|p| *p /= n);
            }
        }
        pooled
    }

    pub fn forward(&self, ids: &[u32]) -> Result<Forward> {
        self.check_ids(ids)?;
        let pooled = self.pool(ids);
        let mut hidden = self.b1.clone();
        for (i, &p) in pooled.iter().enumerate() {
            axpy(p, self.w1.row(i), &mut hidden);
        }
        hidden.iter_mut().for_each(|z| *z = z.tanh());
        let mut output = self.b2.clone();
        for (j, &a) in hidden.iter().enumerate() {
            axpy(a, self.w2.row(j), &mut output);
        }
        Ok(Forward {
            pooled,
            hidden,
            output,
            empty_input: ids.is_empty(),
        })
    }

    pub fn encode(&self, ids: &[u32]) -> Result<Vec<f64>> {
        self.forward(ids).map(|f| f.output)
    }

    pub fn encode_text(&self, text: &str) -> Vec<f64> {
        let ids = tokenize(text, &self.vocab, self.max_seq_len);
        self.encode(ids.as_slice())
            .expect("tokenizer only yields in-vocabulary ids")
    }

    /// Accumulates `d(upstream · h)/dθ` into `grads`, reusing a forward pass.
    pub fn backward_into(
        &self,
        ids: &[u32],
        fwd: &Forward,
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if upstream.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient has {} entries, encoder output has {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if fwd.pooled.len() != self.embedding_dim() || fwd.hidden.len() != self.hidden_dim() {
            return Err(Error::ShapeMismatch("forward cache does not match encoder".into()));
        }
        self.check_ids(ids)?;

        axpy(1.0, upstream, &mut grads.b2);
        let mut dz = vec![0.0; self.hidden_dim()];
        for (j, &a) in fwd.hidden.iter().enumerate() {
            axpy(a, upstream, grads.w2.row_mut(j));
            let da: f64 = self.w2.row(j).iter().zip(upstream).map(|(w, g)| w * g).sum();
            dz[j] = da * (1.0 - a * a);
        }
        axpy(1.0, &dz, &mut grads.b1);
        let mut dpooled = vec![0.0; self.embedding_dim()];
        for (i, &p) in fwd.pooled.iter().enumerate() {
            axpy(p, &dz, grads.w1.row_mut(i));
            dpooled[i] = self.w1.row(i).iter().zip(&dz).map(|(w, g)| w * g).sum();
        }

        let d = self.embedding_dim();
        let mut touch = |id: u32, scale: f64| {
            let row = grads
                .embedding_rows
                .entry(id)
                .or_insert_with(|| vec![0.0; d]);
            axpy(scale, &dpooled, row);
        };
        match self.pooling {
            _ if ids.is_empty() => {}
            PoolingMode::FirstToken => touch(ids[0], 1.0),
            PoolingMode::Mean => {
                let scale = 1.0 / ids.len() as f64;
                let mut sorted = ids.to_vec();
                sorted.sort_unstable();
                for id in sorted {
                    touch(id, scale);
                }
            }
        }
        Ok(())
    }

    /// Gradients of `upstream · encode(ids)` with respect to every parameter.
    pub fn encode_backward(&self, ids: &[u32], upstream: &[f64]) -> Result<Gradients> {
        let fwd = self.forward(ids)?;
        let mut grads = Gradients::zeros(self);
        self.backward_into(ids, &fwd, upstream, &mut grads)?;
        Ok(grads)
    }
}
