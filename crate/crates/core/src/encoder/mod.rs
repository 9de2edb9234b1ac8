//! Tokenizer and a small trainable text encoder with analytic gradients.

mod io;
mod model;
mod vocab;

pub use io::{
    load_external_embeddings, load_params, params_from_bytes, params_to_bytes, save_params,
    write_embeddings, FORMAT_VERSION, MAGIC,
};
pub use model::{EncoderConfig, EncoderParams, Forward, Gradients, Matrix, PoolingMode};
pub use vocab::{build_vocab, tokenize, words, TokenIds, Vocabulary, UNK_ID, UNK_TOKEN};
