//! Corpus, embedding-table and result file formats.

mod corpus;
mod embeddings;
mod results;

pub use corpus::{load_corpus, CorpusFormat};
pub use embeddings::{
    decode_embeddings, encode_embeddings, load_embeddings, load_embeddings_binary, load_embeddings_csv,
    synthetic_embeddings, write_embeddings_binary, write_embeddings_csv, EMBEDDING_MAGIC,
};
pub use results::{
    append_result, read_results, read_trial_log, write_result, write_sweep, write_sweep_to, write_trial_log,
    Environment, ResultFile, SCHEMA_VERSION, SWEEP_COLUMNS,
};
