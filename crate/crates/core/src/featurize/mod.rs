//! Comment text and embeddings turned into model inputs.

mod embeddings;
mod matrix;
mod tokenize;

pub use embeddings::{load_embeddings, write_embeddings, EmbeddingFormat, EmbeddingTable};
pub use matrix::{
    dictionary_features, fit_vocabulary, load_feature_matrix, standardize, unigram_features, unigram_matrix,
    DictionaryLexicon, FeatureMatrix, Standardization, Vocabulary,
};
pub use tokenize::tokenize;
