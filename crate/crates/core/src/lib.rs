//! Controllable agency rewriting: lexicon, tagging, tokenization, a small
//! causal transformer, training, boosted decoding, metrics and a bias study.

pub mod bias;
pub mod bpe;
pub mod decoder;
pub mod exec;
pub mod lexicon;
pub mod metrics;
pub mod synth;
pub mod tagger;
pub mod tensor;
pub mod training;
pub mod transformer;

pub use bpe::Vocabulary;
pub use exec::Execution;
pub use lexicon::{AgencyLabel, AgencyLexicon, EmbeddingProvider};
pub use transformer::{ModelConfig, TransformerModel};
