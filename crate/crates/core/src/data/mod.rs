//! Tokenizer, synthetic corpora with known generative ground truth, and the
//! line-oriented dataset file format.

mod corpus;
mod dataset;
mod markov;
mod tokenizer;

pub use corpus::{
    addition_record, check_addition_record, gen_addition_corpus, gen_string_corpus,
    string_task_record, StringTask,
};
pub use dataset::{Dataset, DatasetHeader};
pub use markov::{gen_markov_corpus, MarkovSpec};
pub use tokenizer::{Tokenizer, EOT, EOT_CHAR, MASK_CHAR, PAD, PAD_CHAR};
