//! Transcripts, release import, tokenization, vocabulary, target-selection
//! examples and dataset splits.

mod dataset;
pub mod import;
mod tokenize;
mod transcript;

pub use dataset::{
    build_vocab, encode_dialogue, make_examples, make_examples_with, make_test_variants,
    split_dataset, token_counts, ExampleSet, Split, TargetExample, TestVariants, Vocabulary,
    END_OF_DIALOGUE, MIN_COUNT, PARTNER_SPEAKER, SELF_SPEAKER, UNK,
};
pub use import::{import_release, import_release_str, ImportConfig, ImportError, ImportReport};
pub use tokenize::tokenize;
pub use transcript::{from_jsonl, to_jsonl, Transcript, TranscriptError, TRANSCRIPT_FORMAT};
