//! Desk-scale laboratory for low-resource ASR data augmentation.
//!
//! The crate trains a small CTC character model on synthetic speech and
//! runs the data protocols that matter at low resource scales: nested
//! training subsets, teacher/student self-training (single-round and
//! iterative), synthetic-speech augmentation from transcripts, a
//! masked-prediction continued-pretraining analog, and WER evaluation
//! with full provenance records.
//!
//! Everything is deterministic given a master seed: corpus generation,
//! splits, training schedules, and reports reproduce byte-for-byte.

pub mod audio;
pub mod corpus;
pub mod ctc;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use audio::{AudioSource, Waveform};
pub use corpus::{Corpus, Origin, SplitSpec, Utterance};
