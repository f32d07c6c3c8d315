//! Reference string extraction from scientific documents using a line-based
//! linear-chain conditional random field.
//!
//! Instead of first locating a reference section and then segmenting it, every
//! text line of a document is classified with one of four labels (`B-REF`,
//! `I-REF`, `O-REF`, `O`) by a single sequence model; labeled lines are then
//! grouped into whole reference strings. Section headings contribute soft
//! features only, so references in footnotes or split across pages are handled
//! by the same model.
//!
//! Pipeline overview:
//!
//! * [`corpus`] — line-record data model plus JSONL/TSV corpus I/O
//! * [`features`] — per-line sparse indicator features with window conjunctions
//! * [`crf`] — log-domain forward-backward, Viterbi, and higher Markov orders
//! * [`train`] — L2-regularized maximum likelihood fitting
//! * [`extract`] — grouping decoded labels into reference strings
//! * [`eval`] — line- and reference-level metrics
//! * [`synth`] — deterministic synthetic corpus generation
//! * [`model_io`] — versioned text model files

pub mod corpus;
pub mod crf;
pub mod eval;
pub mod extract;
pub mod features;
pub mod model_io;
mod optim;
pub mod synth;
pub mod train;

#[cfg(test)]
pub(crate) mod test_fixtures;

pub use corpus::{CorpusEntry, Document, Label, LabeledDocument, LineRecord};
pub use crf::CrfModel;
pub use extract::ReferenceString;
pub use features::{FeatureConfig, FeatureSpace, FeatureVector};
pub use train::{TrainConfig, TrainReport};
