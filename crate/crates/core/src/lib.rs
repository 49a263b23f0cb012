//! Fingerprint minutiae extraction: ridge enhancement with oriented Gabor
//! filters, binarization, thinning, neighbourhood-count minutiae detection
//! and an evaluation harness driven by synthetic prints with known truth.

pub mod binthin;
pub mod enhance;
pub mod eval;
pub mod image;
pub mod minutiae;
pub mod pipeline;
pub mod synth;
