//! Word timing estimation from frame-level CTC classifiers.
//!
//! The crate covers the CTC lattice ([`ctc`]), peak/span to word conversion
//! ([`boundary`]), peak-shifting distillation ([`pfr`]), word-timing metrics
//! ([`metrics`]), file formats ([`io`]) and a synthetic training harness
//! ([`synth`]) that exercises all of them end to end.

pub mod boundary;
pub mod ctc;
pub mod error;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod pfr;
pub mod pipeline;
pub mod synth;

pub use boundary::{CetcParams, GuidedTargets, WordMap, WordPieces, WordTiming};
pub use ctc::{AlignmentPath, CtcLattice, LabelSequence, LogitMatrix, TokenSpan, BLANK};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::{MatchedPair, MetricsReport};
pub use pfr::PfrParams;
