//! Synthetic corpus, a small frame classifier with hand-written
//! backpropagation, and the training/evaluation harness around them.

pub mod config;
pub mod corpus;
pub mod eval;
pub mod model;
pub mod sweep;
pub mod train;

pub use corpus::{generate_corpus, Corpus, CorpusSpec, InputLayout, Range, SynthUtterance, SYNTH_FRAME_MS};
pub use eval::{evaluate, evaluate_posteriors, oracle_posteriors, utterance_logits, Evaluation};
pub use model::{Activation, Classifier, ForwardCache, Gradients};
pub use sweep::{gamma_csv, gamma_sweep, pfr_csv, pfr_sweep, SweepSetup};
pub use train::{train, EpochLog, Method, TrainConfig, TrainingLog};
