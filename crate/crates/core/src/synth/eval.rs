use serde::Serialize;

use crate::boundary::WordTiming;
use crate::ctc::LogitMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{self, MetricsReport, PeakObservation};
use crate::pipeline::{align_utterance, AlignedUtterance};

use super::corpus::{Corpus, SynthUtterance};
use super::model::Classifier;

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    #[serde(skip)]
    pub hyp: Vec<Vec<WordTiming>>,
    #[serde(skip)]
    pub reference: Vec<Vec<WordTiming>>,
    #[serde(skip)]
    pub peaks: Vec<PeakObservation>,
    /// Blank-argmax share of the inference posteriors.
    pub blank_occupancy: f64,
    pub mean_peak_relative_position: Option<f64>,
}

/// Model logits for one utterance, arranged by the classifier's input layout.
pub fn utterance_logits(clf: &Classifier, utt: &SynthUtterance) -> Result<LogitMatrix> {
    let width = clf.layout.width(utt.features_hi.cols());
    if width != clf.input_dim() {
        return Err(Error::shape(format!("classifier input {}", clf.input_dim()), width));
    }
    LogitMatrix::new(utt.utt_id.clone(), clf.logits(&utt.input(clf.layout))?, utt.frame_ms())
}

#[cfg(feature = "parallel")]
fn map_utterances<T: Send>(corpus: &Corpus, f: impl Fn(&SynthUtterance) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    corpus.utterances.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_utterances<T>(corpus: &Corpus, f: impl Fn(&SynthUtterance) -> Result<T>) -> Result<Vec<T>> {
    corpus.utterances.iter().map(f).collect()
}

/// Scores aligned utterances against the corpus references.
pub fn evaluate_alignments(corpus: &Corpus, aligned: &[AlignedUtterance], thresholds_ms: &[f64]) -> Evaluation {
    let hyp: Vec<Vec<WordTiming>> = aligned.iter().map(|a| a.words.clone()).collect();
    let reference: Vec<Vec<WordTiming>> = corpus.iter().map(|u| u.ref_timings.clone()).collect();
    let report = metrics::score_utterances(&hyp, &reference, thresholds_ms);
    let peaks: Vec<PeakObservation> = corpus
        .iter()
        .zip(aligned)
        .flat_map(|(u, a)| a.peak_observations(&u.word_map, &u.ref_timings, u.frame_ms()))
        .collect();
    let (blank, frames) = aligned.iter().fold((0.0, 0usize), |(b, n), a| {
        let rows = a.posteriors.rows();
        (b + metrics::blank_occupancy(&a.posteriors) * rows as f64, n + rows)
    });
    let mean_peak = metrics::peak_histogram(&peaks, 1, (-1.0, 2.0))
        .ok()
        .and_then(|h| h.mean_relative_position);
    Evaluation {
        report,
        hyp,
        reference,
        peaks,
        blank_occupancy: blank / frames.max(1) as f64,
        mean_peak_relative_position: mean_peak,
    }
}

/// Forward, inference prior, forced alignment against the reference
/// transcript, word timings, metrics.
pub fn evaluate(
    clf: &Classifier,
    corpus: &Corpus,
    gamma_inf: f64,
    offset_ms: f64,
    thresholds_ms: &[f64],
) -> Result<Evaluation> {
    let aligned = map_utterances(corpus, |u| {
        let logits = utterance_logits(clf, u)?;
        align_utterance(&logits, &u.labels, &u.word_map, gamma_inf, offset_ms)
    })?;
    Ok(evaluate_alignments(corpus, &aligned, thresholds_ms))
}

/// Same pipeline on caller-supplied posteriors (e.g. an oracle).
pub fn evaluate_posteriors(
    corpus: &Corpus,
    posteriors: &[Matrix],
    gamma_inf: f64,
    offset_ms: f64,
    thresholds_ms: &[f64],
) -> Result<Evaluation> {
    if posteriors.len() != corpus.len() {
        return Err(Error::shape(
            format!("{} posterior matrices", corpus.len()),
            posteriors.len(),
        ));
    }
    let aligned = corpus
        .iter()
        .zip(posteriors)
        .map(|(u, p)| {
            let logits = LogitMatrix::new(u.utt_id.clone(), p.map(|x| x.max(1e-300).ln()), u.frame_ms())?;
            align_utterance(&logits, &u.labels, &u.word_map, gamma_inf, offset_ms)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate_alignments(corpus, &aligned, thresholds_ms))
}

/// One-hot posteriors built from the ground-truth piece spans.
pub fn oracle_posteriors(corpus: &Corpus) -> Vec<Matrix> {
    let vocab = corpus.spec.model_vocab();
    corpus
        .iter()
        .map(|u| {
            let mut p = Matrix::zeros(u.num_frames(), vocab);
            for t in 0..u.num_frames() {
                p.set(t, 0, 1.0);
            }
            for (&(s, e), &tok) in u.piece_frames.iter().zip(u.labels.tokens()) {
                for t in s..=e {
                    p.set(t, 0, 0.0);
                    p.set(t, tok, 1.0);
                }
            }
            p
        })
        .collect()
}
