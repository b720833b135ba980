//! Raw logits to word timings: label prior, softmax, forced alignment, spans.

use crate::boundary::{words_from_spans, WordMap, WordTiming};
use crate::ctc::{
    forced_align, label_prior_adjust, log_softmax_rows, token_spans, LabelSequence, LogitMatrix, TokenSpan,
};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::metrics::PeakObservation;

#[derive(Debug, Clone)]
pub struct AlignedUtterance {
    pub words: Vec<WordTiming>,
    pub spans: Vec<TokenSpan>,
    /// Posteriors after the inference-time label prior.
    pub posteriors: Matrix,
}

impl AlignedUtterance {
    /// Each token's peak paired with the reference word owning that token.
    pub fn peak_observations(
        &self,
        word_map: &WordMap,
        reference: &[WordTiming],
        frame_ms: f64,
    ) -> Vec<PeakObservation> {
        let owners = word_map.piece_owners();
        self.spans
            .iter()
            .filter_map(|s| {
                let reference = reference.get(owners[s.token_index])?;
                Some(PeakObservation {
                    peak_ms: s.peak_frame as f64 * frame_ms,
                    reference: reference.clone(),
                })
            })
            .collect()
    }
}

pub fn align_utterance(
    logits: &LogitMatrix,
    labels: &LabelSequence,
    word_map: &WordMap,
    gamma_inf: f64,
    offset_ms: f64,
) -> Result<AlignedUtterance> {
    let adjusted = label_prior_adjust(logits.frames(), gamma_inf)?;
    let log_probs = log_softmax_rows(&adjusted)?;
    let path = forced_align(&log_probs, labels)?;
    let posteriors = log_probs.map(f64::exp);
    let spans = token_spans(&path, labels, &posteriors);
    let words = words_from_spans(&spans, word_map, logits.frame_ms(), offset_ms, logits.num_frames())?;
    Ok(AlignedUtterance {
        words,
        spans,
        posteriors,
    })
}
