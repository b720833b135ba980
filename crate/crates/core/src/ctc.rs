//! Log-space CTC: normalization, forward-backward loss and gradient,
//! label-prior logit adjustment, and Viterbi forced alignment.
//!
//! The lattice uses the usual blank-interleaved topology with `2U + 1`
//! states: even states are blanks, odd state `2u + 1` emits label `u`.
//! Unreachable cells hold `f64::NEG_INFINITY`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Token id reserved for the CTC blank.
pub const BLANK: usize = 0;

/// Raw (pre-softmax) classifier scores for one utterance, `T` frames by `V`
/// labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitMatrix {
    pub utt_id: String,
    frames: Matrix,
    frame_ms: f64,
}

impl LogitMatrix {
    pub fn new(utt_id: impl Into<String>, frames: Matrix, frame_ms: f64) -> Result<Self> {
        if frames.rows() == 0 {
            return Err(Error::invalid("logit matrix needs at least one frame"));
        }
        if frames.cols() < 2 {
            return Err(Error::invalid(format!(
                "logit matrix needs at least 2 labels (blank + one token), got {}",
                frames.cols()
            )));
        }
        if !(frame_ms.is_finite() && frame_ms > 0.0) {
            return Err(Error::invalid(format!("frame_ms must be positive, got {frame_ms}")));
        }
        if let Some((frame, column)) = frames.first_non_finite() {
            return Err(Error::NonFinite { frame, column });
        }
        Ok(Self {
            utt_id: utt_id.into(),
            frames,
            frame_ms,
        })
    }

    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    pub fn frame_ms(&self) -> f64 {
        self.frame_ms
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.frames.cols()
    }

    pub fn into_frames(self) -> Matrix {
        self.frames
    }
}

/// Non-blank target tokens for one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    pub fn new(tokens: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("label sequence must be non-empty"));
        }
        if let Some(i) = tokens.iter().position(|&t| t == BLANK) {
            return Err(Error::invalid(format!("label {i} is the blank token")));
        }
        Ok(Self(tokens))
    }

    pub fn tokens(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Adjacent equal labels; each forces a blank frame between them.
    pub fn repeats(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Fewest frames any valid path needs.
    pub fn min_frames(&self) -> usize {
        self.len() + self.repeats()
    }

    pub fn num_states(&self) -> usize {
        2 * self.len() + 1
    }

    /// Label emitted by lattice state `s`.
    #[inline]
    pub fn state_label(&self, s: usize) -> usize {
        if s % 2 == 0 {
            BLANK
        } else {
            self.0[s / 2]
        }
    }

    /// Whether the skip transition `s - 2 -> s` is allowed.
    #[inline]
    fn can_skip(&self, s: usize) -> bool {
        s >= 2 && s % 2 == 1 && self.0[s / 2] != self.0[s / 2 - 1]
    }

    fn check_vocab(&self, vocab: usize) -> Result<()> {
        match self.0.iter().find(|&&t| t >= vocab) {
            Some(t) => Err(Error::invalid(format!("label {t} outside vocabulary of size {vocab}"))),
            None => Ok(()),
        }
    }

    fn check_feasible(&self, frames: usize) -> Result<()> {
        if frames < self.min_frames() {
            return Err(Error::NoValidPath {
                frames,
                labels: self.len(),
                repeats: self.repeats(),
            });
        }
        Ok(())
    }
}

/// Forward and backward variables over the `(2U+1) x T` lattice. Both
/// include the emission at their own cell.
#[derive(Debug, Clone)]
pub struct CtcLattice {
    pub log_alpha: Matrix,
    pub log_beta: Matrix,
    pub log_likelihood: f64,
}

impl CtcLattice {
    /// Posterior probability of occupying state `s` at frame `t`.
    pub fn state_posterior(&self, log_probs: &Matrix, labels: &LabelSequence, s: usize, t: usize) -> f64 {
        let emit = log_probs.get(t, labels.state_label(s));
        let v = self.log_alpha.get(s, t) + self.log_beta.get(s, t) - emit - self.log_likelihood;
        if v == f64::NEG_INFINITY {
            0.0
        } else {
            v.exp()
        }
    }
}

/// Per-frame CTC state path; `states[t]` indexes the `2U + 1` topology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentPath {
    pub states: Vec<usize>,
}

impl AlignmentPath {
    /// Token id emitted at each frame.
    pub fn emitted(&self, labels: &LabelSequence) -> Vec<usize> {
        self.states.iter().map(|&s| labels.state_label(s)).collect()
    }

    /// Checks start/end states and transitions against the topology.
    pub fn is_valid_for(&self, labels: &LabelSequence) -> bool {
        let n = labels.num_states();
        let (Some(&first), Some(&last)) = (self.states.first(), self.states.last()) else {
            return false;
        };
        if first > 1 || last + 2 < n || last >= n {
            return false;
        }
        self.states.windows(2).all(|w| {
            let (a, b) = (w[0], w[1]);
            b == a || b == a + 1 || (b == a + 2 && labels.can_skip(b))
        })
    }
}

/// Collapses a frame-level token sequence: merge repeats, then drop blanks.
pub fn collapse(frames: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &t in frames {
        if Some(t) != prev && t != BLANK {
            out.push(t);
        }
        prev = Some(t);
    }
    out
}

/// Frame range a single token occupies on an alignment path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub token_index: usize,
    pub start_frame: usize,
    pub end_frame: usize,
    pub peak_frame: usize,
}

/// `ln(e^a + e^b)` with `-inf` as the additive identity.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(row);
    for (o, &x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}

/// Row-wise log-softmax of a raw score matrix.
pub fn log_softmax_rows(logits: &Matrix) -> Result<Matrix> {
    if let Some((frame, column)) = logits.first_non_finite() {
        return Err(Error::NonFinite { frame, column });
    }
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for t in 0..logits.rows() {
        log_softmax_row(logits.row(t), out.row_mut(t));
    }
    Ok(out)
}

/// Row-wise softmax, optionally at a temperature.
pub fn softmax_rows(logits: &Matrix, temperature: f64) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    let mut scaled = vec![0.0; logits.cols()];
    for t in 0..logits.rows() {
        for (s, &x) in scaled.iter_mut().zip(logits.row(t)) {
            *s = x / temperature;
        }
        let lse = log_sum_exp(&scaled);
        for (o, &s) in out.row_mut(t).iter_mut().zip(&scaled) {
            *o = (s - lse).exp();
        }
    }
    out
}

fn check_shapes(log_probs: &Matrix, labels: &LabelSequence) -> Result<()> {
    if log_probs.rows() == 0 {
        return Err(Error::invalid("log-prob matrix has no frames"));
    }
    if log_probs.cols() < 2 {
        return Err(Error::invalid("log-prob matrix needs at least 2 columns"));
    }
    labels.check_vocab(log_probs.cols())?;
    labels.check_feasible(log_probs.rows())
}

/// Negative log-likelihood of `labels` summed over all valid CTC paths.
pub fn ctc_loss(log_probs: &Matrix, labels: &LabelSequence) -> Result<(f64, CtcLattice)> {
    check_shapes(log_probs, labels)?;
    let frames = log_probs.rows();
    let states = labels.num_states();
    let emit = |s: usize, t: usize| log_probs.get(t, labels.state_label(s));

    let mut alpha = Matrix::filled(states, frames, f64::NEG_INFINITY);
    alpha.set(0, 0, emit(0, 0));
    alpha.set(1, 0, emit(1, 0));
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha.get(s, t - 1);
            if s >= 1 {
                acc = log_add(acc, alpha.get(s - 1, t - 1));
            }
            if labels.can_skip(s) {
                acc = log_add(acc, alpha.get(s - 2, t - 1));
            }
            if acc != f64::NEG_INFINITY {
                alpha.set(s, t, acc + emit(s, t));
            }
        }
    }

    let mut beta = Matrix::filled(states, frames, f64::NEG_INFINITY);
    let last = frames - 1;
    beta.set(states - 1, last, emit(states - 1, last));
    beta.set(states - 2, last, emit(states - 2, last));
    for t in (0..last).rev() {
        for s in 0..states {
            let mut acc = beta.get(s, t + 1);
            if s + 1 < states {
                acc = log_add(acc, beta.get(s + 1, t + 1));
            }
            if s + 2 < states && labels.can_skip(s + 2) {
                acc = log_add(acc, beta.get(s + 2, t + 1));
            }
            if acc != f64::NEG_INFINITY {
                beta.set(s, t, acc + emit(s, t));
            }
        }
    }

    let ll = log_add(alpha.get(states - 1, last), alpha.get(states - 2, last));
    if !ll.is_finite() {
        return Err(Error::Numerical(format!("log-likelihood is {ll}")));
    }
    Ok((
        -ll,
        CtcLattice {
            log_alpha: alpha,
            log_beta: beta,
            log_likelihood: ll,
        },
    ))
}

/// Posterior mass of each label at each frame (`T x V`), summed over the
/// lattice states that emit it.
pub fn label_occupancy(log_probs: &Matrix, labels: &LabelSequence, lattice: &CtcLattice) -> Matrix {
    let mut occ = Matrix::zeros(log_probs.rows(), log_probs.cols());
    for t in 0..log_probs.rows() {
        for s in 0..labels.num_states() {
            let p = lattice.state_posterior(log_probs, labels, s, t);
            if p > 0.0 {
                occ.add_at(t, labels.state_label(s), p);
            }
        }
    }
    occ
}

/// CTC loss and its gradient with respect to the raw logits.
pub fn ctc_grad(logits: &Matrix, labels: &LabelSequence) -> Result<(f64, Matrix)> {
    let log_probs = log_softmax_rows(logits)?;
    let (loss, lattice) = ctc_loss(&log_probs, labels)?;
    let occ = label_occupancy(&log_probs, labels, &lattice);
    let mut grad = log_probs.map(f64::exp);
    grad.axpy(-1.0, &occ)?;
    Ok((loss, grad))
}

/// Subtracts `gamma` times the per-label time mean of the raw logits.
pub fn apply_label_prior(logits: &LogitMatrix, gamma: f64) -> Result<LogitMatrix> {
    let adjusted = label_prior_adjust(logits.frames(), gamma)?;
    LogitMatrix::new(logits.utt_id.clone(), adjusted, logits.frame_ms())
}

/// Matrix-level form of [`apply_label_prior`].
pub fn label_prior_adjust(logits: &Matrix, gamma: f64) -> Result<Matrix> {
    if !gamma.is_finite() {
        return Err(Error::invalid(format!("gamma must be finite, got {gamma}")));
    }
    let prior = logits.column_means();
    let mut out = logits.clone();
    for t in 0..out.rows() {
        for (x, &p) in out.row_mut(t).iter_mut().zip(&prior) {
            *x -= gamma * p;
        }
    }
    Ok(out)
}

/// CTC on prior-adjusted logits, with the gradient chained back through the
/// per-label mean.
pub fn prior_ctc_grad(logits: &Matrix, labels: &LabelSequence, gamma: f64) -> Result<(f64, Matrix)> {
    let adjusted = label_prior_adjust(logits, gamma)?;
    let (loss, g) = ctc_grad(&adjusted, labels)?;
    Ok((loss, chain_label_prior(&g, gamma)))
}

/// Backpropagates a gradient taken at adjusted logits to the raw logits:
/// `g(v,t) - (gamma / T) * sum_t' g(v,t')`.
pub fn chain_label_prior(grad_adjusted: &Matrix, gamma: f64) -> Matrix {
    if gamma == 0.0 {
        return grad_adjusted.clone();
    }
    let col_sums: Vec<f64> = grad_adjusted
        .column_means()
        .into_iter()
        .map(|m| m * grad_adjusted.rows() as f64)
        .collect();
    let scale = gamma / grad_adjusted.rows() as f64;
    let mut out = grad_adjusted.clone();
    for t in 0..out.rows() {
        for (x, &s) in out.row_mut(t).iter_mut().zip(&col_sums) {
            *x -= scale * s;
        }
    }
    out
}

/// Most likely valid path (Viterbi). On exact score ties the backtrace keeps
/// the higher state, so token transitions happen as early as possible.
pub fn forced_align(log_probs: &Matrix, labels: &LabelSequence) -> Result<AlignmentPath> {
    check_shapes(log_probs, labels)?;
    let frames = log_probs.rows();
    let states = labels.num_states();
    let emit = |s: usize, t: usize| log_probs.get(t, labels.state_label(s));

    let mut score = vec![f64::NEG_INFINITY; states];
    let mut next = vec![f64::NEG_INFINITY; states];
    // back[t * states + s] = predecessor state at t - 1
    let mut back = vec![0usize; frames * states];
    score[0] = emit(0, 0);
    score[1] = emit(1, 0);

    for t in 1..frames {
        for s in 0..states {
            let mut best = score[s];
            let mut from = s;
            if s >= 1 && score[s - 1] > best {
                best = score[s - 1];
                from = s - 1;
            }
            if labels.can_skip(s) && score[s - 2] > best {
                best = score[s - 2];
                from = s - 2;
            }
            next[s] = if best == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                best + emit(s, t)
            };
            back[t * states + s] = from;
        }
        std::mem::swap(&mut score, &mut next);
    }

    let mut s = if score[states - 2] > score[states - 1] {
        states - 2
    } else {
        states - 1
    };
    if score[s] == f64::NEG_INFINITY {
        return Err(Error::NoValidPath {
            frames,
            labels: labels.len(),
            repeats: labels.repeats(),
        });
    }
    let mut path = vec![0; frames];
    path[frames - 1] = s;
    for t in (1..frames).rev() {
        s = back[t * states + s];
        path[t - 1] = s;
    }
    Ok(AlignmentPath { states: path })
}

/// Sum of per-frame log-probabilities along a path.
pub fn path_score(log_probs: &Matrix, labels: &LabelSequence, path: &AlignmentPath) -> f64 {
    path.states
        .iter()
        .enumerate()
        .map(|(t, &s)| log_probs.get(t, labels.state_label(s)))
        .sum()
}

/// Per-token spans of a valid path. The peak is the span frame with the
/// highest posterior for the token, first frame on ties.
pub fn token_spans(path: &AlignmentPath, labels: &LabelSequence, posteriors: &Matrix) -> Vec<TokenSpan> {
    let mut spans: Vec<Option<(usize, usize)>> = vec![None; labels.len()];
    for (t, &s) in path.states.iter().enumerate() {
        if s % 2 == 1 {
            let u = s / 2;
            spans[u] = Some(match spans[u] {
                None => (t, t),
                Some((a, _)) => (a, t),
            });
        }
    }
    spans
        .into_iter()
        .enumerate()
        .filter_map(|(u, span)| {
            let (start, end) = span?;
            let label = labels.tokens()[u];
            let mut peak = start;
            for t in start..=end {
                if posteriors.get(t, label) > posteriors.get(peak, label) {
                    peak = t;
                }
            }
            Some(TokenSpan {
                token_index: u,
                start_frame: start,
                end_frame: end,
                peak_frame: peak,
            })
        })
        .collect()
}
