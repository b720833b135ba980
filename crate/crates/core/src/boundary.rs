//! Turning CTC peaks and spans into word timings.
//!
//! Two routes exist. Peak expansion (CETC) grows each token's peak toward
//! its neighbours and trains a second classifier on ramp-shaped targets.
//! Span extraction reads word edges straight off a non-peaky alignment. Both
//! end in [`words_from_spans`], optionally followed by a global offset picked
//! with [`gridsearch_offset`].

use serde::{Deserialize, Serialize};

use crate::ctc::{log_softmax_rows, TokenSpan, BLANK};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{self, MetricsReport};

/// Grouping of a piece sequence into words; ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordMap {
    words: Vec<WordPieces>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordPieces {
    #[serde(rename = "w")]
    pub word: String,
    pub first: usize,
    pub last: usize,
}

impl WordMap {
    /// Validates that the ranges tile `[0, num_pieces)` in order.
    pub fn new(words: Vec<WordPieces>, num_pieces: usize) -> Result<Self> {
        let mut next = 0;
        for w in &words {
            if w.first != next || w.last < w.first {
                return Err(Error::invalid(format!(
                    "word {:?} covers pieces {}..={}, expected to start at {next}",
                    w.word, w.first, w.last
                )));
            }
            next = w.last + 1;
        }
        if next != num_pieces {
            return Err(Error::invalid(format!(
                "word map covers {next} pieces, label sequence has {num_pieces}"
            )));
        }
        Ok(Self { words })
    }

    pub fn words(&self) -> &[WordPieces] {
        &self.words
    }

    pub fn num_pieces(&self) -> usize {
        self.words.last().map_or(0, |w| w.last + 1)
    }

    /// Word index owning each piece.
    pub fn piece_owners(&self) -> Vec<usize> {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(i, w)| std::iter::repeat_n(i, w.last - w.first + 1))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTiming {
    #[serde(rename = "w")]
    pub word: String,
    pub start_ms: f64,
    pub end_ms: f64,
}

impl WordTiming {
    pub fn new(word: impl Into<String>, start_ms: f64, end_ms: f64) -> Self {
        Self {
            word: word.into(),
            start_ms,
            end_ms,
        }
    }

    pub fn duration_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }

    pub fn shifted(&self, offset_ms: f64) -> Self {
        Self::new(self.word.clone(), self.start_ms + offset_ms, self.end_ms + offset_ms)
    }
}

/// Peak-expansion hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CetcParams {
    pub alpha_left: f64,
    pub alpha_right: f64,
    pub beta: f64,
}

impl Default for CetcParams {
    fn default() -> Self {
        Self {
            alpha_left: 0.2,
            alpha_right: 0.7,
            beta: 0.5,
        }
    }
}

impl CetcParams {
    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_left", self.alpha_left), ("alpha_right", self.alpha_right)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {a}")));
            }
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Inclusive frame range assigned to one token by peak expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameBounds {
    pub start: usize,
    pub peak: usize,
    pub end: usize,
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Expands peaks toward the neighbouring peaks. The first and last tokens
/// see virtual neighbours at frame 0 and `T - 1`.
///
/// Rounding to whole frames can make a token's end land on the next token's
/// start even when the unrounded ranges are disjoint; the earlier token then
/// gives that frame up.
pub fn cetc_boundaries(peaks: &[usize], num_frames: usize, params: &CetcParams) -> Result<Vec<FrameBounds>> {
    params.validate()?;
    if let Some(i) = peaks.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!(
            "peaks must be strictly increasing (peak {} = {} follows {})",
            i + 1,
            peaks[i + 1],
            peaks[i]
        )));
    }
    if let Some(&last) = peaks.last() {
        if last >= num_frames {
            return Err(Error::invalid(format!("peak {last} beyond {num_frames} frames")));
        }
    }
    let last_frame = num_frames.saturating_sub(1) as f64;
    let raw: Vec<(f64, f64)> = peaks
        .iter()
        .enumerate()
        .map(|(u, &p)| {
            let p = p as f64;
            let prev = if u == 0 { 0.0 } else { peaks[u - 1] as f64 };
            let next = peaks.get(u + 1).map_or(last_frame, |&n| n as f64);
            (p - params.alpha_left * (p - prev), p + params.alpha_right * (next - p))
        })
        .collect();

    let mut bounds: Vec<FrameBounds> = peaks
        .iter()
        .zip(&raw)
        .map(|(&peak, &(s, e))| FrameBounds {
            start: (round_half_up(s) as usize).min(peak),
            peak,
            end: (round_half_up(e) as usize).max(peak),
        })
        .collect();
    for u in 1..bounds.len() {
        let disjoint = raw[u - 1].1 < raw[u].0;
        if disjoint && bounds[u - 1].end >= bounds[u].start {
            bounds[u - 1].end = (bounds[u].start - 1).max(bounds[u - 1].peak);
        }
    }
    Ok(bounds)
}

/// Soft frame targets for the second-stage classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidedTargets {
    pub targets: Matrix,
}

/// Builds `T x V` guided targets: each token ramps from 0 at its start to 1
/// at its peak and back to 0 at its end, with exponent `beta`. On frames
/// claimed by two tokens the later one wins. Blank takes what is left.
pub fn cetc_guided_targets(
    labels: &[usize],
    bounds: &[FrameBounds],
    beta: f64,
    num_frames: usize,
    vocab: usize,
) -> Result<GuidedTargets> {
    if labels.len() != bounds.len() {
        return Err(Error::shape(format!("{} bounds", labels.len()), bounds.len()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l == BLANK || l >= vocab) {
        return Err(Error::invalid(format!(
            "label {l} is not a non-blank token of vocab {vocab}"
        )));
    }
    let mut targets = Matrix::zeros(num_frames, vocab);
    let mut owner: Vec<Option<usize>> = vec![None; num_frames];
    let mut contested = 0usize;
    for (u, (&label, b)) in labels.iter().zip(bounds).enumerate() {
        if !(b.start <= b.peak && b.peak <= b.end && b.end < num_frames) {
            return Err(Error::invalid(format!("token {u} has invalid bounds {b:?}")));
        }
        for t in b.start..=b.end {
            let value = ramp(t, b, beta);
            if let Some(prev) = owner[t] {
                contested += 1;
                targets.set(t, labels[prev], 0.0);
            }
            owner[t] = Some(u);
            targets.set(t, label, value);
        }
    }
    if contested > 0 {
        log::debug!("guided targets: {contested} frames claimed by more than one token");
    }
    for t in 0..num_frames {
        let mass: f64 = targets.row(t)[1..].iter().sum();
        targets.set(t, BLANK, (1.0 - mass).clamp(0.0, 1.0));
    }
    Ok(GuidedTargets { targets })
}

fn ramp(t: usize, b: &FrameBounds, beta: f64) -> f64 {
    if t == b.peak {
        return 1.0;
    }
    let (num, den) = if t < b.peak {
        (t - b.start, b.peak - b.start)
    } else {
        (b.end - t, b.end - b.peak)
    };
    (num as f64 / den as f64).powf(beta)
}

/// Frame-averaged soft cross-entropy against guided targets, with its
/// gradient with respect to the raw logits.
pub fn guided_ce_grad(logits: &Matrix, targets: &GuidedTargets) -> Result<(f64, Matrix)> {
    let target = &targets.targets;
    if logits.shape() != target.shape() {
        return Err(Error::shape(
            format!("{:?}", target.shape()),
            format!("{:?}", logits.shape()),
        ));
    }
    let log_probs = log_softmax_rows(logits)?;
    let frames = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for t in 0..logits.rows() {
        let lp = log_probs.row(t);
        let q = target.row(t);
        let mass: f64 = q.iter().sum();
        loss -= q.iter().zip(lp).map(|(&q, &l)| q * l).sum::<f64>();
        for ((g, &l), &q) in grad.row_mut(t).iter_mut().zip(lp).zip(q) {
            *g = (l.exp() * mass - q) / frames;
        }
    }
    Ok((loss / frames, grad))
}

/// Word timings from token spans. A word starts at its first piece's first
/// frame and ends after its last piece's last frame; `offset_ms` is added to
/// both and results are clamped to the utterance.
pub fn words_from_spans(
    spans: &[TokenSpan],
    word_map: &WordMap,
    frame_ms: f64,
    offset_ms: f64,
    num_frames: usize,
) -> Result<Vec<WordTiming>> {
    if spans.len() != word_map.num_pieces() {
        return Err(Error::invalid(format!(
            "{} spans for a word map of {} pieces",
            spans.len(),
            word_map.num_pieces()
        )));
    }
    if let Some((i, s)) = spans.iter().enumerate().find(|(i, s)| s.token_index != *i) {
        return Err(Error::invalid(format!("span {i} belongs to token {}", s.token_index)));
    }
    let limit = num_frames as f64 * frame_ms;
    Ok(word_map
        .words()
        .iter()
        .map(|w| {
            let start = spans[w.first].start_frame as f64 * frame_ms + offset_ms;
            let end = (spans[w.last].end_frame + 1) as f64 * frame_ms + offset_ms;
            WordTiming::new(w.word.clone(), start.clamp(0.0, limit), end.clamp(0.0, limit))
        })
        .collect())
}

/// Result of an offset grid search.
#[derive(Debug, Clone, Serialize)]
pub struct OffsetSearch {
    pub best_offset_ms: f64,
    pub best: MetricsReport,
    /// Every grid point with its score (`%WS + %WE` at the threshold).
    pub curve: Vec<OffsetPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OffsetPoint {
    pub offset_ms: f64,
    pub ave_st_delta_ms: f64,
    pub ave_ed_delta_ms: f64,
    pub pct_ws: f64,
    pub pct_we: f64,
    pub score: f64,
}

/// Grid values `lo, lo + step, ..., <= hi`.
pub fn offset_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::invalid(format!("offset range {lo}:{hi} is empty")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("offset step must be positive, got {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

/// Picks the offset maximizing `%WS<thr + %WE<thr` over all utterance pairs.
/// Ties go to lower mean absolute error (`ST + ED`), then smaller `|offset|`,
/// then the negative side.
pub fn gridsearch_offset(
    pred: &[Vec<WordTiming>],
    reference: &[Vec<WordTiming>],
    range_ms: (f64, f64),
    step_ms: f64,
    threshold_ms: f64,
) -> Result<OffsetSearch> {
    if pred.len() != reference.len() {
        return Err(Error::shape(format!("{} utterances", reference.len()), pred.len()));
    }
    let grid = offset_grid(range_ms.0, range_ms.1, step_ms)?;
    let pairs = metrics::match_utterances(pred, reference);
    if pairs.is_empty() {
        return Err(Error::NothingToScore);
    }
    let thresholds = [threshold_ms];
    let mut best: Option<(f64, MetricsReport, (f64, f64, f64, f64))> = None;
    let mut curve = Vec::with_capacity(grid.len());
    for &offset in &grid {
        let shifted: Vec<_> = pairs.iter().map(|p| p.with_hyp_offset(offset)).collect();
        let report = metrics::timing_metrics(&shifted, &thresholds);
        let stats = report.stats.as_ref().ok_or(Error::NothingToScore)?;
        let (ws, we) = (stats.pct_ws[0].1, stats.pct_we[0].1);
        let score = ws + we;
        curve.push(OffsetPoint {
            offset_ms: offset,
            ave_st_delta_ms: stats.ave_st_delta_ms,
            ave_ed_delta_ms: stats.ave_ed_delta_ms,
            pct_ws: ws,
            pct_we: we,
            score,
        });
        let key = (
            -score,
            stats.ave_st_delta_ms + stats.ave_ed_delta_ms,
            offset.abs(),
            offset,
        );
        let better = match &best {
            None => true,
            Some((_, _, k)) => key.partial_cmp(k) == Some(std::cmp::Ordering::Less),
        };
        if better {
            best = Some((offset, report, key));
        }
    }
    let (best_offset_ms, best, _) = best.expect("grid is non-empty");
    Ok(OffsetSearch {
        best_offset_ms,
        best,
        curve,
    })
}
