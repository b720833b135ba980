use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::boundary::{WordMap, WordPieces, WordTiming};
use crate::ctc::LabelSequence;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Milliseconds per synthetic frame.
pub const SYNTH_FRAME_MS: f64 = 10.0;

/// Seed for the per-token mean vectors; fixed so that every split drawn
/// from the same vocabulary shares one acoustic space.
const MEANS_SEED: u64 = 0x7a11_5eed;

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

impl Range {
    pub const fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(Error::invalid(format!(
                "{name} range {}..={} must be non-empty with positive bounds",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for Range {
    type Err = Error;

    /// `"3"` or `"3..10"` / `"3-10"` / `"3:10"`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|e| Error::invalid(format!("range bound {x:?}: {e}")))
        };
        let parts: Vec<&str> = if s.contains("..") {
            s.split("..").map(|p| p.trim_start_matches('=')).collect()
        } else {
            s.split(['-', ':']).collect()
        };
        match parts.as_slice() {
            [one] => Ok(Range::new(parse(one)?, parse(one)?)),
            [a, b] => Ok(Range::new(parse(a)?, parse(b)?)),
            _ => Err(Error::invalid(format!("cannot parse range {s:?}"))),
        }
    }
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_utts: usize,
    /// Non-blank tokens; the model vocabulary is `vocab_size + 1`.
    pub vocab_size: usize,
    pub pieces_per_word: Range,
    pub words_per_utt: Range,
    pub span_frames: Range,
    pub gap_frames: Range,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub context_window: usize,
    /// Frames by which the smoothing window of the high-level stream leads
    /// the current frame (encoder anticipation); 0 keeps it centered.
    #[serde(default)]
    pub lookahead: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_utts: 120,
            vocab_size: 10,
            pieces_per_word: Range::new(1, 3),
            words_per_utt: Range::new(3, 6),
            span_frames: Range::new(3, 10),
            gap_frames: Range::new(2, 6),
            feature_dim: 12,
            noise_sigma: 0.8,
            context_window: 5,
            lookahead: 1,
            seed: 1,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_utts == 0 {
            return Err(Error::invalid("n_utts must be positive"));
        }
        if self.vocab_size == 0 || self.feature_dim == 0 || self.context_window == 0 {
            return Err(Error::invalid(
                "vocab_size, feature_dim and context_window must be positive",
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        self.pieces_per_word.check("pieces_per_word")?;
        self.words_per_utt.check("words_per_utt")?;
        self.span_frames.check("span_frames")?;
        self.gap_frames.check("gap_frames")
    }

    /// A disjoint split over the same vocabulary and acoustics.
    pub fn held_out(&self, n_utts: usize) -> Self {
        Self {
            n_utts,
            seed: self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x1234_5678),
            ..self.clone()
        }
    }

    /// Model output width (blank plus tokens).
    pub fn model_vocab(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn token_names(&self) -> Vec<String> {
        std::iter::once(crate::io::BLANK_LITERAL.to_string())
            .chain((1..=self.vocab_size).map(|i| format!("p{i}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub utt_id: String,
    /// Raw per-frame stream (the filter-bank analog).
    pub features_lo: Matrix,
    /// Temporally smoothed stream (the encoder-output analog).
    pub features_hi: Matrix,
    pub labels: LabelSequence,
    pub word_map: WordMap,
    pub ref_timings: Vec<WordTiming>,
    /// Ground-truth inclusive frame range of every piece.
    pub piece_frames: Vec<(usize, usize)>,
}

impl SynthUtterance {
    pub fn num_frames(&self) -> usize {
        self.features_lo.rows()
    }

    pub fn frame_ms(&self) -> f64 {
        SYNTH_FRAME_MS
    }

    /// Classifier input for `layout`: per frame, the smoothed stream over
    /// `t - context ..= t + context` (edge frames repeated), then the raw
    /// stream over the same window when fusing.
    pub fn input(&self, layout: InputLayout) -> Matrix {
        let frames = self.num_frames();
        let d = self.features_hi.cols();
        let streams: &[&Matrix] = if layout.fuse {
            &[&self.features_hi, &self.features_lo]
        } else {
            &[&self.features_hi]
        };
        let mut out = Matrix::zeros(frames, layout.width(d));
        for t in 0..frames {
            let row = out.row_mut(t);
            let mut at = 0;
            for stream in streams {
                for k in 0..=2 * layout.context {
                    let src = (t + k).saturating_sub(layout.context).min(frames - 1);
                    row[at..at + d].copy_from_slice(stream.row(src));
                    at += d;
                }
            }
        }
        out
    }
}

/// How utterance features are arranged into classifier input rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InputLayout {
    /// Append the raw stream to the smoothed one.
    pub fuse: bool,
    /// Neighbouring frames stacked on each side.
    pub context: usize,
}

impl InputLayout {
    pub fn width(&self, feature_dim: usize) -> usize {
        feature_dim * (2 * self.context + 1) * if self.fuse { 2 } else { 1 }
    }
}

/// Mean vector per class: index 0 is silence, `1..=vocab_size` the tokens.
pub fn class_means(spec: &CorpusSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(MEANS_SEED);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..=spec.vocab_size)
        .map(|_| (0..spec.feature_dim).map(|_| normal.sample(&mut rng)).collect())
        .collect()
}

/// Moving average over `window` frames centered `lead` frames ahead of the
/// current one, truncated at the edges.
pub fn moving_average(x: &Matrix, window: usize, lead: usize) -> Matrix {
    let (frames, dim) = x.shape();
    let before = (window - 1) / 2;
    let after = window - 1 - before;
    let mut out = Matrix::zeros(frames, dim);
    for t in 0..frames {
        let center = t + lead;
        let lo = center.saturating_sub(before).min(frames - 1);
        let hi = (center + after).min(frames - 1);
        let n = (hi - lo + 1) as f64;
        let row = out.row_mut(t);
        for s in lo..=hi {
            for (o, &v) in row.iter_mut().zip(x.row(s)) {
                *o += v;
            }
        }
        row.iter_mut().for_each(|o| *o /= n);
    }
    out
}

/// A generated corpus together with the `CorpusSpec` that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub utterances: Vec<SynthUtterance>,
}

impl std::ops::Deref for Corpus {
    type Target = [SynthUtterance];

    fn deref(&self) -> &[SynthUtterance] {
        &self.utterances
    }
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let means = class_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let tokens: Vec<usize> = (1..=spec.vocab_size).collect();
    let mut corpus = Vec::with_capacity(spec.n_utts);

    for n in 0..spec.n_utts {
        let mut classes = Vec::new();
        let mut labels = Vec::new();
        let mut piece_frames = Vec::new();
        let mut words = Vec::new();
        let mut timings = Vec::new();

        let push = |class: usize, len: usize, classes: &mut Vec<usize>| {
            let start = classes.len();
            classes.extend(std::iter::repeat_n(class, len));
            (start, classes.len() - 1)
        };

        push(0, spec.gap_frames.sample(&mut rng), &mut classes);
        let n_words = spec.words_per_utt.sample(&mut rng);
        for w in 0..n_words {
            let n_pieces = spec.pieces_per_word.sample(&mut rng);
            let first = labels.len();
            let mut name = String::new();
            for k in 0..n_pieces {
                // Adjacent pieces inside a word differ, so the constructed
                // segmentation is itself a valid CTC path.
                let tok = loop {
                    let tok = *tokens.choose(&mut rng).expect("vocab is non-empty");
                    if k == 0 || tokens.len() == 1 || Some(&tok) != labels.last() {
                        break tok;
                    }
                };
                let span = push(tok, spec.span_frames.sample(&mut rng), &mut classes);
                labels.push(tok);
                piece_frames.push(span);
                if k > 0 {
                    name.push('_');
                }
                name.push_str(&format!("p{tok}"));
            }
            let last = labels.len() - 1;
            timings.push(WordTiming::new(
                name.clone(),
                piece_frames[first].0 as f64 * SYNTH_FRAME_MS,
                (piece_frames[last].1 + 1) as f64 * SYNTH_FRAME_MS,
            ));
            words.push(WordPieces {
                word: name,
                first,
                last,
            });
            if w + 1 < n_words {
                push(0, spec.gap_frames.sample(&mut rng), &mut classes);
            }
        }
        push(0, spec.gap_frames.sample(&mut rng), &mut classes);

        let frames = classes.len();
        let mut lo = Matrix::zeros(frames, spec.feature_dim);
        for (t, &c) in classes.iter().enumerate() {
            for (x, &m) in lo.row_mut(t).iter_mut().zip(&means[c]) {
                *x = m + noise.sample(&mut rng);
            }
        }
        let hi = moving_average(&lo, spec.context_window, spec.lookahead);
        let labels = LabelSequence::new(labels)?;
        let word_map = WordMap::new(words, labels.len())?;
        corpus.push(SynthUtterance {
            utt_id: format!("synth-{}-{n:05}", spec.seed),
            features_lo: lo,
            features_hi: hi,
            labels,
            word_map,
            ref_timings: timings,
            piece_frames,
        });
    }
    Ok(Corpus {
        spec: spec.clone(),
        utterances: corpus,
    })
}
