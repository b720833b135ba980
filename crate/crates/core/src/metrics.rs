//! Word-timing evaluation.
//!
//! Hypothesis and reference words are paired through a minimum edit distance
//! alignment; only aligned slots with identical (NFC-normalized) text are
//! scored.

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};
use unicode_normalization::UnicodeNormalization;

use crate::boundary::WordTiming;
use crate::ctc::BLANK;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match {
        hyp: usize,
        reference: usize,
    },
    Substitute {
        hyp: usize,
        reference: usize,
    },
    /// Reference word missing from the hypothesis.
    Delete {
        reference: usize,
    },
    /// Hypothesis word with no reference counterpart.
    Insert {
        hyp: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordAlignment {
    pub ops: Vec<EditOp>,
    pub cost: usize,
}

impl WordAlignment {
    pub fn matches(&self) -> Vec<(usize, usize)> {
        self.ops
            .iter()
            .filter_map(|op| match *op {
                EditOp::Match { hyp, reference } => Some((hyp, reference)),
                _ => None,
            })
            .collect()
    }
}

fn normalize(s: &str) -> String {
    s.nfc().collect()
}

/// Unit-cost Levenshtein alignment. The backtrace prefers match, then
/// substitution, then deletion, then insertion.
pub fn align_words<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> WordAlignment {
    let h: Vec<String> = hyp.iter().map(|s| normalize(s.as_ref())).collect();
    let r: Vec<String> = reference.iter().map(|s| normalize(s.as_ref())).collect();
    let (n, m) = (h.len(), r.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(h[i - 1] != r[j - 1]);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }

    let mut ops = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && h[i - 1] == r[j - 1] && d[i][j] == d[i - 1][j - 1] {
            ops.push(EditOp::Match {
                hyp: i - 1,
                reference: j - 1,
            });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1 {
            ops.push(EditOp::Substitute {
                hyp: i - 1,
                reference: j - 1,
            });
            i -= 1;
            j -= 1;
        } else if j > 0 && d[i][j] == d[i][j - 1] + 1 {
            ops.push(EditOp::Delete { reference: j - 1 });
            j -= 1;
        } else {
            ops.push(EditOp::Insert { hyp: i - 1 });
            i -= 1;
        }
    }
    ops.reverse();
    WordAlignment { ops, cost: d[n][m] }
}

/// Indices `(hyp, ref)` of equal-text slots on the minimum edit alignment.
pub fn edit_align<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Vec<(usize, usize)> {
    align_words(hyp, reference).matches()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub hyp: WordTiming,
    pub reference: WordTiming,
}

impl MatchedPair {
    pub fn with_hyp_offset(&self, offset_ms: f64) -> Self {
        Self {
            hyp: self.hyp.shifted(offset_ms),
            reference: self.reference.clone(),
        }
    }
}

/// Aligns each utterance pair and collects the scored word pairs.
pub fn match_utterances(hyp: &[Vec<WordTiming>], reference: &[Vec<WordTiming>]) -> Vec<MatchedPair> {
    hyp.iter()
        .zip(reference)
        .flat_map(|(h, r)| {
            let hw: Vec<&str> = h.iter().map(|w| w.word.as_str()).collect();
            let rw: Vec<&str> = r.iter().map(|w| w.word.as_str()).collect();
            edit_align(&hw, &rw)
                .into_iter()
                .map(|(i, j)| MatchedPair {
                    hyp: h[i].clone(),
                    reference: r[j].clone(),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn threshold_key(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

fn ser_threshold_map<S: Serializer>(xs: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
    let map: BTreeMap<String, f64> = xs.iter().map(|&(t, p)| (threshold_key(t), p)).collect();
    map.serialize(s)
}

/// Statistics over matched pairs; absent when nothing matched.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingStats {
    pub ave_st_delta_ms: f64,
    pub ave_ed_delta_ms: f64,
    /// Mean of `hyp - ref`; negative means predictions are early.
    pub signed_st_delta_ms: f64,
    pub signed_ed_delta_ms: f64,
    #[serde(serialize_with = "ser_threshold_map")]
    pub pct_ws: Vec<(f64, f64)>,
    #[serde(serialize_with = "ser_threshold_map")]
    pub pct_we: Vec<(f64, f64)>,
    pub mean_ref_duration_ms: f64,
    pub mean_hyp_duration_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n_matched: usize,
    pub n_hyp: usize,
    pub n_ref: usize,
    #[serde(flatten)]
    pub stats: Option<TimingStats>,
}

impl MetricsReport {
    pub fn ws(&self, threshold_ms: f64) -> Option<f64> {
        lookup(&self.stats.as_ref()?.pct_ws, threshold_ms)
    }

    pub fn we(&self, threshold_ms: f64) -> Option<f64> {
        lookup(&self.stats.as_ref()?.pct_we, threshold_ms)
    }
}

fn lookup(xs: &[(f64, f64)], threshold: f64) -> Option<f64> {
    xs.iter().find(|(t, _)| *t == threshold).map(|&(_, p)| p)
}

fn pct_below(deltas: &[f64], threshold: f64) -> f64 {
    100.0 * deltas.iter().filter(|&&d| d < threshold).count() as f64 / deltas.len() as f64
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Offset statistics over matched pairs. Threshold tests are strict.
pub fn timing_metrics(pairs: &[MatchedPair], thresholds_ms: &[f64]) -> MetricsReport {
    let n = pairs.len();
    let stats = (n > 0).then(|| {
        let st: Vec<f64> = pairs.iter().map(|p| p.hyp.start_ms - p.reference.start_ms).collect();
        let ed: Vec<f64> = pairs.iter().map(|p| p.hyp.end_ms - p.reference.end_ms).collect();
        let st_abs: Vec<f64> = st.iter().map(|d| d.abs()).collect();
        let ed_abs: Vec<f64> = ed.iter().map(|d| d.abs()).collect();
        TimingStats {
            ave_st_delta_ms: mean(st_abs.iter().copied()),
            ave_ed_delta_ms: mean(ed_abs.iter().copied()),
            signed_st_delta_ms: mean(st.iter().copied()),
            signed_ed_delta_ms: mean(ed.iter().copied()),
            pct_ws: thresholds_ms.iter().map(|&t| (t, pct_below(&st_abs, t))).collect(),
            pct_we: thresholds_ms.iter().map(|&t| (t, pct_below(&ed_abs, t))).collect(),
            mean_ref_duration_ms: mean(pairs.iter().map(|p| p.reference.duration_ms())),
            mean_hyp_duration_ms: mean(pairs.iter().map(|p| p.hyp.duration_ms())),
        }
    });
    MetricsReport {
        n_matched: n,
        n_hyp: n,
        n_ref: n,
        stats,
    }
}

/// Aligns and scores a set of utterances in one go.
pub fn score_utterances(
    hyp: &[Vec<WordTiming>],
    reference: &[Vec<WordTiming>],
    thresholds_ms: &[f64],
) -> MetricsReport {
    let pairs = match_utterances(hyp, reference);
    let mut report = timing_metrics(&pairs, thresholds_ms);
    report.n_hyp = hyp.iter().map(Vec::len).sum();
    report.n_ref = reference.iter().map(Vec::len).sum();
    report
}

/// A CTC peak paired with the reference word it falls under.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakObservation {
    pub peak_ms: f64,
    pub reference: WordTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakHistogram {
    pub bins: Vec<HistogramBin>,
    /// Mean relative position over all scored peaks, `None` if none scored.
    pub mean_relative_position: Option<f64>,
    pub n_scored: usize,
    pub n_skipped_zero_duration: usize,
}

/// Relative peak position `(peak - start) / (end - start)`: 0 at the
/// reference word start, 1 at its end. Values outside `range` land in the
/// edge bins.
pub fn peak_histogram(peaks: &[PeakObservation], n_bins: usize, range: (f64, f64)) -> crate::Result<PeakHistogram> {
    if n_bins == 0 {
        return Err(crate::Error::invalid("histogram needs at least one bin"));
    }
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(crate::Error::invalid(format!("histogram range {lo}:{hi} is empty")));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            bin_lo: lo + i as f64 * width,
            bin_hi: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    let mut skipped = 0;
    let mut rel = Vec::with_capacity(peaks.len());
    for p in peaks {
        let dur = p.reference.duration_ms();
        if dur <= 0.0 {
            skipped += 1;
            continue;
        }
        let r = (p.peak_ms - p.reference.start_ms) / dur;
        let idx = (((r - lo) / width).floor().max(0.0) as usize).min(n_bins - 1);
        bins[idx].count += 1;
        rel.push(r);
    }
    Ok(PeakHistogram {
        bins,
        mean_relative_position: (!rel.is_empty()).then(|| mean(rel.iter().copied())),
        n_scored: rel.len(),
        n_skipped_zero_duration: skipped,
    })
}

/// Fraction of frames whose most probable label is blank.
pub fn blank_occupancy(posteriors: &Matrix) -> f64 {
    if posteriors.rows() == 0 {
        return 0.0;
    }
    let blank = posteriors
        .iter_rows()
        .filter(|row| {
            let best = row.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &x)| if x > acc.1 { (i, x) } else { acc },
            );
            best.0 == BLANK
        })
        .count();
    blank as f64 / posteriors.rows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(word: &str, s: f64, e: f64) -> WordTiming {
        WordTiming::new(word, s, e)
    }

    #[test]
    fn identical_sequences_match_in_order() {
        let words = ["a", "b", "c", "d", "e"];
        assert_eq!(edit_align(&words, &words), (0..5).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn missing_middle_word() {
        let reference = ["a", "b", "c", "d", "e"];
        let hyp = ["a", "b", "d", "e"];
        assert_eq!(edit_align(&hyp, &reference), vec![(0, 0), (1, 1), (2, 3), (3, 4)]);
        assert_eq!(align_words(&hyp, &reference).cost, 1);
    }

    #[test]
    fn substituted_word_is_excluded() {
        let reference = ["a", "b", "c", "d"];
        let hyp = ["a", "x", "c", "d"];
        let a = align_words(&hyp, &reference);
        assert_eq!(a.matches(), vec![(0, 0), (2, 2), (3, 3)]);
        assert!(a.ops.contains(&EditOp::Substitute { hyp: 1, reference: 1 }));
        assert!(edit_align::<&str>(&[], &[]).is_empty());
    }

    #[test]
    fn nfc_equivalent_words_match() {
        let composed = ["caf\u{e9}"];
        let decomposed = ["cafe\u{301}"];
        assert_eq!(edit_align(&composed, &decomposed), vec![(0, 0)]);
        assert!(edit_align(&["Word"], &["word"]).is_empty());
    }

    #[test]
    fn perfect_predictions() {
        let r = vec![vec![w("a", 0.0, 100.0), w("b", 150.0, 300.0)]];
        let m = score_utterances(&r, &r, &[80.0, 200.0]);
        let s = m.stats.as_ref().unwrap();
        assert_eq!((s.ave_st_delta_ms, s.ave_ed_delta_ms), (0.0, 0.0));
        assert_eq!(m.ws(80.0), Some(100.0));
        assert_eq!(m.we(200.0), Some(100.0));
        assert_eq!(s.mean_ref_duration_ms, 125.0);
    }

    #[test]
    fn shifted_by_100ms() {
        let pairs = [MatchedPair {
            hyp: w("a", 200.0, 400.0),
            reference: w("a", 100.0, 300.0),
        }];
        let m = timing_metrics(&pairs, &[80.0, 200.0]);
        let s = m.stats.as_ref().unwrap();
        assert_eq!((s.ave_st_delta_ms, s.ave_ed_delta_ms), (100.0, 100.0));
        assert_eq!((m.ws(80.0), m.ws(200.0)), (Some(0.0), Some(100.0)));
        assert_eq!((m.we(80.0), m.we(200.0)), (Some(0.0), Some(100.0)));
        assert_eq!(s.signed_st_delta_ms, 100.0);
    }

    #[test]
    fn threshold_is_strict() {
        let pairs = [MatchedPair {
            hyp: w("a", 80.0, 180.0),
            reference: w("a", 0.0, 100.0),
        }];
        let m = timing_metrics(&pairs, &[80.0]);
        assert_eq!(m.ws(80.0), Some(0.0));
        assert_eq!(m.we(80.0), Some(0.0));
    }

    #[test]
    fn empty_pairs_have_no_stats() {
        let m = score_utterances(&[vec![w("a", 0.0, 1.0)]], &[vec![w("b", 0.0, 1.0)]], &[80.0]);
        assert_eq!((m.n_matched, m.n_hyp, m.n_ref), (0, 1, 1));
        assert!(m.stats.is_none());
        let json = serde_json::to_value(&m).unwrap();
        assert!(json.get("ave_st_delta_ms").is_none());
    }

    #[test]
    fn report_serializes_threshold_maps() {
        let pairs = [MatchedPair {
            hyp: w("a", 0.0, 100.0),
            reference: w("a", 0.0, 100.0),
        }];
        let json = serde_json::to_value(timing_metrics(&pairs, &[80.0, 200.0])).unwrap();
        assert_eq!(json["pct_ws"]["80"], 100.0);
        assert_eq!(json["pct_we"]["200"], 100.0);
    }

    #[test]
    fn peak_positions() {
        let reference = w("a", 100.0, 200.0);
        let obs = |p| PeakObservation {
            peak_ms: p,
            reference: reference.clone(),
        };
        let h = peak_histogram(&[obs(100.0)], 10, (-1.0, 2.0)).unwrap();
        assert_eq!(h.mean_relative_position, Some(0.0));
        let h = peak_histogram(&[obs(150.0), obs(100.0), obs(-500.0)], 3, (-1.0, 2.0)).unwrap();
        assert_eq!(h.bins.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 2, 0]);
        let zero = PeakObservation {
            peak_ms: 5.0,
            reference: w("z", 5.0, 5.0),
        };
        let h = peak_histogram(&[obs(150.0), zero], 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.mean_relative_position, Some(0.5));
        assert_eq!((h.n_scored, h.n_skipped_zero_duration), (1, 1));
        assert!(peak_histogram(&[], 0, (0.0, 1.0)).is_err());
    }

    #[test]
    fn blank_occupancy_counts() {
        let all_blank = Matrix::from_rows(&[[0.9, 0.1], [0.6, 0.4]]).unwrap();
        assert_eq!(blank_occupancy(&all_blank), 1.0);
        let none = Matrix::from_rows(&[[0.1, 0.9], [0.4, 0.6]]).unwrap();
        assert_eq!(blank_occupancy(&none), 0.0);
        let rows: Vec<[f64; 2]> = (0..10).map(|i| if i < 8 { [0.7, 0.3] } else { [0.2, 0.8] }).collect();
        assert!((blank_occupancy(&Matrix::from_rows(&rows).unwrap()) - 0.8).abs() < 1e-15);
    }

    /// Independent recursive edit distance with memoization.
    fn lev_oracle(a: &[String], b: &[String]) -> usize {
        fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
            if let Some(v) = memo[i][j] {
                return v;
            }
            let v = if i == a.len() {
                b.len() - j
            } else if j == b.len() {
                a.len() - i
            } else if a[i] == b[j] {
                go(a, b, i + 1, j + 1, memo)
            } else {
                1 + go(a, b, i + 1, j, memo)
                    .min(go(a, b, i, j + 1, memo))
                    .min(go(a, b, i + 1, j + 1, memo))
            };
            memo[i][j] = Some(v);
            v
        }
        let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
        go(a, b, 0, 0, &mut memo)
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(prop_oneof!["a", "b", "c"].prop_map(String::from), 0..=10)
    }

    proptest! {
        #[test]
        fn edit_cost_matches_oracle(h in words(), r in words()) {
            let a = align_words(&h, &r);
            prop_assert_eq!(a.cost, lev_oracle(&h, &r));
            let m = a.matches();
            prop_assert!(m.len() <= h.len().min(r.len()));
            for &(i, j) in &m {
                prop_assert_eq!(&h[i], &r[j]);
            }
        }

        #[test]
        fn delta_symmetry_and_monotone_pct(
            offsets in proptest::collection::vec((-300.0f64..300.0, -300.0f64..300.0), 1..20),
        ) {
            let pairs: Vec<MatchedPair> = offsets
                .iter()
                .map(|&(ds, de)| MatchedPair {
                    hyp: w("x", 1000.0 + ds, 2000.0 + de),
                    reference: w("x", 1000.0, 2000.0),
                })
                .collect();
            let swapped: Vec<MatchedPair> = pairs
                .iter()
                .map(|p| MatchedPair { hyp: p.reference.clone(), reference: p.hyp.clone() })
                .collect();
            let thresholds = [10.0, 20.0, 80.0, 200.0];
            let a = timing_metrics(&pairs, &thresholds).stats.unwrap();
            let b = timing_metrics(&swapped, &thresholds).stats.unwrap();
            prop_assert!((a.ave_st_delta_ms - b.ave_st_delta_ms).abs() < 1e-9);
            prop_assert!((a.ave_ed_delta_ms - b.ave_ed_delta_ms).abs() < 1e-9);
            for w in a.pct_ws.windows(2).chain(a.pct_we.windows(2)) {
                prop_assert!(w[0].1 <= w[1].1);
                prop_assert!((0.0..=100.0).contains(&w[1].1));
            }
        }
    }
}
