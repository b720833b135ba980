use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ctc_timing::boundary::gridsearch_offset;
use ctc_timing::io::{self, LabelsRecord, LogitsRecord, TimingRecord};
use ctc_timing::metrics::{peak_histogram, score_utterances, MetricsReport};
use ctc_timing::pipeline::align_utterance;
use ctc_timing::{Error, WordTiming};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::args::{AlignArgs, AnalyzePeaksArgs, GridsearchArgs, MetricsArgs};
use crate::error::{CliError, CliResult};

/// Utterances handed to the worker pool at a time.
const CHUNK: usize = 64;

pub fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn parse_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("{what}: expected comma-separated numbers, got {text:?}")))?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(CliError::usage(format!(
            "{what}: values must be positive, got {text:?}"
        )));
    }
    Ok(values)
}

/// Parses `A:B[:C]` into exactly `n` numbers.
pub fn parse_colon(text: &str, n: usize, what: &str) -> CliResult<Vec<f64>> {
    let values: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("{what}: cannot parse {text:?}")))?;
    if values.len() != n || values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::usage(format!(
            "{what}: expected {n} colon-separated numbers, got {text:?}"
        )));
    }
    Ok(values)
}

pub fn parse_offset_range(text: &str) -> CliResult<(f64, f64, f64)> {
    let v = parse_colon(text, 3, "--range")?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    ctc_timing::boundary::offset_grid(lo, hi, step).map_err(|e| CliError::usage(e.to_string()))?;
    Ok((lo, hi, step))
}

/// Serializes `value` as pretty JSON, adding `generated_at_unix` unless disabled.
pub fn write_json(path: &Path, value: &impl Serialize, timestamp: bool) -> CliResult<()> {
    let mut v = serde_json::to_value(value)?;
    if timestamp {
        if let Value::Object(map) = &mut v {
            let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            map.insert("generated_at_unix".into(), now.into());
        }
    }
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &v)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_labels(path: &Path) -> CliResult<HashMap<String, LabelsRecord>> {
    let mut map = HashMap::new();
    for rec in io::jsonl_records::<LabelsRecord, _>(open(path)?) {
        let (line, rec) = rec.map_err(|e| CliError::in_file(path, e))?;
        if map.insert(rec.utt.clone(), rec).is_some() {
            return Err(CliError::data(format!(
                "{}: line {line}: duplicate utterance id",
                path.display()
            )));
        }
    }
    Ok(map)
}

fn read_timings(path: &Path) -> CliResult<Vec<TimingRecord>> {
    io::read_jsonl(open(path)?).map_err(|e| CliError::in_file(path, e))
}

/// Streams logits records in chunks, preserving file order.
fn for_each_logits_chunk(path: &Path, mut f: impl FnMut(Vec<(usize, LogitsRecord)>) -> CliResult<()>) -> CliResult<()> {
    let mut chunk = Vec::with_capacity(CHUNK);
    for rec in io::jsonl_records::<LogitsRecord, _>(open(path)?) {
        chunk.push(rec.map_err(|e| CliError::in_file(path, e))?);
        if chunk.len() == CHUNK {
            f(std::mem::take(&mut chunk))?;
        }
    }
    if !chunk.is_empty() {
        f(chunk)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    utt: &'a str,
    line: usize,
    error: String,
}

pub fn align(args: &AlignArgs) -> CliResult<()> {
    if !args.gamma_inf.is_finite() || !args.offset_ms.is_finite() {
        return Err(CliError::usage("--gamma-inf and --offset-ms must be finite"));
    }
    if let Some(ms) = args.frame_ms.filter(|ms| !(ms.is_finite() && *ms > 0.0)) {
        return Err(CliError::usage(format!("--frame-ms must be positive, got {ms}")));
    }
    let vocab = io::read_vocab(open(&args.vocab)?).map_err(|e| CliError::in_file(&args.vocab, e))?;
    let labels = read_labels(&args.labels)?;
    let errors_path = args.errors.clone().unwrap_or_else(|| sidecar(&args.out));
    let mut out = create(&args.out)?;
    let mut errors = create(&errors_path)?;
    let (mut n_ok, mut n_err) = (0usize, 0usize);

    for_each_logits_chunk(&args.logits, |chunk| {
        if let Some((line, rec)) = chunk
            .iter()
            .find(|(_, r)| r.frames.first().is_some_and(|f| f.len() != vocab.len()))
        {
            return Err(CliError::data(format!(
                "{}: line {line}: logits width {} does not match vocab size {}",
                args.logits.display(),
                rec.frames[0].len(),
                vocab.len()
            )));
        }
        let results: Vec<Result<TimingRecord, String>> = chunk
            .par_iter()
            .map(|(_, rec)| align_record(rec, &labels, args))
            .collect();
        for ((line, rec), result) in chunk.iter().zip(results) {
            match result {
                Ok(timing) => {
                    io::write_jsonl_line(&mut out, &timing)?;
                    n_ok += 1;
                }
                Err(error) => {
                    log::warn!("{}: {error}", rec.utt);
                    io::write_jsonl_line(
                        &mut errors,
                        &ErrorRecord {
                            utt: &rec.utt,
                            line: *line,
                            error,
                        },
                    )?;
                    n_err += 1;
                }
            }
        }
        Ok(())
    })?;
    out.flush()?;
    errors.flush()?;
    eprintln!(
        "aligned {n_ok} utterances, {n_err} failed (see {})",
        errors_path.display()
    );
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".errors.jsonl");
    out.with_file_name(name)
}

fn align_record(
    rec: &LogitsRecord,
    labels: &HashMap<String, LabelsRecord>,
    args: &AlignArgs,
) -> Result<TimingRecord, String> {
    let lab = labels.get(&rec.utt).ok_or("no labels for this utterance")?;
    let (seq, map) = lab.to_parts().map_err(|e| e.to_string())?;
    let logits = rec.to_logit_matrix(args.frame_ms).map_err(|e| e.to_string())?;
    if let Some(&bad) = seq.tokens().iter().find(|&&t| t >= logits.vocab_size()) {
        return Err(format!("label {bad} outside vocab of {}", logits.vocab_size()));
    }
    let aligned = align_utterance(&logits, &seq, &map, args.gamma_inf, args.offset_ms).map_err(|e| e.to_string())?;
    Ok(TimingRecord {
        utt: rec.utt.clone(),
        words: aligned.words,
    })
}

/// Pairs hypothesis and reference utterances by id, in reference order.
fn pair_timings(
    hyp: Vec<TimingRecord>,
    reference: Vec<TimingRecord>,
) -> CliResult<(Vec<Vec<WordTiming>>, Vec<Vec<WordTiming>>)> {
    let ref_ids: HashSet<&str> = reference.iter().map(|r| r.utt.as_str()).collect();
    let mut hyp_map: HashMap<String, Vec<WordTiming>> = HashMap::new();
    let mut extra = Vec::new();
    for h in hyp {
        if !ref_ids.contains(h.utt.as_str()) {
            extra.push(h.utt.clone());
        }
        hyp_map.insert(h.utt, h.words);
    }
    let missing: Vec<&str> = reference
        .iter()
        .map(|r| r.utt.as_str())
        .filter(|id| !hyp_map.contains_key(*id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(CliError::data(format!(
            "utterance id mismatch: missing from hyp [{}]; missing from ref [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let mut hyps = Vec::with_capacity(reference.len());
    let mut refs = Vec::with_capacity(reference.len());
    for r in reference {
        hyps.push(hyp_map.remove(&r.utt).unwrap_or_default());
        refs.push(r.words);
    }
    Ok((hyps, refs))
}

#[derive(Serialize)]
struct MetricsOutput<'a> {
    thresholds_ms: &'a [f64],
    offset_ms: f64,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

pub fn summary_row(report: &MetricsReport, threshold: f64, offset_ms: f64) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
    let stats = report.stats.as_ref();
    format!(
        "ST∆ {}  ED∆ {}  %WS<{threshold} {}  %WE<{threshold} {}  offset {offset_ms}",
        fmt(stats.map(|s| s.ave_st_delta_ms)),
        fmt(stats.map(|s| s.ave_ed_delta_ms)),
        fmt(report.ws(threshold)),
        fmt(report.we(threshold)),
    )
}

pub fn metrics(args: &MetricsArgs, timestamp: bool) -> CliResult<()> {
    let thresholds = parse_list(&args.thresholds, "--thresholds")?;
    if !args.offset_ms.is_finite() {
        return Err(CliError::usage("--offset-ms must be finite"));
    }
    let (hyp, reference) = pair_timings(read_timings(&args.hyp)?, read_timings(&args.reference)?)?;
    let hyp: Vec<Vec<WordTiming>> = hyp
        .iter()
        .map(|ws| ws.iter().map(|w| w.shifted(args.offset_ms)).collect())
        .collect();
    let report = score_utterances(&hyp, &reference, &thresholds);
    write_json(
        &args.out,
        &MetricsOutput {
            thresholds_ms: &thresholds,
            offset_ms: args.offset_ms,
            report: &report,
        },
        timestamp,
    )?;
    println!("{}", summary_row(&report, thresholds[0], args.offset_ms));
    Ok(())
}

pub fn gridsearch(args: &GridsearchArgs) -> CliResult<()> {
    let (lo, hi, step) = parse_offset_range(&args.range)?;
    if !(args.threshold.is_finite() && args.threshold > 0.0) {
        return Err(CliError::usage(format!(
            "--threshold must be positive, got {}",
            args.threshold
        )));
    }
    let (hyp, reference) = pair_timings(read_timings(&args.hyp)?, read_timings(&args.reference)?)?;
    let search = gridsearch_offset(&hyp, &reference, (lo, hi), step, args.threshold)?;
    let mut w = create(&args.out)?;
    writeln!(w, "offset_ms,ave_st_delta_ms,ave_ed_delta_ms,pct_ws,pct_we,score")?;
    for p in &search.curve {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.offset_ms, p.ave_st_delta_ms, p.ave_ed_delta_ms, p.pct_ws, p.pct_we, p.score
        )?;
    }
    w.flush()?;
    println!(
        "best_offset_ms {}  {}",
        search.best_offset_ms,
        summary_row(&search.best, args.threshold, search.best_offset_ms)
    );
    Ok(())
}

pub fn analyze_peaks(args: &AnalyzePeaksArgs) -> CliResult<()> {
    if args.bins < 1 {
        return Err(CliError::usage(format!("--bins must be at least 1, got {}", args.bins)));
    }
    let range = parse_colon(&args.range, 2, "--range")?;
    if range[0] >= range[1] {
        return Err(CliError::usage(format!(
            "--range must satisfy LO < HI, got {}",
            args.range
        )));
    }
    let labels = read_labels(&args.labels)?;
    let reference: HashMap<String, Vec<WordTiming>> = read_timings(&args.reference)?
        .into_iter()
        .map(|r| (r.utt, r.words))
        .collect();
    let mut peaks = Vec::new();
    let mut failed = 0usize;
    for_each_logits_chunk(&args.logits, |chunk| {
        let results: Vec<Result<Vec<_>, String>> = chunk
            .par_iter()
            .map(|(_, rec)| {
                let lab = labels.get(&rec.utt).ok_or("no labels for this utterance")?;
                let refs = reference
                    .get(&rec.utt)
                    .ok_or("no reference timings for this utterance")?;
                let (seq, map) = lab.to_parts().map_err(|e| e.to_string())?;
                let logits = rec.to_logit_matrix(args.frame_ms).map_err(|e| e.to_string())?;
                let aligned = align_utterance(&logits, &seq, &map, args.gamma_inf, 0.0).map_err(|e| e.to_string())?;
                Ok(aligned.peak_observations(&map, refs, logits.frame_ms()))
            })
            .collect();
        for ((_, rec), r) in chunk.iter().zip(results) {
            match r {
                Ok(p) => peaks.extend(p),
                Err(e) => {
                    log::warn!("{}: {e}", rec.utt);
                    failed += 1;
                }
            }
        }
        Ok(())
    })?;
    let hist = peak_histogram(&peaks, args.bins as usize, (range[0], range[1]))?;
    let mut w = create(&args.out)?;
    writeln!(w, "bin_lo,bin_hi,count")?;
    for b in &hist.bins {
        writeln!(w, "{},{},{}", b.bin_lo, b.bin_hi, b.count)?;
    }
    w.flush()?;
    match hist.mean_relative_position {
        Some(m) => println!(
            "mean_relative_position {m:.4}  peaks {}  zero_duration_skipped {}  failed_utterances {failed}",
            hist.n_scored, hist.n_skipped_zero_duration
        ),
        None => return Err(Error::NothingToScore.into()),
    }
    Ok(())
}
