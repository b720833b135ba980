use std::io::Write;
use std::path::Path;

use ctc_timing::io::{self, LabelsRecord, LogitsRecord, TimingRecord};
use ctc_timing::synth::config::{apply_setting, parse_config_text};
use ctc_timing::synth::{
    evaluate, gamma_csv, gamma_sweep, generate_corpus, pfr_csv, pfr_sweep, train, utterance_logits, Classifier, Corpus,
    CorpusSpec, Method, SweepSetup, TrainConfig, TrainingLog,
};
use ctc_timing::Matrix;
use serde::{Deserialize, Serialize};

use crate::args::{EvalArgs, GenArgs, Overrides, SweepArgs, TrainArgs};
use crate::commands::{create, parse_list, parse_offset_range, summary_row, write_json};
use crate::error::{CliError, CliResult};

/// Everything `synth eval` needs to rebuild the test split and rerun the model.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub config: TrainConfig,
    pub corpus: CorpusSpec,
    pub classifier: Classifier,
}

/// Method defaults, then the config file, then individual flags.
pub fn resolve(overrides: &Overrides) -> CliResult<(TrainConfig, CorpusSpec)> {
    let file_pairs = match &overrides.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            parse_config_text(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => Vec::new(),
    };
    let method_text = overrides
        .method
        .clone()
        .or_else(|| file_pairs.iter().find(|(k, _)| k == "method").map(|(_, v)| v.clone()));
    let method = match method_text {
        Some(m) => m.parse::<Method>().map_err(|e| CliError::usage(e.to_string()))?,
        None => Method::Npc,
    };
    let mut config = TrainConfig::with_method(method);
    let mut corpus = CorpusSpec::default();
    let flag_pairs = overrides.pairs();
    let all = file_pairs
        .iter()
        .filter(|(k, _)| k != "method")
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .chain(flag_pairs.iter().copied());
    for (k, v) in all {
        apply_setting(&mut config, &mut corpus, k, v).map_err(|e| CliError::usage(e.to_string()))?;
    }
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    corpus.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if overrides.test_utts == 0 {
        return Err(CliError::usage("--test-utts must be positive"));
    }
    Ok((config, corpus))
}

fn matrix_record(utt: &str, m: &Matrix, frame_ms: f64) -> LogitsRecord {
    LogitsRecord {
        utt: utt.to_string(),
        frame_ms: Some(frame_ms),
        frames: m.to_rows(),
    }
}

fn write_split(dir: &Path, corpus: &Corpus) -> CliResult<()> {
    let mut labels = create(&dir.join("labels.jsonl"))?;
    let mut reference = create(&dir.join("ref.jsonl"))?;
    let mut hi = create(&dir.join("features_hi.jsonl"))?;
    let mut lo = create(&dir.join("features_lo.jsonl"))?;
    for u in corpus.iter() {
        io::write_jsonl_line(
            &mut labels,
            &LabelsRecord {
                utt: u.utt_id.clone(),
                pieces: u.labels.tokens().to_vec(),
                words: u.word_map.words().to_vec(),
            },
        )?;
        io::write_jsonl_line(
            &mut reference,
            &TimingRecord {
                utt: u.utt_id.clone(),
                words: u.ref_timings.clone(),
            },
        )?;
        io::write_jsonl_line(&mut hi, &matrix_record(&u.utt_id, &u.features_hi, u.frame_ms()))?;
        io::write_jsonl_line(&mut lo, &matrix_record(&u.utt_id, &u.features_lo, u.frame_ms()))?;
    }
    for w in [&mut labels, &mut reference, &mut hi, &mut lo] {
        w.flush()?;
    }
    Ok(())
}

pub fn gen(args: &GenArgs) -> CliResult<()> {
    let (_, spec) = resolve(&args.overrides)?;
    let train_corpus = generate_corpus(&spec)?;
    let test_corpus = generate_corpus(&spec.held_out(args.overrides.test_utts))?;
    write_split(&args.out_dir.join("train"), &train_corpus)?;
    write_split(&args.out_dir.join("test"), &test_corpus)?;
    let mut vocab = create(&args.out_dir.join("vocab.txt"))?;
    io::write_vocab(&mut vocab, &spec.token_names())?;
    vocab.flush()?;
    write_json(&args.out_dir.join("corpus.json"), &spec, false)?;
    eprintln!(
        "wrote {} train and {} test utterances to {}",
        train_corpus.len(),
        test_corpus.len(),
        args.out_dir.display()
    );
    Ok(())
}

pub fn train_cmd(args: &TrainArgs, timestamp: bool) -> CliResult<()> {
    let (config, spec) = resolve(&args.overrides)?;
    let corpus = generate_corpus(&spec)?;
    let (classifier, log): (Classifier, TrainingLog) = train(&config, &corpus)?;
    let last = log.epochs.last();
    eprintln!(
        "trained {} for {} epochs: final loss {:.4}, blank occupancy {:.3}, skipped {}",
        config.method,
        log.epochs.len(),
        last.map_or(f64::NAN, |e| e.mean_loss),
        log.final_blank_occupancy(),
        log.skipped_utterances
    );
    write_json(
        &args.out,
        &ModelFile {
            config,
            corpus: spec,
            classifier,
        },
        timestamp,
    )?;
    if let Some(path) = &args.log {
        write_json(path, &log, timestamp)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    method: Method,
    gamma_inf: f64,
    offset_ms: f64,
    thresholds_ms: &'a [f64],
    test_utts: usize,
    #[serde(flatten)]
    evaluation: &'a ctc_timing::synth::Evaluation,
}

pub fn eval(args: &EvalArgs, timestamp: bool) -> CliResult<()> {
    let thresholds = parse_list(&args.thresholds, "--thresholds")?;
    if args.test_utts == 0 {
        return Err(CliError::usage("--test-utts must be positive"));
    }
    if !args.offset_ms.is_finite() || args.gamma_inf.is_some_and(|g| !g.is_finite()) {
        return Err(CliError::usage("--offset-ms and --gamma-inf must be finite"));
    }
    let text =
        std::fs::read_to_string(&args.model).map_err(|e| CliError::data(format!("{}: {e}", args.model.display())))?;
    let model: ModelFile =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", args.model.display())))?;
    let gamma_inf = args.gamma_inf.unwrap_or(model.config.gamma_inf);
    let corpus = generate_corpus(&model.corpus.held_out(args.test_utts))?;
    let evaluation = evaluate(&model.classifier, &corpus, gamma_inf, args.offset_ms, &thresholds)?;
    write_json(
        &args.out,
        &EvalOutput {
            method: model.config.method,
            gamma_inf,
            offset_ms: args.offset_ms,
            thresholds_ms: &thresholds,
            test_utts: args.test_utts,
            evaluation: &evaluation,
        },
        timestamp,
    )?;
    if let Some(path) = &args.logits_out {
        let mut w = create(path)?;
        for u in corpus.iter() {
            let logits = utterance_logits(&model.classifier, u)?;
            io::write_jsonl_line(&mut w, &LogitsRecord::from_matrix(&logits))?;
        }
        w.flush()?;
    }
    if let Some(path) = &args.timings_out {
        let mut w = create(path)?;
        for (u, words) in corpus.iter().zip(&evaluation.hyp) {
            io::write_jsonl_line(
                &mut w,
                &TimingRecord {
                    utt: u.utt_id.clone(),
                    words: words.clone(),
                },
            )?;
        }
        w.flush()?;
    }
    println!(
        "{}  blank_occupancy {:.3}",
        summary_row(&evaluation.report, thresholds[0], args.offset_ms),
        evaluation.blank_occupancy
    );
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> CliResult<()> {
    let thresholds = parse_list(&args.thresholds, "--thresholds")?;
    let offset_grid = parse_offset_range(&args.offset_range)?;
    let (gamma, pfr) = match args.grid.as_str() {
        "gamma" => (true, false),
        "pfr" => (false, true),
        "both" => (true, true),
        other => {
            return Err(CliError::usage(format!(
                "--grid must be gamma, pfr or both, got {other:?}"
            )))
        }
    };
    // The label-prior sweep always trains NPC models and the PFR sweep PFR
    // models; the remaining overrides apply to both.
    let mut npc_flags = args.overrides.clone();
    npc_flags.method = Some("npc".into());
    let mut pfr_flags = args.overrides.clone();
    pfr_flags.method = Some("pfr".into());
    let (base, spec) = resolve(&npc_flags)?;
    let (pfr_base, _) = resolve(&pfr_flags)?;
    let setup = SweepSetup {
        test: spec.held_out(args.overrides.test_utts),
        train: spec,
        base,
        pfr_base,
        thresholds_ms: thresholds,
        offset_grid,
    };
    if gamma {
        let rows = gamma_sweep(&setup)?;
        write_text(
            &args.out_dir.join("gamma_sweep.csv"),
            &gamma_csv(&rows, &setup.thresholds_ms),
        )?;
    }
    if pfr {
        let rows = pfr_sweep(&setup)?;
        write_text(
            &args.out_dir.join("pfr_sweep.csv"),
            &pfr_csv(&rows, &setup.thresholds_ms),
        )?;
    }
    eprintln!("wrote sweep results to {}", args.out_dir.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}
