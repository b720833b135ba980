use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

const FORMATS: &str = "\
File formats (JSON Lines, one object per line):
  logits   {\"utt\": str, \"frame_ms\": float?, \"frames\": [[float; V]; T]}
  labels   {\"utt\": str, \"pieces\": [int], \"words\": [{\"w\": str, \"first\": int, \"last\": int}]}
  timings  {\"utt\": str, \"words\": [{\"w\": str, \"start_ms\": float, \"end_ms\": float}]}
  errors   {\"utt\": str, \"line\": int, \"error\": str}
  vocab    plain text, one token per line, line 1 is <blank>
CSV files use '.' decimals and a header row.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 numerical failure.";

#[derive(Debug, Parser)]
#[command(name = "ctc-timing", version, about = "Word timings from frame-level CTC classifiers", after_help = FORMATS)]
pub struct Cli {
    /// Leave wall-clock timestamps out of JSON outputs.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forced-align logits against transcripts and write word timings.
    Align(AlignArgs),
    /// Score hypothesis timings against reference timings.
    Metrics(MetricsArgs),
    /// Grid-search the global timestamp offset.
    Gridsearch(GridsearchArgs),
    /// Histogram of peak positions relative to reference words.
    AnalyzePeaks(AnalyzePeaksArgs),
    /// Synthetic corpus, training and sweeps.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Logits JSONL.
    #[arg(long)]
    pub logits: PathBuf,
    /// Labels JSONL.
    #[arg(long)]
    pub labels: PathBuf,
    /// Vocabulary file; its size must equal the logits width.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Label-prior weight applied before the softmax.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub gamma_inf: f64,
    /// Frame duration in ms; overrides the value stored with the logits.
    #[arg(long)]
    pub frame_ms: Option<f64>,
    /// Shift added to every timestamp.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub offset_ms: f64,
    /// Output timings JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-utterance failures; defaults to `<out>.errors.jsonl`.
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Hypothesis timings JSONL.
    #[arg(long)]
    pub hyp: PathBuf,
    /// Reference timings JSONL.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Comma-separated thresholds in ms.
    #[arg(long, default_value = "80,200")]
    pub thresholds: String,
    /// Shift added to every hypothesis timestamp before scoring.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub offset_ms: f64,
    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridsearchArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Offsets as LO:HI:STEP in ms.
    #[arg(long, default_value = "-200:200:10", allow_hyphen_values = true)]
    pub range: String,
    /// Threshold in ms for the %WS + %WE objective.
    #[arg(long, default_value_t = 80.0)]
    pub threshold: f64,
    /// Output curve CSV: offset_ms,ave_st_delta_ms,ave_ed_delta_ms,pct_ws,pct_we,score.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzePeaksArgs {
    #[arg(long)]
    pub logits: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub gamma_inf: f64,
    #[arg(long)]
    pub frame_ms: Option<f64>,
    /// Number of histogram bins.
    #[arg(long, default_value_t = 30)]
    pub bins: i64,
    /// Relative-position range covered by the bins, LO:HI.
    #[arg(long, default_value = "-1:2", allow_hyphen_values = true)]
    pub range: String,
    /// Output histogram CSV: bin_lo,bin_hi,count.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Write a synthetic corpus (train and test splits) to a directory.
    Gen(GenArgs),
    /// Train a classifier on the synthetic training split.
    Train(TrainArgs),
    /// Evaluate a trained classifier on the synthetic test split.
    Eval(EvalArgs),
    /// Run the label-prior and PFR sweeps and write their CSVs.
    Sweep(SweepArgs),
}

/// Every training and corpus field as a flag. Precedence: method defaults,
/// then the config file, then flags.
#[derive(Debug, Args, Default, Clone)]
pub struct Overrides {
    /// Flat key = value or JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// peaky, npc, cetc or pfr.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_train: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_inf: Option<String>,
    #[arg(long)]
    pub alpha_left: Option<String>,
    #[arg(long)]
    pub alpha_right: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    #[arg(long)]
    pub tau: Option<String>,
    #[arg(long)]
    pub lambda_pfr: Option<String>,
    #[arg(long)]
    pub lambda_ce: Option<String>,
    #[arg(long)]
    pub fuse_features: Option<String>,
    #[arg(long)]
    pub context_frames: Option<String>,
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub n_utts: Option<String>,
    #[arg(long)]
    pub vocab_size: Option<String>,
    #[arg(long)]
    pub pieces_per_word: Option<String>,
    #[arg(long)]
    pub words_per_utt: Option<String>,
    #[arg(long)]
    pub span_frames: Option<String>,
    #[arg(long)]
    pub gap_frames: Option<String>,
    #[arg(long)]
    pub feature_dim: Option<String>,
    #[arg(long)]
    pub noise_sigma: Option<String>,
    #[arg(long)]
    pub context_window: Option<String>,
    #[arg(long)]
    pub lookahead: Option<String>,
    #[arg(long)]
    pub corpus_seed: Option<String>,
    /// Utterances in the held-out test split.
    #[arg(long, default_value_t = 80)]
    pub test_utts: usize,
}

impl Overrides {
    /// Flag values as config pairs, `method` excluded.
    pub fn pairs(&self) -> Vec<(&'static str, &str)> {
        let fields: [(&'static str, &Option<String>); 27] = [
            ("gamma_train", &self.gamma_train),
            ("gamma_inf", &self.gamma_inf),
            ("alpha_left", &self.alpha_left),
            ("alpha_right", &self.alpha_right),
            ("beta", &self.beta),
            ("mu", &self.mu),
            ("tau", &self.tau),
            ("lambda_pfr", &self.lambda_pfr),
            ("lambda_ce", &self.lambda_ce),
            ("fuse_features", &self.fuse_features),
            ("context_frames", &self.context_frames),
            ("hidden", &self.hidden),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("learning_rate", &self.learning_rate),
            ("seed", &self.seed),
            ("n_utts", &self.n_utts),
            ("vocab_size", &self.vocab_size),
            ("pieces_per_word", &self.pieces_per_word),
            ("words_per_utt", &self.words_per_utt),
            ("span_frames", &self.span_frames),
            ("gap_frames", &self.gap_frames),
            ("feature_dim", &self.feature_dim),
            ("noise_sigma", &self.noise_sigma),
            ("context_window", &self.context_window),
            ("lookahead", &self.lookahead),
            ("corpus_seed", &self.corpus_seed),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Directory receiving train/ and test/ splits.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output model JSON (classifier, training config and corpus spec).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch training log JSON.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model JSON written by `synth train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Overrides the model's inference label-prior weight.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_inf: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub offset_ms: f64,
    #[arg(long, default_value = "20,80")]
    pub thresholds: String,
    /// Utterances in the held-out test split.
    #[arg(long, default_value_t = 80)]
    pub test_utts: usize,
    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the model's test-split logits JSONL.
    #[arg(long)]
    pub logits_out: Option<PathBuf>,
    /// Also write the predicted test-split timings JSONL.
    #[arg(long)]
    pub timings_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// gamma, pfr or both.
    #[arg(long, default_value = "both")]
    pub grid: String,
    #[arg(long, default_value = "20,80")]
    pub thresholds: String,
    #[arg(long, default_value = "-200:200:10", allow_hyphen_values = true)]
    pub offset_range: String,
    /// Directory receiving gamma_sweep.csv and/or pfr_sweep.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
}
