use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boundary::{cetc_boundaries, cetc_guided_targets, guided_ce_grad, CetcParams, GuidedTargets};
use crate::ctc::{forced_align, label_prior_adjust, log_softmax_rows, prior_ctc_grad, token_spans, BLANK};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pfr::{combined_loss, pfr_loss_grad, PfrParams};

use super::corpus::{Corpus, InputLayout};
use super::model::Classifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Plain CTC.
    Peaky,
    /// CTC on label-prior adjusted logits.
    Npc,
    /// Peaky CTC, then a fresh classifier on peak-expanded guided targets.
    Cetc,
    /// Label-prior CTC plus peak-shifting distillation.
    Pfr,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "peaky" | "ctc" => Ok(Method::Peaky),
            "npc" => Ok(Method::Npc),
            "cetc" => Ok(Method::Cetc),
            "pfr" => Ok(Method::Pfr),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (peaky, npc, cetc, pfr)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Peaky => "peaky",
            Method::Npc => "npc",
            Method::Cetc => "cetc",
            Method::Pfr => "pfr",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub gamma_train: f64,
    pub gamma_inf: f64,
    pub cetc: CetcParams,
    pub pfr: PfrParams,
    pub fuse_features: bool,
    /// Neighbouring frames stacked on each side of the classifier input.
    #[serde(default)]
    pub context_frames: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Npc,
            gamma_train: 0.25,
            gamma_inf: 1.0,
            cetc: CetcParams::default(),
            pfr: PfrParams::default(),
            fuse_features: false,
            context_frames: 0,
            hidden: 32,
            epochs: 40,
            batch_size: 8,
            learning_rate: 0.05,
            seed: 7,
        }
    }
}

impl TrainConfig {
    /// Defaults for `method`. The peaky baseline is decoded without a label
    /// prior. PFR trains a temporal input window on a longer, faster
    /// schedule: peaks can only move when the model sees neighbouring frames,
    /// so a per-frame classifier on fixed features cannot be shifted.
    pub fn with_method(method: Method) -> Self {
        let base = Self {
            method,
            ..Self::default()
        };
        match method {
            Method::Pfr => Self {
                pfr: PfrParams {
                    lambda_pfr: 1.0,
                    ..PfrParams::default()
                },
                context_frames: 2,
                epochs: 80,
                learning_rate: 0.2,
                ..base
            },
            Method::Peaky => Self { gamma_inf: 0.0, ..base },
            Method::Npc | Method::Cetc => base,
        }
    }

    pub fn layout(&self) -> InputLayout {
        InputLayout {
            fuse: self.fuse_features,
            context: self.context_frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::invalid("epochs, batch_size and hidden must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        for (name, g) in [("gamma_train", self.gamma_train), ("gamma_inf", self.gamma_inf)] {
            if !g.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        match self.method {
            Method::Cetc => self.cetc.validate(),
            Method::Pfr => self.pfr.validate(),
            Method::Peaky | Method::Npc => Ok(()),
        }
    }

    /// Label-prior weight the CTC term is trained with.
    pub fn ctc_gamma(&self) -> f64 {
        match self.method {
            Method::Peaky | Method::Cetc => 0.0,
            Method::Npc | Method::Pfr => self.gamma_train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Training loss per frame.
    pub mean_loss: f64,
    /// Share of frames, as seen during the epoch, whose most likely label
    /// under the trained distribution was blank.
    pub blank_occupancy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// First stage of a two-stage (CETC) run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage1: Vec<EpochLog>,
    pub skipped_utterances: usize,
}

impl TrainingLog {
    pub fn final_blank_occupancy(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.blank_occupancy)
    }
}

enum Objective<'a> {
    Ctc { gamma: f64 },
    CtcPfr { gamma: f64, pfr: &'a PfrParams },
    Guided(&'a [GuidedTargets]),
}

impl Objective<'_> {
    /// Loss summed over frames and its gradient w.r.t. the logits.
    fn eval(&self, logits: &Matrix, corpus: &Corpus, idx: usize) -> Result<(f64, Matrix)> {
        let labels = &corpus[idx].labels;
        match self {
            Objective::Ctc { gamma } => prior_ctc_grad(logits, labels, *gamma),
            Objective::CtcPfr { gamma, pfr } => {
                let (cl, cg) = prior_ctc_grad(logits, labels, *gamma)?;
                let (pl, pg) = pfr_loss_grad(logits, pfr)?;
                combined_loss((cl, &cg), (pl, &pg), None, pfr)
            }
            Objective::Guided(targets) => {
                let (l, mut g) = guided_ce_grad(logits, &targets[idx])?;
                let frames = logits.rows() as f64;
                g.scale(frames);
                Ok((l * frames, g))
            }
        }
    }

    fn occupancy_gamma(&self) -> f64 {
        match self {
            Objective::Ctc { gamma } | Objective::CtcPfr { gamma, .. } => *gamma,
            Objective::Guided(_) => 0.0,
        }
    }
}

fn blank_argmax_frames(logits: &Matrix) -> usize {
    logits
        .iter_rows()
        .filter(|row| {
            let mut best = 0;
            for (i, &x) in row.iter().enumerate() {
                if x > row[best] {
                    best = i;
                }
            }
            best == BLANK
        })
        .count()
}

fn run_sgd(
    config: &TrainConfig,
    corpus: &Corpus,
    inputs: &[Matrix],
    objective: &Objective,
    seed: u64,
) -> Result<(Classifier, Vec<EpochLog>, usize)> {
    let mut clf =
        Classifier::new(inputs[0].cols(), config.hidden, corpus.spec.model_vocab(), seed).with_layout(config.layout());
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_5546);
    let mut log = Vec::with_capacity(config.epochs);
    let mut skipped = vec![false; corpus.len()];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut frames_seen, mut blank_frames) = (0.0, 0usize, 0usize);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut grads = clf.zero_gradients();
            let mut frames = 0usize;
            for &i in chunk {
                let (logits, cache) = clf.forward(&inputs[i])?;
                let (loss, dlogits) = match objective.eval(&logits, corpus, i) {
                    Ok(v) => v,
                    Err(Error::NoValidPath { .. }) => {
                        if !skipped[i] {
                            log::warn!("skipping {}: no valid CTC path", corpus[i].utt_id);
                            skipped[i] = true;
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss in epoch {epoch}, batch {batch} ({})",
                        corpus[i].utt_id
                    )));
                }
                clf.backward_into(&cache, &dlogits, &mut grads)?;
                let gamma = objective.occupancy_gamma();
                let trained = if gamma == 0.0 {
                    logits
                } else {
                    label_prior_adjust(&logits, gamma)?
                };
                blank_frames += blank_argmax_frames(&trained);
                frames += inputs[i].rows();
                loss_sum += loss;
            }
            if frames > 0 {
                grads.scale(1.0 / frames as f64);
                clf.sgd_step(&grads, config.learning_rate);
                frames_seen += frames;
            }
        }
        if !clf.is_finite() {
            return Err(Error::Numerical(format!("parameters diverged in epoch {epoch}")));
        }
        let denom = frames_seen.max(1) as f64;
        log.push(EpochLog {
            epoch,
            mean_loss: loss_sum / denom,
            blank_occupancy: blank_frames as f64 / denom,
        });
    }
    Ok((clf, log, skipped.iter().filter(|&&s| s).count()))
}

/// Guided targets for every utterance from a peaky model's forced alignment.
pub fn cetc_targets(
    clf: &Classifier,
    corpus: &Corpus,
    inputs: &[Matrix],
    params: &CetcParams,
) -> Result<Vec<GuidedTargets>> {
    corpus
        .iter()
        .zip(inputs)
        .map(|(u, x)| {
            let log_probs = log_softmax_rows(&clf.logits(x)?)?;
            let path = forced_align(&log_probs, &u.labels)?;
            let spans = token_spans(&path, &u.labels, &log_probs);
            let peaks: Vec<usize> = spans.iter().map(|s| s.peak_frame).collect();
            let bounds = cetc_boundaries(&peaks, u.num_frames(), params)?;
            cetc_guided_targets(
                u.labels.tokens(),
                &bounds,
                params.beta,
                u.num_frames(),
                corpus.spec.model_vocab(),
            )
        })
        .collect()
}

/// Trains a frame classifier on `corpus` with plain SGD.
pub fn train(config: &TrainConfig, corpus: &Corpus) -> Result<(Classifier, TrainingLog)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("cannot train on an empty corpus"));
    }
    let inputs: Vec<Matrix> = corpus.iter().map(|u| u.input(config.layout())).collect();
    let gamma = config.ctc_gamma();
    match config.method {
        Method::Peaky | Method::Npc => {
            let (clf, epochs, skipped) = run_sgd(config, corpus, &inputs, &Objective::Ctc { gamma }, config.seed)?;
            Ok((
                clf,
                TrainingLog {
                    epochs,
                    stage1: vec![],
                    skipped_utterances: skipped,
                },
            ))
        }
        Method::Pfr => {
            let objective = Objective::CtcPfr {
                gamma,
                pfr: &config.pfr,
            };
            let (clf, epochs, skipped) = run_sgd(config, corpus, &inputs, &objective, config.seed)?;
            Ok((
                clf,
                TrainingLog {
                    epochs,
                    stage1: vec![],
                    skipped_utterances: skipped,
                },
            ))
        }
        Method::Cetc => {
            let (stage1, stage1_log, skipped) =
                run_sgd(config, corpus, &inputs, &Objective::Ctc { gamma: 0.0 }, config.seed)?;
            let targets = cetc_targets(&stage1, corpus, &inputs, &config.cetc)?;
            let (clf, epochs, _) = run_sgd(
                config,
                corpus,
                &inputs,
                &Objective::Guided(&targets),
                config.seed.wrapping_add(1),
            )?;
            Ok((
                clf,
                TrainingLog {
                    epochs,
                    stage1: stage1_log,
                    skipped_utterances: skipped,
                },
            ))
        }
    }
}
