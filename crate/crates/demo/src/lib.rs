//! Browser bindings. Every entry point takes and returns JSON strings; the
//! plain-Rust halves are public so they can be tested natively.

use ctc_timing::boundary::{cetc_boundaries, cetc_guided_targets, gridsearch_offset, CetcParams, FrameBounds};
use ctc_timing::metrics::blank_occupancy;
use ctc_timing::pipeline::align_utterance;
use ctc_timing::synth::config::{apply_setting, parse_config_text};
use ctc_timing::synth::{
    evaluate, generate_corpus, train, utterance_logits, Classifier, Corpus, CorpusSpec, Method, TrainConfig,
    TrainingLog,
};
use ctc_timing::{TokenSpan, WordTiming};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use wasm_bindgen::prelude::*;

fn js_err(e: impl ToString) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// A model trained in the page plus its held-out utterances.
#[wasm_bindgen]
pub struct DemoSession {
    config: TrainConfig,
    classifier: Classifier,
    log: TrainingLog,
    test: Corpus,
}

#[derive(Serialize)]
pub struct UtteranceView {
    pub utt: String,
    pub frame_ms: f64,
    pub tokens: Vec<String>,
    pub labels: Vec<usize>,
    /// `T x V` posteriors after the inference label prior.
    pub posteriors: Vec<Vec<f64>>,
    pub blank_occupancy: f64,
    pub spans: Vec<TokenSpan>,
    pub words: Vec<WordTiming>,
    pub reference: Vec<WordTiming>,
}

#[derive(Serialize)]
pub struct ScoreView {
    pub ave_st_delta_ms: Option<f64>,
    pub ave_ed_delta_ms: Option<f64>,
    pub pct_ws: Option<f64>,
    pub pct_we: Option<f64>,
    pub blank_occupancy: f64,
    pub mean_peak_relative_position: Option<f64>,
    pub best_offset_ms: Option<f64>,
}

impl DemoSession {
    /// Small corpus and short schedule so training finishes in a page;
    /// `settings` is a JSON object using the CLI config keys.
    pub fn train_from(settings: &str) -> Result<Self, String> {
        let pairs = if settings.trim().is_empty() {
            Vec::new()
        } else {
            parse_config_text(settings).map_err(|e| e.to_string())?
        };
        let method = match pairs.iter().find(|(k, _)| k == "method") {
            Some((_, m)) => m.parse::<Method>().map_err(|e| e.to_string())?,
            None => Method::Npc,
        };
        let mut config = TrainConfig {
            epochs: 15,
            ..TrainConfig::with_method(method)
        };
        let mut spec = CorpusSpec {
            n_utts: 40,
            ..CorpusSpec::default()
        };
        let mut test_utts = 8;
        for (k, v) in pairs.iter().filter(|(k, _)| k != "method") {
            if k == "test_utts" {
                test_utts = v.parse().map_err(|_| format!("test_utts: cannot parse {v:?}"))?;
                continue;
            }
            apply_setting(&mut config, &mut spec, k, v).map_err(|e| e.to_string())?;
        }
        if test_utts == 0 {
            return Err("test_utts must be positive".into());
        }
        let corpus = generate_corpus(&spec).map_err(|e| e.to_string())?;
        let (classifier, log) = train(&config, &corpus).map_err(|e| e.to_string())?;
        let test = generate_corpus(&spec.held_out(test_utts)).map_err(|e| e.to_string())?;
        Ok(Self {
            config,
            classifier,
            log,
            test,
        })
    }

    pub fn view(&self, index: usize, gamma_inf: f64, offset_ms: f64) -> Result<UtteranceView, String> {
        let utt = self
            .test
            .utterances
            .get(index)
            .ok_or_else(|| format!("utterance {index} out of range (0..{})", self.test.len()))?;
        let logits = utterance_logits(&self.classifier, utt).map_err(|e| e.to_string())?;
        let aligned =
            align_utterance(&logits, &utt.labels, &utt.word_map, gamma_inf, offset_ms).map_err(|e| e.to_string())?;
        Ok(UtteranceView {
            utt: utt.utt_id.clone(),
            frame_ms: utt.frame_ms(),
            tokens: self.test.spec.token_names(),
            labels: utt.labels.tokens().to_vec(),
            blank_occupancy: blank_occupancy(&aligned.posteriors),
            posteriors: aligned.posteriors.to_rows(),
            spans: aligned.spans,
            words: aligned.words,
            reference: utt.ref_timings.clone(),
        })
    }

    pub fn score_view(&self, gamma_inf: f64, offset_ms: f64, threshold_ms: f64) -> Result<ScoreView, String> {
        let e =
            evaluate(&self.classifier, &self.test, gamma_inf, offset_ms, &[threshold_ms]).map_err(|e| e.to_string())?;
        let best = gridsearch_offset(&e.hyp, &e.reference, (-200.0, 200.0), 10.0, threshold_ms).ok();
        let stats = e.report.stats.as_ref();
        Ok(ScoreView {
            ave_st_delta_ms: stats.map(|s| s.ave_st_delta_ms),
            ave_ed_delta_ms: stats.map(|s| s.ave_ed_delta_ms),
            pct_ws: e.report.ws(threshold_ms),
            pct_we: e.report.we(threshold_ms),
            blank_occupancy: e.blank_occupancy,
            mean_peak_relative_position: e.mean_peak_relative_position,
            best_offset_ms: best.map(|b| offset_ms + b.best_offset_ms),
        })
    }
}

#[wasm_bindgen]
impl DemoSession {
    /// Trains a model on a freshly generated synthetic corpus.
    #[wasm_bindgen(constructor)]
    pub fn new(settings: &str) -> Result<DemoSession, JsValue> {
        Self::train_from(settings).map_err(js_err)
    }

    pub fn num_utterances(&self) -> usize {
        self.test.len()
    }

    /// Configuration and per-epoch log as JSON.
    pub fn summary(&self) -> String {
        serde_json::json!({ "config": self.config, "log": self.log }).to_string()
    }

    /// Posteriors, alignment and word timings of one held-out utterance.
    pub fn align(&self, index: usize, gamma_inf: f64, offset_ms: f64) -> Result<String, JsValue> {
        let view = self.view(index, gamma_inf, offset_ms).map_err(js_err)?;
        serde_json::to_string(&view).map_err(js_err)
    }

    /// Metrics over the held-out split at one threshold.
    pub fn score(&self, gamma_inf: f64, offset_ms: f64, threshold_ms: f64) -> Result<String, JsValue> {
        let view = self.score_view(gamma_inf, offset_ms, threshold_ms).map_err(js_err)?;
        serde_json::to_string(&view).map_err(js_err)
    }
}

#[derive(Debug, Deserialize)]
pub struct RampRequest {
    pub peaks: Vec<usize>,
    pub num_frames: usize,
    #[serde(default)]
    pub params: Option<CetcParams>,
}

#[derive(Debug, Serialize)]
pub struct RampView {
    pub bounds: Vec<FrameBounds>,
    /// `T x (U + 1)` guided targets, one column per token after blank.
    pub targets: Vec<Vec<f64>>,
}

/// CETC boundaries and guided targets for hand-placed peaks. Token `u`
/// gets its own column `u + 1`.
pub fn ramps(request: &str) -> Result<RampView, String> {
    let req: RampRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let params = req.params.unwrap_or_default();
    params.validate().map_err(|e| e.to_string())?;
    let bounds = cetc_boundaries(&req.peaks, req.num_frames, &params).map_err(|e| e.to_string())?;
    let labels: Vec<usize> = (1..=req.peaks.len()).collect();
    let targets = cetc_guided_targets(&labels, &bounds, params.beta, req.num_frames, labels.len() + 1)
        .map_err(|e| e.to_string())?;
    Ok(RampView {
        bounds,
        targets: targets.targets.to_rows(),
    })
}

/// JSON wrapper around [`ramps`].
#[wasm_bindgen]
pub fn cetc_ramps(request: &str) -> Result<String, JsValue> {
    let view = ramps(request).map_err(js_err)?;
    serde_json::to_string(&view).map_err(js_err)
}

/// Default settings shown in the page, as a JSON object.
#[wasm_bindgen]
pub fn default_settings() -> String {
    let c = TrainConfig::default();
    let v: Value = serde_json::json!({
        "method": "npc",
        "gamma_train": c.gamma_train,
        "epochs": 15,
        "n_utts": 40,
        "fuse_features": false,
    });
    v.to_string()
}
