//! Flat `key = value` (or flat JSON object) configuration for synthetic runs.
//!
//! Training keys: `method gamma_train gamma_inf alpha_left alpha_right beta
//! mu tau lambda_pfr lambda_ce fuse_features context_frames hidden epochs
//! batch_size learning_rate seed`. Corpus keys: `n_utts vocab_size
//! pieces_per_word words_per_utt span_frames gap_frames feature_dim
//! noise_sigma context_window lookahead corpus_seed`. `#` starts a comment.

use std::str::FromStr;

use crate::error::{Error, Result};

use super::corpus::CorpusSpec;
use super::train::TrainConfig;

pub const TRAIN_KEYS: &[&str] = &[
    "method",
    "gamma_train",
    "gamma_inf",
    "alpha_left",
    "alpha_right",
    "beta",
    "mu",
    "tau",
    "lambda_pfr",
    "lambda_ce",
    "fuse_features",
    "context_frames",
    "hidden",
    "epochs",
    "batch_size",
    "learning_rate",
    "seed",
];

pub const CORPUS_KEYS: &[&str] = &[
    "n_utts",
    "vocab_size",
    "pieces_per_word",
    "words_per_utt",
    "span_frames",
    "gap_frames",
    "feature_dim",
    "noise_sigma",
    "context_window",
    "lookahead",
    "corpus_seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::invalid(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::invalid(format!("{key} = {value:?}: expected a boolean"))),
    }
}

impl TrainConfig {
    /// Sets one field by key. Returns `Ok(false)` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "method" => self.method = parse(key, value)?,
            "gamma_train" => self.gamma_train = parse(key, value)?,
            "gamma_inf" => self.gamma_inf = parse(key, value)?,
            "alpha_left" => self.cetc.alpha_left = parse(key, value)?,
            "alpha_right" => self.cetc.alpha_right = parse(key, value)?,
            "beta" => self.cetc.beta = parse(key, value)?,
            "mu" => self.pfr.mu = parse(key, value)?,
            "tau" => self.pfr.tau = parse(key, value)?,
            "lambda_pfr" => self.pfr.lambda_pfr = parse(key, value)?,
            "lambda_ce" => self.pfr.lambda_ce = parse(key, value)?,
            "fuse_features" => self.fuse_features = parse_bool(key, value)?,
            "context_frames" => self.context_frames = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl CorpusSpec {
    /// Sets one field by key. Returns `Ok(false)` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "n_utts" => self.n_utts = parse(key, value)?,
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "pieces_per_word" => self.pieces_per_word = value.parse()?,
            "words_per_utt" => self.words_per_utt = value.parse()?,
            "span_frames" => self.span_frames = value.parse()?,
            "gap_frames" => self.gap_frames = value.parse()?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "context_window" => self.context_window = parse(key, value)?,
            "lookahead" => self.lookahead = parse(key, value)?,
            "corpus_seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Applies one `key=value` pair to whichever struct owns the key.
pub fn apply_setting(train: &mut TrainConfig, corpus: &mut CorpusSpec, key: &str, value: &str) -> Result<()> {
    let key = key.trim();
    if train.set(key, value)? || corpus.set(key, value)? {
        Ok(())
    } else {
        Err(Error::invalid(format!("unknown config key {key:?}")))
    }
}

/// Parses config text (JSON object or `key = value` lines) into pairs.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(trimmed).map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })?;
        return obj
            .into_iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Number(n) => n.to_string(),
                    serde_json::Value::Bool(b) => b.to_string(),
                    other => {
                        return Err(Error::invalid(format!("{k}: unsupported value {other}")));
                    }
                };
                Ok((k, s))
            })
            .collect();
    }
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, found {line:?}"),
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Applies config text. A `method` key first resets `train` to that
/// method's defaults; every other key then overrides them.
pub fn apply_config_text(text: &str, train: &mut TrainConfig, corpus: &mut CorpusSpec) -> Result<()> {
    let pairs = parse_config_text(text)?;
    if let Some((_, m)) = pairs.iter().find(|(k, _)| k.trim() == "method") {
        *train = TrainConfig::with_method(m.parse()?);
    }
    for (k, v) in pairs.iter().filter(|(k, _)| k.trim() != "method") {
        apply_setting(train, corpus, k, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::train::Method;

    #[test]
    fn key_value_and_json_agree() {
        let kv = "method = pfr\nlambda_pfr = 1.5 # sweep value\nspan_frames = 4..9\nfuse_features = true\n";
        let json = r#"{"method": "pfr", "lambda_pfr": 1.5, "span_frames": "4..9", "fuse_features": true}"#;
        let (mut a, mut ca) = (TrainConfig::default(), CorpusSpec::default());
        let (mut b, mut cb) = (TrainConfig::default(), CorpusSpec::default());
        apply_config_text(kv, &mut a, &mut ca).unwrap();
        apply_config_text(json, &mut b, &mut cb).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        assert_eq!(a.method, Method::Pfr);
        assert_eq!(a.context_frames, TrainConfig::with_method(Method::Pfr).context_frames);
        assert_eq!(a.pfr.lambda_pfr, 1.5);
        assert_eq!(ca.span_frames.min, 4);
    }

    #[test]
    fn unknown_keys_and_bad_lines_fail() {
        let (mut t, mut c) = (TrainConfig::default(), CorpusSpec::default());
        assert!(apply_config_text("nope = 1", &mut t, &mut c).is_err());
        assert!(matches!(
            apply_config_text("epochs = 3\ngarbage", &mut t, &mut c),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(apply_config_text("epochs = many", &mut t, &mut c).is_err());
    }

    #[test]
    fn defaults_match_documented_values() {
        let t = TrainConfig::default();
        assert_eq!((t.gamma_train, t.gamma_inf), (0.25, 1.0));
        assert_eq!((t.pfr.mu, t.pfr.tau, t.pfr.lambda_ce), (-1, 10.0, 0.95));
        assert_eq!((t.cetc.alpha_left, t.cetc.alpha_right, t.cetc.beta), (0.2, 0.7, 0.5));
        assert_eq!(t.learning_rate, 0.05);
        assert_eq!(t.context_frames, 0);
        for k in TRAIN_KEYS {
            let mut t = TrainConfig::default();
            let v = match *k {
                "method" => "npc",
                "fuse_features" => "false",
                _ => "1",
            };
            assert!(t.set(k, v).unwrap(), "{k}");
        }
    }
}
