//! Line-oriented file formats.
//!
//! * logits: `{"utt": str, "frame_ms": float, "frames": [[float; V]; T]}`
//! * labels: `{"utt": str, "pieces": [int], "words": [{"w": str, "first": int, "last": int}]}`
//! * timings: `{"utt": str, "words": [{"w": str, "start_ms": float, "end_ms": float}]}`
//! * vocab: one token per line, line 0 is `<blank>`

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::boundary::{WordMap, WordPieces, WordTiming};
use crate::ctc::{LabelSequence, LogitMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const BLANK_LITERAL: &str = "<blank>";

/// Frame duration assumed for imported logits without a `frame_ms` field:
/// a 10 ms hop with 4x encoder subsampling.
pub const DEFAULT_FRAME_MS: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsRecord {
    pub utt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_ms: Option<f64>,
    pub frames: Vec<Vec<f64>>,
}

impl LogitsRecord {
    pub fn from_matrix(logits: &LogitMatrix) -> Self {
        Self {
            utt: logits.utt_id.clone(),
            frame_ms: Some(logits.frame_ms()),
            frames: logits.frames().to_rows(),
        }
    }

    /// `frame_ms_override` wins over the record's own value.
    pub fn to_logit_matrix(&self, frame_ms_override: Option<f64>) -> Result<LogitMatrix> {
        let frames = Matrix::from_rows(&self.frames)?;
        let frame_ms = frame_ms_override.or(self.frame_ms).unwrap_or(DEFAULT_FRAME_MS);
        LogitMatrix::new(self.utt.clone(), frames, frame_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsRecord {
    pub utt: String,
    pub pieces: Vec<usize>,
    pub words: Vec<WordPieces>,
}

impl LabelsRecord {
    pub fn to_parts(&self) -> Result<(LabelSequence, WordMap)> {
        let labels = LabelSequence::new(self.pieces.clone())?;
        let map = WordMap::new(self.words.clone(), labels.len())?;
        Ok((labels, map))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub utt: String,
    pub words: Vec<WordTiming>,
}

/// Streams JSON Lines records; blank lines are skipped and errors carry the
/// 1-based line number.
pub fn jsonl_records<T: DeserializeOwned, R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, T)>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(Error::Io(e))),
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(
                serde_json::from_str(&l)
                    .map(|v| (line_no, v))
                    .map_err(|e| Error::Parse {
                        line: line_no,
                        message: e.to_string(),
                    }),
            ),
        }
    })
}

pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    jsonl_records(reader).map(|r| r.map(|(_, v)| v)).collect()
}

pub fn write_jsonl_line<T: Serialize, W: Write>(mut writer: W, record: &T) -> Result<()> {
    serde_json::to_writer(&mut writer, record).map_err(|e| Error::Io(e.into()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn write_jsonl<'a, T: Serialize + 'a, W: Write>(
    mut writer: W,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    for r in records {
        write_jsonl_line(&mut writer, r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_vocab<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let tokens: Vec<String> = reader
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect();
    match tokens.first() {
        Some(first) if first == BLANK_LITERAL => Ok(tokens),
        Some(first) => Err(Error::Parse {
            line: 1,
            message: format!("vocab line 1 must be {BLANK_LITERAL:?}, found {first:?}"),
        }),
        None => Err(Error::Parse {
            line: 1,
            message: "vocab file is empty".into(),
        }),
    }
}

pub fn write_vocab<W: Write>(mut writer: W, tokens: &[String]) -> Result<()> {
    for t in tokens {
        writeln!(writer, "{t}")?;
    }
    Ok(())
}
