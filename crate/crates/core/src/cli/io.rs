//! Versioned JSON artifacts.
//!
//! Every file is an envelope `{"schema": .., "version": .., "payload": ..}`.
//! The header is checked before the payload is decoded, and a file is either
//! decoded whole or rejected.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::report::ReportRow;
use crate::bnb::BnbTrace;
use crate::features::FEATURE_VERSION;
use crate::imitate::{Label, LabeledSample};
use crate::mlp::MlpParams;
use crate::model::MinlpInstance;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error at byte {offset}: {message}")]
    ParseError { offset: usize, message: String },
    #[error("{schema}: unsupported version {found} (expected {expected})")]
    VersionError { schema: String, found: u32, expected: u32 },
    #[error("expected a {expected} file, found {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("invalid content: {0}")]
    Invalid(String),
    #[error(transparent)]
    Fs(#[from] std::io::Error),
}

/// A file type with a fixed schema name and version.
pub trait Artifact: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
    const VERSION: u32;

    /// Content checks run after decoding.
    fn check(&self) -> Result<(), IoError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_version: String,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Self {
        Dataset {
            feature_version: FEATURE_VERSION.to_string(),
            samples,
        }
    }

    /// (preserve, prune) counts.
    pub fn label_counts(&self) -> (usize, usize) {
        let keep = self.samples.iter().filter(|s| s.label == Label::Preserve).count();
        (keep, self.samples.len() - keep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSet {
    pub role: String,
    pub instances: Vec<MinlpInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Artifact for MlpParams {
    const SCHEMA: &'static str = "l2p.model";
    const VERSION: u32 = 1;

    fn check(&self) -> Result<(), IoError> {
        self.validate().map_err(|e| IoError::Invalid(e.to_string()))
    }
}

impl Artifact for Dataset {
    const SCHEMA: &'static str = "l2p.dataset";
    const VERSION: u32 = 1;

    fn check(&self) -> Result<(), IoError> {
        if self.feature_version != FEATURE_VERSION {
            return Err(IoError::Invalid(format!(
                "dataset feature version {} differs from {FEATURE_VERSION}",
                self.feature_version
            )));
        }
        Ok(())
    }
}

impl Artifact for InstanceSet {
    const SCHEMA: &'static str = "l2p.instances";
    const VERSION: u32 = 1;

    fn check(&self) -> Result<(), IoError> {
        for inst in &self.instances {
            inst.validate()
                .map_err(|e| IoError::Invalid(format!("{}: {e}", inst.id())))?;
        }
        Ok(())
    }
}

impl Artifact for BnbTrace {
    const SCHEMA: &'static str = "l2p.trace";
    const VERSION: u32 = 1;
}

impl Artifact for Report {
    const SCHEMA: &'static str = "l2p.report";
    const VERSION: u32 = 1;
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    schema: &'a str,
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    #[allow(dead_code)]
    schema: String,
    #[allow(dead_code)]
    version: u32,
    payload: T,
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn parse_error(text: &str, e: &serde_json::Error) -> IoError {
    IoError::ParseError {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    }
}

pub fn to_json<A: Artifact>(value: &A) -> String {
    serde_json::to_string_pretty(&EnvelopeOut {
        schema: A::SCHEMA,
        version: A::VERSION,
        payload: value,
    })
    .expect("artifacts serialize")
}

pub fn from_json<A: Artifact>(text: &str) -> Result<A, IoError> {
    let header: Header = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
    if header.schema != A::SCHEMA {
        return Err(IoError::SchemaMismatch {
            expected: A::SCHEMA.into(),
            found: header.schema,
        });
    }
    if header.version != A::VERSION {
        return Err(IoError::VersionError {
            schema: header.schema,
            found: header.version,
            expected: A::VERSION,
        });
    }
    let env: EnvelopeIn<A> = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
    env.payload.check()?;
    Ok(env.payload)
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a half-written artifact.
pub fn save<A: Artifact>(path: &Path, value: &A) -> Result<(), IoError> {
    write_atomic(path, to_json(value).as_bytes())
}

pub fn load<A: Artifact>(path: &Path) -> Result<A, IoError> {
    from_json(&fs::read_to_string(path)?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_count_bytes() {
        let t = "{\n  \"a\": é,\n}";
        assert_eq!(byte_offset(t, 1, 1), 0);
        assert_eq!(byte_offset(t, 2, 3), 4);
        assert_eq!(&t[byte_offset(t, 2, 8)..byte_offset(t, 2, 8) + 2], "é");
    }

    #[test]
    fn header_checked_before_payload() {
        let p = MlpParams::zeros(&[2, 2]).unwrap();
        let text = to_json(&p).replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(
            from_json::<MlpParams>(&text),
            Err(IoError::VersionError { found: 9, .. })
        ));
        let text = to_json(&p);
        assert!(matches!(
            from_json::<Dataset>(&text),
            Err(IoError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn bad_payload_reports_position() {
        let p = MlpParams::zeros(&[2, 2]).unwrap();
        let text = to_json(&p).replacen("0.0", "\"x\"", 1);
        match from_json::<MlpParams>(&text) {
            Err(IoError::ParseError { offset, .. }) => {
                assert!(offset > 0 && offset <= text.len());
                assert!(text[..offset].contains("\"x"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
