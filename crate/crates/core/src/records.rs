//! Sample and token data model plus the line-delimited JSON corpus format.
//!
//! A corpus file is UTF-8 text, one JSON object per line. An optional first
//! line of the form `{"_meta": {...}}` carries free-form string metadata.
//! Every other line is a sample:
//!
//! ```text
//! {"sample_id":"a","label":"member","text":"...","tokens":[[target,top1,mean,std],...],"neighbor_losses":null}
//! ```
//!
//! Files starting with the gzip magic bytes are decompressed transparently.
//! All log-probabilities are natural logarithms.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::scalar::Scalar;

/// Largest violation of `target <= top1`, `top1 <= 0` or `mean <= top1`
/// that is clamped away instead of rejected.
pub const LOGPROB_TOLERANCE: f64 = 1e-6;

const META_PREFIX: &str = "{\"_meta\":";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Member,
    Nonmember,
}

impl Label {
    pub fn is_member(self) -> bool {
        self == Label::Member
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Member => "member",
            Label::Nonmember => "nonmember",
        }
    }
}

/// Summary of the model's next-token distribution at one predicted position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TokenStats<T> {
    /// `log p(x_t | x_<t)` of the observed token.
    pub target_logprob: T,
    /// `max_v log p(v | x_<t)`.
    pub top1_logprob: T,
    /// Probability-weighted mean of the log-probabilities.
    pub mean_logprob: T,
    /// Probability-weighted standard deviation of the log-probabilities.
    pub std_logprob: T,
}

/// Why a token tuple was rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenViolation {
    pub field: &'static str,
    pub reason: String,
}

impl<T: Scalar> TokenStats<T> {
    /// Builds a token entry, enforcing the distribution invariants.
    ///
    /// Violations of the ordering constraints up to [`LOGPROB_TOLERANCE`] are
    /// clamped; anything larger, any non-finite value, or a negative standard
    /// deviation is rejected.
    pub fn new(target: T, top1: T, mean: T, std: T) -> Result<Self, TokenViolation> {
        for (field, value) in [
            ("target_logprob", target),
            ("top1_logprob", top1),
            ("mean_logprob", mean),
            ("std_logprob", std),
        ] {
            if !value.is_finite() {
                return Err(TokenViolation {
                    field,
                    reason: format!("value {value} is not finite"),
                });
            }
        }
        let tol = T::of(LOGPROB_TOLERANCE);

        let mut top1 = top1;
        if top1 > T::zero() {
            if top1 > tol {
                return Err(TokenViolation {
                    field: "top1_logprob",
                    reason: format!("invariant top1_logprob <= 0 violated ({top1})"),
                });
            }
            top1 = T::zero();
        }

        let mut target = target;
        if target > top1 {
            if target - top1 > tol {
                return Err(TokenViolation {
                    field: "target_logprob",
                    reason: format!(
                        "invariant target_logprob <= top1_logprob violated ({target} > {top1})"
                    ),
                });
            }
            target = top1;
        }

        let mut mean = mean;
        if mean > top1 {
            if mean - top1 > tol {
                return Err(TokenViolation {
                    field: "mean_logprob",
                    reason: format!(
                        "invariant mean_logprob <= top1_logprob violated ({mean} > {top1})"
                    ),
                });
            }
            mean = top1;
        }

        if std < T::zero() {
            return Err(TokenViolation {
                field: "std_logprob",
                reason: format!("invariant std_logprob >= 0 violated ({std})"),
            });
        }

        Ok(Self {
            target_logprob: target,
            top1_logprob: top1,
            mean_logprob: mean,
            std_logprob: std,
        })
    }

    /// Exact statistics of an explicit next-token distribution.
    ///
    /// `probs` must be a normalized distribution with strictly positive
    /// entries; `target` indexes the observed token. The mean and standard
    /// deviation are probability-weighted, accumulated relative to the top-1
    /// log-probability so a uniform distribution gives `mean == top1` and
    /// `std == 0` exactly.
    pub fn from_distribution(probs: &[T], target: usize) -> Self {
        let logps: Vec<T> = probs.iter().map(|p| p.ln()).collect();
        let top1 = logps.iter().copied().fold(T::neg_infinity(), T::max);
        let shift: T = probs
            .iter()
            .zip(&logps)
            .map(|(&p, &l)| p * (l - top1))
            .sum();
        let mean = top1 + shift;
        let var: T = probs
            .iter()
            .zip(&logps)
            .map(|(&p, &l)| p * (l - mean) * (l - mean))
            .sum();
        Self {
            target_logprob: logps[target],
            top1_logprob: top1,
            mean_logprob: mean.min(top1),
            std_logprob: var.max(T::zero()).sqrt(),
        }
    }

    pub fn to_array(&self) -> [T; 4] {
        [
            self.target_logprob,
            self.top1_logprob,
            self.mean_logprob,
            self.std_logprob,
        ]
    }
}

/// One text sample with its per-position token statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord<T> {
    pub sample_id: String,
    pub label: Option<Label>,
    /// Raw text, needed only by the Zlib baseline.
    pub text: Option<String>,
    /// `tokens[i]` describes the (i+1)-th predicted token. Never empty.
    pub tokens: Vec<TokenStats<T>>,
    /// Mean cross-entropy of each perturbed neighbour, needed only by the
    /// Neighbor baseline.
    pub neighbor_losses: Option<Vec<T>>,
}

impl<T: Scalar> SampleRecord<T> {
    /// Checks the record-level invariants. Token tuples are validated when
    /// constructed through [`TokenStats::new`]; this re-checks them so
    /// hand-assembled records are covered as well.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.tokens.is_empty() {
            return Err(("tokens".into(), "must contain at least one entry".into()));
        }
        for (i, tok) in self.tokens.iter().enumerate() {
            let checked = TokenStats::new(
                tok.target_logprob,
                tok.top1_logprob,
                tok.mean_logprob,
                tok.std_logprob,
            )
            .map_err(|v| (format!("tokens[{i}].{}", v.field), v.reason))?;
            if checked != *tok {
                return Err((
                    format!("tokens[{i}]"),
                    "ordering invariants hold only after clamping".into(),
                ));
            }
        }
        if let Some(losses) = &self.neighbor_losses {
            if losses.is_empty() {
                return Err(("neighbor_losses".into(), "present but empty".into()));
            }
            if let Some(i) = losses.iter().position(|v| !v.is_finite()) {
                return Err((
                    format!("neighbor_losses[{i}]"),
                    "value is not finite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// An ordered set of samples plus free-form metadata.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Corpus<T> {
    pub records: Vec<SampleRecord<T>>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct WireRecord {
    sample_id: String,
    #[serde(default)]
    label: Option<Label>,
    #[serde(default)]
    text: Option<String>,
    tokens: Vec<[f64; 4]>,
    #[serde(default)]
    neighbor_losses: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct WireRecordOut<'a> {
    sample_id: &'a str,
    label: Option<Label>,
    text: Option<&'a str>,
    tokens: Vec<[f64; 4]>,
    neighbor_losses: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct WireMeta {
    #[serde(rename = "_meta")]
    meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
struct WireMetaOut<'a> {
    #[serde(rename = "_meta")]
    meta: &'a BTreeMap<String, String>,
}

impl<T: Scalar> Corpus<T> {
    pub fn new(records: Vec<SampleRecord<T>>) -> Self {
        Self {
            records,
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord<T>> {
        self.records.iter().find(|r| r.sample_id == sample_id)
    }

    /// Reads the wire format from any reader; line numbers in errors are
    /// 1-based.
    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        let mut seen = HashSet::new();
        let mut first_content = true;

        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| CorpusError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if first_content && trimmed.starts_with(META_PREFIX) {
                first_content = false;
                let meta: WireMeta =
                    serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
                        line: line_no,
                        message: format!("metadata header: {e}"),
                    })?;
                corpus.metadata = meta
                    .meta
                    .into_iter()
                    .map(|(k, v)| match v {
                        serde_json::Value::String(s) => (k, s),
                        other => (k, other.to_string()),
                    })
                    .collect();
                continue;
            }
            first_content = false;

            let wire: WireRecord =
                serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let record = Self::from_wire(wire, line_no)?;
            if !seen.insert(record.sample_id.clone()) {
                return Err(CorpusError::DuplicateId {
                    line: line_no,
                    sample_id: record.sample_id,
                });
            }
            corpus.records.push(record);
        }
        Ok(corpus)
    }

    fn from_wire(wire: WireRecord, line: usize) -> Result<SampleRecord<T>, CorpusError> {
        let invalid = |field: String, reason: String| CorpusError::Invalid {
            line,
            sample_id: wire.sample_id.clone(),
            field,
            reason,
        };
        if wire.tokens.is_empty() {
            return Err(invalid(
                "tokens".into(),
                "must contain at least one entry".into(),
            ));
        }
        let mut tokens = Vec::with_capacity(wire.tokens.len());
        for (i, [target, top1, mean, std]) in wire.tokens.iter().copied().enumerate() {
            let tok = TokenStats::new(T::of(target), T::of(top1), T::of(mean), T::of(std))
                .map_err(|v| invalid(format!("tokens[{i}].{}", v.field), v.reason))?;
            tokens.push(tok);
        }
        let neighbor_losses = match &wire.neighbor_losses {
            None => None,
            Some(losses) if losses.is_empty() => {
                return Err(invalid(
                    "neighbor_losses".into(),
                    "present but empty".into(),
                ))
            }
            Some(losses) => {
                let converted: Vec<T> = losses.iter().map(|&v| T::of(v)).collect();
                if let Some(i) = converted.iter().position(|v| !v.is_finite()) {
                    return Err(invalid(
                        format!("neighbor_losses[{i}]"),
                        "value is not finite".into(),
                    ));
                }
                Some(converted)
            }
        };
        Ok(SampleRecord {
            sample_id: wire.sample_id.clone(),
            label: wire.label,
            text: wire.text.clone(),
            tokens,
            neighbor_losses,
        })
    }

    /// Writes the canonical wire format: the metadata header (always, even
    /// when empty) followed by one line per record.
    pub fn write_to<W: Write>(&self, mut writer: W) -> io::Result<()> {
        serde_json::to_writer(
            &mut writer,
            &WireMetaOut {
                meta: &self.metadata,
            },
        )?;
        writer.write_all(b"\n")?;
        for record in &self.records {
            let out = WireRecordOut {
                sample_id: &record.sample_id,
                label: record.label,
                text: record.text.as_deref(),
                tokens: record
                    .tokens
                    .iter()
                    .map(|t| t.to_array().map(Scalar::widen))
                    .collect(),
                neighbor_losses: record
                    .neighbor_losses
                    .as_ref()
                    .map(|l| l.iter().map(|v| v.widen()).collect()),
            };
            serde_json::to_writer(&mut writer, &out)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }
}

/// Reads a corpus file, gzip-compressed or plain.
pub fn parse_corpus<T: Scalar>(path: impl AsRef<Path>) -> Result<Corpus<T>, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = File::open(path).map_err(io_err)?;
    let mut magic = [0u8; 2];
    let n = read_prefix(&mut file, &mut magic).map_err(io_err)?;
    let file = File::open(path).map_err(io_err)?;
    if n == 2 && magic == GZIP_MAGIC {
        Corpus::read_from(BufReader::new(GzDecoder::new(file)))
    } else {
        Corpus::read_from(BufReader::new(file))
    }
}

fn read_prefix(file: &mut File, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match file.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}

/// Writes a corpus file. Paths ending in `.gz` are gzip-compressed.
pub fn write_corpus<T: Scalar>(
    corpus: &Corpus<T>,
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = BufWriter::new(File::create(path).map_err(io_err)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(file, flate2::Compression::default());
        corpus.write_to(&mut enc).map_err(io_err)?;
        enc.finish().map_err(io_err)?.flush().map_err(io_err)
    } else {
        corpus.write_to(file).map_err(io_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Corpus<f64>, CorpusError> {
        Corpus::read_from(text.as_bytes())
    }

    #[test]
    fn parses_two_valid_lines() {
        let c = parse(
            "{\"_meta\":{\"model\":\"toy\"}}\n\
             {\"sample_id\":\"a\",\"label\":\"member\",\"text\":\"hi\",\"tokens\":[[-0.5,-0.1,-1.0,0.3]],\"neighbor_losses\":null}\n\
             {\"sample_id\":\"b\",\"label\":null,\"text\":null,\"tokens\":[[-2.0,-0.5,-1.0,0.5],[-0.1,-0.1,-0.2,0.1]],\"neighbor_losses\":[1.5,2.0]}\n",
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.metadata["model"], "toy");
        assert_eq!(c.records[0].label, Some(Label::Member));
        assert_eq!(c.records[1].tokens.len(), 2);
        assert_eq!(c.records[1].neighbor_losses, Some(vec![1.5, 2.0]));
    }

    #[test]
    fn optional_fields_may_be_omitted() {
        let c = parse("{\"sample_id\":\"a\",\"tokens\":[[-1,-1,-1,0]]}\n").unwrap();
        assert_eq!(c.records[0].label, None);
        assert_eq!(c.records[0].text, None);
        assert!(c.metadata.is_empty());
    }

    #[test]
    fn target_above_top1_is_located_error() {
        let err = parse(
            "{\"_meta\":{}}\n{\"sample_id\":\"x\",\"tokens\":[[-0.5,-0.5,-1,0.2],[-0.1,-0.5,-1,0.2]]}\n",
        )
        .unwrap_err();
        match err {
            CorpusError::Invalid {
                line,
                sample_id,
                field,
                reason,
            } => {
                assert_eq!(line, 2);
                assert_eq!(sample_id, "x");
                assert_eq!(field, "tokens[1].target_logprob");
                assert!(
                    reason.contains("target_logprob <= top1_logprob"),
                    "{reason}"
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sub_tolerance_violation_is_clamped() {
        let c = parse("{\"sample_id\":\"x\",\"tokens\":[[-0.4999995,-0.5,-1,0.2]]}\n").unwrap();
        assert_eq!(c.records[0].tokens[0].target_logprob, -0.5);
        let c = parse("{\"sample_id\":\"x\",\"tokens\":[[-0.1,5e-7,-1,0.2]]}\n").unwrap();
        assert_eq!(c.records[0].tokens[0].top1_logprob, 0.0);
    }

    #[test]
    fn rejects_negative_std_and_empty_tokens() {
        assert!(matches!(
            parse("{\"sample_id\":\"x\",\"tokens\":[[-1,-0.5,-1,-0.2]]}"),
            Err(CorpusError::Invalid { ref field, .. }) if field == "tokens[0].std_logprob"
        ));
        assert!(matches!(
            parse("{\"sample_id\":\"x\",\"tokens\":[]}"),
            Err(CorpusError::Invalid { ref field, .. }) if field == "tokens"
        ));
        assert!(matches!(
            parse("{\"sample_id\":\"x\",\"tokens\":[[-1,-0.5,-1,0.1]],\"neighbor_losses\":[]}"),
            Err(CorpusError::Invalid { ref field, .. }) if field == "neighbor_losses"
        ));
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        assert!(matches!(
            parse("{\"sample_id\":\"x\",\"tokens\":[[-1,-0.5,-1]]}"),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            parse("{\"sample_id\":\"x\",\"tokens\":[[-1,-0.5,-1,0]]}\nnot json"),
            Err(CorpusError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            parse("{\"sample_id\":\"x\",\"tokens\":[[-1,-0.5,-1,0]]}\n{\"sample_id\":\"x\",\"tokens\":[[-1,-0.5,-1,0]]}"),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn empty_corpus_writes_only_header() {
        let mut out = Vec::new();
        Corpus::<f64>::default().write_to(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "{\"_meta\":{}}\n");
    }

    #[test]
    fn one_record_writes_one_data_line() {
        let rec = SampleRecord {
            sample_id: "a".into(),
            label: Some(Label::Nonmember),
            text: None,
            tokens: vec![TokenStats::new(-1.0, -0.25, -0.75, 0.5).unwrap()],
            neighbor_losses: None,
        };
        let mut out = Vec::new();
        Corpus::new(vec![rec]).write_to(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            "{\"sample_id\":\"a\",\"label\":\"nonmember\",\"text\":null,\"tokens\":[[-1.0,-0.25,-0.75,0.5]],\"neighbor_losses\":null}"
        );
    }

    #[test]
    fn gzip_files_are_detected_by_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl.gz");
        let mut corpus = Corpus::new(vec![SampleRecord {
            sample_id: "a".into(),
            label: Some(Label::Member),
            text: Some("abc".into()),
            tokens: vec![TokenStats::new(-1.0f64, -0.5, -1.0, 0.3).unwrap()],
            neighbor_losses: Some(vec![2.0]),
        }]);
        corpus.metadata.insert("k".into(), "v".into());
        write_corpus(&corpus, &path).unwrap();
        let mut head = [0u8; 2];
        File::open(&path).unwrap().read_exact(&mut head).unwrap();
        assert_eq!(head, GZIP_MAGIC);
        assert_eq!(parse_corpus::<f64>(&path).unwrap(), corpus);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            parse_corpus::<f64>("/nonexistent/corpus.jsonl"),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn from_distribution_uniform_is_exact() {
        let t = TokenStats::from_distribution(&[1.0f64 / 3.0; 3], 1);
        assert_eq!(t.target_logprob, t.top1_logprob);
        assert_eq!(t.mean_logprob, t.top1_logprob);
        assert_eq!(t.std_logprob, 0.0);
    }
}
