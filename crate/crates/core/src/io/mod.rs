//! On-disk formats: document JSONL, the checkpoint container, embedding
//! tables, and the JSON shape of evaluation reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ds::Provenance;
use crate::edag::EventRecord;
use crate::error::{Error, Result};
use crate::eval::{Counts, MatchReport, SliceReport};
use crate::ner::Mention;
use crate::numeric::{Matrix, ParamStore};

/// An event record plus where it came from. Model extractions leave
/// `source` unset; the labeling pipeline stamps it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    #[serde(flatten)]
    pub record: EventRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Provenance>,
}

/// One corpus document as stored on disk, one JSON object per line.
/// `mentions` and `events` are omitted entirely when absent so raw,
/// labeled, and extracted corpora share a single format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mentions: Option<Vec<Mention>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<LabeledRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_count: Option<usize>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, sentences: Vec<String>) -> Document {
        Document {
            doc_id: doc_id.into(),
            sentences,
            mentions: None,
            events: None,
            event_count: None,
        }
    }

    /// Attaches events and keeps the count metadata in step.
    pub fn with_events(mut self, events: Vec<LabeledRecord>) -> Document {
        self.event_count = Some(events.len());
        self.events = Some(events);
        self
    }

    pub fn records(&self) -> Vec<EventRecord> {
        self.events
            .as_deref()
            .unwrap_or_default()
            .iter()
            .map(|e| e.record.clone())
            .collect()
    }

    /// Structural checks: mention spans must address real characters and
    /// match their text, event arguments must appear somewhere in the
    /// document, and the count metadata must agree with the event list.
    pub fn validate(&self) -> Result<()> {
        let err = |detail: String| Error::data(format!("document {}: {detail}", self.doc_id));
        let sentences: Vec<Vec<char>> =
            self.sentences.iter().map(|s| s.chars().collect()).collect();
        for m in self.mentions.as_deref().unwrap_or_default() {
            let chars = sentences
                .get(m.sentence)
                .ok_or_else(|| err(format!("mention sentence {} out of range", m.sentence)))?;
            m.validate(chars)
                .map_err(|e| err(e.to_string()))?;
        }
        for e in self.events.as_deref().unwrap_or_default() {
            for (role, arg) in &e.record.roles {
                if let Some(arg) = arg {
                    if !self.sentences.iter().any(|s| s.contains(&arg.text)) {
                        return Err(err(format!(
                            "argument {:?} for role {role} does not occur in the text",
                            arg.text
                        )));
                    }
                }
            }
        }
        if let (Some(events), Some(count)) = (&self.events, self.event_count) {
            if events.len() != count {
                return Err(err(format!(
                    "event_count {count} disagrees with {} event(s)",
                    events.len()
                )));
            }
        }
        Ok(())
    }
}

/// Parses JSONL text; `path` labels error positions. Blank lines are
/// skipped so files may end with or without a trailing newline.
pub fn parse_documents(text: &str, path: &str) -> Result<Vec<Document>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))
        })
        .collect()
}

/// Renders JSONL, one compact object per line. Field order is fixed and
/// role maps keep insertion order, so render(parse(x)) == x for files this
/// crate wrote.
pub fn render_documents(docs: &[Document]) -> Result<String> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    parse_documents(&text, &path.display().to_string())
}

pub fn write_documents(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_bytes(path, render_documents(docs)?.as_bytes())
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// First line of every checkpoint file.
pub const CHECKPOINT_MAGIC: &str = "kgee-checkpoint v1";

/// Serializes a parameter store: a text header (magic, parameter count, one
/// `name<TAB>rows<TAB>cols` line per tensor, blank line) followed by each
/// tensor's values as little-endian f64 in header order.
pub fn checkpoint_bytes(store: &ParamStore) -> Vec<u8> {
    let mut header = String::new();
    header.push_str(CHECKPOINT_MAGIC);
    header.push('\n');
    header.push_str(&store.len().to_string());
    header.push('\n');
    for (_, p) in store.iter() {
        header.push_str(&format!("{}\t{}\t{}\n", p.name, p.value.rows(), p.value.cols()));
    }
    header.push('\n');
    let mut bytes = header.into_bytes();
    for (_, p) in store.iter() {
        for &v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

// Header reader over the mixed text/binary checkpoint layout. Parameter
// names never contain newlines, so header lines are delimited
// unambiguously even though the payload is binary.
struct HeaderLines<'a> {
    bytes: &'a [u8],
    path: &'a str,
    cursor: usize,
    lineno: usize,
}

impl<'a> HeaderLines<'a> {
    fn next(&mut self) -> Result<String> {
        self.lineno += 1;
        let rest = &self.bytes[self.cursor..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(self.path, self.lineno, "truncated header"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse(self.path, self.lineno, "header is not UTF-8"))?
            .to_string();
        self.cursor += end + 1;
        Ok(line)
    }
}

/// Inverse of [`checkpoint_bytes`]; `path` labels error positions.
pub fn parse_checkpoint(bytes: &[u8], path: &str) -> Result<ParamStore> {
    let mut header = HeaderLines { bytes, path, cursor: 0, lineno: 0 };
    let magic = header.next()?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::parse(path, 1, format!("bad magic {magic:?}")));
    }
    let count: usize = header
        .next()?
        .parse()
        .map_err(|_| Error::parse(path, 2, "bad parameter count"))?;
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let line = header.next()?;
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = || Error::parse(path, header.lineno, format!("bad tensor line {line:?}"));
        if fields.len() != 3 || fields[0].is_empty() {
            return Err(bad());
        }
        let rows: usize = fields[1].parse().map_err(|_| bad())?;
        let cols: usize = fields[2].parse().map_err(|_| bad())?;
        shapes.push((fields[0].to_string(), rows, cols));
    }
    let blank = header.next()?;
    if !blank.is_empty() {
        return Err(Error::parse(path, header.lineno, "missing blank line after header"));
    }

    let expected: usize = shapes.iter().map(|(_, r, c)| r * c * 8).sum();
    let payload = &bytes[header.cursor..];
    if payload.len() != expected {
        return Err(Error::data(format!(
            "{path}: payload is {} byte(s), header promises {expected}",
            payload.len()
        )));
    }
    let mut store = ParamStore::new();
    let mut offset = 0usize;
    for (name, rows, cols) in shapes {
        let data: Vec<f64> = payload[offset..offset + rows * cols * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += rows * cols * 8;
        store.register_with(&name, Matrix::from_vec(rows, cols, data)?)?;
    }
    Ok(store)
}

pub fn save_checkpoint(path: impl AsRef<Path>, store: &ParamStore) -> Result<()> {
    write_bytes(path, &checkpoint_bytes(store))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamStore> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::io(name.clone(), e))?;
    parse_checkpoint(&bytes, &name)
}

/// Parses an embedding table (`entity_id<TAB>v1,v2,...` per line) back
/// into rows indexed by entity id. Ids must be dense from zero and rows
/// must share one width.
pub fn parse_embeddings_tsv(text: &str, path: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let lineno = i + 1;
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected id<TAB>values"))?;
        let id: usize = id
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad entity id {id:?}")))?;
        if id != rows.len() {
            return Err(Error::parse(
                path,
                lineno,
                format!("entity id {id} out of order, expected {}", rows.len()),
            ));
        }
        let row: Vec<f64> = values
            .split(',')
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::parse(path, lineno, format!("bad value {v:?}")))
            })
            .collect::<Result<_>>()?;
        if row.is_empty() || rows.first().is_some_and(|r: &Vec<f64>| r.len() != row.len()) {
            return Err(Error::parse(path, lineno, "inconsistent embedding width"));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn counts_json(c: &Counts) -> serde_json::Value {
    json!({
        "tp": c.tp, "fp": c.fp, "fn": c.fn_,
        "precision": c.precision(), "recall": c.recall(), "f1": c.f1(),
    })
}

fn slice_json(s: &SliceReport) -> serde_json::Value {
    json!({
        "documents": s.documents,
        "per_type": s
            .per_type
            .iter()
            .map(|(name, c)| json!({ "type": name, "counts": counts_json(c) }))
            .collect::<Vec<_>>(),
        "total": counts_json(&s.total),
    })
}

/// Evaluation report as JSON, counts plus the derived metrics.
pub fn report_json(report: &MatchReport) -> serde_json::Value {
    json!({
        "all": slice_json(&report.all),
        "single": slice_json(&report.single),
        "multi": slice_json(&report.multi),
    })
}
