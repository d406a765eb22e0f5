//! Mention tagging: typed character spans from a linear-chain CRF, a
//! longest-match gazetteer, or gold passthrough.

pub mod crf;
pub mod features;
pub mod train;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crf::{crf_log_likelihood, validate_bio, viterbi_decode, CrfModel};
pub use features::{featurize, DEFAULT_FEATURE_DIM};
pub use train::{train_crf, CrfConfig, TaggedSentence};

/// Mention label categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Company,
    Person,
    Institution,
    Date,
    Shares,
    Ratio,
    Amount,
}

pub const LABELS: [Label; 7] = [
    Label::Company,
    Label::Person,
    Label::Institution,
    Label::Date,
    Label::Shares,
    Label::Ratio,
    Label::Amount,
];

impl Label {
    pub fn index(self) -> usize {
        LABELS.iter().position(|&l| l == self).expect("label registered")
    }

    pub fn from_index(i: usize) -> Option<Label> {
        LABELS.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Company => "company",
            Label::Person => "person",
            Label::Institution => "institution",
            Label::Date => "date",
            Label::Shares => "shares",
            Label::Ratio => "ratio",
            Label::Amount => "amount",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        LABELS.iter().copied().find(|l| l.as_str() == s)
    }
}

/// A typed span in one sentence. Offsets count characters (code points),
/// not bytes, and `text` must equal the sentence slice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub label: Label,
}

impl Mention {
    pub fn validate(&self, sentence: &[char]) -> Result<()> {
        if self.start >= self.end || self.end > sentence.len() {
            return Err(Error::data(format!(
                "mention span {}..{} invalid for sentence of length {}",
                self.start,
                self.end,
                sentence.len()
            )));
        }
        let slice: String = sentence[self.start..self.end].iter().collect();
        if slice != self.text {
            return Err(Error::data(format!(
                "mention text {:?} does not match sentence slice {:?}",
                self.text, slice
            )));
        }
        Ok(())
    }
}

/// (start, end, label index) spans from a tag sequence, rejecting invalid
/// BIO. Inverse of [`tags_from_spans`].
pub fn spans_from_tags_strict(tags: &[usize], n_labels: usize) -> Result<Vec<(usize, usize, usize)>> {
    validate_bio(tags, n_labels)?;
    Ok(spans_from_tags_lenient(tags, n_labels))
}

/// Span extraction that repairs stray I- tags by treating them as B- tags;
/// Viterbi output is unconstrained, so prediction goes through this path.
pub fn spans_from_tags_lenient(tags: &[usize], n_labels: usize) -> Vec<(usize, usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None; // (start, label)
    for (pos, &tag) in tags.iter().enumerate() {
        debug_assert!(tag < crf::tag_count(n_labels));
        match crf::tag_label(tag) {
            None => {
                if let Some((start, label)) = open.take() {
                    spans.push((start, pos, label));
                }
            }
            Some(label) => {
                let is_begin = tag % 2 == 1;
                let continues = !is_begin && open.is_some_and(|(_, l)| l == label);
                if continues {
                    continue;
                }
                if let Some((start, l)) = open.take() {
                    spans.push((start, pos, l));
                }
                open = Some((pos, label));
            }
        }
    }
    if let Some((start, label)) = open {
        spans.push((start, tags.len(), label));
    }
    spans
}

/// BIO tags from non-overlapping spans. Spans may come in any order.
pub fn tags_from_spans(spans: &[(usize, usize, usize)], len: usize, n_labels: usize) -> Result<Vec<usize>> {
    let mut tags = vec![crf::TAG_OUTSIDE; len];
    let mut sorted: Vec<_> = spans.to_vec();
    sorted.sort_unstable();
    let mut prev_end = 0;
    for &(start, end, label) in &sorted {
        if start >= end || end > len {
            return Err(Error::data(format!("span {start}..{end} invalid for length {len}")));
        }
        if label >= n_labels {
            return Err(Error::data(format!("label {label} out of range")));
        }
        if start < prev_end {
            return Err(Error::data(format!("span {start}..{end} overlaps a previous span")));
        }
        tags[start] = crf::tag_begin(label);
        for t in tags.iter_mut().take(end).skip(start + 1) {
            *t = crf::tag_inside(label);
        }
        prev_end = end;
    }
    Ok(tags)
}

pub fn mentions_from_tags(sentence_idx: usize, chars: &[char], tags: &[usize]) -> Result<Vec<Mention>> {
    spans_from_tags_lenient(tags, LABELS.len())
        .into_iter()
        .map(|(start, end, label)| {
            let label = Label::from_index(label)
                .ok_or_else(|| Error::data(format!("no label with index {label}")))?;
            Ok(Mention {
                sentence: sentence_idx,
                start,
                end,
                text: chars[start..end].iter().collect(),
                label,
            })
        })
        .collect()
}

pub fn tags_from_mentions(chars_len: usize, mentions: &[Mention]) -> Result<Vec<usize>> {
    let spans: Vec<_> = mentions
        .iter()
        .map(|m| (m.start, m.end, m.label.index()))
        .collect();
    tags_from_spans(&spans, chars_len, LABELS.len())
}

/// Surface-form lookup table for the fallback tagger.
#[derive(Clone, Debug, Default)]
pub struct Gazetteer {
    entries: BTreeMap<String, Label>,
}

impl Gazetteer {
    pub fn new(entries: impl IntoIterator<Item = (String, Label)>) -> Result<Self> {
        let mut map: BTreeMap<String, Label> = BTreeMap::new();
        for (surface, label) in entries {
            if surface.is_empty() {
                return Err(Error::data("empty gazetteer surface form"));
            }
            if let Some(&prev) = map.get(&surface) {
                if prev != label {
                    return Err(Error::data(format!(
                        "gazetteer surface {surface:?} maps to both {} and {}",
                        prev.as_str(),
                        label.as_str()
                    )));
                }
            }
            map.insert(surface, label);
        }
        Ok(Gazetteer { entries: map })
    }

    /// TSV rows `surface<TAB>label_type`.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (surface, label) = line.split_once('\t').ok_or_else(|| {
                Error::parse(&name, i + 1, "expected surface<TAB>label_type")
            })?;
            let label = Label::parse(label)
                .ok_or_else(|| Error::parse(&name, i + 1, format!("unknown label {label:?}")))?;
            entries.push((surface.to_string(), label));
        }
        Gazetteer::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Left-to-right longest-match scan; matched spans never overlap.
    pub fn tag(&self, sentence_idx: usize, chars: &[char]) -> Vec<Mention> {
        let keys: Vec<(Vec<char>, Label)> = self
            .entries
            .iter()
            .map(|(s, &l)| (s.chars().collect(), l))
            .collect();
        let mut mentions = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let mut best: Option<&(Vec<char>, Label)> = None;
            for entry in &keys {
                if chars[i..].starts_with(&entry.0)
                    && best.is_none_or(|b| entry.0.len() > b.0.len())
                {
                    best = Some(entry);
                }
            }
            match best {
                Some((key, label)) => {
                    mentions.push(Mention {
                        sentence: sentence_idx,
                        start: i,
                        end: i + key.len(),
                        text: key.iter().collect(),
                        label: *label,
                    });
                    i += key.len();
                }
                None => i += 1,
            }
        }
        mentions
    }
}

/// Mention source for [`tag`].
pub enum TagStrategy<'a> {
    Crf(&'a CrfModel),
    Gazetteer(&'a Gazetteer),
    Gold(&'a [Mention]),
}

/// Produces the mention list for one sentence under the chosen strategy.
pub fn tag(sentence_idx: usize, chars: &[char], strategy: &TagStrategy) -> Result<Vec<Mention>> {
    match strategy {
        TagStrategy::Crf(model) => {
            if model.n_labels != LABELS.len() {
                return Err(Error::data(format!(
                    "tagger has {} labels, mention schema needs {}",
                    model.n_labels,
                    LABELS.len()
                )));
            }
            let tags = viterbi_decode(model, chars)?;
            mentions_from_tags(sentence_idx, chars, &tags)
        }
        TagStrategy::Gazetteer(gaz) => Ok(gaz.tag(sentence_idx, chars)),
        TagStrategy::Gold(mentions) => {
            let mut out = Vec::new();
            for m in mentions.iter() {
                if m.sentence != sentence_idx {
                    continue;
                }
                m.validate(chars)?;
                out.push(m.clone());
            }
            Ok(out)
        }
    }
}
