//! Distant-supervision labeling.
//!
//! Three stages. High-precision templates pull events out of structured
//! announcement sentences; those events become a small knowledge graph
//! (entity nodes wired to event nodes by role edges, names disambiguated
//! by the shared normalization rules); the graph then labels documents the
//! templates could not parse, by checking which known events' arguments
//! co-occur in the text under key-role and coverage constraints.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edag::{EventArg, EventRecord, SchemaSet};
use crate::error::{Error, Result};
use crate::kg::{normalize_name, NormalizeRule};

/// What a template slot may capture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureClass {
    Name,
    Date,
    Number,
}

impl CaptureClass {
    fn accepts(self, c: char) -> bool {
        match self {
            CaptureClass::Name => c.is_alphanumeric(),
            CaptureClass::Date => c.is_ascii_digit() || matches!(c, '年' | '月' | '日'),
            CaptureClass::Number => {
                c.is_ascii_digit() || matches!(c, '.' | ',' | '%' | '万' | '亿' | '股' | '元')
            }
        }
    }

    fn parse(s: &str) -> Option<CaptureClass> {
        match s {
            "name" => Some(CaptureClass::Name),
            "date" => Some(CaptureClass::Date),
            "number" => Some(CaptureClass::Number),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    Literal(Vec<char>),
    Slot { role: String, class: CaptureClass },
}

/// One extraction pattern for one event type: literal text interleaved
/// with `{Role:class}` slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    pub type_idx: usize,
    pub segments: Vec<Segment>,
}

impl Template {
    /// Parses a pattern against a schema set. At least one slot; every slot
    /// must name a distinct role of the event type.
    pub fn new(schemas: &SchemaSet, event_type: &str, pattern: &str) -> Result<Template> {
        let type_idx = schemas
            .index_of(event_type)
            .ok_or_else(|| Error::data(format!("unknown event type {event_type:?}")))?;
        let schema = schemas.get(type_idx);
        let mut segments = Vec::new();
        let mut literal = Vec::new();
        let mut seen = Vec::new();
        let mut chars = pattern.chars().peekable();
        while let Some(c) = chars.next() {
            if c == '}' {
                return Err(Error::data(format!("stray '}}' in template {pattern:?}")));
            }
            if c != '{' {
                literal.push(c);
                continue;
            }
            if !literal.is_empty() {
                segments.push(Segment::Literal(std::mem::take(&mut literal)));
            }
            let mut slot = String::new();
            loop {
                match chars.next() {
                    Some('}') => break,
                    Some(c) => slot.push(c),
                    None => {
                        return Err(Error::data(format!("unclosed '{{' in template {pattern:?}")))
                    }
                }
            }
            let (role, class) = slot
                .split_once(':')
                .ok_or_else(|| Error::data(format!("slot {{{slot}}} is not Role:class")))?;
            let class = CaptureClass::parse(class)
                .ok_or_else(|| Error::data(format!("unknown capture class {class:?}")))?;
            if schema.role_index(role).is_none() {
                return Err(Error::data(format!(
                    "slot role {role:?} is not a role of {}",
                    schema.name
                )));
            }
            if seen.contains(&role.to_string()) {
                return Err(Error::data(format!("role {role:?} captured twice")));
            }
            seen.push(role.to_string());
            segments.push(Segment::Slot { role: role.to_string(), class });
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        if seen.is_empty() {
            return Err(Error::data(format!("template {pattern:?} has no slots")));
        }
        Ok(Template { type_idx, segments })
    }

    /// Parses a template file: one `<Type>\t<pattern>` per line, `#`
    /// comments and blank lines skipped.
    pub fn parse_file(schemas: &SchemaSet, text: &str, path: &str) -> Result<Vec<Template>> {
        let mut templates = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (event_type, pattern) = line.split_once('\t').ok_or_else(|| {
                Error::parse(path, idx + 1, "expected <EventType>\\t<pattern>")
            })?;
            let template = Template::new(schemas, event_type.trim(), pattern)
                .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
            templates.push(template);
        }
        Ok(templates)
    }
}

/// Character span of an argument: sentence index plus half-open code-point
/// offsets within it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpan {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
}

/// How a labeled event was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Template,
    Ds,
}

/// An event found in a document, with where each argument sits in the text.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEvent {
    pub record: EventRecord,
    pub source: Provenance,
    /// One entry per schema role, aligned with the record's role order.
    pub spans: Vec<Option<ArgSpan>>,
}

/// Matches one template's segments at `start`; returns the end offset and
/// captures. Slots take the longest class-valid run that lets the rest of
/// the pattern match (backtracking, so adjacent slots stay well-defined).
fn match_at(
    segments: &[Segment],
    chars: &[char],
    start: usize,
) -> Option<(usize, Vec<(String, (usize, usize))>)> {
    match segments.first() {
        None => Some((start, Vec::new())),
        Some(Segment::Literal(lit)) => {
            if chars[start..].starts_with(lit) {
                match_at(&segments[1..], chars, start + lit.len())
            } else {
                None
            }
        }
        Some(Segment::Slot { role, class }) => {
            let mut run = start;
            while run < chars.len() && class.accepts(chars[run]) {
                run += 1;
            }
            for end in (start + 1..=run).rev() {
                if let Some((fin, mut caps)) = match_at(&segments[1..], chars, end) {
                    caps.push((role.clone(), (start, end)));
                    return Some((fin, caps));
                }
            }
            None
        }
    }
}

/// Runs every template over every sentence, taking leftmost non-overlapping
/// matches per template per sentence. Each match becomes a candidate event
/// record whose arguments are the slot captures.
pub fn match_templates(
    sentences: &[String],
    templates: &[Template],
    schemas: &SchemaSet,
) -> Result<Vec<LabeledEvent>> {
    let char_sents: Vec<Vec<char>> = sentences.iter().map(|s| s.chars().collect()).collect();
    let mut out = Vec::new();
    for template in templates {
        let schema = schemas.get(template.type_idx);
        for (sent_idx, chars) in char_sents.iter().enumerate() {
            let mut pos = 0;
            while pos < chars.len() {
                let hit = (pos..chars.len()).find_map(|i| {
                    match_at(&template.segments, chars, i).map(|(end, caps)| (i, end, caps))
                });
                let Some((_, end, caps)) = hit else { break };
                let mut args: Vec<Option<EventArg>> = vec![None; schema.n_roles()];
                let mut spans: Vec<Option<ArgSpan>> = vec![None; schema.n_roles()];
                for (role, (s, e)) in caps {
                    let r = schema.role_index(&role).expect("validated at parse");
                    let text: String = chars[s..e].iter().collect();
                    args[r] = Some(EventArg::new(&text));
                    spans[r] = Some(ArgSpan { sentence: sent_idx, start: s, end: e });
                }
                out.push(LabeledEvent {
                    record: EventRecord::new(schema, args)?,
                    source: Provenance::Template,
                    spans,
                });
                pos = end;
            }
        }
    }
    Ok(out)
}

/// One template-extracted event inside the DS graph: role edges point at
/// entity nodes; the source document is kept so labeling can refuse to
/// feed a document its own events back.
#[derive(Clone, Debug)]
pub struct DsEventNode {
    pub type_idx: usize,
    pub source_doc: String,
    /// (role index, entity node) per non-null argument.
    pub args: Vec<(usize, usize)>,
}

/// Entity and event nodes extracted by templates, with role-typed edges.
/// Its relation vocabulary is kept disjoint from the main graph's.
#[derive(Clone, Debug)]
pub struct DsKnowledgeGraph {
    entities: Vec<String>,
    index: HashMap<String, usize>,
    events: Vec<DsEventNode>,
    relations: Vec<String>,
    rules: Vec<NormalizeRule>,
}

impl DsKnowledgeGraph {
    /// Builds the graph from (source document, record) pairs. Entity names
    /// are normalized, so one real-world entity written differently across
    /// announcements collapses to one node. Role-derived relation names are
    /// checked against the main graph's vocabulary.
    pub fn build(
        records: &[(String, EventRecord)],
        schemas: &SchemaSet,
        rules: &[NormalizeRule],
        main_relations: &[String],
    ) -> Result<DsKnowledgeGraph> {
        let mut graph = DsKnowledgeGraph {
            entities: Vec::new(),
            index: HashMap::new(),
            events: Vec::new(),
            relations: Vec::new(),
            rules: rules.to_vec(),
        };
        for (doc_id, record) in records {
            let (type_idx, schema) = record.validate(schemas)?;
            let mut args = Vec::new();
            for (role_idx, role) in schema.roles().iter().enumerate() {
                let Some(arg) = record.arg(role) else { continue };
                let relation = format!("{}.{}", schema.code, role);
                if main_relations.contains(&relation) {
                    return Err(Error::data(format!(
                        "relation {relation:?} collides with the main graph vocabulary"
                    )));
                }
                if !graph.relations.contains(&relation) {
                    graph.relations.push(relation);
                }
                let name = normalize_name(&arg.text, rules);
                let entity = match graph.index.get(&name) {
                    Some(&i) => i,
                    None => {
                        graph.entities.push(name.clone());
                        graph.index.insert(name, graph.entities.len() - 1);
                        graph.entities.len() - 1
                    }
                };
                args.push((role_idx, entity));
            }
            graph.events.push(DsEventNode { type_idx, source_doc: doc_id.clone(), args });
        }
        Ok(graph)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn edge_count(&self) -> usize {
        self.events.iter().map(|e| e.args.len()).sum()
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn entity_name(&self, i: usize) -> &str {
        &self.entities[i]
    }

    pub fn events(&self) -> &[DsEventNode] {
        &self.events
    }
}

/// Coverage threshold for keeping a distantly supervised event.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    pub theta: f64,
}

impl Default for LabelingConfig {
    fn default() -> LabelingConfig {
        LabelingConfig { theta: 0.5 }
    }
}

impl LabelingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.theta > 0.0 && self.theta <= 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("theta {} outside (0, 1]", self.theta)))
        }
    }
}

/// Longest span we try when hunting for an entity surface form; generous
/// slack over the normalized name covers stripped prefixes and suffixes.
const SPAN_SLACK: usize = 8;

/// Finds the leftmost span whose normalization equals `target`, taking the
/// longest such span at that position (the maximal mention).
fn find_surface(
    sentences: &[Vec<char>],
    target: &str,
    rules: &[NormalizeRule],
) -> Option<(ArgSpan, String)> {
    let cap = target.chars().count() + SPAN_SLACK;
    for (sent_idx, chars) in sentences.iter().enumerate() {
        for start in 0..chars.len() {
            let mut best = None;
            for end in start + 1..=chars.len().min(start + cap) {
                let surface: String = chars[start..end].iter().collect();
                if normalize_name(&surface, rules) == target {
                    best = Some((ArgSpan { sentence: sent_idx, start, end }, surface));
                }
            }
            if best.is_some() {
                return best;
            }
        }
    }
    None
}

/// Labels one document against the DS graph: an event is kept iff every
/// key role's argument is found in the text and the found/total role ratio
/// clears the threshold. Kept records carry only the arguments located in
/// this document, with their offsets. Events sourced from the document
/// itself are skipped.
pub fn ds_label(
    doc_id: &str,
    sentences: &[String],
    graph: &DsKnowledgeGraph,
    schemas: &SchemaSet,
    cfg: &LabelingConfig,
) -> Result<Vec<LabeledEvent>> {
    cfg.validate()?;
    let chars: Vec<Vec<char>> = sentences.iter().map(|s| s.chars().collect()).collect();
    let mut out: Vec<LabeledEvent> = Vec::new();
    for event in graph.events() {
        if event.source_doc == doc_id {
            continue;
        }
        let schema = schemas.get(event.type_idx);
        let mut args: Vec<Option<EventArg>> = vec![None; schema.n_roles()];
        let mut spans: Vec<Option<ArgSpan>> = vec![None; schema.n_roles()];
        let mut found = 0usize;
        for &(role_idx, entity) in &event.args {
            let target = graph.entity_name(entity);
            if let Some((span, surface)) = find_surface(&chars, target, &graph.rules) {
                args[role_idx] = Some(EventArg::new(&surface));
                spans[role_idx] = Some(span);
                found += 1;
            }
        }
        let keys_ok = (0..schema.n_roles())
            .filter(|&r| schema.is_key(r))
            .all(|r| args[r].is_some());
        if !keys_ok {
            continue;
        }
        if (found as f64) / (schema.n_roles() as f64) < cfg.theta {
            continue;
        }
        let record = EventRecord::new(schema, args)?;
        if out.iter().any(|e| e.record == record) {
            continue;
        }
        out.push(LabeledEvent { record, source: Provenance::Ds, spans });
    }
    Ok(out)
}

/// The full pipeline over a corpus: template-match every document, build
/// the DS graph from all matches, then distantly label every document
/// (never from its own events). Per-document output is template matches
/// first, then DS events not already found by a template.
pub fn label_corpus(
    docs: &[(String, Vec<String>)],
    templates: &[Template],
    schemas: &SchemaSet,
    rules: &[NormalizeRule],
    main_relations: &[String],
    cfg: &LabelingConfig,
) -> Result<Vec<Vec<LabeledEvent>>> {
    cfg.validate()?;
    let matched: Vec<Vec<LabeledEvent>> = docs
        .par_iter()
        .map(|(_, sentences)| match_templates(sentences, templates, schemas))
        .collect::<Result<_>>()?;
    let mut seed = Vec::new();
    for ((doc_id, _), events) in docs.iter().zip(&matched) {
        for ev in events {
            seed.push((doc_id.clone(), ev.record.clone()));
        }
    }
    let graph = DsKnowledgeGraph::build(&seed, schemas, rules, main_relations)?;
    docs.par_iter()
        .zip(matched)
        .map(|((doc_id, sentences), mut events)| {
            let extra = ds_label(doc_id, sentences, &graph, schemas, cfg)?;
            for ev in extra {
                if !events.iter().any(|have| have.record == ev.record) {
                    events.push(ev);
                }
            }
            Ok(events)
        })
        .collect()
}
