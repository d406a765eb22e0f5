//! Flat-file graph ingestion and export.
//!
//! Entity TSV: `id<TAB>canonical_name<TAB>kind<TAB>alias1|alias2|...`
//! Triple TSV: `head_id<TAB>relation_name<TAB>tail_id`
//! Alias TSV:  `alias<TAB>canonical_name`

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kg::{EntityKind, EntityRecord, KnowledgeGraph, Triple};

#[derive(Clone, Copy, Debug, Default)]
pub struct IngestOptions {
    pub allow_self_relations: bool,
}

/// Summary of one ingestion run, shaped like a relation histogram.
#[derive(Clone, Debug)]
pub struct IngestReport {
    pub entity_count: usize,
    pub triple_count: usize,
    /// (relation name, triple count) in relation-id order.
    pub relation_counts: Vec<(String, u64)>,
    pub duplicates_dropped: usize,
}

impl IngestReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("entities: {}\n", self.entity_count));
        out.push_str(&format!("triples:  {}\n", self.triple_count));
        for (name, count) in &self.relation_counts {
            out.push_str(&format!("  {name}\t{count}\n"));
        }
        if self.duplicates_dropped > 0 {
            out.push_str(&format!(
                "warning: {} duplicate triple(s) dropped\n",
                self.duplicates_dropped
            ));
        }
        out
    }
}

pub fn ingest(
    entity_file: impl AsRef<Path>,
    triple_file: impl AsRef<Path>,
) -> Result<(KnowledgeGraph, IngestReport)> {
    ingest_with(entity_file, triple_file, IngestOptions::default())
}

pub fn ingest_with(
    entity_file: impl AsRef<Path>,
    triple_file: impl AsRef<Path>,
    options: IngestOptions,
) -> Result<(KnowledgeGraph, IngestReport)> {
    let entities = parse_entities(entity_file.as_ref())?;
    let (relation_names, triples) =
        parse_triples(triple_file.as_ref(), entities.len(), options)?;
    let (graph, dropped) =
        KnowledgeGraph::build(entities, relation_names, triples, options.allow_self_relations)?;
    let report = IngestReport {
        entity_count: graph.entity_count(),
        triple_count: graph.triples().len(),
        relation_counts: graph
            .relation_names()
            .iter()
            .cloned()
            .zip(graph.relation_histogram())
            .collect(),
        duplicates_dropped: dropped,
    };
    Ok((graph, report))
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn parse_entities(path: &Path) -> Result<Vec<EntityRecord>> {
    let name = path.display().to_string();
    let mut records: Vec<(usize, EntityRecord)> = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::parse(
                &name,
                lineno,
                format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(&name, lineno, format!("bad entity id {:?}", fields[0])))?;
        if fields[1].is_empty() {
            return Err(Error::parse(&name, lineno, "empty canonical name"));
        }
        let kind = EntityKind::parse(fields[2]).ok_or_else(|| {
            Error::parse(&name, lineno, format!("unknown entity kind {:?}", fields[2]))
        })?;
        let aliases = fields
            .get(3)
            .map(|f| {
                f.split('|')
                    .filter(|a| !a.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        if records.iter().any(|(_, r)| r.id == id) {
            return Err(Error::parse(&name, lineno, format!("duplicate entity id {id}")));
        }
        records.push((
            lineno,
            EntityRecord { id, canonical_name: fields[1].to_string(), kind, aliases },
        ));
    }
    records.sort_by_key(|(_, r)| r.id);
    for (i, (lineno, r)) in records.iter().enumerate() {
        if r.id != i {
            return Err(Error::parse(
                &name,
                *lineno,
                format!("entity ids must be dense 0..{}, found {}", records.len(), r.id),
            ));
        }
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

fn parse_triples(
    path: &Path,
    entity_count: usize,
    options: IngestOptions,
) -> Result<(Vec<String>, Vec<Triple>)> {
    let name = path.display().to_string();
    let mut relation_names: Vec<String> = Vec::new();
    let mut triples = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                &name,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let head: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(&name, lineno, format!("bad head id {:?}", fields[0])))?;
        let tail: usize = fields[2]
            .parse()
            .map_err(|_| Error::parse(&name, lineno, format!("bad tail id {:?}", fields[2])))?;
        for (label, id) in [("head", head), ("tail", tail)] {
            if id >= entity_count {
                return Err(Error::parse(
                    &name,
                    lineno,
                    format!("{label} id {id} not in entity registry (0..{entity_count})"),
                ));
            }
        }
        if head == tail && !options.allow_self_relations {
            return Err(Error::parse(
                &name,
                lineno,
                format!("self-relation on entity {head} rejected"),
            ));
        }
        if fields[1].is_empty() {
            return Err(Error::parse(&name, lineno, "empty relation name"));
        }
        let relation = match relation_names.iter().position(|r| r == fields[1]) {
            Some(i) => i,
            None => {
                relation_names.push(fields[1].to_string());
                relation_names.len() - 1
            }
        };
        triples.push(Triple { head, relation, tail });
    }
    Ok((relation_names, triples))
}

/// Writes the graph back to the two TSV files in canonical order: entities
/// by id, triples by (relation, head, tail). Relation-major order makes
/// re-ingestion assign the same relation ids (they are numbered by first
/// appearance), so models indexed by those ids survive a rebuild.
pub fn export(
    graph: &KnowledgeGraph,
    entity_file: impl AsRef<Path>,
    triple_file: impl AsRef<Path>,
) -> Result<()> {
    let mut ents = String::new();
    for e in graph.entities() {
        let aliases: Vec<&str> = e.aliases.iter().map(String::as_str).collect();
        ents.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.id,
            e.canonical_name,
            e.kind.as_str(),
            aliases.join("|")
        ));
    }
    let epath = entity_file.as_ref();
    fs::write(epath, ents).map_err(|e| Error::io(epath.display().to_string(), e))?;

    let mut sorted: Vec<_> = graph.triples().iter().collect();
    sorted.sort_by_key(|t| (t.relation, t.head, t.tail));
    let mut rows = String::new();
    for t in sorted {
        rows.push_str(&format!(
            "{}\t{}\t{}\n",
            t.head,
            graph.relation_name(t.relation),
            t.tail
        ));
    }
    let tpath = triple_file.as_ref();
    fs::write(tpath, rows).map_err(|e| Error::io(tpath.display().to_string(), e))?;
    Ok(())
}

/// Reads an alias table for use with [`crate::kg::NormalizeRule::AliasLookup`].
pub fn read_alias_table(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut table = BTreeMap::new();
    for (lineno, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                &name,
                lineno,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        table.insert(fields[0].to_string(), fields[1].to_string());
    }
    Ok(table)
}
