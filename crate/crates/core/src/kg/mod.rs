//! Knowledge graph store: entity registry, relation kinds, triple set, and
//! adjacency indexes. Immutable after construction; queries are read-only.

pub mod ingest;
pub mod normalize;
pub mod paths;

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

pub use ingest::{export, ingest, ingest_with, read_alias_table, IngestOptions, IngestReport};
pub use normalize::{normalize_name, NormalizeRule};
pub use paths::{k_shortest_paths, Path, PathStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Company,
    Person,
    Institution,
}

impl EntityKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "company" => Some(EntityKind::Company),
            "person" => Some(EntityKind::Person),
            "institution" => Some(EntityKind::Institution),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Company => "company",
            EntityKind::Person => "person",
            EntityKind::Institution => "institution",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EntityRecord {
    pub id: usize,
    pub canonical_name: String,
    pub kind: EntityKind,
    /// Sorted so exports are stable.
    pub aliases: BTreeSet<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Outgoing,
    Incoming,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub id: usize,
    pub relation: usize,
    pub direction: Direction,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    entities: Vec<EntityRecord>,
    relation_names: Vec<String>,
    /// Sorted by (head, relation, tail), duplicates removed.
    triples: Vec<Triple>,
    outgoing: Vec<Vec<(usize, usize)>>,
    incoming: Vec<Vec<(usize, usize)>>,
    name_index: HashMap<String, usize>,
    rules: Vec<NormalizeRule>,
}

impl KnowledgeGraph {
    /// Validates all registry invariants and builds both adjacency indexes.
    /// Duplicate triples are dropped; the count of dropped duplicates is
    /// returned alongside the graph.
    pub fn build(
        entities: Vec<EntityRecord>,
        relation_names: Vec<String>,
        mut triples: Vec<Triple>,
        allow_self_relations: bool,
    ) -> Result<(Self, usize)> {
        let n = entities.len();
        for (i, e) in entities.iter().enumerate() {
            if e.id != i {
                return Err(Error::data(format!(
                    "entity ids must be dense 0..{}, found {} at position {i}",
                    n, e.id
                )));
            }
            if e.canonical_name.is_empty() {
                return Err(Error::data(format!("entity {} has empty name", e.id)));
            }
        }
        {
            let mut seen = HashMap::new();
            for (i, r) in relation_names.iter().enumerate() {
                if let Some(prev) = seen.insert(r.clone(), i) {
                    return Err(Error::data(format!(
                        "relation name {r:?} registered twice (ids {prev} and {i})"
                    )));
                }
            }
        }
        let mut name_index = HashMap::new();
        for e in &entities {
            if let Some(&prev) = name_index.get(&e.canonical_name) {
                if prev != e.id {
                    return Err(Error::data(format!(
                        "name {:?} claimed by entities {} and {}",
                        e.canonical_name, prev, e.id
                    )));
                }
            }
            name_index.insert(e.canonical_name.clone(), e.id);
            for a in &e.aliases {
                if let Some(&prev) = name_index.get(a) {
                    if prev != e.id {
                        return Err(Error::data(format!(
                            "alias {a:?} claimed by entities {prev} and {}",
                            e.id
                        )));
                    }
                }
                name_index.insert(a.clone(), e.id);
            }
        }
        for t in &triples {
            if t.head >= n || t.tail >= n {
                return Err(Error::data(format!(
                    "triple ({}, {}, {}) references entity outside 0..{n}",
                    t.head, t.relation, t.tail
                )));
            }
            if t.relation >= relation_names.len() {
                return Err(Error::data(format!(
                    "triple references unregistered relation {}",
                    t.relation
                )));
            }
            if t.head == t.tail && !allow_self_relations {
                return Err(Error::data(format!(
                    "self-relation on entity {} rejected",
                    t.head
                )));
            }
        }
        triples.sort();
        let before = triples.len();
        triples.dedup();
        let dropped = before - triples.len();

        let mut outgoing = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        for t in &triples {
            outgoing[t.head].push((t.tail, t.relation));
            incoming[t.tail].push((t.head, t.relation));
        }
        for adj in outgoing.iter_mut().chain(incoming.iter_mut()) {
            adj.sort();
        }

        // alias resolution participates in name normalization by default
        let mut alias_map = std::collections::BTreeMap::new();
        for e in &entities {
            for a in &e.aliases {
                alias_map.insert(a.clone(), e.canonical_name.clone());
            }
        }
        let rules = vec![
            NormalizeRule::WhitespaceFold,
            NormalizeRule::AliasLookup(alias_map),
        ];

        Ok((
            KnowledgeGraph {
                entities,
                relation_names,
                triples,
                outgoing,
                incoming,
                name_index,
                rules,
            },
            dropped,
        ))
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entities(&self) -> &[EntityRecord] {
        &self.entities
    }

    pub fn entity(&self, id: usize) -> &EntityRecord {
        &self.entities[id]
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn relation_name(&self, id: usize) -> &str {
        &self.relation_names[id]
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relation_names.iter().position(|r| r == name)
    }

    /// Extra normalization rules applied before `resolve` lookups, replacing
    /// the defaults (whitespace fold plus the registry alias table).
    pub fn set_normalize_rules(&mut self, rules: Vec<NormalizeRule>) {
        self.rules = rules;
    }

    pub fn normalize_rules(&self) -> &[NormalizeRule] {
        &self.rules
    }

    /// Entity lookup by surface form: exact name-index hit first, then a hit
    /// after normalization. Returns none when both miss.
    pub fn resolve(&self, name: &str) -> Option<usize> {
        if let Some(&id) = self.name_index.get(name) {
            return Some(id);
        }
        let normalized = normalize_name(name, &self.rules);
        self.name_index.get(&normalized).copied()
    }

    /// Union of outgoing and incoming edges at `i`, sorted by
    /// (neighbor id, relation id, direction).
    pub fn neighbors(&self, i: usize) -> Vec<Neighbor> {
        let mut out: Vec<Neighbor> = self.outgoing[i]
            .iter()
            .map(|&(id, relation)| Neighbor {
                id,
                relation,
                direction: Direction::Outgoing,
            })
            .chain(self.incoming[i].iter().map(|&(id, relation)| Neighbor {
                id,
                relation,
                direction: Direction::Incoming,
            }))
            .collect();
        out.sort_by_key(|n| (n.id, n.relation, n.direction));
        out
    }

    /// True when some triple `head -> tail` exists under any relation.
    pub fn has_triple(&self, head: usize, tail: usize) -> bool {
        self.outgoing[head].iter().any(|&(t, _)| t == tail)
    }

    /// Per-relation triple counts in relation-id order.
    pub fn relation_histogram(&self) -> Vec<u64> {
        let mut hist = vec![0u64; self.relation_names.len()];
        for t in &self.triples {
            hist[t.relation] += 1;
        }
        hist
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tiny_graph() -> KnowledgeGraph {
        let entities = vec![
            EntityRecord {
                id: 0,
                canonical_name: "Alpha".into(),
                kind: EntityKind::Company,
                aliases: ["A Corp".to_string()].into_iter().collect(),
            },
            EntityRecord {
                id: 1,
                canonical_name: "Beta".into(),
                kind: EntityKind::Company,
                aliases: BTreeSet::new(),
            },
            EntityRecord {
                id: 2,
                canonical_name: "Carol".into(),
                kind: EntityKind::Person,
                aliases: BTreeSet::new(),
            },
        ];
        let relations = vec!["share_holder".to_string(), "branch".to_string()];
        let triples = vec![
            Triple { head: 2, relation: 0, tail: 0 },
            Triple { head: 0, relation: 1, tail: 1 },
        ];
        KnowledgeGraph::build(entities, relations, triples, false)
            .unwrap()
            .0
    }

    #[test]
    fn build_rejects_sparse_ids() {
        let entities = vec![EntityRecord {
            id: 1,
            canonical_name: "X".into(),
            kind: EntityKind::Company,
            aliases: BTreeSet::new(),
        }];
        assert!(KnowledgeGraph::build(entities, vec![], vec![], false).is_err());
    }

    #[test]
    fn build_rejects_self_relation_by_default() {
        let entities = vec![EntityRecord {
            id: 0,
            canonical_name: "X".into(),
            kind: EntityKind::Company,
            aliases: BTreeSet::new(),
        }];
        let triples = vec![Triple { head: 0, relation: 0, tail: 0 }];
        assert!(KnowledgeGraph::build(entities.clone(), vec!["r".into()], triples.clone(), false).is_err());
        assert!(KnowledgeGraph::build(entities, vec!["r".into()], triples, true).is_ok());
    }

    #[test]
    fn duplicate_triples_dedupe_with_count() {
        let entities = vec![
            EntityRecord {
                id: 0,
                canonical_name: "X".into(),
                kind: EntityKind::Company,
                aliases: BTreeSet::new(),
            },
            EntityRecord {
                id: 1,
                canonical_name: "Y".into(),
                kind: EntityKind::Company,
                aliases: BTreeSet::new(),
            },
        ];
        let t = Triple { head: 0, relation: 0, tail: 1 };
        let (g, dropped) =
            KnowledgeGraph::build(entities, vec!["r".into()], vec![t, t, t], false).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(g.triples().len(), 1);
    }

    #[test]
    fn neighbors_union_with_flags() {
        let g = tiny_graph();
        let n = g.neighbors(0);
        assert_eq!(
            n,
            vec![
                Neighbor { id: 1, relation: 1, direction: Direction::Outgoing },
                Neighbor { id: 2, relation: 0, direction: Direction::Incoming },
            ]
        );
        assert!(g.neighbors(1).len() == 1 && g.neighbors(2).len() == 1);
    }

    #[test]
    fn degree_matches_adjacency_row_sums() {
        let g = tiny_graph();
        // adjacency matrix over the undirected view
        let n = g.entity_count();
        let mut adj = vec![vec![0u32; n]; n];
        for t in g.triples() {
            adj[t.head][t.tail] += 1;
            adj[t.tail][t.head] += 1;
        }
        for i in 0..n {
            let row_sum: u32 = adj[i].iter().sum();
            assert_eq!(g.neighbors(i).len() as u32, row_sum);
        }
    }

    #[test]
    fn resolve_canonical_alias_unknown() {
        let g = tiny_graph();
        assert_eq!(g.resolve("Alpha"), Some(0));
        assert_eq!(g.resolve("A Corp"), Some(0));
        assert_eq!(g.resolve("  A   Corp "), Some(0));
        assert_eq!(g.resolve("Delta"), None);
    }

    #[test]
    fn alias_collision_rejected() {
        let entities = vec![
            EntityRecord {
                id: 0,
                canonical_name: "X".into(),
                kind: EntityKind::Company,
                aliases: ["Z".to_string()].into_iter().collect(),
            },
            EntityRecord {
                id: 1,
                canonical_name: "Y".into(),
                kind: EntityKind::Company,
                aliases: ["Z".to_string()].into_iter().collect(),
            },
        ];
        assert!(KnowledgeGraph::build(entities, vec![], vec![], false).is_err());
    }

    #[test]
    fn histogram_counts_by_relation() {
        let g = tiny_graph();
        assert_eq!(g.relation_histogram(), vec![1, 1]);
    }

    #[test]
    fn has_triple_is_directional() {
        let g = tiny_graph();
        assert!(g.has_triple(2, 0));
        assert!(!g.has_triple(0, 2));
    }
}
