//! k-shortest simple paths over the undirected view of the graph.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::kg::{Direction, KnowledgeGraph};

/// One edge traversal. `forward` is true when the underlying triple points
/// `from -> to`; the flag survives the undirected walk, so asymmetric
/// relations keep their orientation in downstream features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathStep {
    pub from: usize,
    pub to: usize,
    pub relation: usize,
    pub forward: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub steps: Vec<PathStep>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Node sequence including both endpoints.
    pub fn nodes(&self) -> Vec<usize> {
        let mut nodes = Vec::with_capacity(self.steps.len() + 1);
        if let Some(first) = self.steps.first() {
            nodes.push(first.from);
        }
        nodes.extend(self.steps.iter().map(|s| s.to));
        nodes
    }

    pub fn relations(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.relation).collect()
    }
}

/// Full ordering key: length, then node sequence, then relation sequence,
/// then direction flags (forward edges sort first). Everything downstream
/// relies on this order being total, so ties cannot reorder across runs.
type Key = (usize, Vec<usize>, Vec<usize>, Vec<u8>);

fn key_of(nodes: &[usize], rels: &[usize], dirs: &[u8]) -> Key {
    (rels.len(), nodes.to_vec(), rels.to_vec(), dirs.to_vec())
}

/// At most `k` simple paths `a -> b` of length ≤ `max_len` over the
/// undirected view, globally sorted by the ordering key. `a = b` yields the
/// empty list: pair features are only defined between distinct nodes.
///
/// Best-first expansion: a child partial path always has a strictly larger
/// key than its parent, so paths pop off the frontier already sorted.
pub fn k_shortest_paths(
    graph: &KnowledgeGraph,
    a: usize,
    b: usize,
    k: usize,
    max_len: usize,
) -> Result<Vec<Path>> {
    let n = graph.entity_count();
    if a >= n || b >= n {
        return Err(Error::domain(
            "k_shortest_paths",
            format!("endpoint out of range: a={a}, b={b}, entities={n}"),
        ));
    }
    if k == 0 || max_len == 0 {
        return Err(Error::domain(
            "k_shortest_paths",
            "k and max_len must be at least 1",
        ));
    }
    if a == b {
        return Ok(Vec::new());
    }

    let mut frontier: BinaryHeap<Reverse<Key>> = BinaryHeap::new();
    frontier.push(Reverse(key_of(&[a], &[], &[])));
    let mut found = Vec::new();
    while let Some(Reverse((len, nodes, rels, dirs))) = frontier.pop() {
        let last = *nodes.last().expect("partial paths are nonempty");
        if last == b {
            let steps = nodes
                .windows(2)
                .zip(rels.iter().zip(&dirs))
                .map(|(w, (&relation, &d))| PathStep {
                    from: w[0],
                    to: w[1],
                    relation,
                    forward: d == 0,
                })
                .collect();
            found.push(Path { steps });
            if found.len() == k {
                break;
            }
            continue;
        }
        if len == max_len {
            continue;
        }
        for nb in graph.neighbors(last) {
            if nodes.contains(&nb.id) {
                continue;
            }
            let mut nodes2 = nodes.clone();
            nodes2.push(nb.id);
            let mut rels2 = rels.clone();
            rels2.push(nb.relation);
            let mut dirs2 = dirs.clone();
            dirs2.push(if nb.direction == Direction::Outgoing { 0 } else { 1 });
            frontier.push(Reverse((len + 1, nodes2, rels2, dirs2)));
        }
    }
    Ok(found)
}
