//! One-hot path features for node pairs.
//!
//! The feature for (a, b) is k blocks of S entries. Block p is the sum of
//! relation one-hots along the p-th shortest path between a and b; when
//! fewer than k paths exist the remaining blocks are all −1, which keeps
//! "no path" distinguishable from "path with no occurrences of a relation".

use crate::error::Result;
use crate::kg::{k_shortest_paths, KnowledgeGraph};

pub const DEFAULT_PATH_COUNT: usize = 3;
pub const DEFAULT_PATH_MAX_LEN: usize = 4;

/// Encodes the pair (a, b) as a k·S vector.
pub fn encode_pair_onehot(
    graph: &KnowledgeGraph,
    a: usize,
    b: usize,
    k: usize,
    max_len: usize,
) -> Result<Vec<f64>> {
    let s = graph.relation_count();
    let paths = k_shortest_paths(graph, a, b, k, max_len)?;
    let mut out = Vec::with_capacity(k * s);
    for p in &paths {
        let mut block = vec![0.0; s];
        for step in &p.steps {
            block[step.relation] += 1.0;
        }
        out.extend(block);
    }
    for _ in paths.len()..k {
        out.extend(std::iter::repeat(-1.0).take(s));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityKind, EntityRecord, Triple};
    use std::collections::BTreeSet;

    fn graph(n: usize, names: &[&str], edges: &[(usize, usize, usize)]) -> KnowledgeGraph {
        let entities = (0..n)
            .map(|id| EntityRecord {
                id,
                canonical_name: format!("n{id}"),
                kind: EntityKind::Company,
                aliases: BTreeSet::new(),
            })
            .collect();
        let triples = edges
            .iter()
            .map(|&(h, r, t)| Triple { head: h, relation: r, tail: t })
            .collect();
        KnowledgeGraph::build(
            entities,
            names.iter().map(|s| s.to_string()).collect(),
            triples,
            false,
        )
        .unwrap()
        .0
    }

    const RELS: [&str; 7] = [
        "share_holder",
        "pledge",
        "branch",
        "invest",
        "creditor",
        "legal_person",
        "managing_member",
    ];

    #[test]
    fn disconnected_pair_is_all_padding() {
        let g = graph(3, &RELS, &[(0, 0, 1)]);
        let v = encode_pair_onehot(&g, 0, 2, 2, 4).unwrap();
        assert_eq!(v.len(), 14);
        assert!(v.iter().all(|&x| x == -1.0));
    }

    #[test]
    fn direct_edge_is_single_one_hot() {
        let g = graph(2, &RELS, &[(0, 0, 1)]);
        let v = encode_pair_onehot(&g, 0, 1, 1, 4).unwrap();
        let mut want = vec![0.0; 7];
        want[0] = 1.0;
        assert_eq!(v, want);
    }

    #[test]
    fn two_route_fixture_blocks() {
        // route 1: 0 -branch-> 1 (length 1)
        // route 2: 0 -share_holder-> 2 -pledge-> 1 (length 2)
        let g = graph(3, &RELS, &[(0, 2, 1), (0, 0, 2), (2, 1, 1)]);
        let v = encode_pair_onehot(&g, 0, 1, 2, 4).unwrap();
        let mut b1 = vec![0.0; 7];
        b1[2] = 1.0; // branch
        let mut b2 = vec![0.0; 7];
        b2[0] = 1.0; // share_holder
        b2[1] = 1.0; // pledge
        assert_eq!(&v[..7], &b1[..]);
        assert_eq!(&v[7..], &b2[..]);
    }

    #[test]
    fn padding_exactly_when_paths_missing() {
        let g = graph(3, &RELS, &[(0, 2, 1), (0, 0, 2), (2, 1, 1)]);
        // two paths exist; k=4 pads the last two blocks
        let v = encode_pair_onehot(&g, 0, 1, 4, 4).unwrap();
        assert_eq!(v.len(), 28);
        assert!(v[..14].iter().all(|&x| x >= 0.0));
        assert!(v[14..].iter().all(|&x| x == -1.0));
    }

    #[test]
    fn block_sum_equals_path_length() {
        let g = graph(
            6,
            &RELS,
            &[(0, 0, 2), (2, 3, 3), (3, 5, 1), (0, 2, 4), (4, 2, 1), (0, 6, 1)],
        );
        let paths = k_shortest_paths(&g, 0, 1, 3, 4).unwrap();
        let v = encode_pair_onehot(&g, 0, 1, 3, 4).unwrap();
        for (p, block) in paths.iter().zip(v.chunks(7)) {
            let sum: f64 = block.iter().sum();
            assert_eq!(sum as usize, p.len());
        }
    }
}
