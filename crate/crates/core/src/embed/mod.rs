//! Graph embeddings: a relation-aware self-attention layer trained on link
//! prediction, plus the one-hot shortest-path pair encoder.

pub mod gat;
pub mod onehot;
pub mod train;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::numeric::params::{ParamId, ParamStore};

pub use gat::{attend, attend_backward, attend_forward, pair_combine, relation_embed, GatIds};
pub use onehot::{encode_pair_onehot, DEFAULT_PATH_COUNT, DEFAULT_PATH_MAX_LEN};
pub use train::{predict_relation, train_link_prediction, LinkExample};

#[derive(Clone, Copy, Debug)]
pub struct EmbedConfig {
    /// Embedding width F.
    pub embed_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub negatives_per_positive: usize,
    /// Focal-loss focusing exponent.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            embed_dim: 16,
            epochs: 200,
            lr: 0.05,
            negatives_per_positive: 1,
            lambda: 2.0,
            seed: 7,
        }
    }
}

/// Handles for every trainable tensor of the embedding model.
#[derive(Clone, Copy, Debug)]
pub struct ModelIds {
    pub node_table: ParamId,
    pub gat: GatIds,
    pub classifier: ParamId,
}

/// Node table + attention layer + link classifier.
#[derive(Clone, Debug)]
pub struct EmbeddingModel {
    pub store: ParamStore,
    pub embed_dim: usize,
    pub relation_count: usize,
    pub node_count: usize,
    pub seed: u64,
}

impl EmbeddingModel {
    /// Seeded initialization: node table and weights uniform in (−0.1, 0.1),
    /// layer-norm gain 1 / bias 0.
    pub fn init(graph: &KnowledgeGraph, cfg: &EmbedConfig) -> Result<Self> {
        if cfg.embed_dim == 0 {
            return Err(Error::domain("embed_init", "embed_dim must be positive"));
        }
        if graph.entity_count() == 0 {
            return Err(Error::domain("embed_init", "graph has no entities"));
        }
        let f = cfg.embed_dim;
        let s = graph.relation_count();
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        store.register_uniform("node_table", graph.entity_count(), f, 0.1, &mut rng)?;
        GatIds::register(&mut store, f, s, &mut rng)?;
        store.register_uniform("link.classifier", s + 1, 2 * f, 0.1, &mut rng)?;
        Ok(EmbeddingModel {
            store,
            embed_dim: f,
            relation_count: s,
            node_count: graph.entity_count(),
            seed: cfg.seed,
        })
    }

    pub fn ids(&self) -> Result<ModelIds> {
        Ok(ModelIds {
            node_table: self
                .store
                .lookup("node_table")
                .ok_or_else(|| Error::data("node_table missing from store"))?,
            gat: GatIds::lookup(&self.store)?,
            classifier: self
                .store
                .lookup("link.classifier")
                .ok_or_else(|| Error::data("link.classifier missing from store"))?,
        })
    }

    /// Post-attention embedding h_i' for one node.
    pub fn attend_node(&self, graph: &KnowledgeGraph, i: usize) -> Result<Vec<f64>> {
        let ids = self.ids()?;
        let table = self.store.value(ids.node_table);
        let (inputs, _) = neighbor_inputs(graph, i, |j| table.row(j).to_vec(), self.relation_count);
        Ok(attend(&self.store, ids.gat, table.row(i), &inputs)?.0)
    }
}

/// Builds attention inputs for node `i`: (h_j, relation one-hot) per
/// neighbor plus the neighbor id list for gradient routing. An isolated
/// node gets a synthetic self-loop on the reserved self channel (index s).
pub fn neighbor_inputs(
    graph: &KnowledgeGraph,
    i: usize,
    embed_of: impl Fn(usize) -> Vec<f64>,
    s: usize,
) -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<usize>) {
    let neighbors = graph.neighbors(i);
    if neighbors.is_empty() {
        let mut r = vec![0.0; s + 1];
        r[s] = 1.0;
        return (vec![(embed_of(i), r)], vec![i]);
    }
    let mut inputs = Vec::with_capacity(neighbors.len());
    let mut ids = Vec::with_capacity(neighbors.len());
    for nb in neighbors {
        let mut r = vec![0.0; s + 1];
        r[nb.relation] = 1.0;
        inputs.push((embed_of(nb.id), r));
        ids.push(nb.id);
    }
    (inputs, ids)
}

/// Recomputes the post-attention embedding of every node. The model is
/// read-only here, so nodes fan out across threads; output order is by id.
pub fn export_embeddings(model: &EmbeddingModel, graph: &KnowledgeGraph) -> Result<Vec<Vec<f64>>> {
    if graph.entity_count() != model.node_count {
        return Err(Error::data(format!(
            "model built for {} nodes, graph has {}",
            model.node_count,
            graph.entity_count()
        )));
    }
    (0..model.node_count)
        .into_par_iter()
        .map(|i| model.attend_node(graph, i))
        .collect()
}

/// TSV rendering: `entity_id<TAB>v1,v2,...,vF`, full f64 round-trip
/// precision, rows by entity id.
pub fn render_embeddings_tsv(table: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for (i, v) in table.iter().enumerate() {
        let cells: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&format!("{i}\t{}\n", cells.join(",")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityKind, EntityRecord, Triple};
    use std::collections::BTreeSet;

    pub(crate) fn line_graph(n: usize, relations: usize) -> KnowledgeGraph {
        let entities = (0..n)
            .map(|id| EntityRecord {
                id,
                canonical_name: format!("n{id}"),
                kind: EntityKind::Company,
                aliases: BTreeSet::new(),
            })
            .collect();
        let names = (0..relations).map(|r| format!("r{r}")).collect();
        let triples = (0..n.saturating_sub(1))
            .map(|i| Triple { head: i, relation: i % relations, tail: i + 1 })
            .collect();
        KnowledgeGraph::build(entities, names, triples, false).unwrap().0
    }

    #[test]
    fn isolated_node_gets_self_loop() {
        let entities = (0..2)
            .map(|id| EntityRecord {
                id,
                canonical_name: format!("n{id}"),
                kind: EntityKind::Company,
                aliases: BTreeSet::new(),
            })
            .collect();
        let g = KnowledgeGraph::build(entities, vec!["r".into()], vec![], false)
            .unwrap()
            .0;
        let (inputs, ids) = neighbor_inputs(&g, 1, |j| vec![j as f64], 1);
        assert_eq!(ids, vec![1]);
        assert_eq!(inputs[0].1, vec![0.0, 1.0]);
    }

    #[test]
    fn export_covers_every_node_and_is_stable() {
        let g = line_graph(5, 2);
        let cfg = EmbedConfig { embed_dim: 4, ..Default::default() };
        let model = EmbeddingModel::init(&g, &cfg).unwrap();
        let a = export_embeddings(&model, &g).unwrap();
        let b = export_embeddings(&model, &g).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, b);
        assert_eq!(render_embeddings_tsv(&a), render_embeddings_tsv(&b));
    }

    #[test]
    fn exported_vector_is_attend_recomputed() {
        let g = line_graph(4, 2);
        let cfg = EmbedConfig { embed_dim: 3, ..Default::default() };
        let model = EmbeddingModel::init(&g, &cfg).unwrap();
        let table = export_embeddings(&model, &g).unwrap();
        for i in 0..4 {
            assert_eq!(table[i], model.attend_node(&g, i).unwrap());
        }
    }

    #[test]
    fn tsv_round_trips_floats_exactly() {
        let tsv = render_embeddings_tsv(&[vec![0.1 + 0.2, -1.5e-17]]);
        let line = tsv.lines().next().unwrap();
        let cells: Vec<f64> = line
            .split('\t')
            .nth(1)
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(cells[0], 0.1 + 0.2);
        assert_eq!(cells[1], -1.5e-17);
    }
}
