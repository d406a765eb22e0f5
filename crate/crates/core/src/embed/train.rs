//! Link-prediction training for the attention embeddings.
//!
//! Each epoch scores every graph triple plus freshly sampled non-edges with
//! a linear classifier over the concatenated post-attention embeddings, and
//! takes one full-batch gradient step on the mean focal loss. Class weights
//! come from relation frequencies, with the negative class counted like a
//! relation.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::numeric::loss::{class_weights, focal_loss};
use crate::numeric::matrix::Matrix;
use crate::numeric::ops::concat;
use crate::numeric::params::ParamStore;

use super::gat::{attend_backward, attend_forward, AttendCache};
use super::{neighbor_inputs, EmbedConfig, EmbeddingModel, ModelIds};

/// One classification example: `label` is a relation id for a positive pair
/// and `S` (the relation count) for a sampled non-edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkExample {
    pub head: usize,
    pub tail: usize,
    pub label: usize,
}

/// softmax(classifier · [h_i' ; h_j']); the last class means "no relation".
pub fn predict_relation(h_i: &[f64], h_j: &[f64], classifier: &Matrix) -> Result<Vec<f64>> {
    crate::numeric::ops::softmax(&classifier.matvec(&concat(h_i, h_j))?)
}

/// Uniformly sampled ordered pairs with no triple head -> tail. Fails when
/// the graph is so dense that rejection sampling cannot find enough.
pub fn sample_negatives(
    graph: &KnowledgeGraph,
    count: usize,
    rng: &mut StdRng,
) -> Result<Vec<LinkExample>> {
    let n = graph.entity_count();
    let s = graph.relation_count();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let budget = 100 * count.max(16);
    while out.len() < count {
        attempts += 1;
        if attempts > budget {
            return Err(Error::data(format!(
                "could not sample {count} non-edges in {budget} attempts; graph too dense"
            )));
        }
        let head = rng.random_range(0..n);
        let tail = rng.random_range(0..n);
        if head == tail || graph.has_triple(head, tail) {
            continue;
        }
        out.push(LinkExample { head, tail, label: s });
    }
    Ok(out)
}

/// Forward caches for every node, in id order, plus the neighbor id lists
/// used to route node-table gradients.
fn forward_all_nodes(
    store: &ParamStore,
    ids: &ModelIds,
    graph: &KnowledgeGraph,
) -> Result<Vec<(AttendCache, Vec<usize>)>> {
    let s = graph.relation_count();
    let table = store.value(ids.node_table);
    (0..graph.entity_count())
        .map(|i| {
            let (inputs, nb_ids) = neighbor_inputs(graph, i, |j| table.row(j).to_vec(), s);
            let cache = attend_forward(store, ids.gat, table.row(i), &inputs)?;
            Ok((cache, nb_ids))
        })
        .collect()
}

/// Mean focal loss over the examples; accumulates all gradients (classifier,
/// attention parameters, node table) into the store.
pub fn link_loss(
    store: &mut ParamStore,
    ids: &ModelIds,
    graph: &KnowledgeGraph,
    examples: &[LinkExample],
    weights: &[f64],
    lambda: f64,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::domain("link_loss", "no examples"));
    }
    let nodes = forward_all_nodes(store, ids, graph)?;
    let f = store.value(ids.node_table).cols();
    let scale = 1.0 / examples.len() as f64;

    let mut total = 0.0;
    let mut g_node_out = vec![vec![0.0; f]; nodes.len()];
    for ex in examples {
        let h_head = &nodes[ex.head].0.out;
        let h_tail = &nodes[ex.tail].0.out;
        let cat = concat(h_head, h_tail);
        let logits = store.value(ids.classifier).matvec(&cat)?;
        let fl = focal_loss(&logits, ex.label, weights, lambda)?;
        total += fl.loss * scale;
        let g_logits: Vec<f64> = fl.grad.iter().map(|g| g * scale).collect();
        let g_cat = store.value(ids.classifier).matvec_t(&g_logits)?;
        store.grad_mut(ids.classifier).add_outer(&g_logits, &cat)?;
        for k in 0..f {
            g_node_out[ex.head][k] += g_cat[k];
            g_node_out[ex.tail][k] += g_cat[f + k];
        }
    }

    for (i, ((cache, nb_ids), g_out)) in nodes.iter().zip(&g_node_out).enumerate() {
        if g_out.iter().all(|&g| g == 0.0) {
            continue;
        }
        let (g_h_i, g_h_js) = attend_backward(store, ids.gat, cache, g_out)?;
        let table = store.grad_mut(ids.node_table);
        for (g, x) in table.row_mut(i).iter_mut().zip(&g_h_i) {
            *g += x;
        }
        for (j, g_h_j) in nb_ids.iter().zip(&g_h_js) {
            for (g, x) in table.row_mut(*j).iter_mut().zip(g_h_j) {
                *g += x;
            }
        }
    }
    Ok(total)
}

/// Class-weight vector over the S relations plus the negative class, from
/// the graph's relation histogram and the per-epoch negative count.
pub fn training_class_weights(graph: &KnowledgeGraph, negative_count: usize) -> Result<Vec<f64>> {
    let mut counts = graph.relation_histogram();
    counts.push(negative_count as u64);
    class_weights(&counts)
}

/// Full-batch gradient descent on the link-prediction objective. Negatives
/// are resampled every epoch from a seeded stream, so the whole run is a
/// pure function of (graph, cfg). Returns the model and the per-epoch loss
/// trace.
pub fn train_link_prediction(
    graph: &KnowledgeGraph,
    cfg: &EmbedConfig,
) -> Result<(EmbeddingModel, Vec<f64>)> {
    if graph.triples().is_empty() {
        return Err(Error::domain("train_link_prediction", "graph has no triples"));
    }
    let mut model = EmbeddingModel::init(graph, cfg)?;
    let ids = model.ids()?;
    let positives: Vec<LinkExample> = graph
        .triples()
        .iter()
        .map(|t| LinkExample { head: t.head, tail: t.tail, label: t.relation })
        .collect();
    let negative_count = positives.len() * cfg.negatives_per_positive;
    let weights = training_class_weights(graph, negative_count)?;
    // negative sampling draws from its own stream so adding epochs never
    // perturbs initialization
    let mut rng = StdRng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15));

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut examples = positives.clone();
        examples.extend(sample_negatives(graph, negative_count, &mut rng)?);
        model.store.zero_grads();
        let loss = link_loss(&mut model.store, &ids, graph, &examples, &weights, cfg.lambda)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                detail: format!("link-prediction loss became {loss}"),
            });
        }
        model.store.sgd_step(cfg.lr);
        trace.push(loss);
    }
    Ok((model, trace))
}

/// Fraction of held-out (head, relation, tail) triples whose relation is the
/// argmax class when the pair is scored on the training graph.
pub fn holdout_accuracy(
    model: &EmbeddingModel,
    graph: &KnowledgeGraph,
    holdout: &[(usize, usize, usize)],
) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::domain("holdout_accuracy", "empty holdout set"));
    }
    let ids = model.ids()?;
    let mut hits = 0usize;
    for &(head, relation, tail) in holdout {
        let h = model.attend_node(graph, head)?;
        let t = model.attend_node(graph, tail)?;
        let p = predict_relation(&h, &t, model.store.value(ids.classifier))?;
        let argmax = p
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        if argmax == relation {
            hits += 1;
        }
    }
    Ok(hits as f64 / holdout.len() as f64)
}
