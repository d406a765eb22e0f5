//! Graph-embedding fusion for path expansion.
//!
//! While expanding a path, the graph embeddings of all previously chosen
//! entities are kept in a list; fusing a candidate's own embedding with that
//! list yields the vector g fed into the expansion encoder. Two variants:
//! a single self-attention block over [candidate ; prior...] followed by
//! coordinate-wise max, or a shared linear map per element followed by the
//! same max. Entities absent from the graph contribute zero vectors.

use std::collections::HashMap;

use rand::rngs::StdRng;
use serde::{Deserialize, Serialize};

use crate::doc::attention::{stack_backward, stack_forward, StackCache, StackIds};
use crate::error::{Error, Result};
use crate::kg::{normalize_name, KnowledgeGraph, NormalizeRule};
use crate::numeric::ops::max_pool;
use crate::numeric::params::{ParamId, ParamStore};

/// How candidate and prior graph embeddings are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    AttentionMaxpool,
    LinearMaxpool,
}

impl FusionVariant {
    pub fn parse(s: &str) -> Result<FusionVariant> {
        match s {
            "attention_maxpool" => Ok(FusionVariant::AttentionMaxpool),
            "linear_maxpool" => Ok(FusionVariant::LinearMaxpool),
            other => Err(Error::Config(format!("unknown fusion variant {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FusionVariant::AttentionMaxpool => "attention_maxpool",
            FusionVariant::LinearMaxpool => "linear_maxpool",
        }
    }
}

/// Graph embeddings of the entities chosen earlier on the current path, in
/// choice order. Null selections contribute no entry; entities missing from
/// the graph contribute zero vectors.
#[derive(Clone, Debug, Default)]
pub struct FusionState {
    pub prior: Vec<Vec<f64>>,
}

impl FusionState {
    pub fn empty() -> FusionState {
        FusionState { prior: Vec::new() }
    }
}

/// Parameter handles for both fusion variants. Both are always registered
/// so checkpoints are layout-stable regardless of the configured variant.
#[derive(Clone, Debug)]
pub struct FusionIds {
    pub linear_w: ParamId,
    pub linear_b: ParamId,
    pub attn: StackIds,
}

impl FusionIds {
    pub fn register(
        store: &mut ParamStore,
        embed_dim: usize,
        hidden: usize,
        rng: &mut StdRng,
    ) -> Result<FusionIds> {
        if embed_dim == 0 {
            return Err(Error::domain("kg_fuse", "embedding width must be positive"));
        }
        let scale = (1.0 / embed_dim as f64).sqrt();
        let linear_w = store.register_uniform("fuse.linear_w", embed_dim, embed_dim, scale, rng)?;
        let linear_b = store.register("fuse.linear_b", 1, embed_dim)?;
        let attn = StackIds::register(store, "fuse.attn", embed_dim, hidden, 1, rng)?;
        Ok(FusionIds { linear_w, linear_b, attn })
    }

    pub fn lookup(store: &ParamStore) -> Result<FusionIds> {
        let find = |name: &str| {
            store
                .lookup(name)
                .ok_or_else(|| Error::data(format!("parameter {name} missing from store")))
        };
        Ok(FusionIds {
            linear_w: find("fuse.linear_w")?,
            linear_b: find("fuse.linear_b")?,
            attn: StackIds::lookup(store, "fuse.attn")?,
        })
    }

    pub fn dim(&self) -> usize {
        self.attn.dim
    }
}

/// Saved forward state for [`kg_fuse_backward`].
#[derive(Clone, Debug)]
pub struct FuseCache {
    variant: FusionVariant,
    elements: Vec<Vec<f64>>,
    stack: Option<StackCache>,
    argmax: Vec<usize>,
}

/// Fuses a candidate graph embedding with the prior-choice list into g.
pub fn kg_fuse(
    store: &ParamStore,
    ids: &FusionIds,
    variant: FusionVariant,
    candidate: &[f64],
    state: &FusionState,
) -> Result<(Vec<f64>, FuseCache)> {
    let f = ids.dim();
    if candidate.len() != f || state.prior.iter().any(|v| v.len() != f) {
        return Err(Error::dimension(
            "kg_fuse",
            format!("embedding width {} expected", f),
        ));
    }
    let mut elements = Vec::with_capacity(1 + state.prior.len());
    elements.push(candidate.to_vec());
    elements.extend(state.prior.iter().cloned());
    match variant {
        FusionVariant::LinearMaxpool => {
            let w = store.value(ids.linear_w);
            let b = store.value(ids.linear_b).row(0);
            let mapped: Vec<Vec<f64>> = elements
                .iter()
                .map(|x| {
                    let mut y = w.matvec(x)?;
                    for (yi, bi) in y.iter_mut().zip(b) {
                        *yi += bi;
                    }
                    Ok(y)
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&[f64]> = mapped.iter().map(|v| v.as_slice()).collect();
            let (g, argmax) = max_pool(&refs)?;
            Ok((g, FuseCache { variant, elements, stack: None, argmax }))
        }
        FusionVariant::AttentionMaxpool => {
            let (out, stack) = stack_forward(store, &ids.attn, &elements)?;
            let refs: Vec<&[f64]> = out.iter().map(|v| v.as_slice()).collect();
            let (g, argmax) = max_pool(&refs)?;
            Ok((g, FuseCache { variant, elements, stack: Some(stack), argmax }))
        }
    }
}

/// Backward pass: accumulates fusion parameter gradients and returns the
/// gradient per input element ([candidate ; prior...]).
pub fn kg_fuse_backward(
    store: &mut ParamStore,
    ids: &FusionIds,
    cache: &FuseCache,
    g_out: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let f = ids.dim();
    if g_out.len() != f {
        return Err(Error::dimension(
            "kg_fuse",
            format!("gradient width {} vs {}", g_out.len(), f),
        ));
    }
    let n = cache.elements.len();
    let mut g_pooled = vec![vec![0.0; f]; n];
    for (k, (&src, &g)) in cache.argmax.iter().zip(g_out).enumerate() {
        g_pooled[src][k] = g;
    }
    match cache.variant {
        FusionVariant::LinearMaxpool => {
            let w = store.value(ids.linear_w).clone();
            let mut g_elements = Vec::with_capacity(n);
            for (x, gm) in cache.elements.iter().zip(&g_pooled) {
                store.grad_mut(ids.linear_w).add_outer(gm, x)?;
                let gb = store.grad_mut(ids.linear_b).row_mut(0);
                for (b, g) in gb.iter_mut().zip(gm) {
                    *b += g;
                }
                g_elements.push(w.matvec_t(gm)?);
            }
            Ok(g_elements)
        }
        FusionVariant::AttentionMaxpool => {
            let stack = cache
                .stack
                .as_ref()
                .ok_or_else(|| Error::domain("kg_fuse", "cache variant mismatch"))?;
            stack_backward(store, &ids.attn, stack, &g_pooled)
        }
    }
}

/// Entity name → graph embedding lookup used during decoding. Built from a
/// graph and its trained node embeddings; resolution mirrors the graph's
/// own (exact surface first, then normalized).
#[derive(Clone, Debug)]
pub struct KgEmbeddings {
    dim: usize,
    names: HashMap<String, usize>,
    rows: Vec<Vec<f64>>,
    rules: Vec<NormalizeRule>,
}

impl KgEmbeddings {
    /// A lookup with no entities; every query misses.
    pub fn empty(dim: usize) -> KgEmbeddings {
        KgEmbeddings { dim, names: HashMap::new(), rows: Vec::new(), rules: Vec::new() }
    }

    /// Builds the lookup from explicit name → vector pairs; ids follow the
    /// input order. No normalization rules are attached.
    pub fn from_named_rows(pairs: Vec<(String, Vec<f64>)>) -> Result<KgEmbeddings> {
        let dim = pairs.first().map(|(_, v)| v.len()).unwrap_or(0);
        let mut names = HashMap::new();
        let mut rows = Vec::with_capacity(pairs.len());
        for (id, (name, row)) in pairs.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::data("embedding rows have mixed widths"));
            }
            if names.insert(name.clone(), id).is_some() {
                return Err(Error::data(format!("duplicate embedding name {name:?}")));
            }
            rows.push(row);
        }
        Ok(KgEmbeddings { dim, names, rows, rules: Vec::new() })
    }

    pub fn from_graph(graph: &KnowledgeGraph, embeddings: &[Vec<f64>]) -> Result<KgEmbeddings> {
        if embeddings.len() != graph.entity_count() {
            return Err(Error::data(format!(
                "{} embedding rows for {} entities",
                embeddings.len(),
                graph.entity_count()
            )));
        }
        let dim = embeddings.first().map(|v| v.len()).unwrap_or(0);
        if embeddings.iter().any(|v| v.len() != dim) {
            return Err(Error::data("embedding rows have mixed widths"));
        }
        let mut names = HashMap::new();
        for e in graph.entities() {
            names.insert(e.canonical_name.clone(), e.id);
            for alias in &e.aliases {
                names.insert(alias.clone(), e.id);
            }
        }
        Ok(KgEmbeddings {
            dim,
            names,
            rows: embeddings.to_vec(),
            rules: graph.normalize_rules().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        if let Some(&id) = self.names.get(name) {
            return Some(id);
        }
        let normalized = normalize_name(name, &self.rules);
        self.names.get(&normalized).copied()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.id_of(name).map(|id| self.rows[id].as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_check;
    use crate::numeric::ops::axpy;
    use rand::SeedableRng;

    fn ids(seed: u64, f: usize) -> (ParamStore, FusionIds) {
        let mut store = ParamStore::new();
        let mut rng = StdRng::seed_from_u64(seed);
        let ids = FusionIds::register(&mut store, f, f + 2, &mut rng).unwrap();
        (store, ids)
    }

    #[test]
    fn linear_with_no_prior_is_the_linear_map() {
        let (store, fi) = ids(1, 3);
        let cand = [0.4, -0.2, 0.9];
        let (g, _) = kg_fuse(
            &store,
            &fi,
            FusionVariant::LinearMaxpool,
            &cand,
            &FusionState::empty(),
        )
        .unwrap();
        let mut expect = store.value(fi.linear_w).matvec(&cand).unwrap();
        for (e, b) in expect.iter_mut().zip(store.value(fi.linear_b).row(0)) {
            *e += b;
        }
        assert_eq!(g, expect);
    }

    #[test]
    fn linear_zero_candidate_zero_bias_gives_zero() {
        let (store, fi) = ids(2, 4);
        // bias is registered zero-initialized
        let (g, _) = kg_fuse(
            &store,
            &fi,
            FusionVariant::LinearMaxpool,
            &[0.0; 4],
            &FusionState::empty(),
        )
        .unwrap();
        assert_eq!(g, vec![0.0; 4]);
    }

    #[test]
    fn two_element_traces_match_composed_kernels() {
        let (store, fi) = ids(3, 3);
        let cand = vec![0.5, -0.1, 0.2];
        let prior = vec![vec![-0.3, 0.8, 0.0]];
        let state = FusionState { prior: prior.clone() };

        let (lin, _) =
            kg_fuse(&store, &fi, FusionVariant::LinearMaxpool, &cand, &state).unwrap();
        let map = |x: &[f64]| {
            let mut y = store.value(fi.linear_w).matvec(x).unwrap();
            for (yi, b) in y.iter_mut().zip(store.value(fi.linear_b).row(0)) {
                *yi += b;
            }
            y
        };
        let (a, b) = (map(&cand), map(&prior[0]));
        let expect: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect();
        assert_eq!(lin, expect);

        let (att, _) =
            kg_fuse(&store, &fi, FusionVariant::AttentionMaxpool, &cand, &state).unwrap();
        let (out, _) =
            stack_forward(&store, &fi.attn, &[cand.clone(), prior[0].clone()]).unwrap();
        let expect: Vec<f64> = (0..3).map(|k| out[0][k].max(out[1][k])).collect();
        assert_eq!(att, expect);
    }

    #[test]
    fn width_mismatch_is_error() {
        let (store, fi) = ids(4, 3);
        let r = kg_fuse(
            &store,
            &fi,
            FusionVariant::LinearMaxpool,
            &[0.0; 2],
            &FusionState::empty(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn gradients_match_central_differences_both_variants() {
        for (seed, variant) in [
            (5, FusionVariant::LinearMaxpool),
            (6, FusionVariant::AttentionMaxpool),
        ] {
            let f = 3;
            let (mut store, fi) = ids(seed, f);
            let mut rng = StdRng::seed_from_u64(seed + 100);
            let cand_id = store.register_uniform("t.cand", 1, f, 0.7, &mut rng).unwrap();
            let prior_id = store.register_uniform("t.prior", 2, f, 0.7, &mut rng).unwrap();
            let report = finite_diff_check(
                &mut store,
                |s| {
                    let cand = s.value(cand_id).row(0).to_vec();
                    let prior = vec![s.value(prior_id).row(0).to_vec(), s.value(prior_id).row(1).to_vec()];
                    let state = FusionState { prior };
                    let (g, cache) = kg_fuse(s, &fi, variant, &cand, &state)?;
                    let loss: f64 = g.iter().map(|x| x * x).sum();
                    let g_out: Vec<f64> = g.iter().map(|x| 2.0 * x).collect();
                    let g_elems = kg_fuse_backward(s, &fi, &cache, &g_out)?;
                    axpy(s.grad_mut(cand_id).row_mut(0), 1.0, &g_elems[0]);
                    axpy(s.grad_mut(prior_id).row_mut(0), 1.0, &g_elems[1]);
                    axpy(s.grad_mut(prior_id).row_mut(1), 1.0, &g_elems[2]);
                    Ok(loss)
                },
                1e-5,
                1e-4,
            )
            .unwrap();
            assert!(
                report.passed,
                "{:?} worst {:?}",
                variant,
                report.worst().map(|e| (e.name.clone(), e.max_rel_err))
            );
        }
    }

    #[test]
    fn embeddings_resolve_like_the_graph() {
        let graph = crate::kg::tests::tiny_graph();
        let rows: Vec<Vec<f64>> = (0..graph.entity_count())
            .map(|i| vec![i as f64, 1.0])
            .collect();
        let kg = KgEmbeddings::from_graph(&graph, &rows).unwrap();
        assert_eq!(kg.dim(), 2);
        for e in graph.entities() {
            assert_eq!(kg.id_of(&e.canonical_name), Some(e.id));
            assert_eq!(kg.get(&e.canonical_name).unwrap()[0], e.id as f64);
        }
        assert_eq!(kg.id_of("no such entity"), None);
        assert!(KgEmbeddings::empty(4).get("anything").is_none());
        let bad = KgEmbeddings::from_graph(&graph, &rows[..1]);
        assert!(bad.is_err());
    }
}
