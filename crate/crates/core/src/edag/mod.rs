//! Event extraction by path expansion.
//!
//! A document summary vector feeds a multi-label type classifier; for each
//! predicted type the decoder walks the schema's roles in order, at each
//! field scoring every document entity against the path walked so far. The
//! walk state is a memory of completed fields plus the graph embeddings of
//! previously chosen entities, fused with each candidate's own embedding.
//! Multiple selections at a field fork the path, so a document's events of
//! one type form a DAG whose root-to-leaf paths are the event records.

pub mod fuse;
pub mod schema;
pub mod train;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::doc::attention::{stack_backward, stack_forward, StackCache, StackIds};
use crate::doc::{DocConfig, DocContext, DocEncoder};
use crate::error::{Error, Result};
use crate::numeric::ops::{axpy, dot, sigmoid};
use crate::numeric::params::{ParamId, ParamStore};

pub use fuse::{kg_fuse, kg_fuse_backward, FusionIds, FusionState, FusionVariant, KgEmbeddings};
pub use schema::{EventArg, EventRecord, EventSchema, SchemaSet};
pub use train::{train_decoder, TrainingDoc};

/// Decoder hyperparameters. `embed_dim` must match the graph embeddings
/// supplied at decode time.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub doc: DocConfig,
    pub embed_dim: usize,
    pub expand_hidden: usize,
    pub expand_depth: usize,
    pub fuse_hidden: usize,
    pub variant: FusionVariant,
    pub branch_cap: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DecoderConfig {
    fn default() -> DecoderConfig {
        DecoderConfig {
            doc: DocConfig::default(),
            embed_dim: 16,
            expand_hidden: 64,
            expand_depth: 1,
            fuse_hidden: 32,
            variant: FusionVariant::AttentionMaxpool,
            branch_cap: 64,
            epochs: 300,
            learning_rate: 0.005,
            seed: 7,
        }
    }
}

/// Handles for every decoder tensor.
#[derive(Clone, Debug)]
pub struct DecoderIds {
    pub doc: DocEncoder,
    pub type_w: ParamId,
    pub type_b: ParamId,
    pub fuse: FusionIds,
    pub fuse_proj: ParamId,
    /// role_emb[type][role], addressed by schema order.
    pub role_emb: Vec<Vec<ParamId>>,
    pub expand: StackIds,
    pub select_w: ParamId,
    pub select_b: ParamId,
}

impl DecoderIds {
    /// Document embedding width d_w.
    pub fn dim(&self) -> usize {
        self.expand.dim
    }

    /// Graph embedding width F.
    pub fn embed_dim(&self) -> usize {
        self.fuse.dim()
    }
}

fn role_param_name(schema: &EventSchema, role: &str) -> String {
    format!("decoder.role.{}.{}", schema.code, role)
}

/// Document encoder plus the full expansion decoder, with its schemas.
#[derive(Clone, Debug)]
pub struct DecoderModel {
    pub store: ParamStore,
    pub schemas: SchemaSet,
    pub variant: FusionVariant,
    pub branch_cap: usize,
}

impl DecoderModel {
    /// Seeded initialization of every tensor. Both fusion variants are
    /// always registered so the checkpoint layout does not depend on the
    /// configured variant.
    pub fn init(
        schemas: &SchemaSet,
        vocabulary: impl IntoIterator<Item = char>,
        cfg: &DecoderConfig,
    ) -> Result<DecoderModel> {
        if cfg.branch_cap == 0 {
            return Err(Error::Config("branch_cap must be positive".into()));
        }
        let mut rng = StdRng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        DocEncoder::register(&mut store, vocabulary, &cfg.doc, &mut rng)?;
        let d = cfg.doc.token_dim;
        let proj_scale = (1.0 / d as f64).sqrt();
        store.register_uniform("decoder.type_w", schemas.len(), d, proj_scale, &mut rng)?;
        store.register("decoder.type_b", 1, schemas.len())?;
        FusionIds::register(&mut store, cfg.embed_dim, cfg.fuse_hidden, &mut rng)?;
        store.register_uniform(
            "decoder.fuse_proj",
            d,
            cfg.embed_dim,
            (1.0 / cfg.embed_dim as f64).sqrt(),
            &mut rng,
        )?;
        for schema in schemas.iter() {
            for role in schema.roles() {
                store.register_uniform(&role_param_name(schema, role), 1, d, 0.1, &mut rng)?;
            }
        }
        StackIds::register(
            &mut store,
            "decoder.expand",
            d,
            cfg.expand_hidden,
            cfg.expand_depth,
            &mut rng,
        )?;
        store.register_uniform("decoder.select_w", 1, d, proj_scale, &mut rng)?;
        store.register("decoder.select_b", 1, 1)?;
        let model = DecoderModel {
            store,
            schemas: schemas.clone(),
            variant: cfg.variant,
            branch_cap: cfg.branch_cap,
        };
        model.ids()?;
        Ok(model)
    }

    /// Wraps a store restored from a checkpoint, verifying it holds every
    /// tensor the schema set demands.
    pub fn from_store(
        store: ParamStore,
        schemas: SchemaSet,
        variant: FusionVariant,
        branch_cap: usize,
    ) -> Result<DecoderModel> {
        let model = DecoderModel { store, schemas, variant, branch_cap };
        model.ids()?;
        Ok(model)
    }

    pub fn ids(&self) -> Result<DecoderIds> {
        let find = |name: &str| {
            self.store
                .lookup(name)
                .ok_or_else(|| Error::data(format!("parameter {name} missing from store")))
        };
        let role_emb = self
            .schemas
            .iter()
            .map(|schema| {
                schema
                    .roles()
                    .iter()
                    .map(|role| find(&role_param_name(schema, role)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DecoderIds {
            doc: DocEncoder::lookup(&self.store)?,
            type_w: find("decoder.type_w")?,
            type_b: find("decoder.type_b")?,
            fuse: FusionIds::lookup(&self.store)?,
            fuse_proj: find("decoder.fuse_proj")?,
            role_emb,
            expand: StackIds::lookup(&self.store, "decoder.expand")?,
            select_w: find("decoder.select_w")?,
            select_b: find("decoder.select_b")?,
        })
    }
}

/// Raw type-classifier outputs W_t·t + b.
pub fn type_logits(store: &ParamStore, ids: &DecoderIds, t: &[f64]) -> Result<Vec<f64>> {
    let mut z = store.value(ids.type_w).matvec(t)?;
    axpy(&mut z, 1.0, store.value(ids.type_b).row(0));
    Ok(z)
}

/// Accumulates classifier gradients and returns the gradient on t.
pub fn type_logits_backward(
    store: &mut ParamStore,
    ids: &DecoderIds,
    t: &[f64],
    g_logits: &[f64],
) -> Result<Vec<f64>> {
    store.grad_mut(ids.type_w).add_outer(g_logits, t)?;
    axpy(store.grad_mut(ids.type_b).row_mut(0), 1.0, g_logits);
    store.value(ids.type_w).matvec_t(g_logits)
}

/// Independent per-type sigmoid probabilities from the document summary.
/// Types with probability strictly above 0.5 are decoded.
pub fn classify_event_types(
    store: &ParamStore,
    ids: &DecoderIds,
    t: &[f64],
) -> Result<Vec<f64>> {
    Ok(type_logits(store, ids, t)?.into_iter().map(sigmoid).collect())
}

/// Completed-field history of the current path. One entry per field: the
/// chosen entity's document embedding, or the zero vector after a null.
#[derive(Clone, Debug)]
pub struct Memory {
    dim: usize,
    entries: Vec<(Option<usize>, Vec<f64>)>,
}

impl Memory {
    pub fn new(dim: usize) -> Memory {
        Memory { dim, entries: Vec::new() }
    }

    pub fn push_entity(&mut self, entity: usize, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::dimension(
                "memory",
                format!("entry width {} vs {}", vector.len(), self.dim),
            ));
        }
        self.entries.push((Some(entity), vector.to_vec()));
        Ok(())
    }

    pub fn push_null(&mut self) {
        self.entries.push((None, vec![0.0; self.dim]));
    }

    pub fn pop(&mut self) {
        self.entries.pop();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Document-entity index behind entry `i`, if it was not a null.
    pub fn entity(&self, i: usize) -> Option<usize> {
        self.entries[i].0
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.entries[i].1
    }
}

/// Saved forward state for [`expand_field_backward`].
#[derive(Clone, Debug)]
pub struct ExpandCache {
    n_cand: usize,
    n_mem: usize,
    type_idx: usize,
    role_idx: usize,
    fuse: Vec<fuse::FuseCache>,
    /// Fused g per candidate, input to the d_w projection.
    cand_g: Vec<Vec<f64>>,
    stack: Option<StackCache>,
    /// Expansion encoder outputs at candidate positions.
    outputs: Vec<Vec<f64>>,
}

/// Scores every candidate entity for one field of one event type. The
/// sequence fed to the expansion encoder is [candidates ; memory], where a
/// candidate is e^d + W_g·g + role embedding and memory entries enter raw.
/// Returns one selection logit per candidate (empty when there are none).
#[allow(clippy::too_many_arguments)]
pub fn expand_field(
    store: &ParamStore,
    ids: &DecoderIds,
    variant: FusionVariant,
    type_idx: usize,
    role_idx: usize,
    entities: &[Vec<f64>],
    kg_rows: &[Vec<f64>],
    state: &FusionState,
    memory: &Memory,
) -> Result<(Vec<f64>, ExpandCache)> {
    let d = ids.dim();
    let roles = ids
        .role_emb
        .get(type_idx)
        .ok_or_else(|| Error::domain("expand_field", "event type out of range"))?;
    let role_id = *roles
        .get(role_idx)
        .ok_or_else(|| Error::domain("expand_field", "role index out of range"))?;
    if entities.len() != kg_rows.len() {
        return Err(Error::dimension(
            "expand_field",
            format!("{} entities vs {} graph rows", entities.len(), kg_rows.len()),
        ));
    }
    let n = entities.len();
    if n == 0 {
        // Nothing to score; the field can only go null.
        return Ok((
            Vec::new(),
            ExpandCache {
                n_cand: 0,
                n_mem: memory.len(),
                type_idx,
                role_idx,
                fuse: Vec::new(),
                cand_g: Vec::new(),
                stack: None,
                outputs: Vec::new(),
            },
        ));
    }
    let w_g = store.value(ids.fuse_proj);
    let role = store.value(role_id).row(0);
    let mut seq = Vec::with_capacity(n + memory.len());
    let mut fuse_caches = Vec::with_capacity(n);
    let mut cand_g = Vec::with_capacity(n);
    for (e, kg_row) in entities.iter().zip(kg_rows) {
        if e.len() != d {
            return Err(Error::dimension(
                "expand_field",
                format!("entity width {} vs {}", e.len(), d),
            ));
        }
        let (g, fc) = kg_fuse(store, &ids.fuse, variant, kg_row, state)?;
        let mut x = e.clone();
        axpy(&mut x, 1.0, &w_g.matvec(&g)?);
        axpy(&mut x, 1.0, role);
        seq.push(x);
        fuse_caches.push(fc);
        cand_g.push(g);
    }
    for i in 0..memory.len() {
        seq.push(memory.vector(i).to_vec());
    }
    let (out, stack) = stack_forward(store, &ids.expand, &seq)?;
    let sw = store.value(ids.select_w).row(0);
    let sb = store.value(ids.select_b).at(0, 0);
    let logits: Vec<f64> = out[..n].iter().map(|z| dot(sw, z) + sb).collect();
    Ok((
        logits,
        ExpandCache {
            n_cand: n,
            n_mem: memory.len(),
            type_idx,
            role_idx,
            fuse: fuse_caches,
            cand_g,
            stack: Some(stack),
            outputs: out[..n].to_vec(),
        },
    ))
}

/// Gradients [`expand_field_backward`] hands back to its caller, indexed
/// like the corresponding forward inputs.
#[derive(Clone, Debug)]
pub struct ExpandGrads {
    pub entities: Vec<Vec<f64>>,
    pub kg_rows: Vec<Vec<f64>>,
    pub prior: Vec<Vec<f64>>,
    pub memory: Vec<Vec<f64>>,
}

pub fn expand_field_backward(
    store: &mut ParamStore,
    ids: &DecoderIds,
    cache: &ExpandCache,
    g_logits: &[f64],
) -> Result<ExpandGrads> {
    if g_logits.len() != cache.n_cand {
        return Err(Error::dimension(
            "expand_field",
            format!("{} logit grads vs {} candidates", g_logits.len(), cache.n_cand),
        ));
    }
    let d = ids.dim();
    let f = ids.embed_dim();
    if cache.n_cand == 0 {
        return Ok(ExpandGrads {
            entities: Vec::new(),
            kg_rows: Vec::new(),
            prior: Vec::new(),
            memory: vec![vec![0.0; d]; cache.n_mem],
        });
    }
    let n = cache.n_cand;
    let sw = store.value(ids.select_w).row(0).to_vec();
    let w_g = store.value(ids.fuse_proj).clone();

    // Selection layer: logit_i = select_w · z_i + select_b.
    let mut g_seq = vec![vec![0.0; d]; n + cache.n_mem];
    for (i, &gl) in g_logits.iter().enumerate() {
        axpy(&mut g_seq[i], gl, &sw);
        store
            .grad_mut(ids.select_w)
            .add_outer(&[gl], &cache.outputs[i])?;
        store.grad_mut(ids.select_b).row_mut(0)[0] += gl;
    }
    let stack = cache
        .stack
        .as_ref()
        .ok_or_else(|| Error::domain("expand_field", "cache missing encoder state"))?;
    let g_in = stack_backward(store, &ids.expand, stack, &g_seq)?;

    let role_id = ids.role_emb[cache.type_idx][cache.role_idx];
    let mut entities = Vec::with_capacity(n);
    let mut kg_rows = Vec::with_capacity(n);
    let mut prior: Vec<Vec<f64>> = Vec::new();
    for (i, g_x) in g_in[..n].iter().enumerate() {
        axpy(store.grad_mut(role_id).row_mut(0), 1.0, g_x);
        entities.push(g_x.clone());
        store.grad_mut(ids.fuse_proj).add_outer(g_x, &cache.cand_g[i])?;
        let g_g = w_g.matvec_t(g_x)?;
        let mut elems = kg_fuse_backward(store, &ids.fuse, &cache.fuse[i], &g_g)?;
        if prior.is_empty() {
            prior = vec![vec![0.0; f]; elems.len() - 1];
        }
        for (acc, g) in prior.iter_mut().zip(&elems[1..]) {
            axpy(acc, 1.0, g);
        }
        kg_rows.push(std::mem::take(&mut elems[0]));
    }
    Ok(ExpandGrads {
        entities,
        kg_rows,
        prior,
        memory: g_in[n..].to_vec(),
    })
}

/// One field choice along a path: the entity picked for `role_idx` (None
/// for a null), and the choices for the next role beneath it.
#[derive(Clone, Debug, PartialEq)]
pub struct EdagNode {
    pub role_idx: usize,
    pub choice: Option<usize>,
    pub children: Vec<EdagNode>,
}

/// Decoded expansion graph for one event type. Every root-to-leaf path is
/// one event record; leaves sit at depth = number of roles.
#[derive(Clone, Debug, PartialEq)]
pub struct Edag {
    pub type_idx: usize,
    pub roots: Vec<EdagNode>,
}

impl Edag {
    pub fn leaf_count(&self) -> usize {
        fn count(node: &EdagNode) -> usize {
            if node.children.is_empty() {
                1
            } else {
                node.children.iter().map(count).sum()
            }
        }
        self.roots.iter().map(count).sum()
    }
}

/// Everything a scorer may consult when selecting entities for one field.
pub struct FieldView<'a> {
    pub ctx: &'a DocContext,
    pub kg_rows: &'a [Vec<f64>],
    pub state: &'a FusionState,
    pub memory: &'a Memory,
    pub type_idx: usize,
    pub role_idx: usize,
    /// Choices made for roles 0..role_idx on the current path.
    pub prefix: &'a [Option<usize>],
}

/// Selects the entity subset for one field; one flag per document entity.
pub trait ExpansionScorer {
    fn select(&self, store: &ParamStore, view: &FieldView) -> Result<Vec<bool>>;
}

/// The trained model's scorer: fuse, expand, select probabilities above
/// the threshold (0.5 unless overridden).
pub struct ModelScorer {
    ids: DecoderIds,
    variant: FusionVariant,
    pub threshold: f64,
}

impl ModelScorer {
    pub fn new(model: &DecoderModel) -> Result<ModelScorer> {
        Ok(ModelScorer { ids: model.ids()?, variant: model.variant, threshold: 0.5 })
    }
}

impl ExpansionScorer for ModelScorer {
    fn select(&self, store: &ParamStore, view: &FieldView) -> Result<Vec<bool>> {
        let entities: Vec<Vec<f64>> =
            view.ctx.entities.iter().map(|e| e.vector.clone()).collect();
        let (logits, _) = expand_field(
            store,
            &self.ids,
            self.variant,
            view.type_idx,
            view.role_idx,
            &entities,
            view.kg_rows,
            view.state,
            view.memory,
        )?;
        Ok(logits.iter().map(|&z| sigmoid(z) > self.threshold).collect())
    }
}

/// Replays gold events instead of scoring: an entity is selected iff some
/// gold event of the type extends the current prefix with it. Used for
/// round-trip tests and as the teacher during training.
pub struct OracleScorer {
    /// events[type_idx] = per-event choices in schema role order.
    pub events: Vec<Vec<Vec<Option<usize>>>>,
}

impl ExpansionScorer for OracleScorer {
    fn select(&self, _store: &ParamStore, view: &FieldView) -> Result<Vec<bool>> {
        let mut out = vec![false; view.ctx.entities.len()];
        if let Some(events) = self.events.get(view.type_idx) {
            for ev in events {
                if ev[..view.role_idx] == *view.prefix {
                    if let Some(c) = ev[view.role_idx] {
                        out[c] = true;
                    }
                }
            }
        }
        Ok(out)
    }
}

struct Walker<'a> {
    store: &'a ParamStore,
    scorer: &'a dyn ExpansionScorer,
    ctx: &'a DocContext,
    kg_rows: &'a [Vec<f64>],
    n_roles: usize,
    type_idx: usize,
    branch_cap: usize,
    doc_id: &'a str,
    prefix: Vec<Option<usize>>,
    state: FusionState,
    memory: Memory,
    leaves: usize,
}

impl Walker<'_> {
    fn expand(&mut self, role_idx: usize) -> Result<Vec<EdagNode>> {
        if role_idx == self.n_roles {
            self.leaves += 1;
            if self.leaves > self.branch_cap {
                return Err(Error::decode(
                    self.doc_id,
                    format!(
                        "event type {} exceeded {} paths",
                        self.type_idx, self.branch_cap
                    ),
                ));
            }
            return Ok(Vec::new());
        }
        let view = FieldView {
            ctx: self.ctx,
            kg_rows: self.kg_rows,
            state: &self.state,
            memory: &self.memory,
            type_idx: self.type_idx,
            role_idx,
            prefix: &self.prefix,
        };
        let picks = self.scorer.select(self.store, &view)?;
        if picks.len() != self.ctx.entities.len() {
            return Err(Error::dimension(
                "decode",
                format!(
                    "scorer returned {} flags for {} entities",
                    picks.len(),
                    self.ctx.entities.len()
                ),
            ));
        }
        let chosen: Vec<Option<usize>> = if picks.iter().any(|&p| p) {
            picks
                .iter()
                .enumerate()
                .filter_map(|(i, &p)| p.then_some(Some(i)))
                .collect()
        } else {
            vec![None]
        };
        let mut nodes = Vec::with_capacity(chosen.len());
        for choice in chosen {
            self.prefix.push(choice);
            match choice {
                Some(i) => {
                    self.memory.push_entity(i, &self.ctx.entities[i].vector)?;
                    self.state.prior.push(self.kg_rows[i].clone());
                }
                None => self.memory.push_null(),
            }
            let children = self.expand(role_idx + 1);
            if choice.is_some() {
                self.state.prior.pop();
            }
            self.memory.pop();
            self.prefix.pop();
            nodes.push(EdagNode { role_idx, choice, children: children? });
        }
        Ok(nodes)
    }
}

/// Depth-first expansion of one event type in schema role order. Candidates
/// are visited in document-entity order, so the walk is deterministic.
#[allow(clippy::too_many_arguments)]
pub fn decode_event_type(
    store: &ParamStore,
    schemas: &SchemaSet,
    scorer: &dyn ExpansionScorer,
    ctx: &DocContext,
    kg_rows: &[Vec<f64>],
    type_idx: usize,
    branch_cap: usize,
    doc_id: &str,
) -> Result<Edag> {
    let schema = schemas.get(type_idx);
    let dim = ctx.summary.len();
    let mut walker = Walker {
        store,
        scorer,
        ctx,
        kg_rows,
        n_roles: schema.n_roles(),
        type_idx,
        branch_cap,
        doc_id,
        prefix: Vec::new(),
        state: FusionState::empty(),
        memory: Memory::new(dim),
        leaves: 0,
    };
    let roots = walker.expand(0)?;
    Ok(Edag { type_idx, roots })
}

/// Flattens an expansion graph into records, one per root-to-leaf path.
pub fn edag_to_records(
    edag: &Edag,
    schemas: &SchemaSet,
    ctx: &DocContext,
    kg: &KgEmbeddings,
) -> Result<Vec<EventRecord>> {
    let schema = schemas.get(edag.type_idx);
    let mut records = Vec::new();
    let mut path: Vec<Option<usize>> = Vec::new();
    fn walk(
        node: &EdagNode,
        schema: &EventSchema,
        ctx: &DocContext,
        kg: &KgEmbeddings,
        path: &mut Vec<Option<usize>>,
        records: &mut Vec<EventRecord>,
    ) -> Result<()> {
        path.push(node.choice);
        if node.children.is_empty() {
            let args = path
                .iter()
                .map(|choice| {
                    choice.map(|i| {
                        let name = &ctx.entities[i].name;
                        EventArg { text: name.clone(), entity_id: kg.id_of(name) }
                    })
                })
                .collect();
            records.push(EventRecord::new(schema, args)?);
        } else {
            for child in &node.children {
                walk(child, schema, ctx, kg, path, records)?;
            }
        }
        path.pop();
        Ok(())
    }
    for root in &edag.roots {
        walk(root, schema, ctx, kg, &mut path, &mut records)?;
    }
    Ok(records)
}

/// Graph embeddings per document entity, zero rows for entities the graph
/// does not know.
pub fn entity_kg_rows(ctx: &DocContext, kg: &KgEmbeddings) -> Vec<Vec<f64>> {
    ctx.entities
        .iter()
        .map(|e| kg.get(&e.name).map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; kg.dim()]))
        .collect()
}

/// Full decode: classify types from the document summary, then expand each
/// predicted type and flatten its paths into event records.
pub fn decode_document(
    model: &DecoderModel,
    scorer: &dyn ExpansionScorer,
    ctx: &DocContext,
    kg: &KgEmbeddings,
    doc_id: &str,
) -> Result<Vec<EventRecord>> {
    decode_document_at(model, scorer, ctx, kg, doc_id, 0.5)
}

/// [`decode_document`] with an explicit type-classification threshold.
pub fn decode_document_at(
    model: &DecoderModel,
    scorer: &dyn ExpansionScorer,
    ctx: &DocContext,
    kg: &KgEmbeddings,
    doc_id: &str,
    type_threshold: f64,
) -> Result<Vec<EventRecord>> {
    let ids = model.ids()?;
    if kg.dim() != ids.embed_dim() {
        return Err(Error::dimension(
            "decode",
            format!("graph embedding width {} vs {}", kg.dim(), ids.embed_dim()),
        ));
    }
    let kg_rows = entity_kg_rows(ctx, kg);
    let probs = classify_event_types(&model.store, &ids, &ctx.summary)?;
    let mut records = Vec::new();
    for (type_idx, &p) in probs.iter().enumerate() {
        if p > type_threshold {
            let edag = decode_event_type(
                &model.store,
                &model.schemas,
                scorer,
                ctx,
                &kg_rows,
                type_idx,
                model.branch_cap,
                doc_id,
            )?;
            records.extend(edag_to_records(&edag, &model.schemas, ctx, kg)?);
        }
    }
    Ok(records)
}
