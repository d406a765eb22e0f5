//! Teacher-forced decoder training.
//!
//! Gold events are replayed as the expansion walk: at every field of every
//! gold path prefix the model scores all document entities, takes a binary
//! cross-entropy hit per candidate against the gold selection set, and the
//! walk then follows the gold choices regardless of the scores. Event
//! typing adds one cross-entropy term per type. Gradients flow end to end
//! through the fusion encoder and the document encoder.

use std::collections::{BTreeMap, BTreeSet};

use crate::doc::{encode_document, encode_document_backward, DocContext, DocGrad};
use crate::error::{Error, Result};
use crate::kg::{normalize_name, NormalizeRule};
use crate::ner::Mention;
use crate::numeric::loss::bce_with_logit;
use crate::numeric::ops::axpy;
use crate::numeric::params::{Adam, ParamStore};

use super::{
    entity_kg_rows, expand_field, expand_field_backward, type_logits, type_logits_backward,
    DecoderConfig, DecoderIds, DecoderModel, FusionState, FusionVariant, KgEmbeddings, Memory,
    SchemaSet,
};

/// One supervised document: raw text, its entity mentions, gold events.
#[derive(Clone, Debug)]
pub struct TrainingDoc {
    pub doc_id: String,
    pub sentences: Vec<String>,
    pub mentions: Vec<Mention>,
    pub events: Vec<super::EventRecord>,
}

/// Maps each gold event to per-role document-entity choices, grouped by
/// event type. Arguments are matched to entities by normalized name.
pub fn resolve_gold(
    schemas: &SchemaSet,
    ctx: &DocContext,
    events: &[super::EventRecord],
    rules: &[NormalizeRule],
    doc_id: &str,
) -> Result<Vec<Vec<Vec<Option<usize>>>>> {
    let mut resolved = vec![Vec::new(); schemas.len()];
    for event in events {
        let (type_idx, schema) = event.validate(schemas)?;
        let mut choices = Vec::with_capacity(schema.n_roles());
        for role in schema.roles() {
            match event.arg(role) {
                None => choices.push(None),
                Some(arg) => {
                    let key = normalize_name(&arg.text, rules);
                    let found = ctx.entities.iter().position(|e| e.name == key);
                    match found {
                        Some(i) => choices.push(Some(i)),
                        None => {
                            return Err(Error::data(format!(
                                "document {doc_id}: {} event argument {:?} for role {role} \
                                 matches no mention",
                                event.event_type, arg.text
                            )))
                        }
                    }
                }
            }
        }
        resolved[type_idx].push(choices);
    }
    Ok(resolved)
}

/// Teacher tree for one event type: gold choices grouped by shared prefix.
#[derive(Debug)]
struct GoldNode {
    /// Distinct non-null gold choices at this field, ascending.
    targets: Vec<usize>,
    children: Vec<(Option<usize>, GoldNode)>,
}

fn gold_tree(events: &[&[Option<usize>]], role_idx: usize, n_roles: usize) -> GoldNode {
    if role_idx == n_roles {
        return GoldNode { targets: Vec::new(), children: Vec::new() };
    }
    let mut groups: BTreeMap<Option<usize>, Vec<&[Option<usize>]>> = BTreeMap::new();
    for ev in events {
        groups.entry(ev[role_idx]).or_default().push(ev);
    }
    let targets = groups.keys().filter_map(|c| *c).collect();
    let children = groups
        .into_iter()
        .map(|(choice, group)| (choice, gold_tree(&group, role_idx + 1, n_roles)))
        .collect();
    GoldNode { targets, children }
}

struct Teacher<'a> {
    ids: &'a DecoderIds,
    variant: FusionVariant,
    entities: &'a [Vec<f64>],
    kg_rows: &'a [Vec<f64>],
    type_idx: usize,
    n_roles: usize,
    state: FusionState,
    memory: Memory,
    /// Accumulated loss gradient per document entity embedding.
    g_entities: Vec<Vec<f64>>,
    loss: f64,
}

impl Teacher<'_> {
    fn walk(&mut self, store: &mut ParamStore, node: &GoldNode, role_idx: usize) -> Result<()> {
        if role_idx == self.n_roles {
            return Ok(());
        }
        let (logits, cache) = expand_field(
            store,
            self.ids,
            self.variant,
            self.type_idx,
            role_idx,
            self.entities,
            self.kg_rows,
            &self.state,
            &self.memory,
        )?;
        let mut g_logits = vec![0.0; logits.len()];
        for (i, &z) in logits.iter().enumerate() {
            let y = if node.targets.binary_search(&i).is_ok() { 1.0 } else { 0.0 };
            let (l, g) = bce_with_logit(z, y);
            self.loss += l;
            g_logits[i] = g;
        }
        let grads = expand_field_backward(store, self.ids, &cache, &g_logits)?;
        for (acc, g) in self.g_entities.iter_mut().zip(&grads.entities) {
            axpy(acc, 1.0, g);
        }
        for (k, g) in grads.memory.iter().enumerate() {
            if let Some(e) = self.memory.entity(k) {
                axpy(&mut self.g_entities[e], 1.0, g);
            }
        }
        // grads.kg_rows / grads.prior fall on fixed graph embeddings
        for (choice, child) in &node.children {
            match *choice {
                Some(i) => {
                    self.memory.push_entity(i, &self.entities[i])?;
                    self.state.prior.push(self.kg_rows[i].clone());
                }
                None => self.memory.push_null(),
            }
            let walked = self.walk(store, child, role_idx + 1);
            if choice.is_some() {
                self.state.prior.pop();
            }
            self.memory.pop();
            walked?;
        }
        Ok(())
    }
}

/// Forward + backward for one document; returns its summed loss with all
/// parameter gradients accumulated into the store.
pub fn doc_loss_and_grads(
    store: &mut ParamStore,
    ids: &DecoderIds,
    variant: FusionVariant,
    schemas: &SchemaSet,
    doc: &TrainingDoc,
    kg: &KgEmbeddings,
    rules: &[NormalizeRule],
) -> Result<f64> {
    if kg.dim() != ids.embed_dim() {
        return Err(Error::dimension(
            "train_decoder",
            format!("graph embedding width {} vs {}", kg.dim(), ids.embed_dim()),
        ));
    }
    let chars: Vec<Vec<char>> = doc.sentences.iter().map(|s| s.chars().collect()).collect();
    let (ctx, cache) = encode_document(store, &ids.doc, &chars, &doc.mentions, rules)?;
    let gold = resolve_gold(schemas, &ctx, &doc.events, rules, &doc.doc_id)?;

    let mut loss = 0.0;
    let logits = type_logits(store, ids, &ctx.summary)?;
    let mut g_type = vec![0.0; logits.len()];
    for (t, &z) in logits.iter().enumerate() {
        let y = if gold[t].is_empty() { 0.0 } else { 1.0 };
        let (l, g) = bce_with_logit(z, y);
        loss += l;
        g_type[t] = g;
    }
    let mut g_doc = DocGrad::zeros(&ctx);
    axpy(&mut g_doc.summary, 1.0, &type_logits_backward(store, ids, &ctx.summary, &g_type)?);

    let entities: Vec<Vec<f64>> = ctx.entities.iter().map(|e| e.vector.clone()).collect();
    let kg_rows = entity_kg_rows(&ctx, kg);
    for (type_idx, events) in gold.iter().enumerate() {
        if events.is_empty() {
            continue;
        }
        let refs: Vec<&[Option<usize>]> = events.iter().map(|e| e.as_slice()).collect();
        let n_roles = schemas.get(type_idx).n_roles();
        let tree = gold_tree(&refs, 0, n_roles);
        let mut teacher = Teacher {
            ids,
            variant,
            entities: &entities,
            kg_rows: &kg_rows,
            type_idx,
            n_roles,
            state: FusionState::empty(),
            memory: Memory::new(ids.dim()),
            g_entities: vec![vec![0.0; ids.dim()]; entities.len()],
            loss: 0.0,
        };
        teacher.walk(store, &tree, 0)?;
        loss += teacher.loss;
        for (acc, g) in g_doc.entities.iter_mut().zip(&teacher.g_entities) {
            axpy(acc, 1.0, g);
        }
    }
    encode_document_backward(store, &ids.doc, &cache, &g_doc)?;
    Ok(loss)
}

/// Trains a fresh decoder on the corpus; the vocabulary is read off the
/// corpus text. Returns the model and the per-epoch loss trace, which is
/// bit-identical across runs with the same config.
pub fn train_decoder(
    corpus: &[TrainingDoc],
    kg: &KgEmbeddings,
    schemas: &SchemaSet,
    rules: &[NormalizeRule],
    cfg: &DecoderConfig,
) -> Result<(DecoderModel, Vec<f64>)> {
    let vocabulary: BTreeSet<char> =
        corpus.iter().flat_map(|d| d.sentences.iter()).flat_map(|s| s.chars()).collect();
    let mut model = DecoderModel::init(schemas, vocabulary, cfg)?;
    let ids = model.ids()?;
    let mut adam = Adam::new(&model.store, cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        model.store.zero_grads();
        let mut total = 0.0;
        for doc in corpus {
            total += doc_loss_and_grads(
                &mut model.store,
                &ids,
                model.variant,
                schemas,
                doc,
                kg,
                rules,
            )?;
        }
        if !total.is_finite() {
            return Err(Error::training(epoch, format!("loss became {total}")));
        }
        adam.step(&mut model.store);
        trace.push(total);
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::super::tests::{tiny_config, tiny_schemas};
    use super::super::{decode_document, EventArg, EventRecord, ModelScorer};
    use super::*;
    use crate::ner::Label;
    use crate::numeric::finite_diff_check;

    fn mention(sentence: usize, start: usize, end: usize, text: &str, label: Label) -> Mention {
        Mention { sentence, start, end, text: text.into(), label }
    }

    fn alpha(set: &SchemaSet, args: [Option<&str>; 3]) -> EventRecord {
        EventRecord::new(
            set.get(0),
            args.iter().map(|a| a.map(EventArg::new)).collect(),
        )
        .unwrap()
    }

    fn beta(set: &SchemaSet, args: [Option<&str>; 2]) -> EventRecord {
        EventRecord::new(
            set.get(1),
            args.iter().map(|a| a.map(EventArg::new)).collect(),
        )
        .unwrap()
    }

    /// Five documents, type decided by a marker character (增 vs 购); one
    /// document carries two events forking at the second role.
    fn fixture() -> (SchemaSet, Vec<TrainingDoc>) {
        let set = tiny_schemas();
        let docs = vec![
            TrainingDoc {
                doc_id: "a1".into(),
                sentences: vec!["甲增乙".into(), "丁日".into()],
                mentions: vec![
                    mention(0, 0, 1, "甲", Label::Company),
                    mention(0, 2, 3, "乙", Label::Shares),
                    mention(1, 0, 1, "丁", Label::Date),
                ],
                events: vec![alpha(&set, [Some("甲"), Some("乙"), Some("丁")])],
            },
            TrainingDoc {
                doc_id: "a2".into(),
                sentences: vec!["丙增戊".into(), "己日".into()],
                mentions: vec![
                    mention(0, 0, 1, "丙", Label::Company),
                    mention(0, 2, 3, "戊", Label::Shares),
                    mention(1, 0, 1, "己", Label::Date),
                ],
                events: vec![alpha(&set, [Some("丙"), Some("戊"), Some("己")])],
            },
            TrainingDoc {
                doc_id: "a3".into(),
                sentences: vec!["甲增乙".into(), "甲增丁".into()],
                mentions: vec![
                    mention(0, 0, 1, "甲", Label::Company),
                    mention(0, 2, 3, "乙", Label::Shares),
                    mention(1, 0, 1, "甲", Label::Company),
                    mention(1, 2, 3, "丁", Label::Shares),
                ],
                events: vec![
                    alpha(&set, [Some("甲"), Some("乙"), None]),
                    alpha(&set, [Some("甲"), Some("丁"), None]),
                ],
            },
            TrainingDoc {
                doc_id: "b1".into(),
                sentences: vec!["甲购乙".into(), "乙上".into()],
                mentions: vec![
                    mention(0, 0, 1, "甲", Label::Company),
                    mention(0, 2, 3, "乙", Label::Amount),
                    mention(1, 0, 1, "乙", Label::Amount),
                ],
                events: vec![beta(&set, [Some("甲"), Some("乙")])],
            },
            TrainingDoc {
                doc_id: "b2".into(),
                sentences: vec!["丙购戊".into(), "戊上".into()],
                mentions: vec![
                    mention(0, 0, 1, "丙", Label::Company),
                    mention(0, 2, 3, "戊", Label::Amount),
                    mention(1, 0, 1, "戊", Label::Amount),
                ],
                events: vec![beta(&set, [Some("丙"), Some("戊")])],
            },
        ];
        (set, docs)
    }

    #[test]
    fn gold_arguments_resolve_to_entities() {
        let (set, docs) = fixture();
        let cfg = tiny_config(4, 3);
        let model = DecoderModel::init(&set, "甲增乙丁日".chars(), &cfg).unwrap();
        let ids = model.ids().unwrap();
        let doc = &docs[0];
        let chars: Vec<Vec<char>> = doc.sentences.iter().map(|s| s.chars().collect()).collect();
        let (ctx, _) =
            encode_document(&model.store, &ids.doc, &chars, &doc.mentions, &[]).unwrap();
        let gold = resolve_gold(&set, &ctx, &doc.events, &[], "a1").unwrap();
        assert_eq!(gold[0], vec![vec![Some(0), Some(1), Some(2)]]);
        assert!(gold[1].is_empty());

        let stray = vec![alpha(&set, [Some("未知"), None, None])];
        let err = resolve_gold(&set, &ctx, &stray, &[], "a1").unwrap_err();
        assert!(err.to_string().contains("未知"), "{err}");
    }

    #[test]
    fn gold_tree_groups_shared_prefixes() {
        let events: Vec<Vec<Option<usize>>> = vec![
            vec![Some(0), Some(1), None],
            vec![Some(0), Some(2), None],
            vec![None, Some(1), Some(3)],
        ];
        let refs: Vec<&[Option<usize>]> = events.iter().map(|e| e.as_slice()).collect();
        let tree = gold_tree(&refs, 0, 3);
        assert_eq!(tree.targets, vec![0]);
        // None sorts first, Some(0) second
        assert_eq!(tree.children.len(), 2);
        assert_eq!(tree.children[0].0, None);
        assert_eq!(tree.children[1].0, Some(0));
        let under_zero = &tree.children[1].1;
        assert_eq!(under_zero.targets, vec![1, 2]);
        assert_eq!(under_zero.children.len(), 2);
    }

    #[test]
    fn zero_epochs_returns_initialized_parameters() {
        let (set, docs) = fixture();
        let cfg = DecoderConfig { epochs: 0, ..tiny_config(4, 3) };
        let (model, trace) =
            train_decoder(&docs, &KgEmbeddings::empty(3), &set, &[], &cfg).unwrap();
        assert!(trace.is_empty());
        let vocab: BTreeSet<char> =
            docs.iter().flat_map(|d| d.sentences.iter()).flat_map(|s| s.chars()).collect();
        let fresh = DecoderModel::init(&set, vocab, &cfg).unwrap();
        for ((_, a), (_, b)) in model.store.iter().zip(fresh.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }
    }

    #[test]
    fn loss_trace_is_bit_identical_across_runs() {
        let (set, docs) = fixture();
        let cfg = DecoderConfig { epochs: 4, ..tiny_config(4, 3) };
        let kg = KgEmbeddings::empty(3);
        let (_, t1) = train_decoder(&docs, &kg, &set, &[], &cfg).unwrap();
        let (_, t2) = train_decoder(&docs, &kg, &set, &[], &cfg).unwrap();
        assert_eq!(t1.len(), 4);
        assert_eq!(t1, t2);
        assert!(t1.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn training_memorizes_the_fixture() {
        let (set, docs) = fixture();
        let cfg = DecoderConfig {
            epochs: 220,
            learning_rate: 0.02,
            ..tiny_config(8, 4)
        };
        let kg = KgEmbeddings::empty(4);
        let (model, trace) = train_decoder(&docs, &kg, &set, &[], &cfg).unwrap();
        assert!(trace[trace.len() - 1] < trace[0] * 0.05, "trace {:?}", &trace[..3]);
        let ids = model.ids().unwrap();
        let scorer = ModelScorer::new(&model).unwrap();
        for doc in &docs {
            let chars: Vec<Vec<char>> =
                doc.sentences.iter().map(|s| s.chars().collect()).collect();
            let (ctx, _) =
                encode_document(&model.store, &ids.doc, &chars, &doc.mentions, &[]).unwrap();
            let got = decode_document(&model, &scorer, &ctx, &kg, &doc.doc_id).unwrap();
            assert_eq!(got, doc.events, "document {}", doc.doc_id);
        }
    }

    #[test]
    fn end_to_end_gradients_match_central_differences() {
        for (seed, variant) in [
            (21, FusionVariant::LinearMaxpool),
            (22, FusionVariant::AttentionMaxpool),
        ] {
            let (set, docs) = fixture();
            let doc = docs[2].clone(); // the two-event forking document
            let cfg = DecoderConfig { seed, variant, ..tiny_config(4, 4) };
            let vocab: BTreeSet<char> = doc.sentences.iter().flat_map(|s| s.chars()).collect();
            let mut model = DecoderModel::init(&set, vocab, &cfg).unwrap();
            let ids = model.ids().unwrap();
            // a generic point: zero rows would park the fusion layer norms
            // on their zero-variance knee, where central differences lose
            // more accuracy than the tolerance allows
            let kg = KgEmbeddings::from_named_rows(vec![
                ("甲".into(), vec![0.4, -0.3, 0.2, 0.6]),
                ("乙".into(), vec![-0.5, 0.1, 0.7, -0.2]),
                ("丁".into(), vec![0.3, 0.6, -0.4, 0.1]),
            ])
            .unwrap();
            let report = finite_diff_check(
                &mut model.store,
                |s| doc_loss_and_grads(s, &ids, variant, &set, &doc, &kg, &[]),
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
}
