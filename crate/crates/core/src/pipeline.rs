//! Stage orchestration shared by the command-line interface: turning
//! configuration into graphs, taggers, labeled corpora, trained models,
//! extracted events, and reports. Per-document work fans out across the
//! rayon pool; results keep corpus order.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::{NerSection, PipelineConfig, TaggerKind};
use crate::doc::{encode_document, DocEncoder};
use crate::ds::{match_templates, LabelingConfig, Template};
use crate::edag::{
    decode_document_at, DecoderModel, KgEmbeddings, ModelScorer, SchemaSet, TrainingDoc,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, DocOutcome, MatchReport};
use crate::io::{read_to_string, Document, LabeledRecord};
use crate::kg::{ingest, read_alias_table, IngestReport, KnowledgeGraph, NormalizeRule};
use crate::ner::{
    tag, tags_from_mentions, CrfModel, Gazetteer, Mention, TagStrategy, TaggedSentence,
};

/// Worker-count override honored by [`init_workers`].
pub const WORKERS_ENV: &str = "KGEE_WORKERS";

/// Caps the rayon pool at `$KGEE_WORKERS` threads when the variable is
/// set. Must run before anything else touches the pool.
pub fn init_workers() -> Result<()> {
    let value = match std::env::var(WORKERS_ENV) {
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(Error::Config(format!("{WORKERS_ENV}: {e}"))),
        Ok(v) => v,
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {value:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

pub fn load_schemas(cfg: &PipelineConfig) -> Result<SchemaSet> {
    match &cfg.decode.schemas {
        None => Ok(SchemaSet::default_set()),
        Some(path) => SchemaSet::parse(&read_to_string(path)?, path),
    }
}

pub fn load_rules(cfg: &PipelineConfig) -> Result<Vec<NormalizeRule>> {
    let aliases = match &cfg.kg.alias_table {
        Some(path) => Some(read_alias_table(path)?),
        None => None,
    };
    Ok(cfg.kg.rules(aliases))
}

pub fn load_templates(cfg: &PipelineConfig, schemas: &SchemaSet) -> Result<Vec<Template>> {
    let path = cfg
        .ds
        .templates
        .as_ref()
        .ok_or_else(|| Error::Config("ds.templates is not set".into()))?;
    Template::parse_file(schemas, &read_to_string(path)?, path)
}

/// Ingests the graph files named by the configuration and attaches its
/// normalization rules.
pub fn build_graph(cfg: &PipelineConfig) -> Result<(KnowledgeGraph, IngestReport)> {
    let missing = |field: &str| Error::Config(format!("kg.{field} is not set"));
    let entities = cfg.kg.entities.as_ref().ok_or_else(|| missing("entities"))?;
    let triples = cfg.kg.triples.as_ref().ok_or_else(|| missing("triples"))?;
    let (mut graph, report) = ingest(entities, triples)?;
    graph.set_normalize_rules(load_rules(cfg)?);
    Ok((graph, report))
}

/// Parses held-out triples (`head<TAB>relation_name<TAB>tail`) against a
/// built graph.
pub fn parse_holdout(
    text: &str,
    path: &str,
    graph: &KnowledgeGraph,
) -> Result<Vec<(usize, usize, usize)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, lineno, "expected head<TAB>relation<TAB>tail"));
        }
        let node = |s: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad entity id {s:?}")))?;
            if id >= graph.entity_count() {
                return Err(Error::parse(path, lineno, format!("entity id {id} out of range")));
            }
            Ok(id)
        };
        let relation = graph.relation_id(fields[1]).ok_or_else(|| {
            Error::parse(path, lineno, format!("unknown relation {:?}", fields[1]))
        })?;
        out.push((node(fields[0])?, relation, node(fields[2])?));
    }
    Ok(out)
}

/// A resolved mention source.
pub enum Tagger {
    Gold,
    Crf(CrfModel),
    Gazetteer(Gazetteer),
}

impl Tagger {
    /// Builds the tagger the configuration asks for. CRF tagging needs a
    /// trained model, which the caller loads from its checkpoint.
    pub fn from_config(cfg: &NerSection, crf: Option<CrfModel>) -> Result<Tagger> {
        match cfg.strategy {
            TaggerKind::Gold => Ok(Tagger::Gold),
            TaggerKind::Crf => crf
                .map(Tagger::Crf)
                .ok_or_else(|| Error::Config("ner.strategy = \"crf\" needs a tagger model".into())),
            TaggerKind::Gazetteer => {
                let path = cfg
                    .gazetteer
                    .as_ref()
                    .ok_or_else(|| Error::Config("ner.gazetteer is not set".into()))?;
                Ok(Tagger::Gazetteer(Gazetteer::read(path)?))
            }
        }
    }

    /// Mention list for one document.
    pub fn mentions(&self, doc: &Document) -> Result<Vec<Mention>> {
        if let Tagger::Gold = self {
            return doc.mentions.clone().ok_or_else(|| {
                Error::data(format!(
                    "document {}: mention lists are required under the gold strategy",
                    doc.doc_id
                ))
            });
        }
        let mut mentions = Vec::new();
        for (i, sentence) in doc.sentences.iter().enumerate() {
            let chars: Vec<char> = sentence.chars().collect();
            let strategy = match self {
                Tagger::Crf(model) => TagStrategy::Crf(model),
                Tagger::Gazetteer(g) => TagStrategy::Gazetteer(g),
                Tagger::Gold => unreachable!("handled above"),
            };
            mentions.extend(tag(i, &chars, &strategy)?);
        }
        Ok(mentions)
    }
}

/// Validates wire documents and attaches mentions, yielding the training
/// form. Events default to empty for unlabeled corpora.
pub fn to_training_docs(docs: &[Document], tagger: &Tagger) -> Result<Vec<TrainingDoc>> {
    docs.iter()
        .map(|doc| {
            doc.validate()?;
            Ok(TrainingDoc {
                doc_id: doc.doc_id.clone(),
                sentences: doc.sentences.clone(),
                mentions: tagger.mentions(doc)?,
                events: doc.records(),
            })
        })
        .collect()
}

/// Gold BIO sentences for CRF training, from documents with mentions.
pub fn tagged_sentences(docs: &[Document]) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    for doc in docs {
        doc.validate()?;
        let mentions = doc.mentions.as_deref().ok_or_else(|| {
            Error::data(format!("document {}: tagger training needs mention lists", doc.doc_id))
        })?;
        for (i, sentence) in doc.sentences.iter().enumerate() {
            let in_sentence: Vec<Mention> =
                mentions.iter().filter(|m| m.sentence == i).cloned().collect();
            let tags = tags_from_mentions(sentence.chars().count(), &in_sentence)?;
            out.push(TaggedSentence::new(sentence, tags));
        }
    }
    Ok(out)
}

/// Rebuilds an embedding model from a loaded checkpoint. The tensor
/// shapes carry the node count, width, and relation count.
pub fn embedding_model_from_store(
    store: crate::numeric::ParamStore,
) -> Result<crate::embed::EmbeddingModel> {
    let find = |name: &str| {
        store.lookup(name).ok_or_else(|| Error::data(format!("{name} missing from store")))
    };
    let node_table = find("node_table")?;
    let classifier = find("link.classifier")?;
    let (node_count, embed_dim) = store.value(node_table).shape();
    let relation_count = store
        .value(classifier)
        .rows()
        .checked_sub(1)
        .ok_or_else(|| Error::data("link.classifier has no relation rows"))?;
    Ok(crate::embed::EmbeddingModel { store, embed_dim, relation_count, node_count, seed: 0 })
}

/// Rebuilds a CRF tagger from a loaded checkpoint.
pub fn crf_from_store(store: crate::numeric::ParamStore) -> Result<CrfModel> {
    let unary = store
        .lookup("crf.unary")
        .ok_or_else(|| Error::data("crf.unary missing from store"))?;
    let t = store.value(unary).cols();
    if t < 3 || t % 2 == 0 {
        return Err(Error::data(format!("crf.unary has {t} tag columns, expected 2n+1")));
    }
    Ok(CrfModel { n_labels: (t - 1) / 2, feature_dim: store.value(unary).rows(), store })
}

/// Runs the labeling stage over a corpus. With `ds: None` only template
/// matching runs; otherwise template events seed the distant-supervision
/// graph and both kinds are returned. Input events are treated as gold:
/// when any document carries them, the labels are scored against them.
pub fn label_documents(
    docs: &[Document],
    templates: &[Template],
    schemas: &SchemaSet,
    rules: &[NormalizeRule],
    main_relations: &[String],
    ds: Option<&LabelingConfig>,
) -> Result<(Vec<Document>, Option<MatchReport>)> {
    for doc in docs {
        doc.validate()?;
    }
    let labeled = match ds {
        Some(cfg) => {
            let inputs: Vec<(String, Vec<String>)> =
                docs.iter().map(|d| (d.doc_id.clone(), d.sentences.clone())).collect();
            crate::ds::label_corpus(&inputs, templates, schemas, rules, main_relations, cfg)?
        }
        None => docs
            .par_iter()
            .map(|d| match_templates(&d.sentences, templates, schemas))
            .collect::<Result<_>>()?,
    };
    let out: Vec<Document> = docs
        .iter()
        .zip(labeled)
        .map(|(doc, events)| {
            let events = events
                .into_iter()
                .map(|e| LabeledRecord { record: e.record, source: Some(e.source) })
                .collect();
            Document {
                doc_id: doc.doc_id.clone(),
                sentences: doc.sentences.clone(),
                mentions: doc.mentions.clone(),
                events: None,
                event_count: None,
            }
            .with_events(events)
        })
        .collect();
    let report = if docs.iter().any(|d| d.events.is_some()) {
        Some(evaluate_documents(&out, docs, schemas)?)
    } else {
        None
    };
    Ok((out, report))
}

/// Tags, encodes, and decodes each document, returning copies with their
/// `events` replaced by the extraction.
pub fn extract_documents(
    model: &DecoderModel,
    docs: &[Document],
    kg: &KgEmbeddings,
    rules: &[NormalizeRule],
    tagger: &Tagger,
    type_threshold: f64,
    select_threshold: f64,
) -> Result<Vec<Document>> {
    let encoder = DocEncoder::lookup(&model.store)?;
    let mut scorer = ModelScorer::new(model)?;
    scorer.threshold = select_threshold;
    docs.par_iter()
        .map(|doc| {
            doc.validate()?;
            let mentions = tagger.mentions(doc)?;
            let chars: Vec<Vec<char>> =
                doc.sentences.iter().map(|s| s.chars().collect()).collect();
            let (ctx, _) = encode_document(&model.store, &encoder, &chars, &mentions, rules)?;
            let records =
                decode_document_at(model, &scorer, &ctx, kg, &doc.doc_id, type_threshold)?;
            let events =
                records.into_iter().map(|record| LabeledRecord { record, source: None }).collect();
            Ok(doc.clone().with_events(events))
        })
        .collect()
}

/// Pairs predicted and gold corpora by document id and scores them. The
/// two sides must cover the same documents.
pub fn evaluate_documents(
    predicted: &[Document],
    gold: &[Document],
    schemas: &SchemaSet,
) -> Result<MatchReport> {
    let mut gold_map: BTreeMap<&str, &Document> = BTreeMap::new();
    for doc in gold {
        if gold_map.insert(&doc.doc_id, doc).is_some() {
            return Err(Error::data(format!("duplicate gold document {}", doc.doc_id)));
        }
    }
    let mut outcomes = Vec::new();
    let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
    for doc in predicted {
        if seen.insert(&doc.doc_id, ()).is_some() {
            return Err(Error::data(format!("duplicate predicted document {}", doc.doc_id)));
        }
        let gold_doc = gold_map
            .remove(doc.doc_id.as_str())
            .ok_or_else(|| Error::data(format!("document {} has no gold counterpart", doc.doc_id)))?;
        outcomes.push(DocOutcome {
            doc_id: doc.doc_id.clone(),
            predicted: doc.records(),
            gold: gold_doc.records(),
        });
    }
    if let Some((id, _)) = gold_map.iter().next() {
        return Err(Error::data(format!("gold document {id} has no prediction")));
    }
    evaluate(&outcomes, schemas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn gold_tagger_requires_mentions() {
        let doc = Document::new("d", vec!["甲公司增持。".into()]);
        let err = Tagger::Gold.mentions(&doc).unwrap_err();
        assert!(err.to_string().contains("document d"), "{err}");
    }

    #[test]
    fn gazetteer_tagger_finds_known_surfaces() {
        let memo = fixtures::memorization_corpus();
        let table = fixtures::corpus_gazetteer(&memo.docs);
        let tagger = Tagger::Gazetteer(Gazetteer::new(table).unwrap());
        for doc in &memo.docs {
            let document = fixtures::training_doc_to_document(doc);
            let tagged = tagger.mentions(&document).unwrap();
            // every gold mention surface is recovered (offsets may differ
            // when a surface repeats, so compare the span texts as sets)
            let texts = |ms: &[Mention]| {
                let mut v: Vec<String> = ms.iter().map(|m| m.text.clone()).collect();
                v.sort();
                v.dedup();
                v
            };
            assert_eq!(texts(&tagged), texts(&doc.mentions), "{}", doc.doc_id);
        }
    }

    #[test]
    fn labeling_scores_itself_against_gold() {
        let ann = fixtures::announcement_corpus();
        let templates =
            Template::parse_file(&ann.schemas, &ann.templates, "t.tsv").unwrap();
        let main = fixtures::main_graph();
        // template pass alone: everything it finds is gold
        let (template_docs, report) =
            label_documents(&ann.docs, &templates, &ann.schemas, &[], main.relation_names(), None)
                .unwrap();
        let template_report = report.expect("gold events present");
        assert_eq!(template_report.all.total.precision(), 1.0);
        assert!(template_report.all.total.recall() < 1.0);
        // the full pipeline keeps template events and adds coverage
        let (ds_docs, report) = label_documents(
            &ann.docs,
            &templates,
            &ann.schemas,
            &[],
            main.relation_names(),
            Some(&LabelingConfig { theta: 0.5 }),
        )
        .unwrap();
        let ds_report = report.expect("gold events present");
        assert_eq!(ds_report.all.total.precision(), 1.0);
        assert!(ds_report.all.total.recall() > template_report.all.total.recall());
        let count = |docs: &[Document]| -> usize {
            docs.iter().map(|d| d.event_count.unwrap_or(0)).sum()
        };
        assert!(count(&ds_docs) > count(&template_docs));
    }

    #[test]
    fn evaluation_requires_matching_corpora() {
        let ann = fixtures::announcement_corpus();
        let report =
            evaluate_documents(&ann.docs, &ann.docs, &ann.schemas).unwrap();
        assert_eq!(report.all.total.f1(), 1.0);
        assert_eq!(report.all.documents, ann.docs.len());
        let err = evaluate_documents(&ann.docs[..2], &ann.docs, &ann.schemas).unwrap_err();
        assert!(err.to_string().contains("no prediction"), "{err}");
        let err = evaluate_documents(&ann.docs, &ann.docs[..2], &ann.schemas).unwrap_err();
        assert!(err.to_string().contains("no gold counterpart"), "{err}");
    }

    #[test]
    fn holdout_parsing_checks_names_and_ranges() {
        let (graph, holdout) = fixtures::separable_graph();
        let mut text = String::new();
        for &(h, r, t) in &holdout {
            text.push_str(&format!("{h}\t{}\t{t}\n", graph.relation_name(r)));
        }
        assert_eq!(parse_holdout(&text, "h.tsv", &graph).unwrap(), holdout);
        let err = parse_holdout("0\tsideways\t1\n", "h.tsv", &graph).unwrap_err();
        assert!(err.to_string().contains("sideways"), "{err}");
        let err = parse_holdout("0\tforward\t99\n", "h.tsv", &graph).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn extraction_handles_an_empty_corpus() {
        let memo = fixtures::memorization_corpus();
        let cfg = crate::edag::DecoderConfig {
            epochs: 0,
            ..crate::edag::DecoderConfig::default()
        };
        let kg = KgEmbeddings::empty(cfg.embed_dim);
        let (model, _) =
            crate::edag::train_decoder(&memo.docs, &kg, &memo.schemas, &[], &cfg).unwrap();
        let out =
            extract_documents(&model, &[], &kg, &[], &Tagger::Gold, 0.5, 0.5).unwrap();
        assert!(out.is_empty());
    }
}
