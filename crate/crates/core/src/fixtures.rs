//! Deterministic synthetic fixtures with known ground truth: a small
//! financial knowledge graph, a separable link-prediction graph, a
//! memorizable training corpus, and an announcement corpus for the
//! labeling pipeline. The `fixtures` command writes them all to disk.

use std::collections::BTreeMap;
use std::path::Path;

use crate::edag::{EventArg, EventRecord, SchemaSet, TrainingDoc};
use crate::error::{Error, Result};
use crate::io::{Document, LabeledRecord};
use crate::kg::{EntityKind, EntityRecord, KnowledgeGraph, Triple};
use crate::ner::{Label, Mention};

fn entity(id: usize, name: &str, kind: EntityKind, aliases: &[&str]) -> EntityRecord {
    EntityRecord {
        id,
        canonical_name: name.to_string(),
        kind,
        aliases: aliases.iter().map(|a| a.to_string()).collect(),
    }
}

/// A 12-entity graph covering all seven relation kinds. The per-relation
/// triple counts are fixed, so ingestion reports can be checked exactly.
pub fn main_graph() -> KnowledgeGraph {
    use EntityKind::*;
    let entities = vec![
        entity(0, "甲公司", Company, &["甲股份"]),
        entity(1, "乙公司", Company, &["乙股份"]),
        entity(2, "丙公司", Company, &[]),
        entity(3, "丁公司", Company, &[]),
        entity(4, "戊公司", Company, &[]),
        entity(5, "己公司", Company, &[]),
        entity(6, "张三", Person, &[]),
        entity(7, "李四", Person, &[]),
        entity(8, "王五", Person, &[]),
        entity(9, "某银行", Institution, &[]),
        entity(10, "某法院", Institution, &[]),
        entity(11, "某信托", Institution, &[]),
    ];
    let relations = MAIN_GRAPH_HISTOGRAM.iter().map(|(n, _)| n.to_string()).collect();
    let t = |head, relation, tail| Triple { head, relation, tail };
    let triples = vec![
        t(0, 0, 2),
        t(3, 0, 4),
        t(9, 1, 0),
        t(6, 2, 0),
        t(7, 2, 1),
        t(8, 2, 3),
        t(0, 3, 1),
        t(2, 3, 5),
        t(6, 4, 0),
        t(7, 4, 2),
        t(6, 5, 11),
        t(4, 5, 9),
        t(8, 6, 5),
    ];
    KnowledgeGraph::build(entities, relations, triples, false)
        .expect("fixture graph is valid")
        .0
}

/// Relation histogram of [`main_graph`], in relation-id order.
pub const MAIN_GRAPH_HISTOGRAM: [(&str, u64); 7] = [
    ("branch", 2),
    ("creditor", 1),
    ("share_holder", 3),
    ("invest", 2),
    ("legal_person", 2),
    ("pledge", 2),
    ("managing_member", 1),
];

/// Renders a graph in the entity/triple TSV formats the ingester reads.
pub fn graph_tsv(graph: &KnowledgeGraph) -> (String, String) {
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
    // relation-major order so re-ingestion assigns the same relation ids
    // (the ingester numbers relations by first appearance)
    let mut triples: Vec<&Triple> = graph.triples().iter().collect();
    triples.sort_by_key(|t| (t.relation, t.head, t.tail));
    let mut rows = String::new();
    for t in triples {
        rows.push_str(&format!("{}\t{}\t{}\n", t.head, graph.relation_name(t.relation), t.tail));
    }
    (ents, rows)
}

/// Two 15-node groups: `forward` edges point group 0 into group 1,
/// `backward` edges the reverse, so pair direction alone determines the
/// relation. The held-out triples are direction-consistent pairs that
/// never appear as edges.
pub fn separable_graph() -> (KnowledgeGraph, Vec<(usize, usize, usize)>) {
    let per = 15;
    let entities = (0..2 * per)
        .map(|id| entity(id, &format!("n{id}"), EntityKind::Company, &[]))
        .collect();
    let mut triples = Vec::new();
    for i in 0..per {
        for d in 0..2 {
            let j = (i + d + 1) % per;
            triples.push(Triple { head: i, relation: 0, tail: per + j });
            triples.push(Triple { head: per + i, relation: 1, tail: j });
        }
    }
    let graph =
        KnowledgeGraph::build(entities, vec!["forward".into(), "backward".into()], triples, false)
            .expect("fixture graph is valid")
            .0;
    let holdout: Vec<(usize, usize, usize)> = (0..per)
        .map(|i| (i, 0, per + (i + 7) % per))
        .chain((0..per).map(|i| (per + i, 1, (i + 7) % per)))
        .filter(|&(h, _, t)| !graph.has_triple(h, t))
        .collect();
    (graph, holdout)
}

/// One piece of a fixture sentence: literal text or a labeled mention.
#[derive(Clone, Copy)]
pub enum Part<'a> {
    Lit(&'a str),
    Ent(&'a str, Label),
}

/// Assembles sentences from parts, tracking mention offsets so fixtures
/// never hand-count character positions.
pub struct DocBuilder<'a> {
    schemas: &'a SchemaSet,
    doc_id: String,
    sentences: Vec<String>,
    mentions: Vec<Mention>,
    events: Vec<EventRecord>,
}

impl<'a> DocBuilder<'a> {
    pub fn new(schemas: &'a SchemaSet, doc_id: &str) -> DocBuilder<'a> {
        DocBuilder {
            schemas,
            doc_id: doc_id.to_string(),
            sentences: Vec::new(),
            mentions: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn sentence(mut self, parts: &[Part]) -> Self {
        let idx = self.sentences.len();
        let mut text = String::new();
        let mut offset = 0usize;
        for part in parts {
            match *part {
                Part::Lit(s) => {
                    text.push_str(s);
                    offset += s.chars().count();
                }
                Part::Ent(s, label) => {
                    let len = s.chars().count();
                    self.mentions.push(Mention {
                        sentence: idx,
                        start: offset,
                        end: offset + len,
                        text: s.to_string(),
                        label,
                    });
                    text.push_str(s);
                    offset += len;
                }
            }
        }
        self.sentences.push(text);
        self
    }

    pub fn event(mut self, type_name: &str, args: &[Option<&str>]) -> Self {
        let idx = self.schemas.index_of(type_name).expect("fixture type exists");
        let schema = self.schemas.get(idx);
        let args = args.iter().map(|a| a.map(EventArg::new)).collect();
        self.events.push(EventRecord::new(schema, args).expect("fixture event is valid"));
        self
    }

    pub fn build(self) -> TrainingDoc {
        TrainingDoc {
            doc_id: self.doc_id,
            sentences: self.sentences,
            mentions: self.mentions,
            events: self.events,
        }
    }
}

/// The memorization corpus: 15 documents over all six event types, each
/// with gold mentions and events, plus the graph grounding the company,
/// person, and institution arguments. Document 11 carries two pledge
/// events that share a pledger and fork on the share count.
pub struct MemorizationFixture {
    pub schemas: SchemaSet,
    pub docs: Vec<TrainingDoc>,
    pub graph: KnowledgeGraph,
}

pub fn memorization_corpus() -> MemorizationFixture {
    use Label::*;
    use Part::*;
    let schemas = SchemaSet::default_set();
    let doc = |id| DocBuilder::new(&schemas, id);
    let docs = vec![
        doc("d01")
            .sentence(&[
                Ent("张三", Person),
                Lit("持有的"),
                Ent("100万股", Shares),
                Lit("被"),
                Ent("某法院", Institution),
                Lit("冻结。"),
            ])
            .sentence(&[Lit("冻结日为"), Ent("2019年1月", Date), Lit("。")])
            .event(
                "EquityFreeze",
                &[Some("张三"), Some("100万股"), Some("某法院"), None, None, Some("2019年1月"), None],
            )
            .build(),
        doc("d02")
            .sentence(&[
                Ent("李四", Person),
                Lit("名下"),
                Ent("200万股", Shares),
                Lit("遭到司法冻结。"),
            ])
            .event("EquityFreeze", &[Some("李四"), Some("200万股"), None, None, None, None, None])
            .build(),
        doc("d03")
            .sentence(&[
                Ent("王五", Person),
                Lit("所持"),
                Ent("300万股", Shares),
                Lit("被冻结，总持股"),
                Ent("500万股", Shares),
                Lit("。"),
            ])
            .event(
                "EquityFreeze",
                &[Some("王五"), Some("300万股"), None, Some("500万股"), None, None, None],
            )
            .build(),
        doc("d04")
            .sentence(&[
                Ent("甲公司", Company),
                Lit("回购股份，最高价"),
                Ent("12元", Amount),
                Lit("，最低价"),
                Ent("10元", Amount),
                Lit("。"),
            ])
            .event(
                "EquityRepurchase",
                &[Some("甲公司"), Some("12元"), Some("10元"), None, None, None],
            )
            .build(),
        doc("d05")
            .sentence(&[
                Ent("乙公司", Company),
                Lit("完成回购"),
                Ent("100万股", Shares),
                Lit("，最高成交价"),
                Ent("15元", Amount),
                Lit("。"),
            ])
            .event(
                "EquityRepurchase",
                &[Some("乙公司"), Some("15元"), None, Some("100万股"), None, None],
            )
            .build(),
        doc("d06")
            .sentence(&[
                Ent("张三", Person),
                Lit("增持"),
                Ent("100万股", Shares),
                Lit("，时间"),
                Ent("2019年2月", Date),
                Lit("。"),
            ])
            .event("EquityOverweight", &[Some("张三"), Some("100万股"), Some("2019年2月"), None, None])
            .build(),
        doc("d07")
            .sentence(&[
                Ent("丙公司", Company),
                Lit("增持"),
                Ent("200万股", Shares),
                Lit("，增持后持有"),
                Ent("600万股", Shares),
                Lit("。"),
            ])
            .event(
                "EquityOverweight",
                &[Some("丙公司"), Some("200万股"), None, Some("600万股"), None],
            )
            .build(),
        doc("d08")
            .sentence(&[
                Ent("李四", Person),
                Lit("减持"),
                Ent("150万股", Shares),
                Lit("，时间"),
                Ent("2019年3月", Date),
                Lit("。"),
            ])
            .event("EquityUnderweight", &[Some("李四"), Some("150万股"), Some("2019年3月"), None, None])
            .build(),
        doc("d09")
            .sentence(&[Ent("丁公司", Company), Lit("减持"), Ent("100万股", Shares), Lit("。")])
            .event("EquityUnderweight", &[Some("丁公司"), Some("100万股"), None, None, None])
            .build(),
        doc("d10")
            .sentence(&[
                Ent("张三", Person),
                Lit("将"),
                Ent("100万股", Shares),
                Lit("质押给"),
                Ent("某银行", Institution),
                Lit("。"),
            ])
            .event(
                "EquityPledge",
                &[Some("张三"), Some("100万股"), Some("某银行"), None, None, None, None],
            )
            .build(),
        doc("d11")
            .sentence(&[
                Ent("李四", Person),
                Lit("将"),
                Ent("200万股", Shares),
                Lit("质押给"),
                Ent("某信托", Institution),
                Lit("。"),
            ])
            .sentence(&[Lit("随后又质押"), Ent("300万股", Shares), Lit("。")])
            .event(
                "EquityPledge",
                &[Some("李四"), Some("200万股"), Some("某信托"), None, None, None, None],
            )
            .event(
                "EquityPledge",
                &[Some("李四"), Some("300万股"), Some("某信托"), None, None, None, None],
            )
            .build(),
        doc("d12")
            .sentence(&[
                Ent("戊公司", Company),
                Lit("质押"),
                Ent("400万股", Shares),
                Lit("给"),
                Ent("某银行", Institution),
                Lit("，占比"),
                Ent("10%", Ratio),
                Lit("。"),
            ])
            .event(
                "EquityPledge",
                &[Some("戊公司"), Some("400万股"), Some("某银行"), None, Some("10%"), None, None],
            )
            .build(),
        doc("d13")
            .sentence(&[
                Ent("甲公司", Company),
                Lit("起诉"),
                Ent("乙公司", Company),
                Lit("，由"),
                Ent("某法院", Institution),
                Lit("受理。"),
            ])
            .event("Lawsuit", &[Some("甲公司"), Some("乙公司"), Some("某法院"), None])
            .build(),
        doc("d14")
            .sentence(&[
                Ent("丙公司", Company),
                Lit("起诉"),
                Ent("丁公司", Company),
                Lit("，立案时间"),
                Ent("2020年3月", Date),
                Lit("。"),
            ])
            .event("Lawsuit", &[Some("丙公司"), Some("丁公司"), None, Some("2020年3月")])
            .build(),
        doc("d15")
            .sentence(&[
                Ent("己公司", Company),
                Lit("起诉"),
                Ent("戊公司", Company),
                Lit("，"),
                Ent("某法院", Institution),
                Lit("于"),
                Ent("2020年4月", Date),
                Lit("受理。"),
            ])
            .event("Lawsuit", &[Some("己公司"), Some("戊公司"), Some("某法院"), Some("2020年4月")])
            .build(),
    ];
    MemorizationFixture { schemas, docs, graph: main_graph() }
}

pub fn training_doc_to_document(doc: &TrainingDoc) -> Document {
    Document {
        doc_id: doc.doc_id.clone(),
        sentences: doc.sentences.clone(),
        mentions: Some(doc.mentions.clone()),
        events: Some(
            doc.events
                .iter()
                .map(|record| LabeledRecord { record: record.clone(), source: None })
                .collect(),
        ),
        event_count: Some(doc.events.len()),
    }
}

/// Gazetteer rows covering every mention surface in a corpus.
pub fn corpus_gazetteer(docs: &[TrainingDoc]) -> Vec<(String, Label)> {
    let mut table: BTreeMap<String, Label> = BTreeMap::new();
    for doc in docs {
        for m in &doc.mentions {
            table.insert(m.text.clone(), m.label);
        }
    }
    table.into_iter().collect()
}

/// Announcement corpus for the labeling pipeline. Structured documents
/// phrase events exactly as the templates expect; unstructured ones state
/// the same facts in words no template matches, so only distant
/// supervision can recover them. One unstructured lawsuit omits the court
/// and one overweight pair locates two of five roles, giving the coverage
/// threshold real work at every step of {0.25, 0.5, 0.75, 1.0}.
pub struct AnnouncementFixture {
    pub schemas: SchemaSet,
    /// Template file text (`<EventType>\t<pattern>` rows).
    pub templates: String,
    /// Gold-annotated documents; labeling commands overwrite `events` and
    /// score themselves against this ground truth.
    pub docs: Vec<Document>,
}

pub fn announcement_corpus() -> AnnouncementFixture {
    let schemas = SchemaSet::default_set();
    let templates = "\
# lawsuit announcements, structured form
Lawsuit\t{Plaintiff:name}起诉{Defendant:name}，{LegalInstitution:name}受理。
# overweight announcements, structured form
EquityOverweight\t{EquityHolder:name}增持{TradingShares:number}。
"
    .to_string();

    let lawsuit = |p: &str, d: &str, c: Option<&str>, date: Option<&str>| {
        let idx = schemas.index_of("Lawsuit").unwrap();
        EventRecord::new(schemas.get(idx), vec![
            Some(EventArg::new(p)),
            Some(EventArg::new(d)),
            c.map(EventArg::new),
            date.map(EventArg::new),
        ])
        .unwrap()
    };
    let overweight = |h: &str, s: &str| {
        let idx = schemas.index_of("EquityOverweight").unwrap();
        EventRecord::new(schemas.get(idx), vec![
            Some(EventArg::new(h)),
            Some(EventArg::new(s)),
            None,
            None,
            None,
        ])
        .unwrap()
    };
    let gold = |record: EventRecord| vec![LabeledRecord { record, source: None }];

    let pairs = [
        ("甲公司", "乙公司", "一号法院"),
        ("丙公司", "丁公司", "二号法院"),
        ("戊公司", "己公司", "三号法院"),
        ("庚公司", "辛公司", "四号法院"),
    ];
    let mut docs = Vec::new();
    for (i, (p, d, c)) in pairs.iter().enumerate() {
        docs.push(
            Document::new(format!("la-s{i}"), vec![format!("{p}起诉{d}，{c}受理。")])
                .with_events(gold(lawsuit(p, d, Some(c), None))),
        );
    }
    for (i, (p, d, c)) in pairs.iter().enumerate().take(3) {
        docs.push(
            Document::new(
                format!("la-u{i}"),
                vec![format!("{d}被{p}告上法庭。"), format!("{c}已经立案。")],
            )
            .with_events(gold(lawsuit(p, d, Some(c), None))),
        );
    }
    let (p, d, _) = pairs[3];
    docs.push(
        Document::new("la-u3", vec![format!("{d}被{p}告上法庭。")])
            .with_events(gold(lawsuit(p, d, None, None))),
    );

    let holders = [("壬公司", "100万股"), ("癸公司", "200万股")];
    for (i, (h, s)) in holders.iter().enumerate() {
        docs.push(
            Document::new(format!("eo-s{i}"), vec![format!("{h}增持{s}。")])
                .with_events(gold(overweight(h, s))),
        );
    }
    docs.push(
        Document::new("eo-u0", vec!["壬公司本月加仓100万股。".to_string()])
            .with_events(gold(overweight("壬公司", "100万股"))),
    );
    docs.push(
        Document::new("eo-u1", vec!["癸公司继续买入200万股。".to_string()])
            .with_events(gold(overweight("癸公司", "200万股"))),
    );

    AnnouncementFixture { schemas, templates, docs }
}

/// A configuration wired to the file names [`write_fixture_tree`] uses,
/// sized for desk-scale runs.
pub const FIXTURE_CONFIG: &str = "\
[kg]
entities = \"entities.tsv\"
triples = \"triples.tsv\"
alias_table = \"aliases.tsv\"

[embed]
dim = 8
epochs = 150

[ner]
strategy = \"gazetteer\"
gazetteer = \"gazetteer.tsv\"

[encode]
token_dim = 16
hidden = 32

[decode]
schemas = \"schemas.txt\"
fuse_hidden = 16
expand_hidden = 32
epochs = 350
lr = 0.01

[ds]
templates = \"templates.tsv\"
";

/// Every fixture file as (name, contents), in write order.
pub fn fixture_files() -> Result<Vec<(String, Vec<u8>)>> {
    let main = main_graph();
    let (entities, triples) = graph_tsv(&main);
    let (sep, holdout) = separable_graph();
    let (sep_entities, sep_triples) = graph_tsv(&sep);
    let mut sep_holdout = String::new();
    for (h, r, t) in holdout {
        sep_holdout.push_str(&format!("{h}\t{}\t{t}\n", sep.relation_name(r)));
    }

    let memo = memorization_corpus();
    let training: Vec<Document> = memo.docs.iter().map(training_doc_to_document).collect();
    let mut gazetteer = String::new();
    for (surface, label) in corpus_gazetteer(&memo.docs) {
        gazetteer.push_str(&format!("{surface}\t{}\n", label.as_str()));
    }

    let ann = announcement_corpus();
    let files = vec![
        ("entities.tsv".to_string(), entities.into_bytes()),
        ("triples.tsv".to_string(), triples.into_bytes()),
        ("aliases.tsv".to_string(), "甲股份\t甲公司\n乙股份\t乙公司\n".as_bytes().to_vec()),
        ("separable.entities.tsv".to_string(), sep_entities.into_bytes()),
        ("separable.triples.tsv".to_string(), sep_triples.into_bytes()),
        ("separable.holdout.tsv".to_string(), sep_holdout.into_bytes()),
        ("schemas.txt".to_string(), memo.schemas.render().into_bytes()),
        ("gazetteer.tsv".to_string(), gazetteer.into_bytes()),
        ("training.jsonl".to_string(), crate::io::render_documents(&training)?.into_bytes()),
        ("templates.tsv".to_string(), ann.templates.into_bytes()),
        ("announcements.jsonl".to_string(), crate::io::render_documents(&ann.docs)?.into_bytes()),
        ("config.toml".to_string(), FIXTURE_CONFIG.as_bytes().to_vec()),
    ];
    Ok(files)
}

/// Writes the fixture tree into `dir` (created if missing); returns the
/// file names written.
pub fn write_fixture_tree(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let files = fixture_files()?;
    let mut names = Vec::new();
    for (name, bytes) in files {
        crate::io::write_bytes(dir.join(&name), &bytes)?;
        names.push(name);
    }
    Ok(names)
}
