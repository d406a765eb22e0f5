//! Declarative pipeline configuration: one TOML file with a section per
//! stage, every field defaulted, numeric ranges checked up front.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc::DocConfig;
use crate::edag::{DecoderConfig, FusionVariant};
use crate::embed::EmbedConfig;
use crate::error::{Error, Result};
use crate::kg::NormalizeRule;
use crate::ner::CrfConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgSection {
    pub entities: Option<String>,
    pub triples: Option<String>,
    pub alias_table: Option<String>,
    /// Path features kept per entity pair.
    pub k: usize,
    /// Longest path considered, in hops.
    pub max_len: usize,
    pub strip_prefixes: Vec<String>,
    pub strip_suffixes: Vec<String>,
    pub whitespace_fold: bool,
}

impl Default for KgSection {
    fn default() -> Self {
        KgSection {
            entities: None,
            triples: None,
            alias_table: None,
            k: 3,
            max_len: 4,
            strip_prefixes: Vec::new(),
            strip_suffixes: Vec::new(),
            whitespace_fold: true,
        }
    }
}

impl KgSection {
    /// Normalization pipeline in application order. The alias table is
    /// passed in because loading it needs file access.
    pub fn rules(&self, aliases: Option<BTreeMap<String, String>>) -> Vec<NormalizeRule> {
        let mut rules = Vec::new();
        if self.whitespace_fold {
            rules.push(NormalizeRule::WhitespaceFold);
        }
        if !self.strip_prefixes.is_empty() {
            rules.push(NormalizeRule::StripPrefixSet(self.strip_prefixes.clone()));
        }
        if !self.strip_suffixes.is_empty() {
            rules.push(NormalizeRule::StripSuffixSet(self.strip_suffixes.clone()));
        }
        if let Some(table) = aliases {
            if !table.is_empty() {
                rules.push(NormalizeRule::AliasLookup(table));
            }
        }
        rules
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    /// Graph embedding width.
    pub dim: usize,
    /// Focal-loss focusing exponent.
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub negatives: usize,
}

impl Default for EmbedSection {
    fn default() -> Self {
        let c = EmbedConfig::default();
        EmbedSection {
            dim: c.embed_dim,
            lambda: c.lambda,
            lr: c.lr,
            epochs: c.epochs,
            seed: c.seed,
            negatives: c.negatives_per_positive,
        }
    }
}

impl EmbedSection {
    pub fn to_config(&self) -> EmbedConfig {
        EmbedConfig {
            embed_dim: self.dim,
            epochs: self.epochs,
            lr: self.lr,
            negatives_per_positive: self.negatives,
            lambda: self.lambda,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaggerKind {
    /// Documents must carry their own mention lists.
    Gold,
    Crf,
    Gazetteer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NerSection {
    pub strategy: TaggerKind,
    pub gazetteer: Option<String>,
    /// Hashed feature space size.
    pub feature_dim: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for NerSection {
    fn default() -> Self {
        let c = CrfConfig::default();
        NerSection {
            strategy: TaggerKind::Gold,
            gazetteer: None,
            feature_dim: c.feature_dim,
            epochs: c.epochs,
            lr: c.lr,
        }
    }
}

impl NerSection {
    pub fn to_crf_config(&self) -> CrfConfig {
        CrfConfig {
            n_labels: crate::ner::LABELS.len(),
            feature_dim: self.feature_dim,
            epochs: self.epochs,
            lr: self.lr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    /// Character embedding width, shared by every downstream layer.
    pub token_dim: usize,
    pub hidden: usize,
    pub depth: usize,
}

impl Default for EncodeSection {
    fn default() -> Self {
        let c = DocConfig::default();
        EncodeSection { token_dim: c.token_dim, hidden: c.hidden, depth: c.depth }
    }
}

impl EncodeSection {
    pub fn to_doc_config(&self) -> DocConfig {
        DocConfig {
            token_dim: self.token_dim,
            hidden: self.hidden,
            depth: self.depth,
            n_labels: crate::ner::LABELS.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    /// Optional schema file; the built-in six financial event types
    /// (with their key roles) apply when unset.
    pub schemas: Option<String>,
    pub fusion: FusionVariant,
    pub fuse_hidden: usize,
    pub expand_hidden: usize,
    pub expand_depth: usize,
    pub branch_cap: usize,
    /// An event type is decoded when its probability exceeds this.
    pub type_threshold: f64,
    /// A candidate entity extends a path when its probability exceeds this.
    pub select_threshold: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for DecodeSection {
    fn default() -> Self {
        let c = DecoderConfig::default();
        DecodeSection {
            schemas: None,
            fusion: c.variant,
            fuse_hidden: c.fuse_hidden,
            expand_hidden: c.expand_hidden,
            expand_depth: c.expand_depth,
            branch_cap: c.branch_cap,
            type_threshold: 0.5,
            select_threshold: 0.5,
            epochs: c.epochs,
            lr: c.learning_rate,
            seed: c.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DsSection {
    /// Minimum fraction of roles located in the document (key roles are
    /// always required in full).
    pub theta: f64,
    pub templates: Option<String>,
}

impl Default for DsSection {
    fn default() -> Self {
        DsSection { theta: 0.5, templates: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub report_json: Option<String>,
    pub report_text: Option<String>,
}

/// The whole pipeline's knobs. Every section and field has a default, so
/// an empty file is a valid configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub kg: KgSection,
    pub embed: EmbedSection,
    pub ner: NerSection,
    pub encode: EncodeSection,
    pub decode: DecodeSection,
    pub ds: DsSection,
    pub eval: EvalSection,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        PipelineConfig::parse(&crate::io::read_to_string(path)?)
    }

    /// Reinterprets relative paths against `base`, so a configuration can
    /// sit next to the files it names regardless of the working directory.
    pub fn rebase(&mut self, base: &Path) {
        let join = |slot: &mut Option<String>| {
            if let Some(p) = slot {
                if Path::new(p.as_str()).is_relative() {
                    *p = base.join(p.as_str()).to_string_lossy().into_owned();
                }
            }
        };
        join(&mut self.kg.entities);
        join(&mut self.kg.triples);
        join(&mut self.kg.alias_table);
        join(&mut self.ner.gazetteer);
        join(&mut self.decode.schemas);
        join(&mut self.ds.templates);
        join(&mut self.eval.report_json);
        join(&mut self.eval.report_text);
    }

    /// Range checks; called by [`PipelineConfig::parse`] but public so
    /// hand-built configurations can be checked too.
    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| Err(Error::Config(detail));
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be a positive real, got {v}")))
            }
        };
        if self.kg.k == 0 || self.kg.max_len == 0 {
            return bad("kg.k and kg.max_len must be at least 1".into());
        }
        for (name, v) in [
            ("embed.dim", self.embed.dim),
            ("ner.feature_dim", self.ner.feature_dim),
            ("encode.token_dim", self.encode.token_dim),
            ("encode.hidden", self.encode.hidden),
            ("encode.depth", self.encode.depth),
            ("decode.fuse_hidden", self.decode.fuse_hidden),
            ("decode.expand_hidden", self.decode.expand_hidden),
            ("decode.expand_depth", self.decode.expand_depth),
            ("decode.branch_cap", self.decode.branch_cap),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.embed.negatives == 0 {
            return bad("embed.negatives must be at least 1".into());
        }
        positive("embed.lr", self.embed.lr)?;
        positive("ner.lr", self.ner.lr)?;
        positive("decode.lr", self.decode.lr)?;
        if !self.embed.lambda.is_finite() || self.embed.lambda < 0.0 {
            return bad(format!("embed.lambda must be nonnegative, got {}", self.embed.lambda));
        }
        for (name, t) in [
            ("decode.type_threshold", self.decode.type_threshold),
            ("decode.select_threshold", self.decode.select_threshold),
        ] {
            if !(t.is_finite() && t > 0.0 && t < 1.0) {
                return bad(format!("{name} must lie strictly between 0 and 1, got {t}"));
            }
        }
        if !(self.ds.theta.is_finite() && self.ds.theta > 0.0 && self.ds.theta <= 1.0) {
            return bad(format!("ds.theta must lie in (0, 1], got {}", self.ds.theta));
        }
        if self.ner.strategy == TaggerKind::Gazetteer && self.ner.gazetteer.is_none() {
            return bad("ner.strategy = \"gazetteer\" needs ner.gazetteer".into());
        }
        Ok(())
    }

    /// Input files the configuration points at. Output paths are excluded:
    /// they need not exist before a run.
    pub fn input_files(&self) -> Vec<&str> {
        [
            self.kg.entities.as_deref(),
            self.kg.triples.as_deref(),
            self.kg.alias_table.as_deref(),
            self.ner.gazetteer.as_deref(),
            self.decode.schemas.as_deref(),
            self.ds.templates.as_deref(),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    /// Fails fast when a referenced input file is missing.
    pub fn check_files(&self) -> Result<()> {
        for path in self.input_files() {
            if !Path::new(path).is_file() {
                return Err(Error::Config(format!("referenced file {path:?} does not exist")));
            }
        }
        Ok(())
    }

    pub fn decoder_config(&self) -> DecoderConfig {
        DecoderConfig {
            doc: self.encode.to_doc_config(),
            embed_dim: self.embed.dim,
            expand_hidden: self.decode.expand_hidden,
            expand_depth: self.decode.expand_depth,
            fuse_hidden: self.decode.fuse_hidden,
            variant: self.decode.fusion,
            branch_cap: self.decode.branch_cap,
            epochs: self.decode.epochs,
            learning_rate: self.decode.lr,
            seed: self.decode.seed,
        }
    }
}
