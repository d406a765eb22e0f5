//! Document-level representations.
//!
//! A document arrives as character sentences plus tagged mentions. Tokens
//! are looked up in a trainable character table; spans and sentences are
//! max-pooled; mention embeddings absorb their tag type through a
//! layer-normalized additive encoding; the combined entity/sentence sequence
//! runs through a self-attention encoder; mentions sharing a normalized name
//! merge by coordinate max; and the sentence embeddings pool into a single
//! document summary vector. Every step carries a hand-written backward pass.
//!
//! Entity and sentence positions are distinguished by a learned two-way
//! segment embedding added before attention. No positional encodings are
//! used, so the encoder output for a position depends on the set of inputs,
//! not their order.

pub mod attention;

use std::collections::BTreeMap;

use rand::rngs::StdRng;

use crate::doc::attention::{stack_backward, stack_forward, StackCache, StackIds, LN_EPS};
use crate::error::{Error, Result};
use crate::kg::{normalize_name, NormalizeRule};
use crate::ner::{Mention, LABELS};
use crate::numeric::matrix::Matrix;
use crate::numeric::ops::{axpy, layer_norm_backward, layer_norm_forward, max_pool, LayerNormCache};
use crate::numeric::params::{ParamId, ParamStore};

const TOKEN_INIT_SCALE: f64 = 0.5;

/// Trainable character embedding table. Row 0 is the out-of-vocabulary row,
/// so lookups are total. The vocabulary itself is stored in the parameter
/// store as codepoints (exact in f64), which lets a checkpoint rebuild the
/// table without a sidecar file.
#[derive(Clone, Debug)]
pub struct TokenTable {
    id: ParamId,
    index: BTreeMap<char, usize>,
    dim: usize,
}

impl TokenTable {
    pub fn register(
        store: &mut ParamStore,
        vocabulary: impl IntoIterator<Item = char>,
        dim: usize,
        rng: &mut StdRng,
    ) -> Result<TokenTable> {
        if dim == 0 {
            return Err(Error::domain("token_table", "embedding width must be positive"));
        }
        let chars: Vec<char> = {
            let set: std::collections::BTreeSet<char> = vocabulary.into_iter().collect();
            set.into_iter().collect()
        };
        let mut vocab = Matrix::zeros(1, chars.len());
        for (k, &c) in chars.iter().enumerate() {
            vocab.set(0, k, c as u32 as f64);
        }
        store.register_with("doc.vocab", vocab)?;
        let id = store.register_uniform(
            "doc.token_table",
            chars.len() + 1,
            dim,
            TOKEN_INIT_SCALE,
            rng,
        )?;
        let index = chars.into_iter().enumerate().map(|(k, c)| (c, k + 1)).collect();
        Ok(TokenTable { id, index, dim })
    }

    /// Rebuilds the table from a store that already holds `doc.vocab` and
    /// `doc.token_table` (a loaded checkpoint).
    pub fn lookup(store: &ParamStore) -> Result<TokenTable> {
        let find = |name: &str| {
            store
                .lookup(name)
                .ok_or_else(|| Error::data(format!("parameter {name} missing from store")))
        };
        let vocab_id = find("doc.vocab")?;
        let id = find("doc.token_table")?;
        let vocab = store.value(vocab_id);
        let table = store.value(id);
        if table.rows() != vocab.cols() + 1 {
            return Err(Error::data(format!(
                "token table has {} rows for a vocabulary of {}",
                table.rows(),
                vocab.cols()
            )));
        }
        let mut index = BTreeMap::new();
        for k in 0..vocab.cols() {
            let code = vocab.at(0, k);
            let c = char::from_u32(code as u32)
                .ok_or_else(|| Error::data(format!("invalid codepoint {code} in vocabulary")))?;
            index.insert(c, k + 1);
        }
        Ok(TokenTable { id, index, dim: table.cols() })
    }

    /// Table row for a character; unknown characters map to row 0.
    pub fn row_of(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(0)
    }

    pub fn param(&self) -> ParamId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of table rows, including the out-of-vocabulary row.
    pub fn rows(&self) -> usize {
        self.index.len() + 1
    }
}

/// Coordinate-wise maximum over the token embeddings of a span.
pub fn pool_span(tokens: &[&[f64]]) -> Result<Vec<f64>> {
    let first = tokens
        .first()
        .ok_or_else(|| Error::domain("pool_span", "empty span"))?;
    if let Some(bad) = tokens.iter().find(|t| t.len() != first.len()) {
        return Err(Error::dimension(
            "pool_span",
            format!("token widths {} vs {}", first.len(), bad.len()),
        ));
    }
    Ok(max_pool(tokens)?.0)
}

/// LayerNorm(e + W_l·label) where `label` is a one-hot over tag types.
pub fn encode_label(
    e: &[f64],
    label: &[f64],
    w_l: &Matrix,
    gain: &[f64],
    bias: &[f64],
) -> Result<Vec<f64>> {
    if w_l.rows() != e.len() || w_l.cols() != label.len() {
        return Err(Error::dimension(
            "encode_label",
            format!(
                "embedding {} and one-hot {} vs table {}x{}",
                e.len(),
                label.len(),
                w_l.rows(),
                w_l.cols()
            ),
        ));
    }
    let shift = w_l.matvec(label)?;
    let sum: Vec<f64> = e.iter().zip(&shift).map(|(a, b)| a + b).collect();
    Ok(layer_norm_forward(&sum, gain, bias, LN_EPS)?.0)
}

fn encode_label_indexed(
    e: &[f64],
    label_idx: usize,
    w_l: &Matrix,
    gain: &[f64],
    bias: &[f64],
) -> Result<(Vec<f64>, LayerNormCache)> {
    if label_idx >= w_l.cols() || w_l.rows() != e.len() {
        return Err(Error::dimension(
            "encode_label",
            format!("label {} vs table {}x{}", label_idx, w_l.rows(), w_l.cols()),
        ));
    }
    let sum: Vec<f64> = e
        .iter()
        .enumerate()
        .map(|(r, x)| x + w_l.at(r, label_idx))
        .collect();
    layer_norm_forward(&sum, gain, bias, LN_EPS)
}

/// One merged entity: the coordinate-wise max over all mentions sharing a
/// normalized name, with back-references to those mentions.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedEntity {
    pub name: String,
    pub vector: Vec<f64>,
    /// Indices into the input list, in occurrence order.
    pub members: Vec<usize>,
}

/// Groups indices by normalized name, ordered by first occurrence.
fn group_by_name(names: &[&str], rules: &[NormalizeRule]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, raw) in names.iter().enumerate() {
        let key = normalize_name(raw, rules);
        match groups.iter_mut().find(|(name, _)| *name == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    groups
}

/// Merges vectors whose names normalize to the same key. Group order
/// follows the first occurrence of each name.
pub fn merge_mentions(
    names: &[&str],
    vectors: &[Vec<f64>],
    rules: &[NormalizeRule],
) -> Result<Vec<MergedEntity>> {
    if names.len() != vectors.len() {
        return Err(Error::dimension(
            "merge_mentions",
            format!("{} names vs {} vectors", names.len(), vectors.len()),
        ));
    }
    group_by_name(names, rules)
        .into_iter()
        .map(|(name, members)| {
            let refs: Vec<&[f64]> = members.iter().map(|&i| vectors[i].as_slice()).collect();
            let vector = pool_span(&refs)?;
            Ok(MergedEntity { name, vector, members })
        })
        .collect()
}

/// Coordinate-wise maximum over the sentence embeddings of a document.
pub fn doc_summary(sentences: &[Vec<f64>]) -> Result<Vec<f64>> {
    if sentences.is_empty() {
        return Err(Error::domain("doc_summary", "document has no sentences"));
    }
    let refs: Vec<&[f64]> = sentences.iter().map(|v| v.as_slice()).collect();
    pool_span(&refs)
}

/// Encoder hyperparameters. `token_dim` is the shared embedding width.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DocConfig {
    pub token_dim: usize,
    pub hidden: usize,
    pub depth: usize,
    pub n_labels: usize,
}

impl Default for DocConfig {
    fn default() -> Self {
        DocConfig { token_dim: 32, hidden: 64, depth: 1, n_labels: LABELS.len() }
    }
}

/// Parameter handles for the document encoder.
#[derive(Clone, Debug)]
pub struct DocEncoder {
    pub token: TokenTable,
    pub label_w: ParamId,
    pub label_ln_gain: ParamId,
    pub label_ln_bias: ParamId,
    /// 2 × dim: row 0 is added to entity positions, row 1 to sentences.
    pub segment: ParamId,
    pub stack: StackIds,
    n_labels: usize,
}

impl DocEncoder {
    pub fn register(
        store: &mut ParamStore,
        vocabulary: impl IntoIterator<Item = char>,
        cfg: &DocConfig,
        rng: &mut StdRng,
    ) -> Result<DocEncoder> {
        if cfg.n_labels == 0 {
            return Err(Error::domain("doc_encoder", "need at least one tag type"));
        }
        let token = TokenTable::register(store, vocabulary, cfg.token_dim, rng)?;
        let dim = cfg.token_dim;
        let label_w = store.register_uniform("doc.label_w", dim, cfg.n_labels, 0.1, rng)?;
        let label_ln_gain = store.register("doc.label_ln_gain", 1, dim)?;
        let label_ln_bias = store.register("doc.label_ln_bias", 1, dim)?;
        store.value_mut(label_ln_gain).fill(1.0);
        let segment = store.register_uniform("doc.segment", 2, dim, 0.1, rng)?;
        let stack = StackIds::register(store, "doc.attn", dim, cfg.hidden, cfg.depth, rng)?;
        Ok(DocEncoder {
            token,
            label_w,
            label_ln_gain,
            label_ln_bias,
            segment,
            stack,
            n_labels: cfg.n_labels,
        })
    }

    /// Rebuilds the handle set from a loaded checkpoint.
    pub fn lookup(store: &ParamStore) -> Result<DocEncoder> {
        let find = |name: &str| {
            store
                .lookup(name)
                .ok_or_else(|| Error::data(format!("parameter {name} missing from store")))
        };
        let token = TokenTable::lookup(store)?;
        let label_w = find("doc.label_w")?;
        let n_labels = store.value(label_w).cols();
        Ok(DocEncoder {
            token,
            label_w,
            label_ln_gain: find("doc.label_ln_gain")?,
            label_ln_bias: find("doc.label_ln_bias")?,
            segment: find("doc.segment")?,
            stack: StackIds::lookup(store, "doc.attn")?,
            n_labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.token.dim()
    }
}

/// One merged entity with its contextual embedding.
#[derive(Clone, Debug)]
pub struct DocEntity {
    /// Normalized surface name shared by the merged mentions.
    pub name: String,
    pub vector: Vec<f64>,
    /// Indices into the mention list passed to the encoder.
    pub mentions: Vec<usize>,
}

/// Document-level encoding: merged entities, contextual sentence embeddings,
/// and the pooled summary vector.
#[derive(Clone, Debug)]
pub struct DocContext {
    pub entities: Vec<DocEntity>,
    pub sentences: Vec<Vec<f64>>,
    pub summary: Vec<f64>,
}

/// Saved forward state for [`encode_document_backward`].
#[derive(Clone, Debug)]
pub struct DocCache {
    sent_rows: Vec<Vec<usize>>,
    sent_pool_arg: Vec<Vec<usize>>,
    ment_pool_arg: Vec<Vec<usize>>,
    ment_spans: Vec<(usize, usize)>,
    label_ln: Vec<LayerNormCache>,
    label_idx: Vec<usize>,
    stack: StackCache,
    merge_groups: Vec<Vec<usize>>,
    merge_arg: Vec<Vec<usize>>,
    summary_arg: Vec<usize>,
    n_mentions: usize,
}

/// Full document forward pass. Sentences must be nonempty; mentions must be
/// valid spans into them. `rules` controls which mention surfaces count as
/// the same entity.
pub fn encode_document(
    store: &ParamStore,
    enc: &DocEncoder,
    sentences: &[Vec<char>],
    mentions: &[Mention],
    rules: &[NormalizeRule],
) -> Result<(DocContext, DocCache)> {
    if sentences.is_empty() {
        return Err(Error::domain("encode_document", "document has no sentences"));
    }
    if let Some(i) = sentences.iter().position(|s| s.is_empty()) {
        return Err(Error::domain("encode_document", format!("sentence {i} is empty")));
    }
    for m in mentions {
        let chars = sentences
            .get(m.sentence)
            .ok_or_else(|| Error::data(format!("mention references sentence {}", m.sentence)))?;
        m.validate(chars)?;
        if m.label.index() >= enc.n_labels {
            return Err(Error::dimension(
                "encode_document",
                format!("tag {} outside the {}-type table", m.label.as_str(), enc.n_labels),
            ));
        }
    }
    let dim = enc.dim();
    let table = store.value(enc.token.param());
    let gain = store.value(enc.label_ln_gain).row(0).to_vec();
    let bias = store.value(enc.label_ln_bias).row(0).to_vec();
    let w_l = store.value(enc.label_w);
    let seg = store.value(enc.segment);

    let sent_rows: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().map(|&c| enc.token.row_of(c)).collect())
        .collect();

    let mut sequence = Vec::with_capacity(mentions.len() + sentences.len());
    let mut ment_pool_arg = Vec::with_capacity(mentions.len());
    let mut ment_spans = Vec::with_capacity(mentions.len());
    let mut label_ln = Vec::with_capacity(mentions.len());
    let mut label_idx = Vec::with_capacity(mentions.len());
    for m in mentions {
        let refs: Vec<&[f64]> = sent_rows[m.sentence][m.start..m.end]
            .iter()
            .map(|&r| table.row(r))
            .collect();
        let (pooled, arg) = max_pool(&refs)?;
        let (labeled, ln) = encode_label_indexed(&pooled, m.label.index(), w_l, &gain, &bias)?;
        let x: Vec<f64> = labeled.iter().zip(seg.row(0)).map(|(a, b)| a + b).collect();
        sequence.push(x);
        ment_pool_arg.push(arg);
        ment_spans.push((m.sentence, m.start));
        label_ln.push(ln);
        label_idx.push(m.label.index());
    }
    let mut sent_pool_arg = Vec::with_capacity(sentences.len());
    for rows in &sent_rows {
        let refs: Vec<&[f64]> = rows.iter().map(|&r| table.row(r)).collect();
        let (pooled, arg) = max_pool(&refs)?;
        let x: Vec<f64> = pooled.iter().zip(seg.row(1)).map(|(a, b)| a + b).collect();
        sequence.push(x);
        sent_pool_arg.push(arg);
    }

    let (encoded, stack_cache) = stack_forward(store, &enc.stack, &sequence)?;
    let (ment_ctx, sent_ctx) = encoded.split_at(mentions.len());

    let names: Vec<&str> = mentions.iter().map(|m| m.text.as_str()).collect();
    let groups = group_by_name(&names, rules);
    let mut entities = Vec::with_capacity(groups.len());
    let mut merge_groups = Vec::with_capacity(groups.len());
    let mut merge_arg = Vec::with_capacity(groups.len());
    for (name, members) in groups {
        let refs: Vec<&[f64]> = members.iter().map(|&i| ment_ctx[i].as_slice()).collect();
        let (vector, arg) = max_pool(&refs)?;
        entities.push(DocEntity { name, vector, mentions: members.clone() });
        merge_groups.push(members);
        merge_arg.push(arg);
    }

    let sent_vecs: Vec<Vec<f64>> = sent_ctx.to_vec();
    let sent_refs: Vec<&[f64]> = sent_vecs.iter().map(|v| v.as_slice()).collect();
    let (summary, summary_arg) = max_pool(&sent_refs)?;

    debug_assert!(entities.iter().all(|e| !e.mentions.is_empty()));
    debug_assert!(summary.len() == dim);
    Ok((
        DocContext { entities, sentences: sent_vecs, summary },
        DocCache {
            sent_rows,
            sent_pool_arg,
            ment_pool_arg,
            ment_spans,
            label_ln,
            label_idx,
            stack: stack_cache,
            merge_groups,
            merge_arg,
            summary_arg,
            n_mentions: mentions.len(),
        },
    ))
}

/// Gradient of a loss with respect to a [`DocContext`]. Entries must match
/// the context's shapes; use zeros for unused outputs.
#[derive(Clone, Debug)]
pub struct DocGrad {
    pub entities: Vec<Vec<f64>>,
    pub sentences: Vec<Vec<f64>>,
    pub summary: Vec<f64>,
}

impl DocGrad {
    pub fn zeros(ctx: &DocContext) -> DocGrad {
        let dim = ctx.summary.len();
        DocGrad {
            entities: vec![vec![0.0; dim]; ctx.entities.len()],
            sentences: vec![vec![0.0; dim]; ctx.sentences.len()],
            summary: vec![0.0; dim],
        }
    }
}

/// Backward pass of [`encode_document`]: accumulates gradients for every
/// encoder parameter, including the token table rows that won each pooling.
pub fn encode_document_backward(
    store: &mut ParamStore,
    enc: &DocEncoder,
    cache: &DocCache,
    g: &DocGrad,
) -> Result<()> {
    let dim = enc.dim();
    let n_m = cache.n_mentions;
    let n_s = cache.sent_rows.len();
    if g.entities.len() != cache.merge_groups.len()
        || g.sentences.len() != n_s
        || g.summary.len() != dim
        || g.entities.iter().chain(&g.sentences).any(|v| v.len() != dim)
    {
        return Err(Error::dimension(
            "encode_document_backward",
            "gradient shapes do not match the encoded document".to_string(),
        ));
    }

    let mut g_seq = vec![vec![0.0; dim]; n_m + n_s];
    for (s, gs) in g.sentences.iter().enumerate() {
        axpy(&mut g_seq[n_m + s], 1.0, gs);
    }
    for (k, &src) in cache.summary_arg.iter().enumerate() {
        g_seq[n_m + src][k] += g.summary[k];
    }
    for (group, (arg, ge)) in cache
        .merge_groups
        .iter()
        .zip(cache.merge_arg.iter().zip(&g.entities))
    {
        for k in 0..dim {
            g_seq[group[arg[k]]][k] += ge[k];
        }
    }

    let g_x = stack_backward(store, &enc.stack, &cache.stack, &g_seq)?;

    for (i, gx) in g_x.iter().enumerate() {
        let row = usize::from(i >= n_m);
        axpy(store.grad_mut(enc.segment).row_mut(row), 1.0, gx);
    }
    for m in 0..n_m {
        let (g_sum, g_gain, g_bias) = layer_norm_backward(&cache.label_ln[m], &g_x[m]);
        axpy(store.grad_mut(enc.label_ln_gain).row_mut(0), 1.0, &g_gain);
        axpy(store.grad_mut(enc.label_ln_bias).row_mut(0), 1.0, &g_bias);
        let col = cache.label_idx[m];
        for (r, gs) in g_sum.iter().enumerate() {
            *store.grad_mut(enc.label_w).at_mut(r, col) += gs;
        }
        let (sent, start) = cache.ment_spans[m];
        for (k, gs) in g_sum.iter().enumerate() {
            let row = cache.sent_rows[sent][start + cache.ment_pool_arg[m][k]];
            *store.grad_mut(enc.token.param()).at_mut(row, k) += gs;
        }
    }
    for s in 0..n_s {
        for k in 0..dim {
            let row = cache.sent_rows[s][cache.sent_pool_arg[s][k]];
            *store.grad_mut(enc.token.param()).at_mut(row, k) += g_x[n_m + s][k];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ner::Label;
    use crate::numeric::finite_diff_check;
    use crate::numeric::ops::layer_norm;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn table(seed: u64, text: &str, dim: usize) -> (ParamStore, TokenTable) {
        let mut store = ParamStore::new();
        let mut rng = StdRng::seed_from_u64(seed);
        let tt = TokenTable::register(&mut store, text.chars(), dim, &mut rng).unwrap();
        (store, tt)
    }

    #[test]
    fn token_table_rows_and_oov() {
        let (_, tt) = table(1, "baab", 4);
        assert_eq!(tt.rows(), 3);
        assert_eq!(tt.row_of('a'), 1);
        assert_eq!(tt.row_of('b'), 2);
        assert_eq!(tt.row_of('z'), 0);
    }

    #[test]
    fn token_table_roundtrips_through_store() {
        let (store, tt) = table(2, "质押股份", 3);
        let back = TokenTable::lookup(&store).unwrap();
        assert_eq!(back.dim(), 3);
        assert_eq!(back.rows(), tt.rows());
        for c in "质押股份x".chars() {
            assert_eq!(back.row_of(c), tt.row_of(c));
        }
    }

    #[test]
    fn pool_span_single_token_is_identity() {
        let t = [0.3, -1.0, 2.5];
        assert_eq!(pool_span(&[&t]).unwrap(), t.to_vec());
    }

    #[test]
    fn pool_span_idempotent() {
        let t = [0.3, -1.0];
        assert_eq!(pool_span(&[&t, &t]).unwrap(), t.to_vec());
    }

    #[test]
    fn pool_span_coordinate_max() {
        assert_eq!(
            pool_span(&[&[1.0, -2.0], &[0.0, 5.0]]).unwrap(),
            vec![1.0, 5.0]
        );
    }

    #[test]
    fn pool_span_rejects_empty_and_ragged() {
        assert!(pool_span(&[]).is_err());
        assert!(pool_span(&[&[1.0, 2.0] as &[f64], &[1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn pooled_coordinate_is_the_max(
            vecs in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 4),
                1..8,
            )
        ) {
            let refs: Vec<&[f64]> = vecs.iter().map(|v| v.as_slice()).collect();
            let out = pool_span(&refs).unwrap();
            for k in 0..4 {
                let expect = vecs.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(out[k], expect);
            }
        }
    }

    #[test]
    fn encode_label_zero_table_is_plain_layer_norm() {
        let e = [1.0, -2.0, 0.5];
        let w_l = Matrix::zeros(3, 7);
        let gain = [1.0; 3];
        let bias = [0.0; 3];
        let onehot = {
            let mut v = [0.0; 7];
            v[3] = 1.0;
            v
        };
        let out = encode_label(&e, &onehot, &w_l, &gain, &bias).unwrap();
        let expect = layer_norm(&e, &gain, &bias, LN_EPS).unwrap();
        assert_eq!(out, expect);
    }

    #[test]
    fn encode_label_separates_tag_types() {
        let e = [0.4, 0.4, -0.1];
        let w_l = Matrix::from_vec(3, 2, vec![1.0, -1.0, 0.0, 2.0, 0.5, 0.0]).unwrap();
        let gain = [1.0; 3];
        let bias = [0.0; 3];
        let a = encode_label(&e, &[1.0, 0.0], &w_l, &gain, &bias).unwrap();
        let b = encode_label(&e, &[0.0, 1.0], &w_l, &gain, &bias).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn encode_label_matches_composed_kernels() {
        let e = [1.0, 2.0, 3.0];
        // column 1 is [0.5, -1, 2]
        let w_l = Matrix::from_vec(3, 2, vec![0.0, 0.5, 0.0, -1.0, 0.0, 2.0]).unwrap();
        let gain = [1.2, 0.8, 1.0];
        let bias = [0.1, 0.0, -0.2];
        let out = encode_label(&e, &[0.0, 1.0], &w_l, &gain, &bias).unwrap();
        let expect = layer_norm(&[1.5, 1.0, 5.0], &gain, &bias, LN_EPS).unwrap();
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn encode_label_rejects_shape_mismatch() {
        let w_l = Matrix::zeros(3, 7);
        assert!(encode_label(&[1.0, 2.0], &[0.0; 7], &w_l, &[1.0; 2], &[0.0; 2]).is_err());
        assert!(encode_label(&[1.0; 3], &[0.0; 4], &w_l, &[1.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn merge_keeps_distinct_names_apart() {
        let names = ["甲", "乙"];
        let vecs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let merged = merge_mentions(&names, &vecs, &[]).unwrap();
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].vector, vecs[0]);
        assert_eq!(merged[0].members, vec![0]);
        assert_eq!(merged[1].vector, vecs[1]);
    }

    #[test]
    fn merge_duplicate_mention_is_unchanged() {
        let names = ["甲", "甲"];
        let v = vec![0.3, -0.7];
        let merged = merge_mentions(&names, &[v.clone(), v.clone()], &[]).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].vector, v);
        assert_eq!(merged[0].members, vec![0, 1]);
    }

    #[test]
    fn merge_same_name_takes_coordinate_max() {
        let names = ["甲", "甲"];
        let merged =
            merge_mentions(&names, &[vec![1.0, -2.0], vec![0.0, 5.0]], &[]).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].vector, vec![1.0, 5.0]);
    }

    #[test]
    fn merge_folds_names_through_rules() {
        let names = [" 招商银行 ", "招商银行"];
        let merged = merge_mentions(
            &names,
            &[vec![1.0], vec![2.0]],
            &[NormalizeRule::WhitespaceFold],
        )
        .unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].name, "招商银行");
        assert_eq!(merged[0].vector, vec![2.0]);
    }

    #[test]
    fn merge_group_order_is_first_occurrence() {
        let names = ["乙", "甲", "乙", "丙"];
        let vecs = vec![vec![0.0]; 4];
        let merged = merge_mentions(&names, &vecs, &[]).unwrap();
        let order: Vec<&str> = merged.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(order, vec!["乙", "甲", "丙"]);
    }

    #[test]
    fn summary_of_single_sentence_is_that_sentence() {
        let s = vec![vec![0.2, -0.4]];
        assert_eq!(doc_summary(&s).unwrap(), s[0]);
    }

    #[test]
    fn summary_is_coordinate_max() {
        let s = vec![vec![1.0, -2.0, 0.0], vec![0.5, 3.0, -1.0]];
        assert_eq!(doc_summary(&s).unwrap(), vec![1.0, 3.0, 0.0]);
    }

    #[test]
    fn summary_ignores_dominated_duplicates() {
        let hi = vec![2.0, 2.0];
        let lo = vec![-1.0, 0.0];
        let a = doc_summary(&[hi.clone(), lo.clone()]).unwrap();
        let b = doc_summary(&[hi, lo.clone(), lo]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn summary_rejects_empty_document() {
        assert!(doc_summary(&[]).is_err());
    }

    fn mention(sentence: usize, start: usize, end: usize, text: &str, label: Label) -> Mention {
        Mention { sentence, start, end, text: text.to_string(), label }
    }

    fn sample_doc() -> (Vec<Vec<char>>, Vec<Mention>) {
        let sentences: Vec<Vec<char>> = ["华泰证券质押股份", "质押方为华泰证券", "日期为昨日"]
            .iter()
            .map(|s| s.chars().collect())
            .collect();
        let mentions = vec![
            mention(0, 0, 4, "华泰证券", Label::Company),
            mention(1, 4, 8, "华泰证券", Label::Company),
            mention(2, 3, 5, "昨日", Label::Date),
        ];
        (sentences, mentions)
    }

    fn encoder(seed: u64, dim: usize, corpus: &str) -> (ParamStore, DocEncoder) {
        let mut store = ParamStore::new();
        let mut rng = StdRng::seed_from_u64(seed);
        let cfg = DocConfig { token_dim: dim, hidden: dim + 2, depth: 1, ..DocConfig::default() };
        let enc = DocEncoder::register(&mut store, corpus.chars(), &cfg, &mut rng).unwrap();
        (store, enc)
    }

    #[test]
    fn encoded_entities_are_distinct_normalized_names() {
        let (sentences, mentions) = sample_doc();
        let corpus: String = sentences.iter().flat_map(|s| s.iter()).collect();
        let (store, enc) = encoder(3, 4, &corpus);
        let (ctx, _) = encode_document(&store, &enc, &sentences, &mentions, &[]).unwrap();
        assert_eq!(ctx.entities.len(), 2);
        assert_eq!(ctx.entities[0].name, "华泰证券");
        assert_eq!(ctx.entities[0].mentions, vec![0, 1]);
        assert_eq!(ctx.entities[1].name, "昨日");
        assert_eq!(ctx.entities[1].mentions, vec![2]);
        assert_eq!(ctx.sentences.len(), 3);
        assert_eq!(ctx.summary, doc_summary(&ctx.sentences).unwrap());
    }

    #[test]
    fn encoding_is_deterministic() {
        let (sentences, mentions) = sample_doc();
        let corpus: String = sentences.iter().flat_map(|s| s.iter()).collect();
        let (store_a, enc_a) = encoder(9, 4, &corpus);
        let (store_b, enc_b) = encoder(9, 4, &corpus);
        let (a, _) = encode_document(&store_a, &enc_a, &sentences, &mentions, &[]).unwrap();
        let (b, _) = encode_document(&store_b, &enc_b, &sentences, &mentions, &[]).unwrap();
        assert_eq!(a.summary, b.summary);
        for (x, y) in a.entities.iter().zip(&b.entities) {
            assert_eq!(x.vector, y.vector);
        }
    }

    #[test]
    fn rejects_malformed_documents() {
        let (store, enc) = encoder(4, 3, "abc");
        let empty: Vec<Vec<char>> = vec![];
        assert!(encode_document(&store, &enc, &empty, &[], &[]).is_err());
        let blank = vec![Vec::new()];
        assert!(encode_document(&store, &enc, &blank, &[], &[]).is_err());
        let sentences = vec!["abc".chars().collect::<Vec<char>>()];
        let bad = mention(1, 0, 1, "a", Label::Company);
        assert!(encode_document(&store, &enc, &sentences, &[bad], &[]).is_err());
        let bad_span = mention(0, 2, 2, "", Label::Company);
        assert!(encode_document(&store, &enc, &sentences, &[bad_span], &[]).is_err());
    }

    #[test]
    fn document_without_mentions_still_encodes() {
        let (store, enc) = encoder(5, 3, "ab");
        let sentences = vec!["ab".chars().collect::<Vec<char>>(), "ba".chars().collect()];
        let (ctx, _) = encode_document(&store, &enc, &sentences, &[], &[]).unwrap();
        assert!(ctx.entities.is_empty());
        assert_eq!(ctx.sentences.len(), 2);
    }

    #[test]
    fn gradients_match_central_differences() {
        let (sentences, mentions) = sample_doc();
        let corpus: String = sentences.iter().flat_map(|s| s.iter()).collect();
        let (mut store, enc) = encoder(7, 4, &corpus);
        let report = finite_diff_check(
            &mut store,
            |s| {
                let (ctx, cache) = encode_document(s, &enc, &sentences, &mentions, &[])?;
                let mut loss = 0.0;
                let mut g = DocGrad::zeros(&ctx);
                for (e, ge) in ctx.entities.iter().zip(&mut g.entities) {
                    for (x, gx) in e.vector.iter().zip(ge.iter_mut()) {
                        loss += x * x;
                        *gx = 2.0 * x;
                    }
                }
                for (v, gv) in ctx.sentences.iter().zip(&mut g.sentences) {
                    for (x, gx) in v.iter().zip(gv.iter_mut()) {
                        loss += x * x;
                        *gx = 2.0 * x;
                    }
                }
                for (x, gx) in ctx.summary.iter().zip(g.summary.iter_mut()) {
                    loss += x * x;
                    *gx = 2.0 * x;
                }
                encode_document_backward(s, &enc, &cache, &g)?;
                Ok(loss)
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(
            report.passed,
            "worst {:?}",
            report.worst().map(|e| (e.name.clone(), e.max_rel_err))
        );
    }
}
