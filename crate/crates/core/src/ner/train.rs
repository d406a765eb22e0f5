//! CRF training: gradient descent on the summed negative log-likelihood.

use crate::error::{Error, Result};
use crate::ner::crf::{crf_nll_on_features, tag_count, validate_bio, CrfModel};

#[derive(Clone, Copy, Debug)]
pub struct CrfConfig {
    pub n_labels: usize,
    pub feature_dim: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            n_labels: crate::ner::LABELS.len(),
            feature_dim: crate::ner::DEFAULT_FEATURE_DIM,
            epochs: 300,
            lr: 0.2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TaggedSentence {
    pub chars: Vec<char>,
    pub tags: Vec<usize>,
}

impl TaggedSentence {
    pub fn new(text: &str, tags: Vec<usize>) -> Self {
        TaggedSentence { chars: text.chars().collect(), tags }
    }
}

/// Full-batch gradient descent from zero-initialized weights. The run is a
/// pure function of (corpus, cfg); the loss trace is returned per epoch.
pub fn train_crf(corpus: &[TaggedSentence], cfg: &CrfConfig) -> Result<(CrfModel, Vec<f64>)> {
    if corpus.is_empty() {
        return Err(Error::domain("train_crf", "empty corpus"));
    }
    for (i, s) in corpus.iter().enumerate() {
        if s.chars.is_empty() || s.chars.len() != s.tags.len() {
            return Err(Error::data(format!(
                "sentence {i}: {} characters vs {} tags",
                s.chars.len(),
                s.tags.len()
            )));
        }
        validate_bio(&s.tags, cfg.n_labels)?;
    }
    let mut model = CrfModel::new(cfg.n_labels, cfg.feature_dim)?;
    let ids = model.ids()?;
    let t_count = tag_count(cfg.n_labels);
    let features: Vec<Vec<Vec<usize>>> = corpus.iter().map(|s| model.features(&s.chars)).collect();

    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        model.store.zero_grads();
        let mut total = 0.0;
        for (s, feats) in corpus.iter().zip(&features) {
            total += crf_nll_on_features(&mut model.store, ids, feats, &s.tags, t_count)?;
        }
        if !total.is_finite() {
            return Err(Error::Training {
                epoch,
                detail: format!("summed NLL became {total}"),
            });
        }
        model.store.sgd_step(cfg.lr);
        trace.push(total);
    }
    Ok((model, trace))
}

/// Fraction of corpus positions whose Viterbi tag equals the gold tag.
pub fn tag_accuracy(model: &CrfModel, corpus: &[TaggedSentence]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for s in corpus {
        let pred = crate::ner::viterbi_decode(model, &s.chars)?;
        hits += pred.iter().zip(&s.tags).filter(|(p, g)| p == g).count();
        total += s.tags.len();
    }
    Ok(hits as f64 / total as f64)
}
