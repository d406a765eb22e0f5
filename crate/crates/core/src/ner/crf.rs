//! Linear-chain CRF over BIO tags with hashed character features.
//!
//! Tag indexing: O = 0, B-ℓ = 1 + 2ℓ, I-ℓ = 2 + 2ℓ, so T = 2·n_labels + 1.
//! Path score = Σ_t unary(t, y_t) + Σ_t transition(y_{t−1}, y_t); the
//! partition function runs in log space and gradients come from
//! forward-backward marginals (expected minus observed features).

use crate::error::{Error, Result};
use crate::numeric::ops::log_sum_exp;
use crate::numeric::params::{ParamId, ParamStore};

use super::features::featurize;

pub const TAG_OUTSIDE: usize = 0;

pub fn tag_begin(label: usize) -> usize {
    1 + 2 * label
}

pub fn tag_inside(label: usize) -> usize {
    2 + 2 * label
}

/// Label index of a B-/I- tag, none for O.
pub fn tag_label(tag: usize) -> Option<usize> {
    if tag == TAG_OUTSIDE {
        None
    } else {
        Some((tag - 1) / 2)
    }
}

pub fn tag_count(n_labels: usize) -> usize {
    2 * n_labels + 1
}

/// CRF weights: hashed unary features (D×T) and tag transitions (T×T),
/// zero-initialized so an untrained model scores every path equally.
#[derive(Clone, Debug)]
pub struct CrfModel {
    pub store: ParamStore,
    pub n_labels: usize,
    pub feature_dim: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct CrfIds {
    pub unary: ParamId,
    pub trans: ParamId,
}

impl CrfModel {
    pub fn new(n_labels: usize, feature_dim: usize) -> Result<Self> {
        if n_labels == 0 || feature_dim == 0 {
            return Err(Error::domain("crf", "n_labels and feature_dim must be positive"));
        }
        let t = tag_count(n_labels);
        let mut store = ParamStore::new();
        store.register("crf.unary", feature_dim, t)?;
        store.register("crf.trans", t, t)?;
        Ok(CrfModel { store, n_labels, feature_dim })
    }

    pub fn ids(&self) -> Result<CrfIds> {
        Ok(CrfIds {
            unary: self
                .store
                .lookup("crf.unary")
                .ok_or_else(|| Error::data("crf.unary missing from store"))?,
            trans: self
                .store
                .lookup("crf.trans")
                .ok_or_else(|| Error::data("crf.trans missing from store"))?,
        })
    }

    pub fn tag_count(&self) -> usize {
        tag_count(self.n_labels)
    }

    pub fn features(&self, sentence: &[char]) -> Vec<Vec<usize>> {
        (0..sentence.len())
            .map(|p| featurize(sentence, p, self.feature_dim))
            .collect()
    }
}

/// Rejects gold sequences where an I- tag is not continuing a same-label
/// B- or I- tag.
pub fn validate_bio(tags: &[usize], n_labels: usize) -> Result<()> {
    let t_count = tag_count(n_labels);
    let mut prev: Option<usize> = None;
    for (pos, &tag) in tags.iter().enumerate() {
        if tag >= t_count {
            return Err(Error::data(format!(
                "tag {tag} out of range for {t_count} tags at position {pos}"
            )));
        }
        if tag != TAG_OUTSIDE && tag % 2 == 0 {
            let label = tag_label(tag).expect("inside tag has a label");
            let continues = prev == Some(tag_begin(label)) || prev == Some(tag);
            if !continues {
                return Err(Error::data(format!(
                    "I-tag at position {pos} does not continue a span"
                )));
            }
        }
        prev = Some(tag);
    }
    Ok(())
}

/// Unary score table: scores[t][y] = Σ_{f ∈ features(t)} unary[f, y].
fn unary_scores(store: &ParamStore, ids: CrfIds, features: &[Vec<usize>], t_count: usize) -> Vec<Vec<f64>> {
    let unary = store.value(ids.unary);
    features
        .iter()
        .map(|fs| {
            let mut row = vec![0.0; t_count];
            for &f in fs {
                for (y, cell) in row.iter_mut().enumerate() {
                    *cell += unary.at(f, y);
                }
            }
            row
        })
        .collect()
}

/// Negative log-likelihood of the gold path, with gradients accumulated
/// into the store: expected feature counts (marginals) minus observed ones.
pub fn crf_log_likelihood(
    model: &mut CrfModel,
    sentence: &[char],
    gold: &[usize],
) -> Result<f64> {
    if sentence.len() != gold.len() {
        return Err(Error::data(format!(
            "{} tags for {} characters",
            gold.len(),
            sentence.len()
        )));
    }
    if sentence.is_empty() {
        return Err(Error::data("empty sentence"));
    }
    validate_bio(gold, model.n_labels)?;
    let features = model.features(sentence);
    let ids = model.ids()?;
    let t_count = tag_count(model.n_labels);
    crf_nll_on_features(&mut model.store, ids, &features, gold, t_count)
}

/// Core NLL on precomputed features; exposed so training can featurize once.
pub fn crf_nll_on_features(
    store: &mut ParamStore,
    ids: CrfIds,
    features: &[Vec<usize>],
    gold: &[usize],
    t_count: usize,
) -> Result<f64> {
    let len = gold.len();
    let scores = unary_scores(store, ids, features, t_count);
    let trans = store.value(ids.trans).clone();

    // forward recursion in log space
    let mut alpha = vec![vec![0.0; t_count]; len];
    alpha[0].clone_from_slice(&scores[0]);
    for t in 1..len {
        for y in 0..t_count {
            let terms: Vec<f64> = (0..t_count)
                .map(|k| alpha[t - 1][k] + trans.at(k, y))
                .collect();
            alpha[t][y] = scores[t][y] + log_sum_exp(&terms);
        }
    }
    let log_z = log_sum_exp(&alpha[len - 1]);

    // backward recursion
    let mut beta = vec![vec![0.0; t_count]; len];
    for t in (0..len - 1).rev() {
        for y in 0..t_count {
            let terms: Vec<f64> = (0..t_count)
                .map(|k| trans.at(y, k) + scores[t + 1][k] + beta[t + 1][k])
                .collect();
            beta[t][y] = log_sum_exp(&terms);
        }
    }

    let mut gold_score = 0.0;
    for (t, &y) in gold.iter().enumerate() {
        gold_score += scores[t][y];
        if t > 0 {
            gold_score += trans.at(gold[t - 1], y);
        }
    }

    // unary gradients: marginal − observed, fanned out over the features
    for t in 0..len {
        for y in 0..t_count {
            let marginal = (alpha[t][y] + beta[t][y] - log_z).exp();
            let observed = if gold[t] == y { 1.0 } else { 0.0 };
            let g = marginal - observed;
            if g == 0.0 {
                continue;
            }
            let unary_grad = store.grad_mut(ids.unary);
            for &f in &features[t] {
                *unary_grad.at_mut(f, y) += g;
            }
        }
    }
    // transition gradients: pairwise marginal − observed
    for t in 0..len - 1 {
        for y in 0..t_count {
            for k in 0..t_count {
                let pair = (alpha[t][y] + trans.at(y, k) + scores[t + 1][k] + beta[t + 1][k]
                    - log_z)
                    .exp();
                let observed = if gold[t] == y && gold[t + 1] == k { 1.0 } else { 0.0 };
                *store.grad_mut(ids.trans).at_mut(y, k) += pair - observed;
            }
        }
    }
    Ok(log_z - gold_score)
}

/// Highest-scoring tag sequence; among ties, the lexicographically smallest
/// by tag index. Suffix scores are computed right-to-left, then the path is
/// read off the front taking the smallest argmax at each step, which makes
/// the forward-lexicographic minimum exact rather than heuristic.
pub fn viterbi_decode(model: &CrfModel, sentence: &[char]) -> Result<Vec<usize>> {
    if sentence.is_empty() {
        return Ok(Vec::new());
    }
    let t_count = model.tag_count();
    let ids = model.ids()?;
    let features = model.features(sentence);
    let scores = unary_scores(&model.store, ids, &features, t_count);
    let trans = model.store.value(ids.trans);
    let len = sentence.len();

    // suffix[t][y]: best score of a path over positions t.. starting with y
    let mut suffix = vec![vec![0.0; t_count]; len];
    suffix[len - 1].clone_from_slice(&scores[len - 1]);
    for t in (0..len - 1).rev() {
        for y in 0..t_count {
            let best = (0..t_count)
                .map(|k| trans.at(y, k) + suffix[t + 1][k])
                .fold(f64::NEG_INFINITY, f64::max);
            suffix[t][y] = scores[t][y] + best;
        }
    }

    let mut path = Vec::with_capacity(len);
    let first = argmax_smallest((0..t_count).map(|y| suffix[0][y]));
    path.push(first);
    for t in 1..len {
        let prev = path[t - 1];
        let next = argmax_smallest((0..t_count).map(|k| trans.at(prev, k) + suffix[t][k]));
        path.push(next);
    }
    Ok(path)
}

fn argmax_smallest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, v) in values.enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    arg
}
