//! Relation-aware graph self-attention over a node's neighborhood.
//!
//! For node i with neighbors j, relation one-hots r_ij:
//!   h_j'  = W_a [h_j ; r_ij]
//!   h_j'' = tanh(W_b [h_i ; h_j'])
//!   e_ij  = a · h_j''
//!   α     = softmax(e)
//!   h_i'  = tanh(W_c LayerNorm(Σ_j α_j [h_i ; h_j'']))
//!
//! Every step has a hand-written backward below; the pair is exercised by
//! central differences in the crate tests.

use rand::rngs::StdRng;

use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;
use crate::numeric::ops::{
    concat, dot, layer_norm_forward, softmax, softmax_backward, LayerNormCache,
};
use crate::numeric::params::{ParamId, ParamStore};

pub const LN_EPS: f64 = 1e-8;

/// Handles for the attention-layer parameters inside a store.
#[derive(Clone, Copy, Debug)]
pub struct GatIds {
    pub w_a: ParamId,
    pub w_b: ParamId,
    pub w_c: ParamId,
    pub attn: ParamId,
    pub ln_gain: ParamId,
    pub ln_bias: ParamId,
}

impl GatIds {
    /// Registers all attention parameters for embedding width `f` and `s`
    /// graph relations. The relation input is s+1 wide: the extra channel is
    /// the synthetic self-loop relation used for isolated nodes.
    pub fn register(store: &mut ParamStore, f: usize, s: usize, rng: &mut StdRng) -> Result<GatIds> {
        let w_a = store.register_uniform("gat.w_a", f, f + s + 1, 0.1, rng)?;
        let w_b = store.register_uniform("gat.w_b", f, 2 * f, 0.1, rng)?;
        let w_c = store.register_uniform("gat.w_c", f, 2 * f, 0.1, rng)?;
        let attn = store.register_uniform("gat.attn", 1, f, 0.1, rng)?;
        let ln_gain = store.register("gat.ln_gain", 1, 2 * f)?;
        let ln_bias = store.register("gat.ln_bias", 1, 2 * f)?;
        store.value_mut(ln_gain).fill(1.0);
        Ok(GatIds { w_a, w_b, w_c, attn, ln_gain, ln_bias })
    }

    pub fn lookup(store: &ParamStore) -> Result<GatIds> {
        let find = |name: &str| {
            store
                .lookup(name)
                .ok_or_else(|| Error::data(format!("parameter {name} missing from store")))
        };
        Ok(GatIds {
            w_a: find("gat.w_a")?,
            w_b: find("gat.w_b")?,
            w_c: find("gat.w_c")?,
            attn: find("gat.attn")?,
            ln_gain: find("gat.ln_gain")?,
            ln_bias: find("gat.ln_bias")?,
        })
    }
}

/// h_j' = W_a [h_j ; r_ij]. The relation vector must already include the
/// self channel (length s+1).
pub fn relation_embed(h_j: &[f64], r: &[f64], w_a: &Matrix) -> Result<Vec<f64>> {
    if h_j.len() + r.len() != w_a.cols() {
        return Err(Error::dimension(
            "relation_embed",
            format!("{} + {} inputs vs {} columns", h_j.len(), r.len(), w_a.cols()),
        ));
    }
    w_a.matvec(&concat(h_j, r))
}

/// h_j'' = tanh(W_b [h_i ; h_j']).
pub fn pair_combine(h_i: &[f64], h_j_prime: &[f64], w_b: &Matrix) -> Result<Vec<f64>> {
    if h_i.len() + h_j_prime.len() != w_b.cols() {
        return Err(Error::dimension(
            "pair_combine",
            format!(
                "{} + {} inputs vs {} columns",
                h_i.len(),
                h_j_prime.len(),
                w_b.cols()
            ),
        ));
    }
    Ok(w_b.matvec(&concat(h_i, h_j_prime))?.iter().map(|x| x.tanh()).collect())
}

#[derive(Clone, Debug)]
pub struct NeighborCache {
    pub h_j: Vec<f64>,
    pub r: Vec<f64>,
    pub h_j_prime: Vec<f64>,
    /// h_j'' after the tanh.
    pub h_j_dd: Vec<f64>,
}

/// Saved forward state for one node's attention pass.
#[derive(Clone, Debug)]
pub struct AttendCache {
    pub h_i: Vec<f64>,
    pub neighbors: Vec<NeighborCache>,
    pub alphas: Vec<f64>,
    pub ln: LayerNormCache,
    pub out: Vec<f64>,
}

/// Forward pass. `neighbors` holds (h_j, relation one-hot) pairs; at least
/// one is required (isolated nodes are given a synthetic self-loop by the
/// caller, see [`crate::embed::neighbor_inputs`]).
pub fn attend_forward(
    store: &ParamStore,
    ids: GatIds,
    h_i: &[f64],
    neighbors: &[(Vec<f64>, Vec<f64>)],
) -> Result<AttendCache> {
    if neighbors.is_empty() {
        return Err(Error::domain("attend", "no neighbors; expected a self-loop"));
    }
    let w_a = store.value(ids.w_a);
    let w_b = store.value(ids.w_b);
    let w_c = store.value(ids.w_c);
    let a = store.value(ids.attn);

    let mut caches = Vec::with_capacity(neighbors.len());
    let mut scores = Vec::with_capacity(neighbors.len());
    for (h_j, r) in neighbors {
        let h_j_prime = relation_embed(h_j, r, w_a)?;
        let h_j_dd = pair_combine(h_i, &h_j_prime, w_b)?;
        scores.push(dot(a.row(0), &h_j_dd));
        caches.push(NeighborCache {
            h_j: h_j.clone(),
            r: r.clone(),
            h_j_prime,
            h_j_dd,
        });
    }
    let alphas = softmax(&scores)?;
    let width = 2 * h_i.len();
    let mut pooled = vec![0.0; width];
    for (alpha, nc) in alphas.iter().zip(&caches) {
        let cat = concat(h_i, &nc.h_j_dd);
        for (p, c) in pooled.iter_mut().zip(&cat) {
            *p += alpha * c;
        }
    }
    let (v, ln) = layer_norm_forward(
        &pooled,
        store.value(ids.ln_gain).row(0),
        store.value(ids.ln_bias).row(0),
        LN_EPS,
    )?;
    let out: Vec<f64> = w_c.matvec(&v)?.iter().map(|x| x.tanh()).collect();
    Ok(AttendCache {
        h_i: h_i.to_vec(),
        neighbors: caches,
        alphas,
        ln,
        out,
    })
}

/// Convenience wrapper returning (h_i', attention weights).
pub fn attend(
    store: &ParamStore,
    ids: GatIds,
    h_i: &[f64],
    neighbors: &[(Vec<f64>, Vec<f64>)],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = attend_forward(store, ids, h_i, neighbors)?;
    Ok((cache.out, cache.alphas))
}

/// Backward pass. Accumulates parameter gradients into the store and
/// returns (∂L/∂h_i, per-neighbor ∂L/∂h_j) for the caller to route into the
/// node table.
pub fn attend_backward(
    store: &mut ParamStore,
    ids: GatIds,
    cache: &AttendCache,
    g_out: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let f = cache.h_i.len();
    let width = 2 * f;

    // tanh(W_c v)
    let g_pre_c: Vec<f64> = cache
        .out
        .iter()
        .zip(g_out)
        .map(|(y, g)| g * (1.0 - y * y))
        .collect();
    // v is recoverable from the LN cache: v = gain ⊙ normalized + bias
    let v: Vec<f64> = {
        let gain = store.value(ids.ln_gain).row(0);
        let bias = store.value(ids.ln_bias).row(0);
        cache
            .ln
            .normalized
            .iter()
            .zip(gain.iter().zip(bias))
            .map(|(x, (g, b))| g * x + b)
            .collect()
    };
    let g_v = store.value(ids.w_c).matvec_t(&g_pre_c)?;
    store.grad_mut(ids.w_c).add_outer(&g_pre_c, &v)?;

    let (g_pooled, g_gain, g_bias) = crate::numeric::ops::layer_norm_backward(&cache.ln, &g_v);
    for (g, x) in store.grad_mut(ids.ln_gain).row_mut(0).iter_mut().zip(&g_gain) {
        *g += x;
    }
    for (g, x) in store.grad_mut(ids.ln_bias).row_mut(0).iter_mut().zip(&g_bias) {
        *g += x;
    }

    // pooled = Σ_j α_j [h_i ; h_j'']
    let mut g_h_i = vec![0.0; f];
    let mut g_alpha = vec![0.0; cache.alphas.len()];
    let mut g_h_dd: Vec<Vec<f64>> = Vec::with_capacity(cache.alphas.len());
    for (j, (alpha, nc)) in cache.alphas.iter().zip(&cache.neighbors).enumerate() {
        let cat = concat(&cache.h_i, &nc.h_j_dd);
        g_alpha[j] = dot(&g_pooled, &cat);
        for k in 0..f {
            g_h_i[k] += alpha * g_pooled[k];
        }
        g_h_dd.push(g_pooled[f..width].iter().map(|g| alpha * g).collect());
    }

    // α = softmax(e), e_j = a · h_j''
    let g_e = softmax_backward(&cache.alphas, &g_alpha);
    {
        let a_row = store.value(ids.attn).row(0).to_vec();
        for (j, nc) in cache.neighbors.iter().enumerate() {
            for (g, h) in store.grad_mut(ids.attn).row_mut(0).iter_mut().zip(&nc.h_j_dd) {
                *g += g_e[j] * h;
            }
            for (gd, ak) in g_h_dd[j].iter_mut().zip(&a_row) {
                *gd += g_e[j] * ak;
            }
        }
    }

    // h_j'' = tanh(W_b [h_i ; h_j']), h_j' = W_a [h_j ; r]
    let mut g_h_j_out = Vec::with_capacity(cache.neighbors.len());
    for (nc, g_dd) in cache.neighbors.iter().zip(&g_h_dd) {
        let g_pre_b: Vec<f64> = nc
            .h_j_dd
            .iter()
            .zip(g_dd)
            .map(|(y, g)| g * (1.0 - y * y))
            .collect();
        let cat_b = concat(&cache.h_i, &nc.h_j_prime);
        let g_cat_b = store.value(ids.w_b).matvec_t(&g_pre_b)?;
        store.grad_mut(ids.w_b).add_outer(&g_pre_b, &cat_b)?;
        for k in 0..f {
            g_h_i[k] += g_cat_b[k];
        }
        let g_h_j_prime = &g_cat_b[f..width];

        let cat_a = concat(&nc.h_j, &nc.r);
        let g_cat_a = store.value(ids.w_a).matvec_t(g_h_j_prime)?;
        store.grad_mut(ids.w_a).add_outer(g_h_j_prime, &cat_a)?;
        g_h_j_out.push(g_cat_a[..f].to_vec());
    }
    Ok((g_h_i, g_h_j_out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn setup(f: usize, s: usize, seed: u64) -> (ParamStore, GatIds) {
        let mut store = ParamStore::new();
        let mut rng = StdRng::seed_from_u64(seed);
        let ids = GatIds::register(&mut store, f, s, &mut rng).unwrap();
        (store, ids)
    }

    #[test]
    fn relation_embed_zero_matrix() {
        let w = Matrix::zeros(3, 6);
        let out = relation_embed(&[1.0, 2.0, 3.0], &[1.0, 0.0, 0.0], &w).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn relation_embed_block_identity_passes_node_through() {
        // W_a = [I | 0] copies h_j and ignores the relation channels
        let mut w = Matrix::zeros(3, 6);
        for i in 0..3 {
            w.set(i, i, 1.0);
        }
        let h = [0.5, -1.5, 2.0];
        let out = relation_embed(&h, &[0.0, 0.0, 1.0], &w).unwrap();
        assert_eq!(out, h.to_vec());
    }

    #[test]
    fn relation_embed_hand_computed() {
        // 2x(2+1) fixture, worked by hand:
        // rows (1, 2, 3), (4, 5, 6) applied to [0.5, -1, 1] give
        // 1*0.5 + 2*(-1) + 3*1 = 1.5 and 4*0.5 + 5*(-1) + 6*1 = 3.
        let w = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = relation_embed(&[0.5, -1.0], &[1.0], &w).unwrap();
        assert_eq!(out, vec![1.5, 3.0]);
    }

    #[test]
    fn pair_combine_zero_matrix_and_range() {
        let w = Matrix::zeros(2, 4);
        let out = pair_combine(&[1.0, 2.0], &[3.0, 4.0], &w).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);

        let w = Matrix::from_vec(2, 4, vec![1.5, -1.5, 1.5, -1.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        for y in pair_combine(&[2.0, -2.0], &[2.0, -2.0], &w).unwrap() {
            assert!(y > -1.0 && y < 1.0);
        }
    }

    #[test]
    fn single_neighbor_gets_all_attention() {
        let (store, ids) = setup(3, 2, 11);
        let h_i = vec![0.1, -0.2, 0.3];
        let nb = vec![(vec![0.4, 0.5, -0.6], vec![1.0, 0.0, 0.0])];
        let (_, alphas) = attend(&store, ids, &h_i, &nb).unwrap();
        assert_eq!(alphas, vec![1.0]);
    }

    #[test]
    fn identical_neighbors_split_attention() {
        let (store, ids) = setup(3, 2, 12);
        let h_i = vec![0.1, -0.2, 0.3];
        let j = (vec![0.4, 0.5, -0.6], vec![0.0, 1.0, 0.0]);
        let (_, alphas) = attend(&store, ids, &h_i, &[j.clone(), j]).unwrap();
        assert!((alphas[0] - 0.5).abs() < 1e-15);
        assert!((alphas[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let (store, ids) = setup(4, 3, 13);
        let h_i = vec![0.3, 0.1, -0.5, 0.2];
        let nbs: Vec<_> = (0..5)
            .map(|k| {
                let mut r = vec![0.0; 4];
                r[k % 3] = 1.0;
                (vec![0.1 * k as f64, -0.2, 0.05 * k as f64, 0.4], r)
            })
            .collect();
        let (_, alphas) = attend(&store, ids, &h_i, &nbs).unwrap();
        assert!((alphas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn neighbor_permutation_leaves_output_unchanged() {
        let (store, ids) = setup(4, 2, 14);
        let h_i = vec![0.3, 0.1, -0.5, 0.2];
        let nbs = vec![
            (vec![0.1, -0.2, 0.3, 0.4], vec![1.0, 0.0, 0.0]),
            (vec![-0.4, 0.2, 0.0, 0.9], vec![0.0, 1.0, 0.0]),
            (vec![0.7, 0.7, -0.7, 0.1], vec![1.0, 0.0, 0.0]),
        ];
        let (out1, _) = attend(&store, ids, &h_i, &nbs).unwrap();
        let permuted = vec![nbs[2].clone(), nbs[0].clone(), nbs[1].clone()];
        let (out2, _) = attend(&store, ids, &h_i, &permuted).unwrap();
        for (a, b) in out1.iter().zip(&out2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attend_gradients_pass_central_differences() {
        // Treat h_i and the two neighbor vectors as parameters as well, so
        // the returned g_h_i / g_h_j are checked too.
        let (mut store, ids) = setup(3, 2, 15);
        let mut rng = StdRng::seed_from_u64(99);
        let hi = store.register_uniform("t.h_i", 1, 3, 0.5, &mut rng).unwrap();
        let hj0 = store.register_uniform("t.h_j0", 1, 3, 0.5, &mut rng).unwrap();
        let hj1 = store.register_uniform("t.h_j1", 1, 3, 0.5, &mut rng).unwrap();
        let report = crate::numeric::gradcheck::finite_diff_check(
            &mut store,
            |s| {
                let nbs = vec![
                    (s.value(hj0).row(0).to_vec(), vec![1.0, 0.0, 0.0]),
                    (s.value(hj1).row(0).to_vec(), vec![0.0, 1.0, 0.0]),
                ];
                let h_i = s.value(hi).row(0).to_vec();
                let cache = attend_forward(s, ids, &h_i, &nbs)?;
                // loss = sum of squares of the output
                let loss: f64 = cache.out.iter().map(|x| x * x).sum();
                let g_out: Vec<f64> = cache.out.iter().map(|x| 2.0 * x).collect();
                let (g_hi, g_hj) = attend_backward(s, ids, &cache, &g_out)?;
                for (g, x) in s.grad_mut(hi).row_mut(0).iter_mut().zip(&g_hi) {
                    *g += x;
                }
                for (id, gs) in [(hj0, &g_hj[0]), (hj1, &g_hj[1])] {
                    for (g, x) in s.grad_mut(id).row_mut(0).iter_mut().zip(gs) {
                        *g += x;
                    }
                }
                Ok(loss)
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "worst: {:?}", report.worst());
    }
}
