//! Single-head transformer encoder stack with hand-written gradients.
//!
//! Each block applies self-attention, then a tanh feed-forward pair, each
//! followed by a residual connection and layer norm. No positional signal is
//! added, so the stack is permutation-equivariant; callers that need order
//! must fold it into the inputs.

use rand::rngs::StdRng;

use crate::error::{Error, Result};
use crate::numeric::ops::{
    axpy, dot, layer_norm_backward, layer_norm_forward, softmax, softmax_backward, tanh_backward,
    tanh_vec, LayerNormCache,
};
use crate::numeric::params::{ParamId, ParamStore};

pub const LN_EPS: f64 = 1e-8;

/// Handles for one encoder block.
#[derive(Clone, Copy, Debug)]
pub struct BlockIds {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub ff_in: ParamId,
    pub ff_out: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

/// Handles for a stack of encoder blocks.
#[derive(Clone, Debug)]
pub struct StackIds {
    pub dim: usize,
    pub hidden: usize,
    pub blocks: Vec<BlockIds>,
}

impl StackIds {
    /// Registers `depth` blocks under `prefix` (names like `prefix.0.w_q`).
    /// Projections use fan-in uniform init; layer-norm gains start at one.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        hidden: usize,
        depth: usize,
        rng: &mut StdRng,
    ) -> Result<StackIds> {
        if dim == 0 || hidden == 0 {
            return Err(Error::domain("attention", "dim and hidden must be positive"));
        }
        if depth == 0 {
            return Err(Error::domain("attention", "depth must be at least 1"));
        }
        let proj = (1.0 / dim as f64).sqrt();
        let back = (1.0 / hidden as f64).sqrt();
        let mut blocks = Vec::with_capacity(depth);
        for layer in 0..depth {
            let name = |part: &str| format!("{prefix}.{layer}.{part}");
            let w_q = store.register_uniform(&name("w_q"), dim, dim, proj, rng)?;
            let w_k = store.register_uniform(&name("w_k"), dim, dim, proj, rng)?;
            let w_v = store.register_uniform(&name("w_v"), dim, dim, proj, rng)?;
            let ff_in = store.register_uniform(&name("ff_in"), hidden, dim, proj, rng)?;
            let ff_out = store.register_uniform(&name("ff_out"), dim, hidden, back, rng)?;
            let ln1_gain = store.register(&name("ln1_gain"), 1, dim)?;
            let ln1_bias = store.register(&name("ln1_bias"), 1, dim)?;
            let ln2_gain = store.register(&name("ln2_gain"), 1, dim)?;
            let ln2_bias = store.register(&name("ln2_bias"), 1, dim)?;
            store.value_mut(ln1_gain).fill(1.0);
            store.value_mut(ln2_gain).fill(1.0);
            blocks.push(BlockIds {
                w_q,
                w_k,
                w_v,
                ff_in,
                ff_out,
                ln1_gain,
                ln1_bias,
                ln2_gain,
                ln2_bias,
            });
        }
        Ok(StackIds { dim, hidden, blocks })
    }

    /// Rebuilds the handle set from a store that already holds a stack
    /// registered under `prefix` (a loaded checkpoint). Width and depth are
    /// recovered from the stored shapes.
    pub fn lookup(store: &ParamStore, prefix: &str) -> Result<StackIds> {
        let find = |name: &str| {
            store
                .lookup(name)
                .ok_or_else(|| Error::data(format!("parameter {name} missing from store")))
        };
        let mut blocks = Vec::new();
        while let Some(w_q) = store.lookup(&format!("{prefix}.{}.w_q", blocks.len())) {
            let layer = blocks.len();
            let name = |part: &str| format!("{prefix}.{layer}.{part}");
            blocks.push(BlockIds {
                w_q,
                w_k: find(&name("w_k"))?,
                w_v: find(&name("w_v"))?,
                ff_in: find(&name("ff_in"))?,
                ff_out: find(&name("ff_out"))?,
                ln1_gain: find(&name("ln1_gain"))?,
                ln1_bias: find(&name("ln1_bias"))?,
                ln2_gain: find(&name("ln2_gain"))?,
                ln2_bias: find(&name("ln2_bias"))?,
            });
        }
        let first = blocks
            .first()
            .ok_or_else(|| Error::data(format!("no attention blocks under {prefix:?}")))?;
        let dim = store.value(first.w_q).rows();
        let hidden = store.value(first.ff_in).rows();
        Ok(StackIds { dim, hidden, blocks })
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }
}

/// Saved forward state for one block.
#[derive(Clone, Debug)]
pub struct BlockCache {
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    alphas: Vec<Vec<f64>>,
    ln1: Vec<LayerNormCache>,
    y: Vec<Vec<f64>>,
    /// tanh outputs of the feed-forward hidden layer.
    act: Vec<Vec<f64>>,
    ln2: Vec<LayerNormCache>,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    blocks: Vec<BlockCache>,
}

/// Runs the stack over a nonempty sequence. Output length equals input
/// length; every vector must have width `ids.dim`.
pub fn stack_forward(
    store: &ParamStore,
    ids: &StackIds,
    inputs: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, StackCache)> {
    if inputs.is_empty() {
        return Err(Error::domain("attention", "empty input sequence"));
    }
    if let Some(bad) = inputs.iter().find(|v| v.len() != ids.dim) {
        return Err(Error::dimension(
            "attention",
            format!("input width {} vs model width {}", bad.len(), ids.dim),
        ));
    }
    let n = inputs.len();
    let scale = 1.0 / (ids.dim as f64).sqrt();
    let mut x = inputs.to_vec();
    let mut blocks = Vec::with_capacity(ids.blocks.len());
    for b in &ids.blocks {
        let w_q = store.value(b.w_q);
        let w_k = store.value(b.w_k);
        let w_v = store.value(b.w_v);
        let ff_in = store.value(b.ff_in);
        let ff_out = store.value(b.ff_out);
        let ln1_gain = store.value(b.ln1_gain).row(0).to_vec();
        let ln1_bias = store.value(b.ln1_bias).row(0).to_vec();
        let ln2_gain = store.value(b.ln2_gain).row(0).to_vec();
        let ln2_bias = store.value(b.ln2_bias).row(0).to_vec();

        let q: Vec<Vec<f64>> = x.iter().map(|xi| w_q.matvec(xi)).collect::<Result<_>>()?;
        let k: Vec<Vec<f64>> = x.iter().map(|xi| w_k.matvec(xi)).collect::<Result<_>>()?;
        let v: Vec<Vec<f64>> = x.iter().map(|xi| w_v.matvec(xi)).collect::<Result<_>>()?;

        let mut alphas = Vec::with_capacity(n);
        let mut ln1 = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut act = Vec::with_capacity(n);
        let mut ln2 = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let scores: Vec<f64> = (0..n).map(|j| dot(&q[i], &k[j]) * scale).collect();
            let alpha = softmax(&scores)?;
            let mut attended = vec![0.0; ids.dim];
            for j in 0..n {
                axpy(&mut attended, alpha[j], &v[j]);
            }
            let r1: Vec<f64> = x[i].iter().zip(&attended).map(|(a, b)| a + b).collect();
            let (y_i, c1) = layer_norm_forward(&r1, &ln1_gain, &ln1_bias, LN_EPS)?;
            let u = tanh_vec(&ff_in.matvec(&y_i)?);
            let f = ff_out.matvec(&u)?;
            let r2: Vec<f64> = y_i.iter().zip(&f).map(|(a, b)| a + b).collect();
            let (z_i, c2) = layer_norm_forward(&r2, &ln2_gain, &ln2_bias, LN_EPS)?;
            alphas.push(alpha);
            ln1.push(c1);
            y.push(y_i);
            act.push(u);
            ln2.push(c2);
            z.push(z_i);
        }
        blocks.push(BlockCache { x, q, k, v, alphas, ln1, y, act, ln2 });
        x = z;
    }
    Ok((x, StackCache { blocks }))
}

/// Backward pass: accumulates parameter gradients into the store and
/// returns the gradient with respect to the input sequence.
pub fn stack_backward(
    store: &mut ParamStore,
    ids: &StackIds,
    cache: &StackCache,
    g_out: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    if cache.blocks.len() != ids.blocks.len() {
        return Err(Error::dimension(
            "attention",
            format!("cache depth {} vs model depth {}", cache.blocks.len(), ids.blocks.len()),
        ));
    }
    let mut g_z = g_out.to_vec();
    let scale = 1.0 / (ids.dim as f64).sqrt();
    for (b, bc) in ids.blocks.iter().zip(&cache.blocks).rev() {
        let n = bc.x.len();
        if g_z.len() != n {
            return Err(Error::dimension(
                "attention",
                format!("gradient length {} vs sequence length {n}", g_z.len()),
            ));
        }
        let w_q = store.value(b.w_q).clone();
        let w_k = store.value(b.w_k).clone();
        let w_v = store.value(b.w_v).clone();
        let ff_in = store.value(b.ff_in).clone();
        let ff_out = store.value(b.ff_out).clone();

        let mut g_x = vec![vec![0.0; ids.dim]; n];
        let mut g_q = vec![vec![0.0; ids.dim]; n];
        let mut g_k = vec![vec![0.0; ids.dim]; n];
        let mut g_v = vec![vec![0.0; ids.dim]; n];
        for i in 0..n {
            let (g_r2, g_gain2, g_bias2) = layer_norm_backward(&bc.ln2[i], &g_z[i]);
            axpy(store.grad_mut(b.ln2_gain).row_mut(0), 1.0, &g_gain2);
            axpy(store.grad_mut(b.ln2_bias).row_mut(0), 1.0, &g_bias2);
            // r2 = y + ff_out tanh(ff_in y)
            let mut g_y = g_r2.clone();
            let g_u = ff_out.matvec_t(&g_r2)?;
            store.grad_mut(b.ff_out).add_outer(&g_r2, &bc.act[i])?;
            let g_pre = tanh_backward(&bc.act[i], &g_u);
            store.grad_mut(b.ff_in).add_outer(&g_pre, &bc.y[i])?;
            axpy(&mut g_y, 1.0, &ff_in.matvec_t(&g_pre)?);
            let (g_r1, g_gain1, g_bias1) = layer_norm_backward(&bc.ln1[i], &g_y);
            axpy(store.grad_mut(b.ln1_gain).row_mut(0), 1.0, &g_gain1);
            axpy(store.grad_mut(b.ln1_bias).row_mut(0), 1.0, &g_bias1);
            // r1 = x_i + Σ_j α_ij v_j
            axpy(&mut g_x[i], 1.0, &g_r1);
            let alpha = &bc.alphas[i];
            let g_alpha: Vec<f64> = (0..n).map(|j| dot(&g_r1, &bc.v[j])).collect();
            for j in 0..n {
                axpy(&mut g_v[j], alpha[j], &g_r1);
            }
            let g_scores = softmax_backward(alpha, &g_alpha);
            for j in 0..n {
                axpy(&mut g_q[i], g_scores[j] * scale, &bc.k[j]);
                axpy(&mut g_k[j], g_scores[j] * scale, &bc.q[i]);
            }
        }
        for i in 0..n {
            store.grad_mut(b.w_q).add_outer(&g_q[i], &bc.x[i])?;
            store.grad_mut(b.w_k).add_outer(&g_k[i], &bc.x[i])?;
            store.grad_mut(b.w_v).add_outer(&g_v[i], &bc.x[i])?;
            axpy(&mut g_x[i], 1.0, &w_q.matvec_t(&g_q[i])?);
            axpy(&mut g_x[i], 1.0, &w_k.matvec_t(&g_k[i])?);
            axpy(&mut g_x[i], 1.0, &w_v.matvec_t(&g_v[i])?);
        }
        g_z = g_x;
    }
    Ok(g_z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_check;
    use crate::numeric::ops::layer_norm;
    use rand::SeedableRng;

    fn stack(dim: usize, hidden: usize, depth: usize, seed: u64) -> (ParamStore, StackIds) {
        let mut store = ParamStore::new();
        let mut rng = StdRng::seed_from_u64(seed);
        let ids = StackIds::register(&mut store, "enc", dim, hidden, depth, &mut rng).unwrap();
        (store, ids)
    }

    #[test]
    fn register_rejects_degenerate_shapes() {
        let mut store = ParamStore::new();
        let mut rng = StdRng::seed_from_u64(0);
        assert!(StackIds::register(&mut store, "a", 0, 4, 1, &mut rng).is_err());
        assert!(StackIds::register(&mut store, "b", 4, 4, 0, &mut rng).is_err());
    }

    #[test]
    fn empty_sequence_is_error() {
        let (store, ids) = stack(3, 5, 1, 1);
        assert!(stack_forward(&store, &ids, &[]).is_err());
    }

    #[test]
    fn width_mismatch_is_error() {
        let (store, ids) = stack(3, 5, 1, 1);
        assert!(stack_forward(&store, &ids, &[vec![0.0; 4]]).is_err());
    }

    #[test]
    fn output_length_matches_input_length() {
        let (store, ids) = stack(4, 6, 2, 2);
        let inputs: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..4).map(|k| 0.3 * (i * 4 + k) as f64 - 1.0).collect())
            .collect();
        let (out, _) = stack_forward(&store, &ids, &inputs).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|v| v.len() == 4));
    }

    #[test]
    fn singleton_matches_composed_kernels() {
        // With one position the attention weight is exactly 1, so the block
        // reduces to a chain of the primitive kernels.
        let (store, ids) = stack(2, 3, 1, 3);
        let x = vec![0.7, -0.4];
        let (out, _) = stack_forward(&store, &ids, &[x.clone()]).unwrap();

        let b = &ids.blocks[0];
        let attended = store.value(b.w_v).matvec(&x).unwrap();
        let r1: Vec<f64> = x.iter().zip(&attended).map(|(a, b)| a + b).collect();
        let y = layer_norm(
            &r1,
            store.value(b.ln1_gain).row(0),
            store.value(b.ln1_bias).row(0),
            LN_EPS,
        )
        .unwrap();
        let u = tanh_vec(&store.value(b.ff_in).matvec(&y).unwrap());
        let f = store.value(b.ff_out).matvec(&u).unwrap();
        let r2: Vec<f64> = y.iter().zip(&f).map(|(a, b)| a + b).collect();
        let expect = layer_norm(
            &r2,
            store.value(b.ln2_gain).row(0),
            store.value(b.ln2_bias).row(0),
            LN_EPS,
        )
        .unwrap();
        for (a, e) in out[0].iter().zip(&expect) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn permutation_equivariant() {
        let (store, ids) = stack(4, 8, 2, 4);
        let mut rng = StdRng::seed_from_u64(11);
        use rand::RngExt;
        let inputs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let perm = [4usize, 2, 0, 1, 3];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| inputs[i].clone()).collect();
        let (out, _) = stack_forward(&store, &ids, &inputs).unwrap();
        let (out_p, _) = stack_forward(&store, &ids, &permuted).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            for (a, b) in out_p[slot].iter().zip(&out[src]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let dim = 3;
        let n = 4;
        let (mut store, ids) = stack(dim, 5, 2, 5);
        let mut rng = StdRng::seed_from_u64(6);
        let mut input_ids = Vec::new();
        for i in 0..n {
            input_ids.push(
                store
                    .register_uniform(&format!("t.x{i}"), 1, dim, 0.8, &mut rng)
                    .unwrap(),
            );
        }
        let report = finite_diff_check(
            &mut store,
            |s| {
                let inputs: Vec<Vec<f64>> =
                    input_ids.iter().map(|&id| s.value(id).row(0).to_vec()).collect();
                let (out, cache) = stack_forward(s, &ids, &inputs)?;
                let loss: f64 = out.iter().flatten().map(|x| x * x).sum();
                let g_out: Vec<Vec<f64>> =
                    out.iter().map(|v| v.iter().map(|x| 2.0 * x).collect()).collect();
                let g_in = stack_backward(s, &ids, &cache, &g_out)?;
                for (&id, g) in input_ids.iter().zip(&g_in) {
                    axpy(s.grad_mut(id).row_mut(0), 1.0, g);
                }
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
