//! Vector kernels: softmax, layer normalization, activations, and their
//! hand-derived backward passes.

use crate::error::{Error, Result};

/// Numerically stable softmax with max-subtraction and one renormalization
/// pass. Output entries are positive and sum to 1.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::domain("softmax", "empty input"));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::domain("softmax", "non-finite input"));
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum;
    }
    // second pass keeps the sum at 1 to machine precision on long inputs
    let sum2: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum2;
    }
    Ok(out)
}

/// Backward of `p = softmax(z)`: given `gp = ∂L/∂p` returns `∂L/∂z`.
pub fn softmax_backward(p: &[f64], gp: &[f64]) -> Vec<f64> {
    debug_assert_eq!(p.len(), gp.len());
    let dot: f64 = p.iter().zip(gp).map(|(a, b)| a * b).sum();
    p.iter().zip(gp).map(|(pi, gi)| pi * (gi - dot)).collect()
}

/// log Σ exp(vᵢ) with max-subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Saved forward state for the layer-norm backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
    pub gain: Vec<f64>,
}

/// LayerNorm(v) = gain ⊙ (v − μ)/√(var + eps) + bias, population variance.
pub fn layer_norm(v: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    Ok(layer_norm_forward(v, gain, bias, eps)?.0)
}

pub fn layer_norm_forward(
    v: &[f64],
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> Result<(Vec<f64>, LayerNormCache)> {
    let n = v.len();
    if gain.len() != n || bias.len() != n {
        return Err(Error::dimension(
            "layer_norm",
            format!("value {n}, gain {}, bias {}", gain.len(), bias.len()),
        ));
    }
    if n == 0 {
        return Err(Error::domain("layer_norm", "empty input"));
    }
    if eps <= 0.0 {
        return Err(Error::domain("layer_norm", "eps must be positive"));
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normalized: Vec<f64> = v.iter().map(|x| (x - mean) * inv_std).collect();
    let out: Vec<f64> = normalized
        .iter()
        .zip(gain)
        .zip(bias)
        .map(|((x, g), b)| g * x + b)
        .collect();
    Ok((
        out,
        LayerNormCache {
            normalized,
            inv_std,
            gain: gain.to_vec(),
        },
    ))
}

/// Backward of layer_norm. Returns (∂L/∂v, ∂L/∂gain, ∂L/∂bias).
pub fn layer_norm_backward(cache: &LayerNormCache, gout: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = cache.normalized.len();
    debug_assert_eq!(gout.len(), n);
    let g_gain: Vec<f64> = gout
        .iter()
        .zip(&cache.normalized)
        .map(|(g, x)| g * x)
        .collect();
    let g_bias = gout.to_vec();
    let g_norm: Vec<f64> = gout.iter().zip(&cache.gain).map(|(g, w)| g * w).collect();
    let mean_g = g_norm.iter().sum::<f64>() / n as f64;
    let mean_gx = g_norm
        .iter()
        .zip(&cache.normalized)
        .map(|(g, x)| g * x)
        .sum::<f64>()
        / n as f64;
    let g_v: Vec<f64> = g_norm
        .iter()
        .zip(&cache.normalized)
        .map(|(g, x)| cache.inv_std * (g - mean_g - x * mean_gx))
        .collect();
    (g_v, g_gain, g_bias)
}

pub fn tanh_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.tanh()).collect()
}

/// Backward of `y = tanh(x)` given the forward output `y`.
pub fn tanh_backward(y: &[f64], gy: &[f64]) -> Vec<f64> {
    y.iter().zip(gy).map(|(y, g)| g * (1.0 - y * y)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y += s * x
pub fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

/// Coordinate-wise maximum over a nonempty set of equal-length vectors.
/// Returns the pooled vector and, per coordinate, the index of the first
/// input attaining the maximum (used to route gradients).
pub fn max_pool(inputs: &[&[f64]]) -> Result<(Vec<f64>, Vec<usize>)> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::domain("max_pool", "empty input set"))?;
    let d = first.len();
    let mut out = first.to_vec();
    let mut arg = vec![0usize; d];
    for (i, v) in inputs.iter().enumerate().skip(1) {
        debug_assert_eq!(v.len(), d);
        for k in 0..d {
            if v[k] > out[k] {
                out[k] = v[k];
                arg[k] = i;
            }
        }
    }
    Ok((out, arg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_singleton() {
        assert_eq!(softmax(&[3.7]).unwrap(), vec![1.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let p = softmax(&[2.5, 2.5, 2.5]).unwrap();
        for x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        // [0, ln 3] -> [1/4, 3/4]
        let p = softmax(&[0.0, 3.0f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_empty_is_error() {
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn softmax_large_inputs_stable() {
        let p = softmax(&[1000.0, 1000.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_constant_vector() {
        let out = layer_norm(&[4.0, 4.0, 4.0], &[1.0; 3], &[0.0; 3], 1e-8).unwrap();
        for x in out {
            assert_eq!(x, 0.0);
        }
    }

    #[test]
    fn layer_norm_already_normalized() {
        // [1,-1] has mean 0 and population variance 1.
        let out = layer_norm(&[1.0, -1.0], &[1.0; 2], &[0.0; 2], 1e-14).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-6);
        assert!((out[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_gain_annihilation() {
        let out = layer_norm(&[3.0, -7.0, 2.0], &[0.0; 3], &[5.0, -1.0, 0.5], 1e-8).unwrap();
        assert_eq!(out, vec![5.0, -1.0, 0.5]);
    }

    #[test]
    fn layer_norm_length_mismatch() {
        assert!(layer_norm(&[1.0, 2.0], &[1.0], &[0.0, 0.0], 1e-8).is_err());
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let v = [3.0, -1.0, 7.5, 0.25];
        let (_, cache) = layer_norm_forward(&v, &[1.0; 4], &[0.0; 4], 1e-12).unwrap();
        let mean: f64 = cache.normalized.iter().sum::<f64>() / 4.0;
        let var: f64 = cache.normalized.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn max_pool_coordinates() {
        let a = [1.0, -2.0];
        let b = [0.0, 5.0];
        let (out, arg) = max_pool(&[&a, &b]).unwrap();
        assert_eq!(out, vec![1.0, 5.0]);
        assert_eq!(arg, vec![0, 1]);
    }

    #[test]
    fn max_pool_idempotent() {
        let x = [0.3, -0.7, 2.0];
        let (out, _) = max_pool(&[&x, &x]).unwrap();
        assert_eq!(out, x.to_vec());
    }
}
