//! Central-difference verification of hand-written backward passes.

use crate::error::{Error, Result};
use crate::numeric::params::ParamStore;

/// Relative error floor: differences below this scale are compared
/// absolutely, so near-zero gradients do not inflate the ratio.
pub const REL_FLOOR: f64 = 1e-4;

/// Worst disagreement for one parameter tensor.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// The entry with the largest relative error, for diagnostics.
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Compares analytic gradients against central differences.
///
/// `loss_fn` must run the full forward and backward pass, accumulating
/// gradients into the store, and return the scalar loss. The function is
/// re-invoked with each parameter entry perturbed by ±h; only the returned
/// loss is used for those calls. Relative error per entry is
/// |a − n| / max(|a|, |n|, [`REL_FLOOR`]).
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    mut loss_fn: F,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::domain("finite_diff_check", "h must be positive"));
    }
    store.zero_grads();
    let base = loss_fn(store)?;
    if !base.is_finite() {
        return Err(Error::domain("finite_diff_check", "loss is not finite"));
    }
    let analytic: Vec<Vec<f64>> = store.iter().map(|(_, p)| p.grad.data().to_vec()).collect();

    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut entries = Vec::with_capacity(ids.len());
    let mut max_rel = 0.0f64;
    for (pi, &id) in ids.iter().enumerate() {
        let name = store.get(id).name.clone();
        let len = store.value(id).data().len();
        let mut worst = GradCheckEntry {
            name: name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for k in 0..len {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + h;
            store.zero_grads();
            let lp = loss_fn(store)?;
            store.value_mut(id).data_mut()[k] = orig - h;
            store.zero_grads();
            let lm = loss_fn(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            if !lp.is_finite() || !lm.is_finite() {
                return Err(Error::domain(
                    "finite_diff_check",
                    format!("non-finite loss while perturbing {name}[{k}]"),
                ));
            }
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[pi][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel.is_nan() {
                return Err(Error::domain(
                    "finite_diff_check",
                    format!("NaN gradient at {name}[{k}]"),
                ));
            }
            if rel >= worst.max_rel_err {
                worst = GradCheckEntry {
                    name: name.clone(),
                    max_rel_err: rel,
                    worst_index: k,
                    analytic: a,
                    numeric,
                };
            }
            max_rel = max_rel.max(rel);
        }
        entries.push(worst);
    }
    // restore the analytic gradients so callers can inspect them
    store.zero_grads();
    let _ = loss_fn(store)?;
    Ok(GradCheckReport {
        entries,
        max_rel_err: max_rel,
        tol,
        passed: max_rel < tol,
    })
}
