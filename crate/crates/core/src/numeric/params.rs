//! Named parameter storage with accumulated gradients and two optimizers.

use rand::rngs::StdRng;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::matrix::Matrix;

/// Handle into a [`ParamStore`]. Stable for the lifetime of the store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

/// Flat registry of model parameters. Registration order is the canonical
/// order for checkpoints and finite-difference sweeps.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a zero-initialized parameter. Names must be unique.
    pub fn register(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        self.register_with(name, Matrix::zeros(rows, cols))
    }

    /// Registers a parameter with entries drawn uniformly from
    /// (−scale, scale) using the given seeded generator.
    pub fn register_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut StdRng,
    ) -> Result<ParamId> {
        let mut value = Matrix::zeros(rows, cols);
        for x in value.data_mut() {
            *x = rng.random_range(-scale..scale);
        }
        self.register_with(name, value)
    }

    pub fn register_with(&mut self, name: &str, value: Matrix) -> Result<ParamId> {
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::domain(
                "param_store",
                format!("duplicate parameter name {name:?}"),
            ));
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// value -= lr * grad, over every parameter.
    pub fn sgd_step(&mut self, lr: f64) {
        for p in &mut self.params {
            let g = p.grad.data().to_vec();
            for (v, gi) in p.value.data_mut().iter_mut().zip(g) {
                *v -= lr * gi;
            }
        }
    }

    /// Copies parameter values from another store with identical layout.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::data("parameter stores differ in size"));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name
                || dst.value.rows() != src.value.rows()
                || dst.value.cols() != src.value.cols()
            {
                return Err(Error::data(format!(
                    "parameter mismatch: {} vs {}",
                    dst.name, src.name
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}

/// Adam optimizer state, one moment pair per parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let m = store
            .params
            .iter()
            .map(|p| vec![0.0; p.value.data().len()])
            .collect();
        let v = store
            .params
            .iter()
            .map(|p| vec![0.0; p.value.data().len()])
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in store.params.iter_mut().enumerate() {
            let grads = p.grad.data().to_vec();
            let values = p.value.data_mut();
            for (k, g) in grads.iter().enumerate() {
                let m = &mut self.m[i][k];
                let v = &mut self.v[i][k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                values[k] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn register_rejects_duplicate_names() {
        let mut store = ParamStore::new();
        store.register("w", 2, 2).unwrap();
        assert!(store.register("w", 1, 1).is_err());
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut store = ParamStore::new();
        let id = store.register("w", 1, 2).unwrap();
        store.grad_mut(id).set(0, 0, 2.0);
        store.grad_mut(id).set(0, 1, -4.0);
        store.sgd_step(0.5);
        assert_eq!(store.value(id).at(0, 0), -1.0);
        assert_eq!(store.value(id).at(0, 1), 2.0);
    }

    #[test]
    fn zero_grads_clears_accumulation() {
        let mut store = ParamStore::new();
        let id = store.register("w", 1, 1).unwrap();
        store.grad_mut(id).set(0, 0, 3.0);
        store.zero_grads();
        assert_eq!(store.get(id).grad.at(0, 0), 0.0);
    }

    #[test]
    fn uniform_init_is_seed_deterministic() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        let mut rng_a = StdRng::seed_from_u64(7);
        let mut rng_b = StdRng::seed_from_u64(7);
        let ia = a.register_uniform("w", 3, 4, 0.1, &mut rng_a).unwrap();
        let ib = b.register_uniform("w", 3, 4, 0.1, &mut rng_b).unwrap();
        assert_eq!(a.value(ia).data(), b.value(ib).data());
        assert!(a.value(ia).data().iter().all(|x| x.abs() < 0.1));
    }

    #[test]
    fn adam_first_step_has_unit_scale() {
        // Bias correction makes the first update lr * g/|g| regardless of
        // gradient magnitude (up to eps).
        let mut store = ParamStore::new();
        let id = store.register("w", 1, 1).unwrap();
        store.grad_mut(id).set(0, 0, 1e-3);
        let mut opt = Adam::new(&store, 0.01);
        opt.step(&mut store);
        assert!((store.value(id).at(0, 0) + 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // f(w) = (w − 3)^2 reaches the optimum within a few hundred steps.
        let mut store = ParamStore::new();
        let id = store.register("w", 1, 1).unwrap();
        let mut opt = Adam::new(&store, 0.05);
        for _ in 0..500 {
            store.zero_grads();
            let w = store.value(id).at(0, 0);
            store.grad_mut(id).set(0, 0, 2.0 * (w - 3.0));
            opt.step(&mut store);
        }
        assert!((store.value(id).at(0, 0) - 3.0).abs() < 1e-3);
    }
}
