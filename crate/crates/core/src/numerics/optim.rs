use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamStore};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for every parameter of one store, plus the clipping threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub clip_norm: f64,
}

/// L2 norm over all populated gradient buffers of trainable parameters.
pub fn global_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .filter(|(_, _, t)| t.requires_grad())
        .filter_map(|(_, _, t)| t.grad())
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients by `clip_norm / ‖g‖` when `‖g‖ > clip_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(store: &mut ParamStore, clip_norm: f64) -> f64 {
    let norm = global_norm(store);
    if norm > clip_norm && norm > 0.0 {
        let factor = clip_norm / norm;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if let Some(g) = store.get_mut(id).grad_mut() {
                g.iter_mut().for_each(|x| *x *= factor);
            }
        }
    }
    norm
}

impl OptimizerState {
    pub fn new(store: &ParamStore, learning_rate: f64, clip_norm: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        OptimizerState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            learning_rate,
            clip_norm,
        }
    }

    /// Clips, applies one Adam update to every trainable parameter and zeroes
    /// the gradients. Returns the gradient norm before clipping.
    pub fn clip_and_step(&mut self, store: &mut ParamStore) -> Result<f64, NumericsError> {
        if store.len() != self.first_moment.len() {
            return Err(NumericsError::Shape {
                op: "clip_and_step",
                detail: format!("optimizer tracks {} parameters, store has {}", self.first_moment.len(), store.len()),
            });
        }
        for (_, name, t) in store.iter() {
            if t.requires_grad() && t.grad().is_none() {
                return Err(NumericsError::MissingGrad(name.to_string()));
            }
        }
        let norm = clip_global_norm(store, self.clip_norm);
        self.step_count += 1;
        let step = self.step_count as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(step);
        let bc2 = 1.0 - ADAM_BETA2.powi(step);
        let lr = self.learning_rate;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let t = store.get_mut(id);
            if !t.requires_grad() {
                continue;
            }
            let grad = t.grad_mut().take().expect("checked above");
            let (m, v) = (&mut self.first_moment[id.index()], &mut self.second_moment[id.index()]);
            for (((theta, g), m), v) in t.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
            *t.grad_mut() = Some(vec![0.0; grad.len()]);
        }
        Ok(norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store_with(values: &[f64], grads: &[f64]) -> ParamStore {
        let mut store = ParamStore::new();
        for (i, (&v, &g)) in values.iter().zip(grads).enumerate() {
            let id = store.add(format!("p{i}"), Tensor::scalar(v).with_requires_grad(true)).unwrap();
            *store.get_mut(id).grad_mut() = Some(vec![g]);
        }
        store
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = store_with(&[0.5], &[1.0]);
        let mut opt = OptimizerState::new(&store, 0.01, 10.0);
        opt.clip_and_step(&mut store).unwrap();
        let moved = 0.5 - store.get(store.id("p0").unwrap()).data()[0];
        assert!((moved - 0.01).abs() < 1e-9, "moved {moved}");
        assert_eq!(store.get(store.id("p0").unwrap()).grad(), Some(&[0.0][..]));
    }

    #[test]
    fn clipping_halves_gradients_with_norm_two() {
        let mut store = store_with(&[0.0, 0.0], &[1.2, 1.6]);
        let norm = clip_global_norm(&mut store, 1.0);
        assert!((norm - 2.0).abs() < 1e-12);
        let g: Vec<f64> = store.iter().map(|(_, _, t)| t.grad().unwrap()[0]).collect();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut store = store_with(&[0.3, -0.7], &[0.0, 0.0]);
        let before = store.clone();
        let mut opt = OptimizerState::new(&store, 0.1, 1.0);
        opt.clip_and_step(&mut store).unwrap();
        assert_eq!(opt.step_count, 1);
        for (a, b) in store.iter().zip(before.iter()) {
            assert_eq!(a.2.data(), b.2.data());
        }
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(1.0).with_requires_grad(true)).unwrap();
        let mut opt = OptimizerState::new(&store, 0.1, 1.0);
        assert!(matches!(opt.clip_and_step(&mut store), Err(NumericsError::MissingGrad(n)) if n == "w"));
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        store.add("frozen", Tensor::scalar(1.0)).unwrap();
        let id = store.add("w", Tensor::scalar(1.0).with_requires_grad(true)).unwrap();
        *store.get_mut(id).grad_mut() = Some(vec![3.0]);
        let mut opt = OptimizerState::new(&store, 0.1, 1.0);
        opt.clip_and_step(&mut store).unwrap();
        assert_eq!(store.get(store.id("frozen").unwrap()).data(), &[1.0]);
        assert!(store.get(id).data()[0] < 1.0);
    }

    #[test]
    fn clipping_preserves_direction() {
        let mut store = store_with(&[0.0, 0.0, 0.0], &[3.0, -4.0, 12.0]);
        clip_global_norm(&mut store, 1.0);
        let g: Vec<f64> = store.iter().map(|(_, _, t)| t.grad().unwrap()[0]).collect();
        let scale = 13.0;
        for (c, o) in g.iter().zip([3.0, -4.0, 12.0]) {
            assert!((c * scale - o).abs() < 1e-12);
        }
    }
}
