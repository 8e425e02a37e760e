//! Named parameters, their gradient accumulators and Adam state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Param {
    name: String,
    value: Tensor,
    grad: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Parameter storage in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    step: u64,
    pending: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.id(&name).is_some() {
            return Err(Error::usage(format!("duplicate parameter name {name:?}")));
        }
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            value,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        self.params[id.0].value.ensure_shape(&value, "set_value")?;
        self.params[id.0].value = value;
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    /// Number of completed optimizer steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Adds `g` into the gradient accumulator of `id`.
    pub fn accumulate_grad(&mut self, id: ParamId, g: &Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        p.grad.ensure_shape(g, "gradient accumulation")?;
        for (acc, v) in p.grad.data_mut().iter_mut().zip(g.data()) {
            *acc += v;
        }
        self.pending = true;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
        self.pending = false;
    }

    /// Multiplies every accumulated gradient by `factor`.
    pub fn scale_grads(&mut self, factor: f64) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// One bias-corrected Adam update over every parameter with a non-zero
    /// gradient, then clears all gradients.
    ///
    /// A parameter whose gradient is exactly zero (typically one belonging
    /// to a layer the forward pass skipped) keeps its value and moment
    /// buffers untouched. The step counter is global.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        if !self.pending {
            return Err(Error::usage("adam_step called with no accumulated gradients"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            if p.grad.data().iter().all(|&g| g == 0.0) {
                continue;
            }
            let value = p.value.data_mut();
            let m = p.m.data_mut();
            let v = p.v.data_mut();
            for (i, &g) in p.grad.data().iter().enumerate() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.zero_grad();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::scalar(v)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let (mut s, id) = scalar_store(0.5);
        s.accumulate_grad(id, &Tensor::scalar(0.0)).unwrap();
        s.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(s.value(id).item(), 0.5);
    }

    #[test]
    fn constant_positive_gradient_decreases_monotonically() {
        let (mut s, id) = scalar_store(0.0);
        let mut prev = s.value(id).item();
        for _ in 0..200 {
            s.accumulate_grad(id, &Tensor::scalar(0.3)).unwrap();
            s.adam_step(&AdamConfig::with_lr(1e-3)).unwrap();
            let now = s.value(id).item();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1 => step = lr / (1 + eps).
        let (mut s, id) = scalar_store(1.0);
        s.accumulate_grad(id, &Tensor::scalar(1.0)).unwrap();
        s.adam_step(&AdamConfig::default()).unwrap();
        let expect = 1.0 - 1e-4 / (1.0 + 1e-8);
        assert!((s.value(id).item() - expect).abs() < 1e-15);
        assert!((s.value(id).item() - (1.0 - 1e-4)).abs() < 1e-8);
        assert_eq!(s.grad(id).item(), 0.0);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn step_without_gradients_is_rejected() {
        let (mut s, _) = scalar_store(1.0);
        assert!(matches!(
            s.adam_step(&AdamConfig::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = scalar_store(1.0);
        assert!(s.add("p", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn gradient_shape_checked() {
        let (mut s, id) = scalar_store(1.0);
        assert!(s.accumulate_grad(id, &Tensor::zeros(&[2])).is_err());
    }
}
