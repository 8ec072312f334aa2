use super::Tensor;
use crate::error::{Error, Result};

/// A named learnable tensor plus its Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    tensor: Tensor,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let tensor = Tensor::param(shape, data)?;
        let n = tensor.numel();
        Ok(Parameter { name: name.into(), tensor, m: vec![0.0; n], v: vec![0.0; n], step: 0 })
    }

    /// Rebuilds a parameter with explicit optimizer state (checkpoint loading).
    pub(crate) fn with_state(name: String, shape: &[usize], data: Vec<f64>, m: Vec<f64>, v: Vec<f64>, step: u64) -> Result<Self> {
        let mut p = Self::new(name, shape, data)?;
        if m.len() != p.m.len() || v.len() != p.v.len() {
            return Err(Error::Corrupt {
                kind: "checkpoint",
                detail: format!("moment buffers of {} do not match its shape", p.name),
            });
        }
        p.m = m;
        p.v = v;
        p.step = step;
        Ok(p)
    }

    /// The current value as a graph leaf.
    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// A copy whose value is the given tensor, which is used as-is so that
    /// gradients flow into it. Optimizer state is kept.
    pub fn with_tensor(&self, tensor: Tensor) -> Result<Parameter> {
        if tensor.shape() != self.shape() {
            return Err(Error::InvalidShape {
                op: "Parameter::with_tensor",
                detail: format!("{} has shape {:?}, got {:?}", self.name, self.shape(), tensor.shape()),
            });
        }
        Ok(Parameter { tensor, ..self.clone() })
    }

    /// Replaces the value, keeping optimizer state.
    pub fn set_data(&mut self, data: Vec<f64>) -> Result<()> {
        self.tensor = Tensor::param(self.tensor.shape(), data)?;
        Ok(())
    }
}

pub fn zero_grads<'a>(params: impl IntoIterator<Item = &'a Parameter>) {
    for p in params {
        p.tensor.zero_grad();
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam { lr, ..Adam::default() }
    }

    /// One update of every parameter from its accumulated gradient. Fails,
    /// without touching anything, if any parameter has no gradient.
    pub fn step<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) -> Result<()> {
        let mut params: Vec<&mut Parameter> = params.into_iter().collect();
        let grads: Vec<Option<Vec<f64>>> = params.iter().map(|p| p.tensor.grad()).collect();
        let missing: Vec<String> = params.iter().zip(&grads).filter(|(_, g)| g.is_none()).map(|(p, _)| p.name.clone()).collect();
        if !missing.is_empty() {
            return Err(Error::MissingGrad(missing));
        }
        for (p, g) in params.iter_mut().zip(grads) {
            let p = &mut **p;
            let g = g.expect("checked above");
            p.step += 1;
            let t = p.step as i32;
            let bc1 = 1.0 - self.beta1.powi(t);
            let bc2 = 1.0 - self.beta2.powi(t);
            let mut data = p.tensor.data().to_vec();
            for i in 0..data.len() {
                p.m[i] = self.beta1 * p.m[i] + (1.0 - self.beta1) * g[i];
                p.v[i] = self.beta2 * p.v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.tensor = Tensor::param(p.tensor.shape(), data)?;
        }
        Ok(())
    }
}
