use crate::params::ParamSet;
use crate::{Result, Tensor, TensorError};

/// Adam with bias correction and no weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    steps: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect()
        };
        Self {
            beta1,
            beta2,
            eps,
            steps: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Rebuilds optimizer state from saved moments.
    pub fn from_state(
        beta1: f64,
        beta2: f64,
        eps: f64,
        steps: u64,
        first: Vec<Tensor>,
        second: Vec<Tensor>,
    ) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            steps,
            first,
            second,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// Applies one update. Parameters without a gradient are treated as
    /// having a zero gradient so every moment decays in lockstep.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Option<Tensor>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(TensorError::Shape(format!(
                "adam got {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let g = grads[i].as_ref();
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(TensorError::Shape(format!(
                        "gradient {:?} for parameter {:?}",
                        g.shape(),
                        p.shape()
                    )));
                }
            }
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g.map_or(0.0, |g| g.data()[j]);
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
