use crate::error::{RalignError, Result};
use crate::tensor::Matrix;

/// Adam with decoupled weight decay (lr * wd * param subtracted after the
/// moment update).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(lr: f64, weight_decay: f64, shapes: &[(usize, usize)]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    /// One update over all parameter tensors. Gradients may be None for
    /// parameters that did not participate in the loss.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Option<&Matrix>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(RalignError::Dimension(format!(
                "adam_step: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(RalignError::Training("NaN gradient in adam_step".into()));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = grads[i] else { continue };
            if g.shape() != p.shape() {
                return Err(RalignError::Dimension(format!(
                    "adam_step param {}: grad {:?} vs param {:?}",
                    i,
                    g.shape(),
                    p.shape()
                )));
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..p.data.len() {
                m.data[j] = self.beta1 * m.data[j] + (1.0 - self.beta1) * g.data[j];
                v.data[j] = self.beta2 * v.data[j] + (1.0 - self.beta2) * g.data[j] * g.data[j];
                let mhat = m.data[j] / bc1;
                let vhat = v.data[j] / bc2;
                p.data[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                p.data[j] -= self.lr * self.weight_decay * p.data[j];
            }
        }
        Ok(())
    }
}
