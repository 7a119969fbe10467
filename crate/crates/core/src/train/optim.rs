use super::TrainError;
use crate::params::ParamStore;
use crate::tensor::Matrix;

/// Adam with L2 weight decay added to the gradient of decayed parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros = || -> Vec<Matrix> {
            store
                .entries()
                .iter()
                .map(|e| Matrix::zeros(e.value.rows(), e.value.cols()))
                .collect()
        };
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. `grads[i]` belongs to parameter `i` of the
    /// store. Non-finite gradients abort the step before anything changes.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Matrix]) -> Result<(), TrainError> {
        assert_eq!(grads.len(), store.len(), "one gradient per parameter");
        if let Some((i, _)) = grads.iter().enumerate().find(|(_, g)| !g.all_finite()) {
            return Err(TrainError::NonFinite(format!(
                "gradient of {} is not finite",
                store.entries()[i].name
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((id, g), m), v) in store.ids().collect::<Vec<_>>().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let decay = if store.entries()[id.index()].decay {
                self.weight_decay
            } else {
                0.0
            };
            let theta = store.get_mut(id);
            for (((p, &gi), mi), vi) in theta
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gi = gi + decay * *p;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
