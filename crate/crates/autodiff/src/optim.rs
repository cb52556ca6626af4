use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// AdamW with decoupled weight decay. Moment state is kept per parameter
/// slot and allocated on the first step.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, betas: (f64, f64), weight_decay: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(TensorError::Config(format!("learning rate must be > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&betas.0) || !(0.0..1.0).contains(&betas.1) {
            return Err(TensorError::Config(format!("betas must lie in [0,1), got {betas:?}")));
        }
        Ok(Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            weight_decay,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over parallel slices of parameters and gradients.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(TensorError::Config(format!(
                "optimizer got {} params but {} grads",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() {
            return Err(TensorError::Config("parameter count changed between steps".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.numel() != g.numel() {
                return Err(TensorError::ShapeDataMismatch {
                    shape: p.shape().to_vec(),
                    len: g.numel(),
                });
            }
            let pd = p.data_mut();
            let gd = g.data();
            for i in 0..pd.len() {
                // decoupled decay, then the Adam step
                pd[i] -= self.lr * self.weight_decay * pd[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gd[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                pd[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_lr() {
        assert!(AdamW::new(0.0, (0.9, 0.999), 0.0).is_err());
        assert!(AdamW::new(-0.1, (0.9, 0.999), 0.0).is_err());
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut opt = AdamW::new(0.1, (0.9, 0.999), 0.0).unwrap();
        let mut params = [Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let grads = [Tensor::zeros(&[3])];
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_bias_corrected() {
        // g = 1: m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
        let mut opt = AdamW::new(0.1, (0.9, 0.999), 0.0).unwrap();
        let mut params = [Tensor::new(vec![1], vec![3.0]).unwrap()];
        let grads = [Tensor::new(vec![1], vec![1.0]).unwrap()];
        opt.step(&mut params, &grads).unwrap();
        let delta = 3.0 - params[0].data()[0];
        assert!((delta - 0.1).abs() < 1e-6, "delta = {delta}");
    }

    #[test]
    fn decay_only_shrinks_exactly() {
        let mut opt = AdamW::new(0.1, (0.9, 0.999), 0.01).unwrap();
        let mut params = [Tensor::new(vec![1], vec![5.0]).unwrap()];
        let grads = [Tensor::zeros(&[1])];
        opt.step(&mut params, &grads).unwrap();
        assert_eq!(params[0].data()[0], 5.0 - 0.1 * 0.01 * 5.0);
    }
}
