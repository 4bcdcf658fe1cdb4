use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be finite and nonnegative",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} = {b} outside [0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

/// First and second moment accumulators, shaped like the network parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let m_w: Vec<_> = net.params().iter().map(|p| Array2::zeros(p.weights.raw_dim())).collect();
        let m_b: Vec<_> = net.params().iter().map(|p| Array1::zeros(p.bias.len())).collect();
        Self {
            v_w: m_w.clone(),
            v_b: m_b.clone(),
            m_w,
            m_b,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one bias-corrected Adam update to every parameter of `net`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, config: &AdamConfig) -> Result<()> {
        if net.is_frozen() {
            return Err(Error::Frozen);
        }
        if grads.weights.len() != self.m_w.len() || grads.biases.len() != self.m_b.len() {
            return Err(Error::dim("gradient layer count", self.m_w.len(), grads.weights.len()));
        }
        for (l, g) in grads.weights.iter().enumerate() {
            if g.raw_dim() != self.m_w[l].raw_dim() {
                return Err(Error::dim("gradient weight elements", self.m_w[l].len(), g.len()));
            }
            if grads.biases[l].len() != self.m_b[l].len() {
                return Err(Error::dim("gradient bias elements", self.m_b[l].len(), grads.biases[l].len()));
            }
        }
        self.t += 1;
        let k = Corrections::new(self.t, config);
        let params = net.params_mut()?;
        for (l, p) in params.iter_mut().enumerate() {
            Zip::from(&mut p.weights)
                .and(&grads.weights[l])
                .and(&mut self.m_w[l])
                .and(&mut self.v_w[l])
                .for_each(|p, &g, m, v| k.apply(p, g, m, v));
            Zip::from(&mut p.bias)
                .and(&grads.biases[l])
                .and(&mut self.m_b[l])
                .and(&mut self.v_b[l])
                .for_each(|p, &g, m, v| k.apply(p, g, m, v));
        }
        Ok(())
    }
}

/// Adam update on flat buffers. `t` is the step count after incrementing.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    config: &AdamConfig,
) -> Result<()> {
    let n = params.len();
    for (what, len) in [("gradient", grads.len()), ("first moment", m.len()), ("second moment", v.len())] {
        if len != n {
            return Err(Error::dim(what, n, len));
        }
    }
    if t == 0 {
        return Err(Error::InvalidInput("adam step counter must be incremented before the update".into()));
    }
    let k = Corrections::new(t, config);
    for i in 0..n {
        k.apply(&mut params[i], grads[i], &mut m[i], &mut v[i]);
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Corrections {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

impl Corrections {
    fn new(t: u64, c: &AdamConfig) -> Self {
        let t = t.min(i32::MAX as u64) as i32;
        Self {
            lr: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.epsilon,
            bc1: 1.0 - c.beta1.powi(t),
            bc2: 1.0 - c.beta2.powi(t),
        }
    }

    #[inline]
    fn apply(&self, p: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = *m / self.bc1;
        let v_hat = *v / self.bc2;
        *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = [1.5, -2.0];
        let mut m = [0.0; 2];
        let mut v = [0.0; 2];
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, &AdamConfig::default()).unwrap();
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        for g in [3.0, -0.5, 1e-2] {
            let mut p = [0.0];
            adam_update(&mut p, &[g], &mut [0.0], &mut [0.0], 1, &cfg).unwrap();
            let expected = -cfg.learning_rate * g.signum();
            assert!((p[0] - expected).abs() <= cfg.learning_rate * 1e-6, "g={g}: {}", p[0]);
        }
    }

    #[test]
    fn shape_and_counter_errors() {
        let cfg = AdamConfig::default();
        assert!(adam_update(&mut [0.0], &[1.0, 2.0], &mut [0.0], &mut [0.0], 1, &cfg).is_err());
        assert!(adam_update(&mut [0.0], &[1.0], &mut [0.0], &mut [0.0], 0, &cfg).is_err());
        let bad = AdamConfig { beta1: 1.0, ..cfg };
        assert!(bad.validate().is_err());
        let bad = AdamConfig { epsilon: 0.0, ..cfg };
        assert!(bad.validate().is_err());
    }
}
