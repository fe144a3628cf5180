use crate::network::{Gradients, Network};
use crate::{NnError, Result};

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Network, lr: f64) -> Self {
        let shapes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One descent step on `net` along `grads`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if !grads.is_finite() {
            return Err(NnError::Divergence {
                context: format!("gradient at Adam step {}", self.t + 1),
            });
        }
        if grads.arrays().len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                context: "Adam::step",
                expected: self.m.len(),
                got: grads.arrays().len(),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in net
            .param_slices_mut()
            .into_iter()
            .zip(grads.arrays())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            if p.len() != g.len() {
                return Err(NnError::ShapeMismatch {
                    context: "Adam::step (array)",
                    expected: p.len(),
                    got: g.len(),
                });
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
