//! Adam over a flat parameter vector, plus exponential learning-rate decay.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Clears both moment estimates and the step counter.
    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// `lr(epoch) = lr0 * gamma^epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpDecay {
    pub lr0: f64,
    pub gamma: f64,
}

impl Default for ExpDecay {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            gamma: 0.97,
        }
    }
}

impl ExpDecay {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.lr0 * self.gamma.powi(epoch as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(3);
        let mut p = vec![0.1, -0.2, 0.3];
        opt.step(&mut p, &[0.0; 3], 0.01);
        assert_eq!(p, vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2 after bias correction, so the step is lr * g / (|g| + eps)
        let mut opt = Adam::new(3);
        let mut p = vec![0.0; 3];
        opt.step(&mut p, &[4.0, -0.003, 1e3], 0.01);
        assert_relative_eq!(p[0], -0.01, max_relative = 1e-6);
        assert_relative_eq!(p[1], 0.01, max_relative = 1e-4);
        assert_relative_eq!(p[2], -0.01, max_relative = 1e-6);
    }

    #[test]
    fn reset_restarts_bias_correction() {
        let mut opt = Adam::new(1);
        let mut p = vec![0.0];
        opt.step(&mut p, &[1.0], 0.1);
        opt.step(&mut p, &[-1.0], 0.1);
        opt.reset();
        assert_eq!(opt.steps(), 0);
        let before = p[0];
        opt.step(&mut p, &[2.0], 0.1);
        assert_relative_eq!(p[0] - before, -0.1, max_relative = 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut opt = Adam::new(2);
        let mut p = vec![3.0, -2.0];
        for _ in 0..3000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            opt.step(&mut p, &g, 0.01);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 0.5).abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn exponential_decay() {
        let s = ExpDecay { lr0: 0.01, gamma: 0.5 };
        assert_eq!(s.lr(0), 0.01);
        assert_eq!(s.lr(3), 0.01 * 0.125);
    }
}
