use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<(), NeuralError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(NeuralError::ShapeMismatch {
                left: self.m.len(),
                right: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grad.len()
                },
            });
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_sign() {
        let mut adam = Adam::new(3);
        let mut p = vec![0.0; 3];
        adam.step(&mut p, &[3.0, -0.02, 1e3], 1e-4).unwrap();
        // m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
        for (x, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((x - sign * 1e-4).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn repeated_gradient_keeps_moving_the_same_way() {
        let mut adam = Adam::new(1);
        let mut p = vec![0.0];
        adam.step(&mut p, &[2.0], 0.01).unwrap();
        let after_one = p[0];
        adam.step(&mut p, &[2.0], 0.01).unwrap();
        // Closed form: both steps are lr * 1 / (1 + eps / |g|).
        assert!(after_one < 0.0 && p[0] < after_one);
        assert!((p[0] + 0.02).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = Adam::new(2);
        assert!(adam.step(&mut [0.0; 3], &[0.0; 3], 0.1).is_err());
    }
}
