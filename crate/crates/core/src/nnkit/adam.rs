use serde::{Deserialize, Serialize};

use super::tensor::{Grads, Tensor};
use super::NnError;

/// Adam with bias-corrected moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub timestep: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[&Tensor], learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            timestep: 0,
            first: params.iter().map(|p| Tensor::zeros_like(p)).collect(),
            second: params.iter().map(|p| Tensor::zeros_like(p)).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &Grads) -> Result<(), NnError> {
        if params.len() != self.first.len() || grads.0.len() != self.first.len() {
            return Err(NnError::Shape {
                context: "adam parameter count".into(),
                expected: vec![self.first.len()],
                got: vec![params.len(), grads.0.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(&grads.0).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NnError::Shape {
                    context: "adam parameter/gradient".into(),
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
        }
        self.timestep += 1;
        let t = self.timestep as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.into_iter().zip(&grads.0).zip(&mut self.first).zip(&mut self.second) {
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param() -> Tensor {
        Tensor::from_vec(vec![0.5, -1.5, 2.0])
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut p = param();
        let mut adam = Adam::new(&[&p], 0.0);
        let g = Grads(vec![Tensor::from_vec(vec![1.0, -2.0, 3.0])]);
        for _ in 0..10 {
            adam.step(vec![&mut p], &g).unwrap();
        }
        assert_eq!(p, param());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = param();
        let mut adam = Adam::new(&[&p], 0.1);
        let g = Grads(vec![Tensor::zeros(&[3])]);
        for _ in 0..10 {
            adam.step(vec![&mut p], &g).unwrap();
        }
        assert_eq!(p, param());
    }

    #[test]
    fn constant_gradient_moves_by_learning_rate() {
        let lr = 1e-3;
        let mut p = param();
        let mut adam = Adam::new(&[&p], lr);
        let g = Grads(vec![Tensor::from_vec(vec![0.02, -7.0, 300.0])]);
        let mut last = p.clone();
        for _ in 0..500 {
            adam.step(vec![&mut p], &g).unwrap();
            for ((a, b), gv) in p.data().iter().zip(last.data()).zip(g.0[0].data()) {
                let step = b - a;
                assert!((step.abs() - lr).abs() < lr * 1e-5, "step {step}");
                assert_eq!(step.signum(), gv.signum());
            }
            last = p.clone();
        }
    }

    #[test]
    fn mismatched_shapes_error() {
        let mut p = param();
        let mut adam = Adam::new(&[&p], 0.1);
        let g = Grads(vec![Tensor::zeros(&[2])]);
        assert!(adam.step(vec![&mut p], &g).is_err());
    }
}
