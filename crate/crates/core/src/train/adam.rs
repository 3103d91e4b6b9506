use super::mlp::MlpParams;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    first: MlpParams,
    second: MlpParams,
    step: i32,
}

impl Adam {
    pub fn new(params: &MlpParams, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first: params.zeros_like(),
            second: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .params_mut()
            .zip(grads.params())
            .zip(self.first.params_mut())
            .zip(self.second.params_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::mlp::Layer;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut p = MlpParams::from_layers(vec![Layer::new(1, 3, vec![1.0, 2.0, 3.0], vec![0.5]).unwrap()]).unwrap();
        let g = MlpParams::from_layers(vec![Layer::new(1, 3, vec![0.1, -4.0, 0.0], vec![2.0]).unwrap()]).unwrap();
        let mut adam = Adam::new(&p, 0.01);
        adam.step(&mut p, &g);
        let w = p.layers()[0].weights();
        assert!((w[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((w[1] - (2.0 + 0.01)).abs() < 1e-6);
        assert_eq!(w[2], 3.0);
        assert!((p.layers()[0].biases()[0] - 0.49).abs() < 1e-6);
    }
}
