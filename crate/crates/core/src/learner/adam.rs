use ndarray::Array2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Bias-corrected Adam update of one parameter slice at step `t >= 1`.
pub fn adam_step(weights: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], t: u64, p: &AdamParams) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - p.beta1.powi(t as i32);
    let c2 = 1.0 - p.beta2.powi(t as i32);
    for (((w, &g), m), v) in weights.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = p.beta1 * *m + (1.0 - p.beta1) * g;
        *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
    }
}

/// Moment buffers for a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub params: AdamParams,
    pub t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: AdamParams, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&s| Array2::zeros(s)).collect();
        Self { params, t: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, weights: &mut [&mut Array2<f64>], grads: &[Array2<f64>]) {
        self.t += 1;
        for (((w, g), m), v) in weights.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            adam_step(
                w.as_slice_mut().expect("contiguous weights"),
                g.as_slice().expect("contiguous grads"),
                m.as_slice_mut().expect("contiguous moments"),
                v.as_slice_mut().expect("contiguous moments"),
                self.t,
                &self.params,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: AdamParams = AdamParams { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };

    #[test]
    fn zero_gradient_keeps_weights() {
        let mut w = [0.3, -1.2];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_step(&mut w, &[0.0, 0.0], &mut m, &mut v, 1, &P);
        assert_eq!(w, [0.3, -1.2]);
    }

    #[test]
    fn first_step_is_learning_rate_sized() {
        let mut w = [0.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_step(&mut w, &[1.0], &mut m, &mut v, 1, &P);
        // m_hat = 1, v_hat = 1.
        assert!((w[0] + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn first_step_descends_every_coordinate() {
        let g = [3.0, -0.5, 1e-6, -40.0];
        let mut w = [0.0; 4];
        let (mut m, mut v) = ([0.0; 4], [0.0; 4]);
        adam_step(&mut w, &g, &mut m, &mut v, 1, &P);
        for (wi, gi) in w.iter().zip(g) {
            assert_eq!(wi.signum(), -gi.signum());
        }
    }
}
