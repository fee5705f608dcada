//! Adam with bias correction, plus global gradient-norm clipping.

use ndarray::Array2;

use crate::scalar::Real;

/// Adam optimizer state for one parameter list. The moment buffers are laid
/// out in the same order as the network's [`Parametric::params`]
/// (crate::nn::Parametric::params) visitation.
#[derive(Debug, Clone)]
pub struct Adam<F: Real> {
    lr: F,
    beta1: F,
    beta2: F,
    epsilon: F,
    step_count: u64,
    m: Vec<Array2<F>>,
    v: Vec<Array2<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: F, shapes: &[&Array2<F>]) -> Self {
        Self::with_betas(lr, F::from_f64_lit(0.9), F::from_f64_lit(0.999), F::from_f64_lit(1e-8), shapes)
    }

    pub fn with_betas(lr: F, beta1: F, beta2: F, epsilon: F, shapes: &[&Array2<F>]) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            m: shapes.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
            v: shapes.iter().map(|p| Array2::zeros(p.raw_dim())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one descent step; `params` and `grads` must align with the
    /// shapes the optimizer was built from.
    pub fn step(&mut self, params: Vec<&mut Array2<F>>, grads: &[&Array2<F>]) {
        assert_eq!(params.len(), self.m.len(), "parameter count mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient count mismatch");
        self.step_count += 1;
        let one = F::one();
        let t = F::from_f64_lit(self.step_count as f64);
        let bias1 = one - self.beta1.powf(t);
        let bias2 = one - self.beta2.powf(t);
        for ((param, grad), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(param.raw_dim(), m.raw_dim(), "parameter shape mismatch");
            ndarray::Zip::from(param)
                .and(*grad)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = self.beta1 * *m + (one - self.beta1) * g;
                    *v = self.beta2 * *v + (one - self.beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
                });
        }
    }
}

/// Scale a gradient block so its global L2 norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_gradient_norm<F: Real>(grads: Vec<&mut Array2<F>>, max_norm: F) -> F {
    let mut sq_sum = F::zero();
    for g in grads.iter() {
        for &v in g.iter() {
            sq_sum += v * v;
        }
    }
    let norm = sq_sum.sqrt();
    if norm > max_norm && norm > F::zero() {
        let scale = max_norm / norm;
        for g in grads {
            g.mapv_inplace(|v| v * scale);
        }
    }
    norm
}
