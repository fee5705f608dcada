//! Gated recurrent unit with exact single-step gradients and
//! backpropagation through time over short sequences.
//!
//! Gate equations:
//! ```text
//! z  = σ(Wz·x + Uz·h + bz)          update gate
//! r  = σ(Wr·x + Ur·h + br)          reset gate
//! h~ = tanh(Wh·x + Uh·(r⊙h) + bh)   candidate
//! h' = (1−z)⊙h + z⊙h~
//! ```

use ndarray::{Array2, Axis};
use rand::Rng;

use super::dense::sigmoid;
use super::{init_matrix, Parametric};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Gru<F: Real> {
    pub wz: Array2<F>,
    pub uz: Array2<F>,
    pub bz: Array2<F>,
    pub wr: Array2<F>,
    pub ur: Array2<F>,
    pub br: Array2<F>,
    pub wh: Array2<F>,
    pub uh: Array2<F>,
    pub bh: Array2<F>,
}

/// Everything one step's backward pass needs.
#[derive(Debug, Clone)]
pub struct GruStepCache<F: Real> {
    x: Array2<F>,
    h_prev: Array2<F>,
    z: Array2<F>,
    r: Array2<F>,
    candidate: Array2<F>,
    reset_hidden: Array2<F>,
}

/// Caches for a whole forward sequence, oldest step first.
#[derive(Debug, Clone, Default)]
pub struct GruSeqCache<F: Real> {
    steps: Vec<GruStepCache<F>>,
}

#[derive(Debug, Clone)]
pub struct GruGrads<F: Real> {
    pub dwz: Array2<F>,
    pub duz: Array2<F>,
    pub dbz: Array2<F>,
    pub dwr: Array2<F>,
    pub dur: Array2<F>,
    pub dbr: Array2<F>,
    pub dwh: Array2<F>,
    pub duh: Array2<F>,
    pub dbh: Array2<F>,
}

impl<F: Real> Gru<F> {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            wz: init_matrix(hidden, input, input, rng),
            uz: init_matrix(hidden, hidden, hidden, rng),
            bz: Array2::zeros((hidden, 1)),
            wr: init_matrix(hidden, input, input, rng),
            ur: init_matrix(hidden, hidden, hidden, rng),
            br: Array2::zeros((hidden, 1)),
            wh: init_matrix(hidden, input, input, rng),
            uh: init_matrix(hidden, hidden, hidden, rng),
            bh: Array2::zeros((hidden, 1)),
        }
    }

    pub fn zeroed(input: usize, hidden: usize) -> Self {
        Self {
            wz: Array2::zeros((hidden, input)),
            uz: Array2::zeros((hidden, hidden)),
            bz: Array2::zeros((hidden, 1)),
            wr: Array2::zeros((hidden, input)),
            ur: Array2::zeros((hidden, hidden)),
            br: Array2::zeros((hidden, 1)),
            wh: Array2::zeros((hidden, input)),
            uh: Array2::zeros((hidden, hidden)),
            bh: Array2::zeros((hidden, 1)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.wz.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.wz.nrows()
    }

    /// One step over a `(input × batch)` slice and `(hidden × batch)` state.
    pub fn step(&self, x: &Array2<F>, h_prev: &Array2<F>) -> (Array2<F>, GruStepCache<F>) {
        let mut az = self.wz.dot(x) + self.uz.dot(h_prev);
        az += &self.bz;
        let z = az.mapv(sigmoid);

        let mut ar = self.wr.dot(x) + self.ur.dot(h_prev);
        ar += &self.br;
        let r = ar.mapv(sigmoid);

        let reset_hidden = &r * h_prev;
        let mut ac = self.wh.dot(x) + self.uh.dot(&reset_hidden);
        ac += &self.bh;
        let candidate = ac.mapv(|v| v.tanh());

        let one = F::one();
        let mut h_new = h_prev.clone();
        ndarray::Zip::from(&mut h_new)
            .and(&z)
            .and(&candidate)
            .for_each(|h, &z, &c| *h = (one - z) * *h + z * c);

        (
            h_new,
            GruStepCache {
                x: x.clone(),
                h_prev: h_prev.clone(),
                z,
                r,
                candidate,
                reset_hidden,
            },
        )
    }

    /// Backward through one step. Accumulates parameter gradients and
    /// returns `(g_x, g_h_prev)`.
    pub fn step_backward(
        &self,
        cache: &GruStepCache<F>,
        g_h_new: &Array2<F>,
        grads: &mut GruGrads<F>,
    ) -> (Array2<F>, Array2<F>) {
        let one = F::one();
        // h' = (1−z)⊙h + z⊙c
        let g_z_pre = {
            // dL/dz = g ⊙ (c − h), then through σ: ⊙ z(1−z)
            let mut g = g_h_new.clone();
            ndarray::Zip::from(&mut g)
                .and(&cache.candidate)
                .and(&cache.h_prev)
                .and(&cache.z)
                .for_each(|g, &c, &h, &z| *g = *g * (c - h) * z * (one - z));
            g
        };
        let g_c_pre = {
            // dL/dc = g ⊙ z, then through tanh: ⊙ (1 − c²)
            let mut g = g_h_new.clone();
            ndarray::Zip::from(&mut g)
                .and(&cache.z)
                .and(&cache.candidate)
                .for_each(|g, &z, &c| *g = *g * z * (one - c * c));
            g
        };

        // candidate path
        grads.dwh += &g_c_pre.dot(&cache.x.t());
        grads.duh += &g_c_pre.dot(&cache.reset_hidden.t());
        grads.dbh += &g_c_pre.sum_axis(Axis(1)).insert_axis(Axis(1));
        let g_reset_hidden = self.uh.t().dot(&g_c_pre);

        // reset gate path
        let g_r_pre = {
            let mut g = &g_reset_hidden * &cache.h_prev;
            ndarray::Zip::from(&mut g)
                .and(&cache.r)
                .for_each(|g, &r| *g = *g * r * (one - r));
            g
        };
        grads.dwr += &g_r_pre.dot(&cache.x.t());
        grads.dur += &g_r_pre.dot(&cache.h_prev.t());
        grads.dbr += &g_r_pre.sum_axis(Axis(1)).insert_axis(Axis(1));

        // update gate path
        grads.dwz += &g_z_pre.dot(&cache.x.t());
        grads.duz += &g_z_pre.dot(&cache.h_prev.t());
        grads.dbz += &g_z_pre.sum_axis(Axis(1)).insert_axis(Axis(1));

        // gradient into the previous hidden state, all four routes
        let mut g_h_prev = {
            let mut g = g_h_new.clone();
            ndarray::Zip::from(&mut g)
                .and(&cache.z)
                .for_each(|g, &z| *g = *g * (one - z));
            g
        };
        g_h_prev += &(&g_reset_hidden * &cache.r);
        g_h_prev += &self.uz.t().dot(&g_z_pre);
        g_h_prev += &self.ur.t().dot(&g_r_pre);

        let g_x = self.wz.t().dot(&g_z_pre) + self.wr.t().dot(&g_r_pre) + self.wh.t().dot(&g_c_pre);
        (g_x, g_h_prev)
    }

    /// Run the cell over a sequence (oldest first) from a zero state,
    /// returning the final hidden state.
    pub fn forward_sequence(&self, xs: &[Array2<F>]) -> (Array2<F>, GruSeqCache<F>) {
        assert!(!xs.is_empty(), "empty GRU input sequence");
        let batch = xs[0].ncols();
        let mut h = Array2::zeros((self.hidden_dim(), batch));
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let (h_new, cache) = self.step(x, &h);
            steps.push(cache);
            h = h_new;
        }
        (h, GruSeqCache { steps })
    }

    /// Backprop through time across the cached sequence; accumulates
    /// parameter gradients and returns the per-step input gradients
    /// (oldest first).
    pub fn backward_sequence(
        &self,
        cache: &GruSeqCache<F>,
        g_h_final: &Array2<F>,
        grads: &mut GruGrads<F>,
    ) -> Vec<Array2<F>> {
        let mut g_h = g_h_final.clone();
        let mut g_xs = Vec::with_capacity(cache.steps.len());
        for step in cache.steps.iter().rev() {
            let (g_x, g_h_prev) = self.step_backward(step, &g_h, grads);
            g_xs.push(g_x);
            g_h = g_h_prev;
        }
        g_xs.reverse();
        g_xs
    }

    pub fn zero_grads(&self) -> GruGrads<F> {
        GruGrads {
            dwz: Array2::zeros(self.wz.raw_dim()),
            duz: Array2::zeros(self.uz.raw_dim()),
            dbz: Array2::zeros(self.bz.raw_dim()),
            dwr: Array2::zeros(self.wr.raw_dim()),
            dur: Array2::zeros(self.ur.raw_dim()),
            dbr: Array2::zeros(self.br.raw_dim()),
            dwh: Array2::zeros(self.wh.raw_dim()),
            duh: Array2::zeros(self.uh.raw_dim()),
            dbh: Array2::zeros(self.bh.raw_dim()),
        }
    }

    pub fn grads_as_params<'g>(grads: &'g GruGrads<F>) -> Vec<&'g Array2<F>> {
        vec![
            &grads.dwz, &grads.duz, &grads.dbz, &grads.dwr, &grads.dur, &grads.dbr, &grads.dwh,
            &grads.duh, &grads.dbh,
        ]
    }

    pub fn grads_as_params_mut<'g>(grads: &'g mut GruGrads<F>) -> Vec<&'g mut Array2<F>> {
        vec![
            &mut grads.dwz, &mut grads.duz, &mut grads.dbz, &mut grads.dwr, &mut grads.dur,
            &mut grads.dbr, &mut grads.dwh, &mut grads.duh, &mut grads.dbh,
        ]
    }
}

impl<F: Real> Parametric<F> for Gru<F> {
    fn param_names(&self) -> Vec<String> {
        ["wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn params(&self) -> Vec<&Array2<F>> {
        vec![
            &self.wz, &self.uz, &self.bz, &self.wr, &self.ur, &self.br, &self.wh, &self.uh,
            &self.bh,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<F>> {
        vec![
            &mut self.wz, &mut self.uz, &mut self.bz, &mut self.wr, &mut self.ur, &mut self.br,
            &mut self.wh, &mut self.uh, &mut self.bh,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{central_difference, gradient_relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_and_state_give_zero_hidden() {
        // z = σ(0) = 0.5 but candidate = tanh(0) = 0 and h = 0, so h' = 0
        let cell = Gru::<f64>::zeroed(2, 3);
        let x = Array2::from_elem((2, 1), 1.0);
        let h = Array2::zeros((3, 1));
        let (h_new, _) = cell.step(&x, &h);
        assert!(h_new.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_carry_gate_preserves_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut cell = Gru::<f64>::new(2, 3, &mut rng);
        cell.bz.fill(-40.0); // z ≈ 0 ⇒ h' ≈ h
        let x = Array2::from_shape_fn((2, 1), |_| rng.gen_range(-1.0..1.0));
        let h = Array2::from_shape_fn((3, 1), |_| rng.gen_range(-1.0..1.0));
        let (h_new, _) = cell.step(&x, &h);
        for (a, b) in h_new.iter().zip(h.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let input = rng.gen_range(1..4);
            let hidden = rng.gen_range(1..5);
            let batch = rng.gen_range(1..3);
            let mut cell = Gru::<f64>::new(input, hidden, &mut rng);
            let mut x = Array2::from_shape_fn((input, batch), |_| rng.gen_range(-1.0..1.0));
            let mut h = Array2::from_shape_fn((hidden, batch), |_| rng.gen_range(-1.0..1.0));
            let loss_w = Array2::from_shape_fn((hidden, batch), |_| rng.gen_range(-1.0..1.0));

            let (_, cache) = cell.step(&x, &h);
            let mut grads = cell.zero_grads();
            let (g_x, g_h) = cell.step_backward(&cache, &loss_w, &mut grads);

            // every parameter matrix, one random coordinate each
            for p_idx in 0..9 {
                let shape = (cell.params()[p_idx].nrows(), cell.params()[p_idx].ncols());
                let idx = (rng.gen_range(0..shape.0), rng.gen_range(0..shape.1));
                let analytic = Gru::grads_as_params(&grads)[p_idx][idx];
                let fd = central_difference(1e-5, |d| {
                    cell.params_mut()[p_idx][idx] += d;
                    let (out, _) = cell.step(&x, &h);
                    cell.params_mut()[p_idx][idx] -= d;
                    (out * &loss_w).sum()
                });
                assert!(
                    gradient_relative_error(analytic, fd) < 1e-4,
                    "param {p_idx} [{idx:?}]: analytic {analytic} vs fd {fd}"
                );
            }

            // input and hidden gradients
            let idx = (rng.gen_range(0..input), rng.gen_range(0..batch));
            let fd = central_difference(1e-5, |d| {
                x[idx] += d;
                let (out, _) = cell.step(&x, &h);
                x[idx] -= d;
                (out * &loss_w).sum()
            });
            assert!(gradient_relative_error(g_x[idx], fd) < 1e-4);

            let idx = (rng.gen_range(0..hidden), rng.gen_range(0..batch));
            let fd = central_difference(1e-5, |d| {
                h[idx] += d;
                let (out, _) = cell.step(&x, &h);
                h[idx] -= d;
                (out * &loss_w).sum()
            });
            assert!(gradient_relative_error(g_h[idx], fd) < 1e-4);
        }
    }

    #[test]
    fn bptt_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let seq_len = 8;
        let mut cell = Gru::<f64>::new(1, 4, &mut rng);
        let xs: Vec<Array2<f64>> = (0..seq_len)
            .map(|_| Array2::from_shape_fn((1, 2), |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let loss_w = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0));

        let (_, cache) = cell.forward_sequence(&xs);
        let mut grads = cell.zero_grads();
        cell.backward_sequence(&cache, &loss_w, &mut grads);

        for p_idx in 0..9 {
            let shape = (cell.params()[p_idx].nrows(), cell.params()[p_idx].ncols());
            let idx = (rng.gen_range(0..shape.0), rng.gen_range(0..shape.1));
            let analytic = Gru::grads_as_params(&grads)[p_idx][idx];
            let fd = central_difference(1e-5, |d| {
                cell.params_mut()[p_idx][idx] += d;
                let (h, _) = cell.forward_sequence(&xs);
                cell.params_mut()[p_idx][idx] -= d;
                (h * &loss_w).sum()
            });
            assert!(
                gradient_relative_error(analytic, fd) < 1e-4,
                "BPTT param {p_idx} [{idx:?}]: analytic {analytic} vs fd {fd}"
            );
        }
    }
}
