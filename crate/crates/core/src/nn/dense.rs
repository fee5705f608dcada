//! Dense layers and feed-forward stacks with exact reverse-mode gradients.

use ndarray::{Array2, Axis};
use rand::Rng;

use super::{init_matrix, Parametric};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    fn apply<F: Real>(self, z: F) -> F {
        match self {
            Activation::Identity => z,
            Activation::Relu => {
                if z > F::zero() {
                    z
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    fn derivative_from_output<F: Real>(self, a: F) -> F {
        match self {
            Activation::Identity => F::one(),
            Activation::Relu => {
                if a > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Sigmoid => a * (F::one() - a),
            Activation::Tanh => F::one() - a * a,
        }
    }
}

pub(crate) fn sigmoid<F: Real>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// One dense layer `a = f(W·x + b)`. The bias is stored as an `(out × 1)`
/// column and broadcast across the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F: Real> {
    pub w: Array2<F>,
    pub b: Array2<F>,
    pub act: Activation,
}

/// Values captured by a forward pass and consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache<F: Real> {
    input: Array2<F>,
    output: Array2<F>,
}

/// Parameter gradients of one dense layer.
#[derive(Debug, Clone)]
pub struct DenseGrads<F: Real> {
    pub dw: Array2<F>,
    pub db: Array2<F>,
}

impl<F: Real> Dense<F> {
    pub fn new<R: Rng>(input: usize, output: usize, act: Activation, rng: &mut R) -> Self {
        Self {
            w: init_matrix(output, input, input, rng),
            b: Array2::zeros((output, 1)),
            act,
        }
    }

    pub fn zeroed(input: usize, output: usize, act: Activation) -> Self {
        Self {
            w: Array2::zeros((output, input)),
            b: Array2::zeros((output, 1)),
            act,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Forward over a `(input × batch)` matrix.
    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, DenseCache<F>) {
        assert_eq!(
            x.nrows(),
            self.input_dim(),
            "dense layer fed {} rows, expected {}",
            x.nrows(),
            self.input_dim()
        );
        let mut z = self.w.dot(x);
        z += &self.b; // broadcast over batch columns
        let out = z.mapv(|v| self.act.apply(v));
        (
            out.clone(),
            DenseCache {
                input: x.clone(),
                output: out,
            },
        )
    }

    /// Backward pass: accumulates parameter gradients into `grads` and
    /// returns the gradient w.r.t. the layer input.
    pub fn backward(
        &self,
        cache: &DenseCache<F>,
        g_out: &Array2<F>,
        grads: &mut DenseGrads<F>,
    ) -> Array2<F> {
        let mut g_z = g_out.clone();
        ndarray::Zip::from(&mut g_z)
            .and(&cache.output)
            .for_each(|g, &a| *g = *g * self.act.derivative_from_output(a));
        grads.dw += &g_z.dot(&cache.input.t());
        grads.db += &g_z
            .sum_axis(Axis(1))
            .insert_axis(Axis(1));
        self.w.t().dot(&g_z)
    }

    pub fn zero_grads(&self) -> DenseGrads<F> {
        DenseGrads {
            dw: Array2::zeros(self.w.raw_dim()),
            db: Array2::zeros(self.b.raw_dim()),
        }
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F: Real> {
    pub layers: Vec<Dense<F>>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<F: Real> {
    caches: Vec<DenseCache<F>>,
}

pub type MlpGrads<F> = Vec<DenseGrads<F>>;

impl<F: Real> Mlp<F> {
    /// Build from `dims = [in, h1, ..., out]` with one activation per layer.
    pub fn new<R: Rng>(dims: &[usize], acts: &[Activation], rng: &mut R) -> Self {
        assert_eq!(dims.len(), acts.len() + 1, "one activation per layer");
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(d, &act)| Dense::new(d[0], d[1], act, rng))
            .collect();
        Self { layers }
    }

    pub fn new_zeroed(dims: &[usize], acts: &[Activation]) -> Self {
        assert_eq!(dims.len(), acts.len() + 1);
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(d, &act)| Dense::zeroed(d[0], d[1], act))
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, MlpCache<F>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(&cur);
            caches.push(cache);
            cur = out;
        }
        (cur, MlpCache { caches })
    }

    /// Forward without keeping caches, for inference.
    pub fn output(&self, x: &Array2<F>) -> Array2<F> {
        let mut cur = x.clone();
        for layer in &self.layers {
            let (out, _) = layer.forward(&cur);
            cur = out;
        }
        cur
    }

    pub fn backward(
        &self,
        cache: &MlpCache<F>,
        g_out: &Array2<F>,
        grads: &mut MlpGrads<F>,
    ) -> Array2<F> {
        let mut g = g_out.clone();
        for ((layer, layer_cache), layer_grads) in self
            .layers
            .iter()
            .zip(&cache.caches)
            .zip(grads.iter_mut())
            .rev()
        {
            g = layer.backward(layer_cache, &g, layer_grads);
        }
        g
    }

    pub fn zero_grads(&self) -> MlpGrads<F> {
        self.layers.iter().map(Dense::zero_grads).collect()
    }

    /// Flatten layer gradients into the same order as [`Parametric::params`].
    pub fn grads_as_params<'g>(grads: &'g MlpGrads<F>) -> Vec<&'g Array2<F>> {
        grads.iter().flat_map(|g| [&g.dw, &g.db]).collect()
    }

    pub fn grads_as_params_mut<'g>(grads: &'g mut MlpGrads<F>) -> Vec<&'g mut Array2<F>> {
        grads.iter_mut().flat_map(|g| [&mut g.dw, &mut g.db]).collect()
    }
}

impl<F: Real> Parametric<F> for Mlp<F> {
    fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("layer{i}/w"), format!("layer{i}/b")])
            .collect()
    }

    fn params(&self) -> Vec<&Array2<F>> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<F>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }
}
