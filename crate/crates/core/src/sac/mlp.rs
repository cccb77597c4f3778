//! Dense tanh networks over a flat parameter vector.
//!
//! Layer `l` occupies `W_l` (out x in, row-major) followed by `b_l` in the
//! flat vector. Hidden layers use tanh, the output layer is linear.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SacError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("non-empty cache")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Self, SacError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(SacError::ShapeMismatch(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, SacError> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut net.params[off..off + (w[0] + 1) * w[1]] {
                *p = rng.random_range(-bound..bound);
            }
            off += (w[0] + 1) * w[1];
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, SacError> {
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(SacError::ShapeMismatch(format!("expected {expected} parameters, got {}", params.len())));
        }
        let mut net = Self::zeros(sizes)?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, l: usize, off: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_in * n_out]).expect("layer shape");
        let b = ArrayView1::from(&self.params[off + n_in * n_out..off + (n_in + 1) * n_out]);
        (w, b)
    }

    fn check_input(&self, cols: usize) -> Result<(), SacError> {
        if cols != self.input_dim() {
            return Err(SacError::ShapeMismatch(format!("input has {cols} columns, net expects {}", self.input_dim())));
        }
        Ok(())
    }

    /// Forward pass over a batch (one row per sample), keeping activations.
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache, SacError> {
        self.check_input(x.ncols())?;
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_owned());
        let mut off = 0;
        for l in 0..n_layers {
            let (w, b) = self.layer(l, off);
            let mut z = acts[l].dot(&w.t()) + b;
            if l + 1 < n_layers {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
            off += (self.sizes[l] + 1) * self.sizes[l + 1];
        }
        Ok(ForwardCache { acts })
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, SacError> {
        let mut cache = self.forward_cached(x)?;
        Ok(cache.acts.pop().expect("output layer"))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, SacError> {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(row)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass. `grad_out` is dLoss/dOutput for each row of the cached
    /// batch; returns the parameter gradient (summed over rows) and
    /// dLoss/dInput.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>), SacError> {
        let out = cache.output();
        if grad_out.dim() != out.dim() {
            return Err(SacError::ShapeMismatch(format!(
                "grad_out {:?} does not match output {:?}",
                grad_out.dim(),
                out.dim()
            )));
        }
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += (self.sizes[l] + 1) * self.sizes[l + 1];
        }

        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.to_owned();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, _) = self.layer(l, offsets[l]);
            let a_prev = &cache.acts[l];
            let dw = delta.t().dot(a_prev);
            let db = delta.sum_axis(Axis(0));
            let o = offsets[l];
            grads[o..o + n_in * n_out].copy_from_slice(dw.as_standard_layout().as_slice().expect("contiguous"));
            grads[o + n_in * n_out..o + (n_in + 1) * n_out].copy_from_slice(db.as_slice().expect("contiguous"));
            let mut d_in = delta.dot(&w);
            if l > 0 {
                d_in.zip_mut_with(a_prev, |d, &a| *d *= 1.0 - a * a);
            }
            delta = d_in;
        }
        Ok((grads, delta))
    }

    /// `self <- (1 - tau) * self + tau * online`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<(), SacError> {
        if self.sizes != online.sizes {
            return Err(SacError::ShapeMismatch("target and online shapes differ".into()));
        }
        for (t, &o) in self.params.iter_mut().zip(&online.params) {
            *t = (1.0 - tau) * *t + tau * o;
        }
        Ok(())
    }
}
