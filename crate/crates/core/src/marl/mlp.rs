//! Fully connected tanh networks with hand-written reverse mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{affine, Matrix};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// `[input, hidden..., output]`.
    pub layer_widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>) -> Result<Self> {
        if layer_widths.len() < 2 || layer_widths.contains(&0) {
            return Err(Error::config("mlp.layer_widths", "need at least two positive widths"));
        }
        Ok(Self { layer_widths })
    }

    pub fn input(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output(&self) -> usize {
        *self.layer_widths.last().expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    /// Layer `l` maps width `l` to width `l+1`; weights are `out × in`.
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(m: &Mlp) -> Self {
        Self {
            weights: m.weights.iter().map(|w| Matrix::zeros(w.rows, w.cols)).collect(),
            biases: m.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend_from_slice(&w.data);
            v.extend_from_slice(b);
        }
        v
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to every layer, plus the final output.
    pub activations: Vec<Matrix>,
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialisation; the last layer is scaled by `out_scale`.
    pub fn new(spec: MlpSpec, out_scale: f64, rng: &mut SimRng) -> Self {
        let n = spec.layer_widths.len() - 1;
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for l in 0..n {
            let (fan_in, fan_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt() * if l + 1 == n { out_scale } else { 1.0 };
            let data = (0..fan_in * fan_out).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound).collect();
            weights.push(Matrix {
                rows: fan_out,
                cols: fan_in,
                data,
            });
            biases.push(vec![0.0; fan_out]);
        }
        Self { spec, weights, biases }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.layer_widths.len() - 1;
        let weights = (0..n)
            .map(|l| Matrix::zeros(spec.layer_widths[l + 1], spec.layer_widths[l]))
            .collect();
        let biases = (0..n).map(|l| vec![0.0; spec.layer_widths[l + 1]]).collect();
        Self { spec, weights, biases }
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend_from_slice(&w.data);
            v.extend_from_slice(b);
        }
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.n_params())));
        }
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.data.len();
            w.data.copy_from_slice(&flat[i..i + n]);
            i += n;
            let m = b.len();
            b.copy_from_slice(&flat[i..i + m]);
            i += m;
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols != self.spec.input() {
            return Err(Error::Shape(format!("input width {} for an MLP expecting {}", x.cols, self.spec.input())));
        }
        if !x.is_finite() {
            return Err(Error::Domain("non-finite MLP input".into()));
        }
        let n = self.weights.len();
        let mut acts = Vec::with_capacity(n + 1);
        acts.push(x.clone());
        for l in 0..n {
            let mut z = affine(&acts[l], &self.weights[l], &self.biases[l])?;
            if l + 1 < n {
                z.data.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        let out = acts.last().expect("non-empty").clone();
        Ok((out, MlpCache { activations: acts }))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward(&m)?.0.data)
    }

    /// Gradients of `Σ upstream ⊙ output` with respect to parameters and input.
    pub fn backward(&self, cache: &MlpCache, upstream: &Matrix) -> Result<(MlpGrads, Matrix)> {
        let n = self.weights.len();
        let out = &cache.activations[n];
        if upstream.rows != out.rows || upstream.cols != out.cols {
            return Err(Error::Shape("upstream gradient does not match output".into()));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut delta = upstream.clone();
        for l in (0..n).rev() {
            let a = &cache.activations[l];
            let w = &self.weights[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for i in 0..delta.rows {
                let d = delta.row(i);
                let ai = a.row(i);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    gb[o] += dv;
                    let row = gw.row_mut(o);
                    for (g, x) in row.iter_mut().zip(ai) {
                        *g += dv * x;
                    }
                }
            }
            let mut prev = Matrix::zeros(delta.rows, w.cols);
            for i in 0..delta.rows {
                let d = delta.row(i);
                let p = prev.row_mut(i);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    for (pv, wv) in p.iter_mut().zip(w.row(o)) {
                        *pv += dv * wv;
                    }
                }
            }
            if l > 0 {
                // Input of layer l is tanh of the previous pre-activation.
                prev.data.iter_mut().zip(&a.data).for_each(|(g, y)| *g *= 1.0 - y * y);
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// Convenience wrapper returning outputs and parameter gradients.
    pub fn forward_backward(&self, x: &Matrix, upstream: &Matrix) -> Result<(Matrix, MlpGrads)> {
        let (out, cache) = self.forward(x)?;
        let (g, _) = self.backward(&cache, upstream)?;
        Ok((out, g))
    }
}
