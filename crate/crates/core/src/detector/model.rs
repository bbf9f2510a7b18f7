//! U-shaped attention classifier over a feature vector.
//!
//! The input vector is projected to a sequence of `encoder_widths[0]` tokens
//! with `model_dim` channels. Every stage resamples the sequence length with
//! a learned matrix and applies a pre-norm block: multi-head self-attention,
//! then a kernel-3 convolution along the sequence with a tanh, each with a
//! residual. Decoder stages concatenate the encoder output of equal length on
//! the channel axis and project back to `model_dim`. The head normalises,
//! mean-pools over tokens and maps to two logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::marl::checkpoint::{find, Tensor};
use crate::rng::SimRng;

use super::tape::{Tape, Var};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UNetTransformerSpec {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub model_dim: usize,
    pub heads: usize,
}

impl Default for UNetTransformerSpec {
    fn default() -> Self {
        Self::toy(90)
    }
}

impl UNetTransformerSpec {
    pub fn toy(input_dim: usize) -> Self {
        Self {
            input_dim,
            encoder_widths: vec![32, 16, 8],
            decoder_widths: vec![8, 16, 32],
            model_dim: 8,
            heads: 2,
        }
    }

    pub fn full(input_dim: usize) -> Self {
        Self {
            encoder_widths: vec![256, 128, 64],
            decoder_widths: vec![64, 128, 256],
            ..Self::toy(input_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return Err(Error::config("detector.model", "input and stage widths must be positive"));
        }
        let mirrored: Vec<usize> = self.encoder_widths.iter().rev().cloned().collect();
        if self.decoder_widths != mirrored {
            return Err(Error::config("detector.model.decoder_widths", "decoder must mirror the encoder"));
        }
        if self.heads == 0 || self.model_dim == 0 || self.model_dim % self.heads != 0 {
            return Err(Error::config("detector.model.heads", "model_dim must be a positive multiple of heads"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UNetTransformer {
    pub spec: UNetTransformerSpec,
    pub names: Vec<String>,
    pub params: Vec<Matrix>,
}

const BLOCK_PARTS: [&str; 12] = [
    "ln1.g", "ln1.b", "attn.wq", "attn.wk", "attn.wv", "attn.wo", "ln2.g", "ln2.b", "conv.wm", "conv.w0", "conv.wp", "conv.b",
];

fn block_shapes(c: usize) -> [(usize, usize); 12] {
    [
        (1, c),
        (1, c),
        (c, c),
        (c, c),
        (c, c),
        (c, c),
        (1, c),
        (1, c),
        (c, c),
        (c, c),
        (c, c),
        (1, c),
    ]
}

/// Per-sample activation lengths of every stage, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
}

impl UNetTransformer {
    fn layout(spec: &UNetTransformerSpec) -> Vec<(String, usize, usize)> {
        let c = spec.model_dim;
        let w = &spec.encoder_widths;
        let mut l = vec![
            ("in.w".to_string(), w[0], spec.input_dim),
            ("in.b".to_string(), w[0], 1),
            ("lift.w".to_string(), 1, c),
            ("lift.b".to_string(), 1, c),
        ];
        let push_block = |l: &mut Vec<(String, usize, usize)>, p: &str| {
            for (name, (r, k)) in BLOCK_PARTS.iter().zip(block_shapes(c)) {
                l.push((format!("{p}.{name}"), r, k));
            }
        };
        for (i, &wi) in w.iter().enumerate() {
            if i > 0 {
                l.push((format!("enc{i}.resample"), wi, w[i - 1]));
            }
            push_block(&mut l, &format!("enc{i}"));
        }
        let mut prev = *w.last().expect("validated");
        for (j, &wj) in spec.decoder_widths.iter().enumerate() {
            l.push((format!("dec{j}.resample"), wj, prev));
            l.push((format!("dec{j}.merge.w"), 2 * c, c));
            l.push((format!("dec{j}.merge.b"), 1, c));
            push_block(&mut l, &format!("dec{j}"));
            prev = wj;
        }
        l.push(("head.ln.g".into(), 1, c));
        l.push(("head.ln.b".into(), 1, c));
        l.push(("head.w".into(), c, 2));
        l.push(("head.b".into(), 1, 2));
        l
    }

    /// All-zero parameters.
    pub fn zeros(spec: UNetTransformerSpec) -> Result<Self> {
        spec.validate()?;
        let layout = Self::layout(&spec);
        Ok(Self {
            names: layout.iter().map(|(n, _, _)| n.clone()).collect(),
            params: layout.iter().map(|&(_, r, c)| Matrix::zeros(r, c)).collect(),
            spec,
        })
    }

    /// Uniform `±1/√fan_in` weights, unit norm gains, zero biases.
    pub fn init(spec: UNetTransformerSpec, rng: &mut SimRng) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        for (name, p) in m.names.iter().zip(m.params.iter_mut()) {
            if name.ends_with(".g") {
                p.data.iter_mut().for_each(|v| *v = 1.0);
            } else if !(name.ends_with(".b") || name == "in.b") {
                let fan_in = if name.ends_with("resample") || name == "in.w" { p.cols } else { p.rows };
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                p.data.iter_mut().for_each(|v| *v = (rng.random::<f64>() * 2.0 - 1.0) * bound);
            }
        }
        Ok(m)
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.params[i])
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data.iter().cloned()).collect()
    }

    pub fn set_flat(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", v.len(), self.n_params())));
        }
        let mut i = 0;
        for p in self.params.iter_mut() {
            let n = p.data.len();
            p.data.copy_from_slice(&v[i..i + n]);
            i += n;
        }
        Ok(())
    }

    fn block(&self, t: &mut Tape, p: &[Var], prefix: usize, h: Var) -> Result<Var> {
        let c = self.spec.model_dim;
        let dh = c / self.spec.heads;
        let g = |k: usize| p[prefix + k];
        let x = t.layer_norm_rows(h);
        let x = t.mul_row(x, g(0))?;
        let x = t.add_row(x, g(1))?;
        let q = t.matmul(x, g(2))?;
        let k = t.matmul(x, g(3))?;
        let v = t.matmul(x, g(4))?;
        let mut heads = None;
        for hd in 0..self.spec.heads {
            let qh = t.slice_cols(q, hd * dh, dh)?;
            let kh = t.slice_cols(k, hd * dh, dh)?;
            let vh = t.slice_cols(v, hd * dh, dh)?;
            let kt = t.transpose(kh);
            let s = t.matmul(qh, kt)?;
            let s = t.scale(s, 1.0 / (dh as f64).sqrt());
            let a = t.softmax_rows(s);
            let o = t.matmul(a, vh)?;
            heads = Some(match heads {
                None => o,
                Some(prev) => t.concat_cols(prev, o)?,
            });
        }
        let att = t.matmul(heads.expect("at least one head"), g(5))?;
        let h = t.add(h, att)?;

        let x = t.layer_norm_rows(h);
        let x = t.mul_row(x, g(6))?;
        let x = t.add_row(x, g(7))?;
        let prev = t.shift_rows(x, 1);
        let next = t.shift_rows(x, -1);
        let a = t.matmul(prev, g(8))?;
        let b = t.matmul(x, g(9))?;
        let cc = t.matmul(next, g(10))?;
        let y = t.add(a, b)?;
        let y = t.add(y, cc)?;
        let y = t.add_row(y, g(11))?;
        let y = t.tanh(y);
        t.add(h, y)
    }

    /// Build the graph for one input; returns the parameter leaves, the
    /// logits node (1×2) and the stage lengths.
    pub fn forward(&self, t: &mut Tape, x: &[f64]) -> Result<(Vec<Var>, Var, StageTrace)> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "{} features for a detector expecting {}",
                x.len(),
                self.spec.input_dim
            )));
        }
        let p: Vec<Var> = self.params.iter().map(|m| t.leaf(m.clone())).collect();
        let idx = |name: &str| -> usize { self.names.iter().position(|n| n == name).expect("layout name") };
        let xv = t.leaf(Matrix::from_vec(x.len(), 1, x.to_vec())?);
        let s = t.matmul(p[idx("in.w")], xv)?;
        let s = t.add(s, p[idx("in.b")])?;
        let h0 = t.matmul(s, p[idx("lift.w")])?;
        let mut h = t.add_row(h0, p[idx("lift.b")])?;

        let mut trace = StageTrace {
            encoder: Vec::new(),
            decoder: Vec::new(),
        };
        let mut skips = Vec::new();
        for i in 0..self.spec.encoder_widths.len() {
            if i > 0 {
                h = t.matmul(p[idx(&format!("enc{i}.resample"))], h)?;
            }
            h = self.block(t, &p, idx(&format!("enc{i}.ln1.g")), h)?;
            trace.encoder.push(t.value(h).rows);
            skips.push(h);
        }
        for j in 0..self.spec.decoder_widths.len() {
            h = t.matmul(p[idx(&format!("dec{j}.resample"))], h)?;
            let skip = skips[skips.len() - 1 - j];
            let cat = t.concat_cols(h, skip)?;
            let m = t.matmul(cat, p[idx(&format!("dec{j}.merge.w"))])?;
            h = t.add_row(m, p[idx(&format!("dec{j}.merge.b"))])?;
            h = self.block(t, &p, idx(&format!("dec{j}.ln1.g")), h)?;
            trace.decoder.push(t.value(h).rows);
        }
        let z = t.layer_norm_rows(h);
        let z = t.mul_row(z, p[idx("head.ln.g")])?;
        let z = t.add_row(z, p[idx("head.ln.b")])?;
        let pooled = t.mean_rows(z);
        let o = t.matmul(pooled, p[idx("head.w")])?;
        let logits = t.add_row(o, p[idx("head.b")])?;
        Ok((p, logits, trace))
    }

    /// Inference-mode logits `[l1, l2]`.
    pub fn logits(&self, x: &[f64]) -> Result<[f64; 2]> {
        let mut t = Tape::new();
        let (_, l, _) = self.forward(&mut t, x)?;
        let v = &t.value(l).data;
        Ok([v[0], v[1]])
    }

    /// Logits and the flat parameter gradient of `seed(logits) · logits`.
    pub fn backprop(&self, x: &[f64], seed: impl FnOnce([f64; 2]) -> [f64; 2]) -> Result<([f64; 2], Vec<f64>)> {
        let mut t = Tape::new();
        let (p, l, _) = self.forward(&mut t, x)?;
        let v = [t.value(l).data[0], t.value(l).data[1]];
        let grads = t.backward(l, Matrix::from_vec(1, 2, seed(v).to_vec())?)?;
        let mut flat = Vec::with_capacity(self.n_params());
        for (var, m) in p.iter().zip(&self.params) {
            match &grads[*var] {
                Some(g) => flat.extend_from_slice(&g.data),
                None => flat.extend(std::iter::repeat_n(0.0, m.data.len())),
            }
        }
        Ok((v, flat))
    }

    pub fn trace(&self) -> Result<StageTrace> {
        let mut t = Tape::new();
        Ok(self.forward(&mut t, &vec![0.0; self.spec.input_dim])?.2)
    }

    pub fn to_tensors(&self) -> Result<Vec<Tensor>> {
        let s = &self.spec;
        let mut ts = vec![
            Tensor::vector("model.input_dim", vec![s.input_dim as f64]),
            Tensor::vector(
                "model.encoder_widths",
                s.encoder_widths.iter().map(|&w| w as f64).collect(),
            ),
            Tensor::vector("model.model_dim", vec![s.model_dim as f64]),
            Tensor::vector("model.heads", vec![s.heads as f64]),
        ];
        for (n, p) in self.names.iter().zip(&self.params) {
            ts.push(Tensor::new(
                format!("model.{n}"),
                vec![p.rows as u64, p.cols as u64],
                p.data.clone(),
            )?);
        }
        Ok(ts)
    }

    pub fn from_tensors(ts: &[Tensor]) -> Result<Self> {
        let scalar = |name: &str| -> Result<usize> { Ok(find(ts, name)?.data[0] as usize) };
        let enc: Vec<usize> = find(ts, "model.encoder_widths")?.data.iter().map(|&w| w as usize).collect();
        let spec = UNetTransformerSpec {
            input_dim: scalar("model.input_dim")?,
            decoder_widths: enc.iter().rev().cloned().collect(),
            encoder_widths: enc,
            model_dim: scalar("model.model_dim")?,
            heads: scalar("model.heads")?,
        };
        let mut m = Self::zeros(spec)?;
        for (n, p) in m.names.iter().zip(m.params.iter_mut()) {
            let t = find(ts, &format!("model.{n}"))?;
            if t.data.len() != p.data.len() {
                return Err(Error::Format(format!("tensor model.{n} has the wrong size")));
            }
            p.data.copy_from_slice(&t.data);
        }
        Ok(m)
    }
}
