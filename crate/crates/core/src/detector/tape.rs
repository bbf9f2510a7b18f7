//! Minimal reverse-mode differentiation over dense matrices.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub type Var = usize;

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a (n×m) + b (1×m)` on every row.
    AddRow(Var, Var),
    /// `a (n×m) ⊙ b (1×m)` on every row.
    MulRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    MeanRows(Var),
    /// `out[i] = a[i − k]`, zero outside the range.
    ShiftRows(Var, isize),
}

#[derive(Debug, Default)]
pub struct Tape {
    vals: Vec<Matrix>,
    ops: Vec<Op>,
}

fn shape_err(what: &str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape(format!("{what}: {}x{} with {}x{}", a.rows, a.cols, b.rows, b.cols))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, v: Matrix, op: Op) -> Var {
        self.vals.push(v);
        self.ops.push(op);
        self.vals.len() - 1
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.vals[v]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.vals[a].matmul(&self.vals[b])?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.vals[a], &self.vals[b]);
        if x.rows != y.rows || x.cols != y.cols {
            return Err(shape_err("add", x, y));
        }
        let mut out = x.clone();
        out.data.iter_mut().zip(&y.data).for_each(|(o, v)| *o += v);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.vals[a], &self.vals[b]);
        if y.rows != 1 || y.cols != x.cols {
            return Err(shape_err("add_row", x, y));
        }
        let mut out = x.clone();
        for r in 0..out.rows {
            out.row_mut(r).iter_mut().zip(&y.data).for_each(|(o, v)| *o += v);
        }
        Ok(self.push(out, Op::AddRow(a, b)))
    }

    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.vals[a], &self.vals[b]);
        if y.rows != 1 || y.cols != x.cols {
            return Err(shape_err("mul_row", x, y));
        }
        let mut out = x.clone();
        for r in 0..out.rows {
            out.row_mut(r).iter_mut().zip(&y.data).for_each(|(o, v)| *o *= v);
        }
        Ok(self.push(out, Op::MulRow(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.vals[a].clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut out = self.vals[a].clone();
        out.data.iter_mut().for_each(|v| *v = v.tanh());
        self.push(out, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.vals[a].clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Zero-mean, unit-variance rows (no affine part).
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let mut out = self.vals[a].clone();
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let n = row.len() as f64;
            let m = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = (var + LN_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        self.push(out, Op::LayerNormRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.vals[a].transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.vals[a], &self.vals[b]);
        if x.rows != y.rows {
            return Err(shape_err("concat_cols", x, y));
        }
        let mut out = Matrix::zeros(x.rows, x.cols + y.cols);
        for r in 0..x.rows {
            out.row_mut(r)[..x.cols].copy_from_slice(x.row(r));
            out.row_mut(r)[x.cols..].copy_from_slice(y.row(r));
        }
        Ok(self.push(out, Op::ConcatCols(a, b)))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = &self.vals[a];
        if start + len > x.cols {
            return Err(Error::Shape(format!("columns {start}..{} of {}", start + len, x.cols)));
        }
        let mut out = Matrix::zeros(x.rows, len);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(a, start, len)))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = &self.vals[a];
        let mut out = Matrix::zeros(1, x.cols);
        for r in 0..x.rows {
            out.data.iter_mut().zip(x.row(r)).for_each(|(o, v)| *o += v);
        }
        let n = x.rows.max(1) as f64;
        out.data.iter_mut().for_each(|o| *o /= n);
        self.push(out, Op::MeanRows(a))
    }

    pub fn shift_rows(&mut self, a: Var, k: isize) -> Var {
        let x = &self.vals[a];
        let mut out = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows as isize {
            let src = r - k;
            if src >= 0 && src < x.rows as isize {
                out.row_mut(r as usize).copy_from_slice(x.row(src as usize));
            }
        }
        self.push(out, Op::ShiftRows(a, k))
    }

    /// Gradients of `Σ seed ⊙ value(out)` with respect to every node.
    pub fn backward(&self, out: Var, seed: Matrix) -> Result<Vec<Option<Matrix>>> {
        let o = &self.vals[out];
        if seed.rows != o.rows || seed.cols != o.cols {
            return Err(shape_err("backward seed", &seed, o));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.vals.len()];
        grads[out] = Some(seed);
        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v] {
                Some(m) => m.data.iter_mut().zip(&g.data).for_each(|(a, b)| *a += b),
                slot => *slot = Some(g),
            }
        }
        for node in (0..=out).rev() {
            let Some(g) = grads[node].take() else {
                continue;
            };
            match self.ops[node] {
                Op::Leaf => {
                    grads[node] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.vals[b].transpose())?;
                    let gb = self.vals[a].transpose().matmul(&g)?;
                    acc(&mut grads, a, ga);
                    acc(&mut grads, b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g);
                }
                Op::AddRow(a, b) => {
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        gb.data.iter_mut().zip(g.row(r)).for_each(|(o, v)| *o += v);
                    }
                    acc(&mut grads, a, g);
                    acc(&mut grads, b, gb);
                }
                Op::MulRow(a, b) => {
                    let (x, y) = (&self.vals[a], &self.vals[b]);
                    let mut ga = g.clone();
                    let mut gb = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            *ga.at_mut(r, c) *= y.data[c];
                            gb.data[c] += g.at(r, c) * x.at(r, c);
                        }
                    }
                    acc(&mut grads, a, ga);
                    acc(&mut grads, b, gb);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.data.iter_mut().for_each(|v| *v *= s);
                    acc(&mut grads, a, ga);
                }
                Op::Tanh(a) => {
                    let y = &self.vals[node];
                    let mut ga = g;
                    ga.data.iter_mut().zip(&y.data).for_each(|(d, y)| *d *= 1.0 - y * y);
                    acc(&mut grads, a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.vals[node];
                    let mut ga = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        ga.row_mut(r)
                            .iter_mut()
                            .zip(yr.iter().zip(gr))
                            .for_each(|(o, (p, q))| *o = p * (q - dot));
                    }
                    acc(&mut grads, a, ga);
                }
                Op::LayerNormRows(a) => {
                    let (x, y) = (&self.vals[a], &self.vals[node]);
                    let mut ga = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let xr = x.row(r);
                        let n = xr.len() as f64;
                        let m = xr.iter().sum::<f64>() / n;
                        let var = xr.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                        let s = (var + LN_EPS).sqrt();
                        let (yr, gr) = (y.row(r), g.row(r));
                        let mg = gr.iter().sum::<f64>() / n;
                        let mgy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / n;
                        ga.row_mut(r)
                            .iter_mut()
                            .zip(gr.iter().zip(yr))
                            .for_each(|(o, (gv, yv))| *o = (gv - mg - yv * mgy) / s);
                    }
                    acc(&mut grads, a, ga);
                }
                Op::Transpose(a) => acc(&mut grads, a, g.transpose()),
                Op::ConcatCols(a, b) => {
                    let ca = self.vals[a].cols;
                    let cb = self.vals[b].cols;
                    let mut ga = Matrix::zeros(g.rows, ca);
                    let mut gb = Matrix::zeros(g.rows, cb);
                    for r in 0..g.rows {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    acc(&mut grads, a, ga);
                    acc(&mut grads, b, gb);
                }
                Op::SliceCols(a, start, len) => {
                    let x = &self.vals[a];
                    let mut ga = Matrix::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        ga.row_mut(r)[start..start + len].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, a, ga);
                }
                Op::MeanRows(a) => {
                    let x = &self.vals[a];
                    let n = x.rows.max(1) as f64;
                    let mut ga = Matrix::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        ga.row_mut(r).iter_mut().zip(&g.data).for_each(|(o, v)| *o = v / n);
                    }
                    acc(&mut grads, a, ga);
                }
                Op::ShiftRows(a, k) => {
                    let mut ga = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows as isize {
                        let src = r - k;
                        if src >= 0 && src < g.rows as isize {
                            ga.row_mut(src as usize).copy_from_slice(g.row(r as usize));
                        }
                    }
                    acc(&mut grads, a, ga);
                }
            }
        }
        Ok(grads)
    }
}
