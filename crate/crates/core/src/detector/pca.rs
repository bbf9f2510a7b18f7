//! Principal components via cyclic Jacobi on the covariance matrix.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Eigen-decomposition of a symmetric matrix. Returns eigenvalues in
/// descending order and the matching eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::Shape(format!("{}x{} is not square", a.rows, a.cols)));
    }
    if !a.is_finite() {
        return Err(Error::Domain("non-finite matrix".into()));
    }
    let mut m = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        *v.at_mut(i, i) = 1.0;
    }
    let scale: f64 = m.data.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.at(i, j).powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.at(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m.at(q, q) - m.at(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.at(k, p), m.at(k, q));
                    *m.at_mut(k, p) = c * mkp - s * mkq;
                    *m.at_mut(k, q) = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.at(p, k), m.at(q, k));
                    *m.at_mut(p, k) = c * mpk - s * mqk;
                    *m.at_mut(q, k) = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.at(k, p), v.at(k, q));
                    *v.at_mut(k, p) = c * vkp - s * vkq;
                    *v.at_mut(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.at(j, j).total_cmp(&m.at(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.at(i, i)).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..n {
            *vecs.at_mut(k, new) = v.at(k, old);
        }
    }
    Ok((values, vecs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `components × dim`, rows orthonormal.
    pub basis: Matrix,
    pub explained_variance: Vec<f64>,
}

impl Pca {
    /// Fit the top `components` directions of the rows of `data`. Components
    /// beyond the data rank are zero rows with zero variance.
    pub fn fit(data: &Matrix, components: usize) -> Result<Self> {
        let (n, d) = (data.rows, data.cols);
        if components == 0 || components > d {
            return Err(Error::Shape(format!("{components} components for dimension {d}")));
        }
        if n < components {
            return Err(Error::Shape(format!("{n} rows cannot fit {components} components")));
        }
        let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| data.at(i, j)).sum::<f64>() / n as f64).collect();
        let mut cov = Matrix::zeros(d, d);
        for i in 0..n {
            let r = data.row(i);
            for a in 0..d {
                let xa = r[a] - mean[a];
                for b in a..d {
                    *cov.at_mut(a, b) += xa * (r[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov.at(a, b) / n as f64;
                *cov.at_mut(a, b) = v;
                *cov.at_mut(b, a) = v;
            }
        }
        let (vals, vecs) = symmetric_eigen(&cov)?;
        let tol = 1e-12 * vals.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
        let mut basis = Matrix::zeros(components, d);
        let mut explained = Vec::with_capacity(components);
        for c in 0..components {
            if vals[c] > tol {
                // Sign convention: largest-magnitude entry positive.
                let col: Vec<f64> = (0..d).map(|k| vecs.at(k, c)).collect();
                let pivot = col.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
                let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
                basis.row_mut(c).iter_mut().zip(&col).for_each(|(o, x)| *o = sign * x);
                explained.push(vals[c]);
            } else {
                explained.push(0.0);
            }
        }
        Ok(Self {
            mean,
            basis,
            explained_variance: explained,
        })
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!("{} values for a {}-dim PCA", x.len(), self.mean.len())));
        }
        Ok((0..self.basis.rows)
            .map(|c| {
                self.basis
                    .row(c)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(b, (v, m))| b * (v - m))
                    .sum()
            })
            .collect())
    }

    /// Map component scores back to the input space.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, &zc) in z.iter().enumerate() {
            for (o, b) in out.iter_mut().zip(self.basis.row(c)) {
                *o += zc * b;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    #[test]
    fn axis_aligned_data() {
        // Covariance diag(4, 1).
        let data = Matrix::from_rows(&[vec![2.0, 1.0], vec![-2.0, -1.0], vec![2.0, -1.0], vec![-2.0, 1.0]]).unwrap();
        let p = Pca::fit(&data, 2).unwrap();
        assert!((p.explained_variance[0] - 4.0).abs() < 1e-12);
        assert!((p.explained_variance[1] - 1.0).abs() < 1e-12);
        assert!((p.basis.at(0, 0).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_reconstruction_is_exact() {
        let mut rng = stream(5, Stream::Dataset);
        let data = Matrix::from_vec(10, 4, (0..40).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).unwrap();
        let p = Pca::fit(&data, 4).unwrap();
        for i in 0..10 {
            let back = p.reconstruct(&p.project(data.row(i)).unwrap());
            for (a, b) in back.iter().zip(data.row(i)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for w in p.explained_variance.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn rank_deficient_pads_with_zeros() {
        let data = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![3.0, 3.0, 0.0]]).unwrap();
        let p = Pca::fit(&data, 3).unwrap();
        assert!(p.explained_variance[0] > 0.0);
        assert_eq!(&p.explained_variance[1..], &[0.0, 0.0]);
        assert!(p.basis.row(2).iter().all(|&v| v == 0.0));
    }
}
