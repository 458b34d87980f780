//! Small dense least-squares kernels.
//!
//! Designs here are tall and thin (n in the hundreds, a few dozen columns), so
//! a column-ordered Gram-Schmidt with one reorthogonalization pass is accurate
//! enough and makes rank decisions in a predictable order: a column is dropped
//! only when it is dependent on the columns to its left.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative residual norm below which a column counts as dependent.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Qr {
    n: usize,
    /// Orthonormal columns, one per kept input column.
    q: Vec<Vec<f64>>,
    /// Upper-triangular factor, row-major, rank × rank.
    r: Vec<Vec<f64>>,
    kept: Vec<usize>,
    dropped: Vec<usize>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Qr {
    pub fn new(x: ArrayView2<f64>, rel_tol: f64) -> Qr {
        let (n, p) = x.dim();
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut rcols: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut kept = Vec::new();
        let mut dropped = Vec::new();

        for j in 0..p {
            let mut v: Vec<f64> = x.column(j).to_vec();
            let norm0 = dot(&v, &v).sqrt();
            let mut coef = vec![0.0; q.len()];
            for _pass in 0..2 {
                for (l, ql) in q.iter().enumerate() {
                    let c = dot(ql, &v);
                    coef[l] += c;
                    for (vi, qi) in v.iter_mut().zip(ql) {
                        *vi -= c * qi;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm0 == 0.0 || norm <= rel_tol * norm0 {
                dropped.push(j);
                continue;
            }
            v.iter_mut().for_each(|vi| *vi /= norm);
            coef.push(norm);
            q.push(v);
            rcols.push(coef);
            kept.push(j);
        }

        let rank = q.len();
        let mut r = vec![vec![0.0; rank]; rank];
        for (col, c) in rcols.iter().enumerate() {
            for (row, &val) in c.iter().enumerate() {
                r[row][col] = val;
            }
        }
        Qr { n, q, r, kept, dropped }
    }

    pub fn rank(&self) -> usize {
        self.kept.len()
    }

    /// Input column indices that entered the factorization, in order.
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }

    /// Least-squares coefficients for the kept columns.
    pub fn solve(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let y = y.to_vec();
        let qty: Vec<f64> = self.q.iter().map(|qc| dot(qc, &y)).collect();
        Array1::from(self.back_substitute(qty))
    }

    fn back_substitute(&self, mut b: Vec<f64>) -> Vec<f64> {
        let k = b.len();
        for i in (0..k).rev() {
            let mut s = b[i];
            for j in i + 1..k {
                s -= self.r[i][j] * b[j];
            }
            b[i] = s / self.r[i][i];
        }
        b
    }

    /// Column `pos` of `X (X'X)^{-1}` over the kept columns.
    ///
    /// This equals `v / (v'v)` where `v` is the residual of kept column `pos`
    /// on the other kept columns.
    pub fn inverse_gram_column(&self, pos: usize) -> Array1<f64> {
        let k = self.rank();
        // Solve R' z = e_pos by forward substitution.
        let mut z = vec![0.0; k];
        for i in 0..k {
            let mut s = if i == pos { 1.0 } else { 0.0 };
            for l in 0..i {
                s -= self.r[l][i] * z[l];
            }
            z[i] = s / self.r[i][i];
        }
        let mut out = Array1::zeros(self.n);
        for (zl, ql) in z.iter().zip(&self.q) {
            if *zl != 0.0 {
                for (o, qi) in out.iter_mut().zip(ql) {
                    *o += zl * qi;
                }
            }
        }
        out
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidInput("cholesky needs a square matrix".into()));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}
