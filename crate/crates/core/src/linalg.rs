//! Compressed sparse row matrices and a Jacobi-preconditioned conjugate
//! gradient solver.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Square sparse matrix in CSR layout.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Accumulates `(row, col, value)` contributions; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder { n, rows: vec![BTreeMap::new(); n] }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        *self.rows[row].entry(col).or_insert(0.0) += value;
    }

    pub fn build(self) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in self.rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n: self.n, row_ptr, cols, vals }
    }
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    /// Principal submatrix on the indices marked `Some(new_index)`.
    pub fn restrict(&self, map: &[Option<usize>]) -> CsrMatrix {
        let n = map.iter().flatten().count();
        let mut b = TripletBuilder::new(n);
        for (r, mr) in map.iter().enumerate() {
            let Some(ri) = mr else { continue };
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if let Some(ci) = map[self.cols[k]] {
                    b.add(*ri, ci, self.vals[k]);
                }
            }
        }
        b.build()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `‖b − Ax‖ / ‖b‖` at exit.
    pub relative_residual: f64,
}

/// Solves `Ax = b` for symmetric positive (semi)definite `A` by conjugate
/// gradients with diagonal preconditioning. For singular `A` the right-hand
/// side must lie in the range.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let n = a.dim();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgOutcome { solution: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotConverged { iterations: it, residual: dot(&r, &r).sqrt() / bnorm });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            // recompute the true residual to guard against drift
            let ax = a.mul(&x);
            let true_rel = ax.iter().zip(b).map(|(u, v)| (v - u).powi(2)).sum::<f64>().sqrt() / bnorm;
            if true_rel <= tol * 10.0 {
                return Ok(CgOutcome { solution: x, iterations: it, relative_residual: true_rel });
            }
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged { iterations: max_iter, residual: dot(&r, &r).sqrt() / bnorm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            t.add(i, i, 2.0 + shift);
            if i > 0 {
                t.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                t.add(i, i + 1, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn solves_spd_system() {
        let a = laplace_1d(200, 0.0);
        let x_true: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let b = a.mul(&x_true);
        let out = pcg(&a, &b, 1e-12, 2000).unwrap();
        let err: f64 = out.solution.iter().zip(&x_true).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuilder::new(2);
        t.add(0, 0, 1.0);
        t.add(0, 0, 2.0);
        t.add(1, 1, 4.0);
        let a = t.build();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.diagonal(), vec![3.0, 4.0]);
    }

    #[test]
    fn reports_non_convergence() {
        let a = laplace_1d(500, 0.0);
        let b = vec![1.0; 500];
        assert!(matches!(pcg(&a, &b, 1e-14, 3), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = laplace_1d(5, 1.0);
        let out = pcg(&a, &[0.0; 5], 1e-10, 10).unwrap();
        assert_eq!(out.solution, vec![0.0; 5]);
    }
}
