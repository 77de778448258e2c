//! Minimal sparse symmetric matrix (CSR) and an unconstrained conjugate
//! gradient solver.

use crate::error::{Error, Result};

/// Sparse symmetric matrix in compressed-row form. Both halves are stored,
/// so `matvec` is a plain row sweep.
#[derive(Debug, Clone)]
pub struct SparseSymmetric {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSymmetric {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    /// Triplets are accumulated in sorted order, so the result does not
    /// depend on input order beyond floating-point addition within
    /// duplicates of one coordinate; callers keep that order deterministic.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> SparseSymmetric {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut counts = vec![0usize; n];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for &(r, c, v) in &triplets {
            debug_assert!(r < n && c < n);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        SparseSymmetric {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored value at (row, col); zero if absent from the pattern.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.cols[range.clone()].binary_search(&col) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// ‖A x‖² without allocating per call site.
    pub fn apply_norm_sq(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * x[self.cols[k]];
            }
            acc += row * row;
        }
        acc
    }

    /// A·A as triplets, scaled by `scale`. Only valid for symmetric A
    /// (the result is then symmetric positive semidefinite).
    pub fn square_triplets(&self, scale: f64) -> Vec<(usize, usize, f64)> {
        let mut triplets = Vec::new();
        let mut acc: Vec<f64> = vec![0.0; self.n];
        let mut touched: Vec<usize> = Vec::new();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                let v = self.vals[k];
                for l in self.row_ptr[j]..self.row_ptr[j + 1] {
                    let c = self.cols[l];
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += v * self.vals[l];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                triplets.push((i, c, scale * acc[c]));
                acc[c] = 0.0;
            }
            touched.clear();
        }
        triplets
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                dense[i][j] += v;
            }
        }
        dense
    }
}

/// Output of [`conjugate_gradient`].
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True residual ‖A x − b‖ at exit.
    pub residual: f64,
    pub converged: bool,
}

/// Plain conjugate gradient for SPD systems. Stops when
/// ‖A x − b‖ ≤ tol · ‖b‖ or after `max_iter` iterations.
pub fn conjugate_gradient(
    a: &SparseSymmetric,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    let n = a.dim();
    if b.len() != n || x0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: matrix {n}, rhs {}, x0 {}",
            b.len(),
            x0.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("CG tolerance must be positive".into()));
    }

    let b_norm = norm(b);
    let mut x = x0.to_vec();
    let mut r = b.to_vec();
    let ax = a.apply(&x);
    for i in 0..n {
        r[i] -= ax[i];
    }
    let mut d = r.clone();
    let mut delta = dot(&r, &r);
    let threshold = tol * b_norm;
    let mut q = vec![0.0; n];
    let mut iterations = 0;

    while iterations < max_iter && delta.sqrt() > threshold {
        a.matvec(&d, &mut q);
        let dq = dot(&d, &q);
        if dq <= 0.0 || !dq.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "conjugate gradient: dᵀAd = {dq} at iteration {iterations}"
            )));
        }
        let alpha = delta / dq;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        let delta_new = dot(&r, &r);
        if !delta_new.is_finite() {
            return Err(Error::NumericalBreakdown(
                "conjugate gradient: non-finite residual".into(),
            ));
        }
        let beta = delta_new / delta;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
        delta = delta_new;
        iterations += 1;
    }

    let mut true_r = a.apply(&x);
    for i in 0..n {
        true_r[i] = b[i] - true_r[i];
    }
    let residual = norm(&true_r);
    Ok(CgSolution {
        x,
        iterations,
        residual,
        converged: residual <= threshold,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Gaussian elimination with partial pivoting. Test oracle only: the
/// independent route CG answers are checked against.
#[cfg(test)]
pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-14, "singular matrix in dense_solve");
        for row in col + 1..n {
            let f = a[row][col] / diag;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}
