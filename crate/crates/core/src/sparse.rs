//! Compressed sparse row matrices and iterative solvers.

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("triplet ({row}, {col}) outside a {nrows}x{ncols} matrix")]
    IndexOutOfRange { row: usize, col: usize, nrows: usize, ncols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is singular to working precision (pivot {pivot:e} in column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("{method} did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { method: &'static str, iterations: usize, residual: f64 },
    #[error("{method} broke down at iteration {iteration}")]
    Breakdown { method: &'static str, iteration: usize },
    #[error("dense factorization limited to {limit} unknowns, got {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("non-finite value in the linear system")]
    NonFinite,
}

/// Largest system handed to the dense LU fallback.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SolverError> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(SolverError::IndexOutOfRange { row: i, col: j, nrows, ncols });
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..nrows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_unstable_by_key(|&(j, _)| j);
            for &(j, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && self.asymmetry() <= tol
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, SolverError> {
        if x.len() != self.ncols {
            return Err(SolverError::DimensionMismatch { expected: self.ncols, got: x.len() });
        }
        let mut y = vec![0.0; self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    #[inline]
    fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// `‖b - A x‖ / ‖b‖` (or `‖A x‖` when `b = 0`).
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.nrows];
        self.spmv_into(x, &mut ax);
        let r = ax.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        let nb = norm(b);
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }

    /// Coordinate text format, one `i j value` line per stored entry, 0-based.
    pub fn to_coordinate_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "% {} {} {}", self.nrows, self.ncols, self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let _ = writeln!(s, "{i} {j} {v:?}");
            }
        }
        s
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Which algorithm solves the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Conjugate gradients for symmetric matrices, otherwise BiCGStab with
    /// GMRES and dense LU as fallbacks.
    #[default]
    Auto,
    Cg,
    BiCgStab,
    Gmres,
    DenseLu,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    pub method: SolveMethod,
    /// Target relative residual.
    pub tol: f64,
    pub max_iters: usize,
    pub gmres_restart: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            method: SolveMethod::Auto,
            tol: 1e-10,
            max_iters: 20_000,
            gmres_restart: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolveReport {
    pub method: &'static str,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖` recomputed from the returned solution.
    pub relative_residual: f64,
    pub wall_seconds: f64,
}

fn check_system(a: &CsrMatrix, b: &[f64]) -> Result<(), SolverError> {
    if a.nrows != a.ncols {
        return Err(SolverError::DimensionMismatch { expected: a.nrows, got: a.ncols });
    }
    if b.len() != a.nrows {
        return Err(SolverError::DimensionMismatch { expected: a.nrows, got: b.len() });
    }
    if a.values.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite);
    }
    Ok(())
}

fn jacobi(a: &CsrMatrix) -> Vec<f64> {
    a.diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

fn finish(
    a: &CsrMatrix,
    b: &[f64],
    x: Vec<f64>,
    method: &'static str,
    iterations: usize,
    start: Instant,
) -> (Vec<f64>, LinearSolveReport) {
    let relative_residual = a.relative_residual(&x, b);
    (
        x,
        LinearSolveReport {
            method,
            iterations,
            relative_residual,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    )
}

/// Jacobi-preconditioned conjugate gradients.
pub fn solve_cg(a: &CsrMatrix, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, LinearSolveReport), SolverError> {
    solve_cg_observed(a, b, opts, |_, _| {})
}

/// Conjugate gradients calling `observe(iteration, x)` after every update.
pub fn solve_cg_observed(
    a: &CsrMatrix,
    b: &[f64],
    opts: &SolveOptions,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, LinearSolveReport), SolverError> {
    check_system(a, b)?;
    let asym = a.asymmetry();
    if asym > 1e-10 {
        return Err(SolverError::NotSymmetric(asym));
    }
    let start = Instant::now();
    let n = a.nrows;
    let minv = jacobi(a);
    let nb = norm(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(finish(a, b, x, "cg", 0, start));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iters {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(SolverError::Breakdown { method: "cg", iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        observe(it, &x);
        if norm(&r) <= opts.tol * nb {
            // guard against drift of the recursive residual
            if a.relative_residual(&x, b) <= opts.tol {
                return Ok(finish(a, b, x, "cg", it, start));
            }
            let ax = a.spmv(&x)?;
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolverError::NoConvergence {
        method: "cg",
        iterations: opts.max_iters,
        residual: a.relative_residual(&x, b),
    })
}

/// Right Jacobi-preconditioned BiCGStab.
pub fn solve_bicgstab(a: &CsrMatrix, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, LinearSolveReport), SolverError> {
    check_system(a, b)?;
    let start = Instant::now();
    let n = a.nrows;
    let minv = jacobi(a);
    let nb = norm(b);
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(finish(a, b, x, "bicgstab", 0, start));
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            return Err(SolverError::Breakdown { method: "bicgstab", iteration: it });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = minv[i] * p[i];
        }
        a.spmv_into(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return Err(SolverError::Breakdown { method: "bicgstab", iteration: it });
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= opts.tol * nb {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            if a.relative_residual(&x, b) <= opts.tol {
                return Ok(finish(a, b, x, "bicgstab", it, start));
            }
            r = sub_ax(a, b, &x);
            continue;
        }
        for i in 0..n {
            z[i] = minv[i] * s[i];
        }
        a.spmv_into(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(SolverError::Breakdown { method: "bicgstab", iteration: it });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if !omega.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Breakdown { method: "bicgstab", iteration: it });
        }
        if norm(&r) <= opts.tol * nb {
            if a.relative_residual(&x, b) <= opts.tol {
                return Ok(finish(a, b, x, "bicgstab", it, start));
            }
            r = sub_ax(a, b, &x);
        }
    }
    Err(SolverError::NoConvergence {
        method: "bicgstab",
        iterations: opts.max_iters,
        residual: a.relative_residual(&x, b),
    })
}

fn sub_ax(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut ax = vec![0.0; a.nrows];
    a.spmv_into(x, &mut ax);
    b.iter().zip(&ax).map(|(b, a)| b - a).collect()
}

/// Restarted GMRES with right Jacobi preconditioning, starting from `x0`.
pub fn solve_gmres(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<(Vec<f64>, LinearSolveReport), SolverError> {
    check_system(a, b)?;
    let start = Instant::now();
    let n = a.nrows;
    let m = opts.gmres_restart.max(1).min(n.max(1));
    let minv = jacobi(a);
    let nb = norm(b);
    let mut x = match x0 {
        Some(x0) if x0.len() == n => x0.to_vec(),
        _ => vec![0.0; n],
    };
    if nb == 0.0 {
        return Ok(finish(a, b, vec![0.0; n], "gmres", 0, start));
    }
    let mut total = 0;
    let mut w = vec![0.0; n];
    let mut zt = vec![0.0; n];
    while total < opts.max_iters {
        let r = sub_ax(a, b, &x);
        let beta = norm(&r);
        if beta <= opts.tol * nb {
            return Ok(finish(a, b, x, "gmres", total, start));
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            for i in 0..n {
                zt[i] = minv[i] * basis[k][i];
            }
            a.spmv_into(&zt, &mut w);
            // modified Gram-Schmidt
            for (j, vj) in basis.iter().enumerate() {
                let hjk = dot(&w, vj);
                h[j][k] = hjk;
                for i in 0..n {
                    w[i] -= hjk * vj[i];
                }
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let tmp = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = tmp;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                return Err(SolverError::Breakdown { method: "gmres", iteration: total });
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= 0.5 * opts.tol * nb || hn == 0.0 || total >= opts.max_iters {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution for the correction coefficients
        let mut yk = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * yk[j];
            }
            yk[i] = s / h[i][i];
        }
        for (j, c) in yk.iter().enumerate() {
            for i in 0..n {
                x[i] += c * minv[i] * basis[j][i];
            }
        }
        if a.relative_residual(&x, b) <= opts.tol {
            return Ok(finish(a, b, x, "gmres", total, start));
        }
    }
    Err(SolverError::NoConvergence {
        method: "gmres",
        iterations: total,
        residual: a.relative_residual(&x, b),
    })
}

/// Dense LU with partial pivoting, for systems of at most [`DENSE_LIMIT`] unknowns.
pub fn solve_dense_lu(a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, LinearSolveReport), SolverError> {
    check_system(a, b)?;
    let n = a.nrows;
    if n > DENSE_LIMIT {
        return Err(SolverError::TooLarge { n, limit: DENSE_LIMIT });
    }
    let start = Instant::now();
    let mut m = a.to_dense();
    let mut x = b.to_vec();
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    let eps = 1e-14 * scale.max(f64::MIN_POSITIVE);
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))
            .unwrap();
        if m[p][c].abs() <= eps {
            return Err(SolverError::SingularMatrix { column: c, pivot: m[p][c] });
        }
        m.swap(c, p);
        x.swap(c, p);
        for i in c + 1..n {
            let f = m[i][c] / m[c][c];
            if f == 0.0 {
                continue;
            }
            let (top, bottom) = m.split_at_mut(i);
            let pivot_row = &top[c];
            for (dst, src) in bottom[0][c..].iter_mut().zip(&pivot_row[c..]) {
                *dst -= f * src;
            }
            x[i] -= f * x[c];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= m[i][j] * x[j];
        }
        x[i] = s / m[i][i];
    }
    Ok(finish(a, b, x, "dense-lu", 0, start))
}

/// Solves `A x = b` with the requested method. `Auto` uses CG for symmetric
/// matrices and BiCGStab otherwise; when an iterative method fails it falls
/// back to restarted GMRES and, for small systems, to dense LU.
pub fn solve(a: &CsrMatrix, b: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, LinearSolveReport), SolverError> {
    match opts.method {
        SolveMethod::Cg => solve_cg(a, b, opts),
        SolveMethod::BiCgStab => solve_bicgstab(a, b, opts),
        SolveMethod::Gmres => solve_gmres(a, b, None, opts),
        SolveMethod::DenseLu => solve_dense_lu(a, b),
        SolveMethod::Auto => {
            check_system(a, b)?;
            let first = if a.asymmetry() <= 1e-12 {
                solve_cg(a, b, opts)
            } else {
                solve_bicgstab(a, b, opts)
            };
            let err = match first {
                Ok(out) => return Ok(out),
                Err(e) => e,
            };
            match solve_gmres(a, b, None, opts) {
                Ok(out) => Ok(out),
                Err(_) if a.nrows <= DENSE_LIMIT => solve_dense_lu(a, b),
                Err(_) => Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tridiag(n: usize, lo: f64, d: f64, hi: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i > 0 {
                t.push((i, i - 1, lo));
            }
            if i + 1 < n {
                t.push((i, i + 1, hi));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    /// Gaussian elimination without any sparse machinery.
    fn dense_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, p);
            b.swap(c, p);
            for i in c + 1..n {
                let f = m[i][c] / m[c][c];
                for j in c..n {
                    m[i][j] -= f * m[c][j];
                }
                b[i] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (b[i] - (i + 1..n).map(|j| m[i][j] * x[j]).sum::<f64>()) / m[i][i];
        }
        x
    }

    #[test]
    fn triplets_are_sorted_and_summed() {
        let a = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 4.0)]).unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(1, 2), 5.0);
        assert_eq!(a.row(1).0, &[0, 2]);
        assert_eq!(a.to_dense(), vec![vec![0.0, 2.0, 0.0], vec![3.0, 0.0, 5.0]]);
        assert!(matches!(
            CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]),
            Err(SolverError::IndexOutOfRange { .. })
        ));
        assert!(matches!(a.spmv(&[1.0]), Err(SolverError::DimensionMismatch { .. })));
        assert_eq!(CsrMatrix::identity(3).spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn diagonal_system() {
        let t: Vec<_> = (0..5).map(|i| (i, i, (i + 1) as f64)).collect();
        let a = CsrMatrix::from_triplets(5, 5, &t).unwrap();
        for method in [SolveMethod::Cg, SolveMethod::BiCgStab, SolveMethod::Gmres, SolveMethod::DenseLu] {
            let opts = SolveOptions { method, ..Default::default() };
            let (x, rep) = solve(&a, &[1.0; 5], &opts).unwrap();
            for i in 0..5 {
                assert!((x[i] - 1.0 / (i + 1) as f64).abs() < 1e-12, "{method:?}");
            }
            assert!(rep.relative_residual <= 1e-10);
        }
    }

    #[test]
    fn nonsymmetric_random_systems_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [10, 40, 120] {
            let mut t = Vec::new();
            for i in 0..n {
                t.push((i, i, 8.0 + rng.gen::<f64>()));
                for _ in 0..4 {
                    t.push((i, rng.gen_range(0..n), rng.gen_range(-1.0..1.0)));
                }
            }
            let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want = dense_solve(a.to_dense(), b.clone());
            for method in [SolveMethod::Auto, SolveMethod::BiCgStab, SolveMethod::Gmres, SolveMethod::DenseLu] {
                let (x, rep) = solve(&a, &b, &SolveOptions { method, ..Default::default() }).unwrap();
                let err = x.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-8, "{method:?} n={n}: {err}");
                assert!((rep.relative_residual - a.relative_residual(&x, &b)).abs() < 1e-18);
            }
            assert!(matches!(
                solve_cg(&a, &b, &SolveOptions::default()),
                Err(SolverError::NotSymmetric(_))
            ));
        }
    }

    #[test]
    fn gmres_with_small_restart() {
        let a = tridiag(200, -1.3, 2.5, -0.7);
        let b = vec![1.0; 200];
        let opts = SolveOptions { gmres_restart: 5, max_iters: 100_000, ..Default::default() };
        let (x, rep) = solve_gmres(&a, &b, None, &opts).unwrap();
        assert!(a.relative_residual(&x, &b) <= 1e-10);
        assert!(rep.iterations > 5);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::zeros(4, 4);
        assert!(matches!(
            solve_dense_lu(&a, &[1.0; 4]),
            Err(SolverError::SingularMatrix { .. })
        ));
        assert!(solve(&a, &[1.0; 4], &SolveOptions::default()).is_err());
        let big = CsrMatrix::identity(DENSE_LIMIT + 1);
        assert!(matches!(
            solve_dense_lu(&big, &vec![1.0; DENSE_LIMIT + 1]),
            Err(SolverError::TooLarge { .. })
        ));
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let a = tridiag(10, -1.0, 2.0, -1.0);
        let (x, rep) = solve(&a, &[0.0; 10], &SolveOptions::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn cg_energy_error_decreases_monotonically() {
        // 2D Laplacian on a 10x10 grid
        let k = 10;
        let n = k * k;
        let mut t = Vec::new();
        for i in 0..k {
            for j in 0..k {
                let p = i * k + j;
                t.push((p, p, 4.0));
                if i > 0 {
                    t.push((p, p - k, -1.0));
                }
                if i + 1 < k {
                    t.push((p, p + k, -1.0));
                }
                if j > 0 {
                    t.push((p, p - 1, -1.0));
                }
                if j + 1 < k {
                    t.push((p, p + 1, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t).unwrap();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let (exact, _) = solve_dense_lu(&a, &b).unwrap();
        let mut energies = Vec::new();
        let opts = SolveOptions { method: SolveMethod::Cg, ..Default::default() };
        solve_cg_observed(&a, &b, &opts, |_, x| {
            let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
            energies.push(dot(&e, &a.spmv(&e).unwrap()));
        })
        .unwrap();
        assert!(energies.len() > 2);
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-24, "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn coordinate_dump() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.5), (1, 0, -2.0)]).unwrap();
        assert_eq!(a.to_coordinate_string(), "% 2 2 2\n0 0 1.5\n1 0 -2.0\n");
    }
}
