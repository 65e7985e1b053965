//! Compressed sparse row matrices and a preconditioned conjugate
//! gradient solver.
//!
//! The solver tolerates consistent positive semi-definite systems
//! (starting from a compatible initial guess CG stays in the range
//! space), which is what the director update needs when the degree of
//! orientation vanishes at nodes.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Set by constructors that build structurally symmetric matrices.
    pub symmetric: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub initial_residual_norm: f64,
    pub converged: bool,
}

impl SparseMatrix {
    /// Build from (i, j, value) triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<SparseMatrix> {
        for &(i, j, _) in entries {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Linalg(format!(
                    "triplet ({i}, {j}) out of range for {n_rows}x{n_cols} matrix"
                )));
            }
        }
        // bucket by row, then sort each row and merge duplicates
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, _, _) in entries {
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0f64; entries.len()];
        let mut cursor = counts.clone();
        for &(i, j, v) in entries {
            let p = cursor[i];
            cols[p] = j;
            vals[p] = v;
            cursor[i] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..n_rows {
            let lo = counts[i];
            let hi = counts[i + 1];
            order.clear();
            order.extend(lo..hi);
            order.sort_unstable_by_key(|&p| cols[p]);
            let mut last_col = usize::MAX;
            for &p in &order {
                if cols[p] == last_col {
                    *values.last_mut().unwrap() += vals[p];
                } else {
                    col_indices.push(cols[p]);
                    values.push(vals[p]);
                    last_col = cols[p];
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        })
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Matrix-vector product.
    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        y
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols, "spmv dimension mismatch");
        assert_eq!(y.len(), self.n_rows, "spmv dimension mismatch");
        for i in 0..self.n_rows {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = 0.0;
            for p in lo..hi {
                acc += self.values[p] * x[self.col_indices[p]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_rows];
        for i in 0..self.n_rows.min(self.n_cols) {
            let (cols, vals) = self.row(i);
            if let Ok(p) = cols.binary_search(&i) {
                d[i] = vals[p];
            }
        }
        d
    }

    /// Positions of the diagonal entries in `values`, if present.
    pub fn diagonal_positions(&self) -> Vec<Option<usize>> {
        let mut pos = vec![None; self.n_rows];
        for i in 0..self.n_rows.min(self.n_cols) {
            let lo = self.row_offsets[i];
            let (cols, _) = self.row(i);
            if let Ok(p) = cols.binary_search(&i) {
                pos[i] = Some(lo + p);
            }
        }
        pos
    }

    /// x^T A x.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut row_acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                row_acc += v * x[*c];
            }
            acc += x[i] * row_acc;
        }
        acc
    }

    pub fn max_symmetry_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                let (jc, jv) = self.row(*c);
                let vt = jc.binary_search(&i).map(|p| jv[p]).unwrap_or(0.0);
                worst = worst.max((v - vt).abs());
            }
        }
        worst
    }
}

/// Inverse-diagonal Jacobi preconditioner; zero diagonal entries get 1
/// so the preconditioner stays well-defined for semi-definite systems.
pub fn jacobi_preconditioner(a: &SparseMatrix) -> Vec<f64> {
    a.diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

/// Preconditioned conjugate gradients for symmetric positive
/// (semi-)definite systems, with minimal-residual smoothing.
///
/// `precond_inv` holds the inverse diagonal of the preconditioner
/// (defaults to Jacobi).  The returned iterate is the residual-smoothed
/// one (a convex combination of CG iterates), so its residual norm is
/// non-increasing across iterations while the CG search directions are
/// untouched.  Convergence is declared on the relative smoothed
/// residual.  A NaN anywhere aborts with an error.
pub fn cg_solve(
    a: &SparseMatrix,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iters: usize,
    precond_inv: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.n_rows;
    if a.n_cols != n || b.len() != n || x0.len() != n {
        return Err(Error::Linalg(format!(
            "cg dimension mismatch: A is {}x{}, |b| = {}, |x0| = {}",
            a.n_rows,
            a.n_cols,
            b.len(),
            x0.len()
        )));
    }
    let default_prec;
    let minv = match precond_inv {
        Some(m) => m,
        None => {
            default_prec = jacobi_preconditioner(a);
            &default_prec
        }
    };

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    a.spmv_into(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let norm2 = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();

    let r0_norm = norm2(&r).sqrt();
    if !r0_norm.is_finite() {
        return Err(Error::Solver("cg: initial residual is not finite".into()));
    }
    if r0_norm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                final_residual_norm: 0.0,
                initial_residual_norm: 0.0,
                converged: true,
            },
        ));
    }

    // smoothed iterate (y, s): s = b - A y is kept as an affine
    // combination of CG residuals, with the step chosen to minimize |s|
    let mut y = x.clone();
    let mut s = r.clone();
    let mut s_norm2 = norm2(&s);

    let mut z: Vec<f64> = r.iter().zip(minv).map(|(ri, mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    let tol2 = tol * tol * r0_norm * r0_norm;
    let mut converged = s_norm2 <= tol2;

    while iterations < max_iters && !converged {
        a.spmv_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap == 0.0 {
            // p in the null space of a semi-definite matrix: residual can
            // no longer be reduced in this direction
            break;
        }
        let alpha = rz / pap;
        if !alpha.is_finite() {
            return Err(Error::Solver(format!(
                "cg: non-finite step at iteration {iterations}"
            )));
        }
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // minimal-residual smoothing: y <- y + theta (x - y) with theta
        // minimizing |s + theta (r - s)| over [0, 1]
        let mut du_norm2 = 0.0;
        let mut s_du = 0.0;
        for i in 0..n {
            let du = r[i] - s[i];
            du_norm2 += du * du;
            s_du += s[i] * du;
        }
        if du_norm2 > 0.0 {
            let theta = (-s_du / du_norm2).clamp(0.0, 1.0);
            for i in 0..n {
                y[i] += theta * (x[i] - y[i]);
                s[i] += theta * (r[i] - s[i]);
            }
            s_norm2 = norm2(&s);
        }
        for i in 0..n {
            z[i] = r[i] * minv[i];
        }
        let rz_new = dot(&r, &z);
        if !rz_new.is_finite() {
            return Err(Error::Solver(format!(
                "cg: NaN residual at iteration {iterations}"
            )));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        converged = s_norm2 <= tol2;
    }

    // true residual of the smoothed iterate for the report
    a.spmv_into(&y, &mut ap);
    let mut true_r2 = 0.0;
    for i in 0..n {
        let d = b[i] - ap[i];
        true_r2 += d * d;
    }
    let final_norm = true_r2.sqrt();
    Ok((
        y,
        SolveReport {
            iterations,
            final_residual_norm: final_norm,
            initial_residual_norm: r0_norm,
            converged: converged || final_norm <= tol * r0_norm,
        },
    ))
}

/// Impose Dirichlet values by symmetric row/column elimination: known
/// values move to the right-hand side, rows and columns of fixed
/// unknowns are zeroed with a unit diagonal, so the system stays
/// symmetric for CG.  The solution vector contains the fixed values.
pub fn apply_dirichlet(a: &mut SparseMatrix, b: &mut [f64], fixed: &[(usize, f64)]) {
    let n = a.n_rows;
    let mut is_fixed = vec![false; n];
    let mut value = vec![0.0; n];
    for &(i, v) in fixed {
        is_fixed[i] = true;
        value[i] = v;
    }
    // move known values to the rhs: b_i -= sum_j fixed A_ij v_j for free i
    for i in 0..n {
        if is_fixed[i] {
            continue;
        }
        let lo = a.row_offsets[i];
        let hi = a.row_offsets[i + 1];
        for p in lo..hi {
            let j = a.col_indices[p];
            if is_fixed[j] {
                b[i] -= a.values[p] * value[j];
                a.values[p] = 0.0;
            }
        }
    }
    // zero fixed rows, unit diagonal
    for i in 0..n {
        if !is_fixed[i] {
            continue;
        }
        let lo = a.row_offsets[i];
        let hi = a.row_offsets[i + 1];
        for p in lo..hi {
            a.values[p] = if a.col_indices[p] == i { 1.0 } else { 0.0 };
        }
        b[i] = value[i];
    }
}
