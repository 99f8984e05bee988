//! Sparse linear algebra kernels: symmetric positive-(semi)definite solves,
//! pressure-Schur saddle-point solves, and the small extras the transport
//! and limit models need (a nonsymmetric Krylov solver and a tridiagonal
//! direct solver).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Needed for the arithmetic methods under no_std builds; test and example
// builds unify num-traits with its std feature, where the inherent f64
// methods shadow the trait and the import goes quiet.
#[allow(unused_imports)]
use num_traits::Float;

/// Compressed-sparse-row matrix. Column indices are sorted per row and
/// duplicate entries are merged at construction.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

/// Iteration/residual summary of an iterative solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub converged: bool,
}

/// Errors raised by matrix construction and the solvers.
#[derive(Clone, Debug)]
pub enum LinsolveError {
    /// Iteration budget exhausted; carries the best iterate and its report.
    NoConvergence { best: Vec<f64>, report: SolveReport },
    /// Operand shapes are inconsistent.
    DimensionMismatch { expected: usize, got: usize },
    /// The right-hand side is incompatible with the operator's range.
    IncompatibleRhs,
    /// Construction input invalid (index out of range, asymmetric matrix
    /// declared symmetric, non-finite value).
    BadMatrix(alloc::string::String),
}

impl fmt::Display for LinsolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinsolveError::NoConvergence { report, .. } => write!(
                f,
                "no convergence after {} iterations (residual {:.3e})",
                report.iterations, report.final_residual
            ),
            LinsolveError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            LinsolveError::IncompatibleRhs => write!(f, "right-hand side incompatible"),
            LinsolveError::BadMatrix(msg) => write!(f, "bad matrix: {msg}"),
        }
    }
}

impl core::error::Error for LinsolveError {}

impl SparseMatrix {
    /// Builds a CSR matrix from unordered triplets; duplicates are summed.
    /// With `symmetric = true` the symmetry is validated on a deterministic
    /// sample of entries.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
        symmetric: bool,
    ) -> Result<Self, LinsolveError> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(LinsolveError::BadMatrix(alloc::format!(
                    "entry ({r}, {c}) outside {nrows}×{ncols}"
                )));
            }
            if !v.is_finite() {
                return Err(LinsolveError::BadMatrix(alloc::format!(
                    "non-finite value at ({r}, {c})"
                )));
            }
            counts[r + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        let mut col_raw = vec![0usize; triplets.len()];
        let mut val_raw = vec![0.0f64; triplets.len()];
        let mut cursor = counts.clone();
        for &(r, c, v) in triplets {
            let slot = cursor[r];
            col_raw[slot] = c;
            val_raw[slot] = v;
            cursor[r] += 1;
        }
        // Sort each row by column and merge duplicates.
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            scratch.clear();
            for k in counts[r]..counts[r + 1] {
                scratch.push((col_raw[k], val_raw[k]));
            }
            scratch.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                let mut v = 0.0;
                while i < scratch.len() && scratch[i].0 == c {
                    v += scratch[i].1;
                    i += 1;
                }
                col_idx.push(c);
                vals.push(v);
            }
            row_ptr[r + 1] = col_idx.len();
        }
        let out = SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            vals,
            symmetric,
        };
        if symmetric {
            out.validate_symmetric()?;
        }
        Ok(out)
    }

    fn validate_symmetric(&self) -> Result<(), LinsolveError> {
        if self.nrows != self.ncols {
            return Err(LinsolveError::BadMatrix(
                "symmetric flag on a non-square matrix".into(),
            ));
        }
        let nnz = self.vals.len();
        if nnz == 0 {
            return Ok(());
        }
        let max_abs = self.vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        // Deterministic sample of entries via a linear congruential stream.
        let samples = nnz.min(256);
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..samples {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let k = (state >> 16) as usize % nnz;
            let r = match self.row_ptr.binary_search(&k) {
                Ok(mut r) => {
                    // Land on the row whose range starts at k.
                    while r + 1 <= self.nrows && self.row_ptr[r + 1] == k {
                        r += 1;
                    }
                    r.min(self.nrows - 1)
                }
                Err(r) => r - 1,
            };
            let c = self.col_idx[k];
            let v = self.vals[k];
            let vt = self.get(c, r);
            if (v - vt).abs() > 1e-10 * max_abs.max(1.0) {
                return Err(LinsolveError::BadMatrix(alloc::format!(
                    "declared symmetric but A[{r},{c}] = {v} vs A[{c},{r}] = {vt}"
                )));
            }
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Entry lookup by binary search within the row.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.vals[lo + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// `y = Aᵀ x`.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for v in y.iter_mut() {
            *v = 0.0;
        }
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.vals[k] * xr;
            }
        }
    }

    /// Main diagonal (zeros where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows.min(self.ncols)];
        for (r, item) in d.iter_mut().enumerate() {
            *item = self.get(r, r);
        }
        d
    }
}

/// Nullspace handling for singular (periodic / pure-Neumann) systems:
/// iterates and right-hand sides are kept orthogonal to the indicated
/// constant functions by explicit mean subtraction each iteration.
#[derive(Clone, Debug, Default)]
pub enum MeanProjection {
    /// Operator is nonsingular; no projection.
    #[default]
    None,
    /// Nullspace is the global constants.
    Global,
    /// Nullspace is constants per labeled group (label per unknown);
    /// projection subtracts each group's mean.
    Groups(Vec<usize>),
}

impl MeanProjection {
    fn apply(&self, v: &mut [f64]) {
        match self {
            MeanProjection::None => {}
            MeanProjection::Global => {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                for x in v.iter_mut() {
                    *x -= mean;
                }
            }
            MeanProjection::Groups(labels) => {
                let ngroups = labels.iter().copied().max().map_or(0, |m| m + 1);
                let mut sums = vec![0.0f64; ngroups];
                let mut counts = vec![0usize; ngroups];
                for (i, &g) in labels.iter().enumerate() {
                    sums[g] += v[i];
                    counts[g] += 1;
                }
                for g in 0..ngroups {
                    if counts[g] > 0 {
                        sums[g] /= counts[g] as f64;
                    }
                }
                for (i, &g) in labels.iter().enumerate() {
                    v[i] -= sums[g];
                }
            }
        }
    }
}

/// Options for [`solve_spd`].
#[derive(Clone, Debug)]
pub struct SpdOptions {
    /// Relative residual target `‖Ax − b‖ ≤ tol·‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
    pub projection: MeanProjection,
}

impl Default for SpdOptions {
    fn default() -> Self {
        SpdOptions {
            tol: 1e-10,
            max_iter: 10_000,
            projection: MeanProjection::None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients for symmetric
/// positive-(semi)definite systems. For singular systems the configured
/// mean projection keeps everything orthogonal to the nullspace and the
/// returned solution is mean-zero over each projected group.
pub fn solve_spd(
    a: &SparseMatrix,
    b: &[f64],
    opts: &SpdOptions,
) -> Result<(Vec<f64>, SolveReport), LinsolveError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinsolveError::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if b.len() != n {
        return Err(LinsolveError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let mut rhs = b.to_vec();
    opts.projection.apply(&mut rhs);
    let bnorm = norm2(&rhs);
    let mut report = SolveReport {
        iterations: 0,
        initial_residual: bnorm,
        final_residual: bnorm,
        converged: true,
    };
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, report));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = rhs.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    opts.projection.apply(&mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let target = opts.tol * bnorm;
    let mut best_x = x.clone();
    let mut best_res = bnorm;
    for it in 1..=opts.max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Numerical breakdown (semidefinite direction): stop with the
            // current iterate.
            report.iterations = it - 1;
            report.final_residual = norm2(&r);
            report.converged = report.final_residual <= target;
            if !report.converged {
                return Err(LinsolveError::NoConvergence { best: x, report });
            }
            opts.projection.apply(&mut x);
            return Ok((x, report));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        opts.projection.apply(&mut r);
        let res = norm2(&r);
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res <= target {
            report.iterations = it;
            report.final_residual = res;
            report.converged = true;
            opts.projection.apply(&mut x);
            return Ok((x, report));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        opts.projection.apply(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    report.iterations = opts.max_iter;
    report.final_residual = best_res;
    report.converged = false;
    opts.projection.apply(&mut best_x);
    Err(LinsolveError::NoConvergence {
        best: best_x,
        report,
    })
}

/// Options for [`solve_saddle`].
#[derive(Clone, Debug)]
pub struct SaddleOptions {
    /// Relative target on the pressure-Schur residual.
    pub tol: f64,
    pub max_outer: usize,
    /// Options for the inner `A`-solves (tolerance is tightened relative to
    /// the outer target automatically).
    pub inner: SpdOptions,
    /// Pressure nullspace handling (fully periodic cell problems have a
    /// constant pressure mode; problems with a natural boundary do not).
    pub pressure_projection: MeanProjection,
    /// Diagonal of the pressure mass matrix used as the Schur
    /// preconditioner; `None` means the identity (equivalent to a scalar
    /// mass on uniform grids).
    pub pressure_mass: Option<Vec<f64>>,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        SaddleOptions {
            tol: 1e-10,
            max_outer: 500,
            inner: SpdOptions::default(),
            pressure_projection: MeanProjection::None,
            pressure_mass: None,
        }
    }
}

/// Solution of a saddle-point solve with residual bookkeeping.
#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub outer: SolveReport,
    pub inner_iterations: usize,
    /// `‖A u + Bᵀ p − f‖ / ‖f‖` (absolute when `f = 0`).
    pub momentum_residual: f64,
    /// `‖B u − g‖` scaled by the largest row sum of `B`.
    pub divergence_residual: f64,
}

/// Uzawa / pressure-Schur conjugate gradients for the saddle system
/// `A u + Bᵀ p = f`, `B u = g` with `A` symmetric positive
/// (semi-)definite on the velocity space. Each Schur application performs
/// one inner CG solve with `A`; the Schur system is preconditioned by the
/// pressure mass diagonal.
pub fn solve_saddle(
    a: &SparseMatrix,
    b: &SparseMatrix,
    f: &[f64],
    g: &[f64],
    opts: &SaddleOptions,
) -> Result<SaddleSolution, LinsolveError> {
    let nu = a.nrows();
    let np = b.nrows();
    if b.ncols() != nu {
        return Err(LinsolveError::DimensionMismatch {
            expected: nu,
            got: b.ncols(),
        });
    }
    if f.len() != nu || g.len() != np {
        return Err(LinsolveError::DimensionMismatch {
            expected: nu + np,
            got: f.len() + g.len(),
        });
    }
    if let Some(mass) = &opts.pressure_mass {
        if mass.len() != np {
            return Err(LinsolveError::DimensionMismatch {
                expected: np,
                got: mass.len(),
            });
        }
    }
    let inner_opts = SpdOptions {
        tol: (opts.tol * 1e-2).max(1e-14),
        ..opts.inner.clone()
    };
    let mut inner_iterations = 0usize;
    let mut solve_a = |rhs: &[f64]| -> Result<Vec<f64>, LinsolveError> {
        let (x, rep) = solve_spd(a, rhs, &inner_opts)?;
        inner_iterations += rep.iterations;
        Ok(x)
    };
    // Schur right-hand side: B A⁻¹ f − g.
    let ainv_f = solve_a(f)?;
    let mut rhs_p = vec![0.0; np];
    b.matvec(&ainv_f, &mut rhs_p);
    for i in 0..np {
        rhs_p[i] -= g[i];
    }
    opts.pressure_projection.apply(&mut rhs_p);
    let precond = |r: &[f64], z: &mut [f64]| match &opts.pressure_mass {
        Some(mass) => {
            for i in 0..r.len() {
                z[i] = r[i] / mass[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    let bnorm = norm2(&rhs_p);
    let mut p = vec![0.0; np];
    let mut outer = SolveReport {
        iterations: 0,
        initial_residual: bnorm,
        final_residual: bnorm,
        converged: true,
    };
    let mut scratch_u = vec![0.0; nu];
    if bnorm > 0.0 {
        let target = opts.tol * bnorm;
        let mut r = rhs_p.clone();
        let mut z = vec![0.0; np];
        precond(&r, &mut z);
        opts.pressure_projection.apply(&mut z);
        let mut dir = z.clone();
        let mut s_dir = vec![0.0; np];
        let mut rz = dot(&r, &z);
        let mut converged = false;
        for it in 1..=opts.max_outer {
            // Schur application: S q = B A⁻¹ Bᵀ q.
            b.matvec_transpose(&dir, &mut scratch_u);
            let ainv_btd = solve_a(&scratch_u)?;
            b.matvec(&ainv_btd, &mut s_dir);
            opts.pressure_projection.apply(&mut s_dir);
            let dsd = dot(&dir, &s_dir);
            if dsd <= 0.0 {
                break;
            }
            let alpha = rz / dsd;
            for i in 0..np {
                p[i] += alpha * dir[i];
                r[i] -= alpha * s_dir[i];
            }
            opts.pressure_projection.apply(&mut r);
            let res = norm2(&r);
            outer.iterations = it;
            outer.final_residual = res;
            if res <= target {
                converged = true;
                break;
            }
            precond(&r, &mut z);
            opts.pressure_projection.apply(&mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..np {
                dir[i] = z[i] + beta * dir[i];
            }
        }
        outer.converged = converged;
        if !converged {
            let report = outer;
            return Err(LinsolveError::NoConvergence {
                best: p,
                report,
            });
        }
    }
    opts.pressure_projection.apply(&mut p);
    // Velocity back-substitution: u = A⁻¹ (f − Bᵀ p).
    b.matvec_transpose(&p, &mut scratch_u);
    let mut rhs_u = vec![0.0; nu];
    for i in 0..nu {
        rhs_u[i] = f[i] - scratch_u[i];
    }
    let u = solve_a(&rhs_u)?;
    // Residual bookkeeping.
    let mut au = vec![0.0; nu];
    a.matvec(&u, &mut au);
    b.matvec_transpose(&p, &mut scratch_u);
    let mut mom = 0.0f64;
    let mut fnorm = 0.0f64;
    for i in 0..nu {
        let res = au[i] + scratch_u[i] - f[i];
        mom += res * res;
        fnorm += f[i] * f[i];
    }
    let momentum_residual = if fnorm > 0.0 {
        (mom / fnorm).sqrt()
    } else {
        mom.sqrt()
    };
    let mut bu = vec![0.0; np];
    b.matvec(&u, &mut bu);
    let mut div = 0.0f64;
    for i in 0..np {
        let res = bu[i] - g[i];
        div += res * res;
    }
    let mut brow: f64 = 0.0;
    for r in 0..b.nrows() {
        let mut acc = 0.0;
        for k in b.row_ptr[r]..b.row_ptr[r + 1] {
            acc += b.vals[k].abs();
        }
        brow = brow.max(acc);
    }
    let divergence_residual = div.sqrt() / brow.max(1e-300);
    Ok(SaddleSolution {
        u,
        p,
        outer,
        inner_iterations,
        momentum_residual,
        divergence_residual,
    })
}

/// BiCGStab with diagonal (Jacobi) scaling for the nonsymmetric systems
/// produced by upwinded advection–diffusion operators. Same convergence
/// contract as [`solve_spd`]: relative residual `tol`, best iterate
/// returned on failure.
pub fn solve_bicgstab(
    a: &SparseMatrix,
    b: &[f64],
    opts: &SpdOptions,
) -> Result<(Vec<f64>, SolveReport), LinsolveError> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(LinsolveError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let bnorm = norm2(b);
    let mut report = SolveReport {
        iterations: 0,
        initial_residual: bnorm,
        final_residual: bnorm,
        converged: true,
    };
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, report));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let target = opts.tol * bnorm;
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut best_x = x.clone();
    let mut best_res = bnorm;
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        for i in 0..n {
            phat[i] = p[i] * inv_diag[i];
        }
        a.matvec(&phat, &mut v);
        let r0v = dot(&r0, &v);
        if r0v.abs() < 1e-300 {
            break;
        }
        alpha = rho / r0v;
        let mut s = r.clone();
        for i in 0..n {
            s[i] -= alpha * v[i];
        }
        let snorm = norm2(&s);
        if snorm <= target {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            report.iterations = it;
            report.final_residual = snorm;
            report.converged = true;
            return Ok((x, report));
        }
        for i in 0..n {
            shat[i] = s[i] * inv_diag[i];
        }
        a.matvec(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm2(&r);
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        report.iterations = it;
        report.final_residual = res;
        if res <= target {
            report.converged = true;
            return Ok((x, report));
        }
        if omega.abs() < 1e-300 {
            break;
        }
    }
    report.converged = false;
    report.final_residual = best_res;
    Err(LinsolveError::NoConvergence {
        best: best_x,
        report,
    })
}

/// Thomas elimination for a tridiagonal system with `lower[0]` and
/// `upper[n−1]` unused. The system must be diagonally solvable (no pivoting
/// is performed); our discretizations produce strictly diagonally dominant
/// matrices.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, LinsolveError> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(LinsolveError::DimensionMismatch {
            expected: n,
            got: lower.len().min(upper.len()).min(rhs.len()),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0f64; n];
    let mut d = vec![0.0f64; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(LinsolveError::BadMatrix("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv == 0.0 {
            return Err(LinsolveError::BadMatrix("zero pivot in tridiagonal solve".into()));
        }
        c[i] = upper[i] / piv;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    Ok(x)
}
