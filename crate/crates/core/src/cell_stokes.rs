//! Stokes cell problems on the fluid part of the periodic unit cell, the
//! permeability tensor they induce, and the two-scale velocity
//! reconstruction built from their solutions.
//!
//! For each coordinate direction `e_i` the cell problem seeks a Y-periodic
//! velocity/pressure pair `(w_i, q_i)` with
//! `−Δw_i + ∇q_i = e_i`, `∇·w_i = 0` on the fluid part, no-slip on the
//! obstacle boundary, and mean-zero `q_i`. The permeability tensor is
//! `K_ij = ∫ ∇w_i : ∇w_j = ∫ e_i · w_j`; both formulas are evaluated and
//! must agree, which is a sharp diagnostic of solver convergence.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Needed for the arithmetic methods under no_std builds; test and example
// builds unify num-traits with its std feature, where the inherent f64
// methods shadow the trait and the import goes quiet.
#[allow(unused_imports)]
use num_traits::Float;

use crate::discrete::{ScalarField, VectorField};
use crate::geometry::UnitCellGeometry;
use crate::interp;
use crate::linsolve::{LinsolveError, MeanProjection, SaddleOptions, SolveReport, SpdOptions};
use crate::mac::{AxisBc, StokesSystem};

/// Errors from cell solves and tensor assembly.
#[derive(Debug)]
pub enum CellStokesError {
    /// The cell has no solid inclusion: the constant forcing `e_i` cannot
    /// be balanced by a periodic pressure, so the problem is incompatible.
    EmptyInclusion,
    /// Requested driving direction outside `0..n`.
    InvalidAxis { axis: usize, dim: usize },
    /// Wrong number of basis solutions, or solutions from different cells.
    InconsistentBasis,
    /// Linear solver failure.
    Solver(LinsolveError),
    /// Energy- and flux-form permeability disagree beyond tolerance
    /// (under-converged cell solves).
    FormulaMismatch { discrepancy: f64, tolerance: f64 },
    /// Permeability asymmetry beyond `1e−8·max|K|`.
    AsymmetricTensor { asymmetry: f64, scale: f64 },
    /// Permeability has a negative eigenvalue beyond rounding noise.
    NotPositiveDefinite { min_eigenvalue: f64 },
}

impl fmt::Display for CellStokesError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellStokesError::EmptyInclusion => {
                write!(f, "cell has no solid inclusion: constant forcing cannot be balanced")
            }
            CellStokesError::InvalidAxis { axis, dim } => {
                write!(f, "driving axis {axis} out of range for dimension {dim}")
            }
            CellStokesError::InconsistentBasis => {
                write!(f, "cell solutions do not form one basis (axes or grids differ)")
            }
            CellStokesError::Solver(e) => write!(f, "cell solver: {e}"),
            CellStokesError::FormulaMismatch {
                discrepancy,
                tolerance,
            } => write!(
                f,
                "permeability formulas disagree: {discrepancy:.3e} > {tolerance:.3e}"
            ),
            CellStokesError::AsymmetricTensor { asymmetry, scale } => {
                write!(f, "permeability asymmetry {asymmetry:.3e} exceeds 1e-8·{scale:.3e}")
            }
            CellStokesError::NotPositiveDefinite { min_eigenvalue } => {
                write!(f, "permeability not positive definite (λ_min = {min_eigenvalue:.3e})")
            }
        }
    }
}

impl core::error::Error for CellStokesError {}

impl From<LinsolveError> for CellStokesError {
    fn from(e: LinsolveError) -> Self {
        CellStokesError::Solver(e)
    }
}

/// Iteration controls for the cell saddle solves.
#[derive(Clone, Debug)]
pub struct CellStokesOptions {
    /// Relative pressure-Schur residual target.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for CellStokesOptions {
    fn default() -> Self {
        CellStokesOptions {
            tol: 1e-10,
            max_outer: 1000,
            max_inner: 200_000,
        }
    }
}

/// One solved cell problem.
#[derive(Clone, Debug)]
pub struct CellStokesSolution {
    axis: usize,
    w: VectorField,
    q: ScalarField,
    outer: SolveReport,
    inner_iterations: usize,
    divergence_linf: f64,
    momentum_residual: f64,
}

impl CellStokesSolution {
    /// Driving direction of this solution (0-based).
    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Velocity `w` on cell faces (zero on all solid-adjacent faces).
    pub fn velocity(&self) -> &VectorField {
        &self.w
    }

    /// Pressure `q` on fluid cells, mean-zero.
    pub fn pressure(&self) -> &ScalarField {
        &self.q
    }

    pub fn outer_report(&self) -> &SolveReport {
        &self.outer
    }

    pub fn inner_iterations(&self) -> usize {
        self.inner_iterations
    }

    /// Largest cell divergence of `w`.
    pub fn divergence_linf(&self) -> f64 {
        self.divergence_linf
    }

    /// Relative momentum-equation residual.
    pub fn momentum_residual(&self) -> f64 {
        self.momentum_residual
    }
}

fn cell_system(cell: &UnitCellGeometry) -> StokesSystem {
    let grid = cell.grid();
    let bc = vec![AxisBc::Periodic; cell.dim()];
    StokesSystem::assemble(&grid, cell.fluid_mask(), &bc)
}

/// Solves the Stokes cell problem driven by `e_axis`.
pub fn solve_stokes_cell(
    cell: &UnitCellGeometry,
    axis: usize,
    opts: &CellStokesOptions,
) -> Result<CellStokesSolution, CellStokesError> {
    let n = cell.dim();
    if axis >= n {
        return Err(CellStokesError::InvalidAxis { axis, dim: n });
    }
    if !cell.has_solid() {
        return Err(CellStokesError::EmptyInclusion);
    }
    let system = cell_system(cell);
    let rhs = system.unit_force_rhs(axis);
    let saddle_opts = SaddleOptions {
        tol: opts.tol,
        max_outer: opts.max_outer,
        inner: SpdOptions {
            max_iter: opts.max_inner,
            // The obstacle pins every velocity component: A is definite.
            projection: MeanProjection::None,
            ..SpdOptions::default()
        },
        pressure_projection: MeanProjection::Global,
        pressure_mass: None,
    };
    let g = vec![0.0; system.n_pressure()];
    let sol = crate::linsolve::solve_saddle(&system.a, &system.b, &rhs, &g, &saddle_opts)?;
    let divergence_linf = system.divergence_linf(&sol.u);
    Ok(CellStokesSolution {
        axis,
        w: system.velocity_field(&sol.u),
        q: system.pressure_field(&sol.p),
        outer: sol.outer,
        inner_iterations: sol.inner_iterations,
        divergence_linf,
        momentum_residual: sol.momentum_residual,
    })
}

/// The effective permeability tensor of the cell, in cell units.
#[derive(Clone, Debug)]
pub struct PermeabilityTensor {
    n: usize,
    k: [[f64; 3]; 3],
    formula_discrepancy: f64,
    min_eigenvalue: f64,
}

impl PermeabilityTensor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `K_ij` (energy form).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.k[i][j]
    }

    /// Full padded 3×3 storage (rows/cols `≥ n` are zero).
    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.k
    }

    /// Relative disagreement between the energy and flux formulas.
    pub fn formula_discrepancy(&self) -> f64 {
        self.formula_discrepancy
    }

    /// Smallest eigenvalue (positive for any valid cell).
    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Rebuilds a tensor from stored entries (e.g. deserialized from an
    /// artifact written by an earlier run), re-validating symmetry and
    /// semi-definiteness and recomputing the smallest eigenvalue. Rows and
    /// columns at index `≥ dim` must be zero.
    pub fn from_entries(
        dim: usize,
        entries: &[[f64; 3]; 3],
        formula_discrepancy: f64,
    ) -> Result<Self, CellStokesError> {
        if dim == 0 || dim > 3 {
            return Err(CellStokesError::InvalidAxis { axis: dim, dim: 3 });
        }
        let mut kmax = 0.0f64;
        for row in entries {
            for &v in row {
                kmax = kmax.max(v.abs());
            }
        }
        let scale = kmax.max(f64::MIN_POSITIVE);
        let mut asymmetry = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                if i >= dim || j >= dim {
                    if entries[i][j] != 0.0 {
                        return Err(CellStokesError::InconsistentBasis);
                    }
                } else {
                    asymmetry = asymmetry.max((entries[i][j] - entries[j][i]).abs());
                }
            }
        }
        if asymmetry > 1e-8 * scale {
            return Err(CellStokesError::AsymmetricTensor {
                asymmetry,
                scale: kmax,
            });
        }
        let min_eigenvalue = symmetric_min_eigenvalue(entries, dim);
        if !(min_eigenvalue >= -1e-12 * scale) {
            return Err(CellStokesError::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(PermeabilityTensor {
            n: dim,
            k: *entries,
            formula_discrepancy,
            min_eigenvalue,
        })
    }
}

/// Smallest eigenvalue of a symmetric `n×n` matrix, `n ≤ 3`.
pub(crate) fn symmetric_min_eigenvalue(k: &[[f64; 3]; 3], n: usize) -> f64 {
    match n {
        1 => k[0][0],
        2 => {
            let a = k[0][0];
            let c = k[1][1];
            let b = 0.5 * (k[0][1] + k[1][0]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            mid - rad
        }
        3 => {
            // Trigonometric closed form for symmetric 3×3 eigenvalues.
            let a = k;
            let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
            let tr = a[0][0] + a[1][1] + a[2][2];
            if p1 == 0.0 {
                return a[0][0].min(a[1][1]).min(a[2][2]);
            }
            let q = tr / 3.0;
            let p2 = (a[0][0] - q) * (a[0][0] - q)
                + (a[1][1] - q) * (a[1][1] - q)
                + (a[2][2] - q) * (a[2][2] - q)
                + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            let mut b = [[0.0f64; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
                }
            }
            let detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
                - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
                + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
            let r = (detb / 2.0).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            // λ_min corresponds to the phase shifted by 2π/3.
            q + 2.0 * p * (phi + 2.0 * core::f64::consts::FRAC_PI_3).cos()
        }
        _ => f64::NAN,
    }
}

/// Assembles the permeability tensor from the `n` cell solutions by both
/// formulas, validating their agreement, symmetry, and definiteness.
pub fn permeability(solutions: &[CellStokesSolution]) -> Result<PermeabilityTensor, CellStokesError> {
    if solutions.is_empty() {
        return Err(CellStokesError::InconsistentBasis);
    }
    let grid = solutions[0].w.grid().clone();
    let n = grid.dim();
    if solutions.len() != n {
        return Err(CellStokesError::InconsistentBasis);
    }
    for (i, s) in solutions.iter().enumerate() {
        if s.axis != i || s.w.grid().cells() != grid.cells() {
            return Err(CellStokesError::InconsistentBasis);
        }
    }
    // Reassemble the operator from the stored masks (the pressure mask is
    // the fluid mask) to evaluate the energy form.
    let fluid: Vec<bool> = solutions[0].q.mask().to_vec();
    let bc = vec![AxisBc::Periodic; n];
    let system = StokesSystem::assemble(&grid, &fluid, &bc);
    let vecs: Vec<Vec<f64>> = solutions
        .iter()
        .map(|s| system.field_to_vector(&s.w))
        .collect();
    let mut energy = [[0.0f64; 3]; 3];
    let mut flux = [[0.0f64; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            energy[i][j] = system.energy_dot(&vecs[i], &vecs[j]);
            flux[i][j] = system.flux_dot(i, &vecs[j]);
        }
    }
    let mut kmax = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            kmax = kmax.max(energy[i][j].abs());
        }
    }
    let scale = kmax.max(f64::MIN_POSITIVE);
    let mut discrepancy = 0.0f64;
    let mut asymmetry = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            discrepancy = discrepancy.max((energy[i][j] - flux[i][j]).abs());
            asymmetry = asymmetry
                .max((energy[i][j] - energy[j][i]).abs())
                .max((flux[i][j] - flux[j][i]).abs());
        }
    }
    discrepancy /= scale;
    if discrepancy > 1e-5 {
        return Err(CellStokesError::FormulaMismatch {
            discrepancy,
            tolerance: 1e-5,
        });
    }
    if asymmetry > 1e-8 * scale {
        return Err(CellStokesError::AsymmetricTensor {
            asymmetry,
            scale: kmax,
        });
    }
    // The energy form is a Gram matrix, so exact arithmetic gives λ_min ≥ 0;
    // a zero eigenvalue is a legitimate degenerate medium (an axis with no
    // through-flow), so only a negative eigenvalue beyond rounding noise
    // signals a broken solve.  Callers that require strict definiteness can
    // inspect `min_eigenvalue()`.
    let min_eigenvalue = symmetric_min_eigenvalue(&energy, n);
    if !(min_eigenvalue >= -1e-12 * scale) {
        return Err(CellStokesError::NotPositiveDefinite { min_eigenvalue });
    }
    Ok(PermeabilityTensor {
        n,
        k: energy,
        formula_discrepancy: discrepancy,
        min_eigenvalue,
    })
}

/// Two-scale reconstruction of the limit velocity and its pressure
/// corrector:
/// `u_0(x, y) = Σ_{i<n−1} f_0^i(x) w_i(y) + (f_0^{n−1}(x) − ∂_n p_0(x)) w_{n−1}(y)`
/// and `p_1(x, y)` with the same coefficients against `q_i`. Macro
/// coefficient fields are sampled by multilinear interpolation (periodic
/// wrap on periodic axes), cell fields by periodic multilinear
/// interpolation in `y`.
pub struct TwoScaleVelocity {
    n: usize,
    w: Vec<VectorField>,
    q: Vec<ScalarField>,
    /// Macro coefficient fields `c_i` on Ω (cell-centered).
    coeff: Vec<ScalarField>,
    /// Cell mass matrix `M_ij = ∫_{Y_f} w_i · w_j dy`.
    mass: [[f64; 3]; 3],
    /// Column integrals `∫_{Y_f} w_i dy` (flux-form permeability columns).
    basis_mean: [[f64; 3]; 3],
}

impl TwoScaleVelocity {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Macro coefficient vector `(f̄_0, f_0^v − ∂_n p_0)` at `x`.
    pub fn coefficients(&self, x: &[f64]) -> [f64; 3] {
        let mut c = [0.0f64; 3];
        for i in 0..self.n {
            c[i] = interp::sample_cell_field(&self.coeff[i], x);
        }
        c
    }

    /// Velocity component `comp` of `u_0(x, y)`.
    pub fn velocity(&self, x: &[f64], y: &[f64], comp: usize) -> f64 {
        let c = self.coefficients(x);
        let mut acc = 0.0;
        for i in 0..self.n {
            if c[i] != 0.0 {
                acc += c[i] * interp::sample_face_component(&self.w[i], comp, y);
            }
        }
        acc
    }

    /// Pressure corrector `p_1(x, y)`.
    pub fn pressure_corrector(&self, x: &[f64], y: &[f64]) -> f64 {
        let c = self.coefficients(x);
        let mut acc = 0.0;
        for i in 0..self.n {
            if c[i] != 0.0 {
                acc += c[i] * interp::sample_cell_field(&self.q[i], y);
            }
        }
        acc
    }

    /// Cell average `∫_{Y_f} u_0(x, ·) dy` — the Darcy velocity of the
    /// reconstruction at `x`.
    pub fn mean_velocity(&self, x: &[f64]) -> [f64; 3] {
        let c = self.coefficients(x);
        let mut out = [0.0f64; 3];
        for d in 0..self.n {
            for i in 0..self.n {
                out[d] += c[i] * self.basis_mean[i][d];
            }
        }
        out
    }

    /// `‖u_0‖_{L²(Ω×Y_f)}` by midpoint quadrature in `x` and the exact
    /// cell mass matrix in `y`.
    pub fn l2_omega_yf(&self) -> f64 {
        let grid = self.coeff[0].grid();
        let vol = grid.cell_volume();
        let mut acc = 0.0;
        for cidx in 0..grid.cell_count() {
            let mut c = [0.0f64; 3];
            for i in 0..self.n {
                c[i] = self.coeff[i].get(cidx);
            }
            let mut q = 0.0;
            for i in 0..self.n {
                for j in 0..self.n {
                    q += c[i] * c[j] * self.mass[i][j];
                }
            }
            acc += vol * q;
        }
        acc.max(0.0).sqrt()
    }
}

/// Builds the two-scale reconstruction from the cell basis and macro
/// coefficient fields: `f0` holds the `n` components of the limit volume
/// force on Ω (cell-centered), `dnp0` the vertical derivative of the limit
/// pressure.
pub fn reconstruct_u0(
    solutions: &[CellStokesSolution],
    f0: &[ScalarField],
    dnp0: &ScalarField,
) -> Result<TwoScaleVelocity, CellStokesError> {
    if solutions.is_empty() {
        return Err(CellStokesError::InconsistentBasis);
    }
    let n = solutions[0].w.grid().dim();
    if solutions.len() != n || f0.len() != n {
        return Err(CellStokesError::InconsistentBasis);
    }
    for (i, s) in solutions.iter().enumerate() {
        if s.axis != i {
            return Err(CellStokesError::InconsistentBasis);
        }
    }
    // Coefficients: horizontal components copy f0; the vertical coefficient
    // subtracts the vertical pressure gradient.
    let mut coeff: Vec<ScalarField> = Vec::with_capacity(n);
    for (i, f) in f0.iter().enumerate() {
        if i + 1 < n {
            coeff.push(f.clone());
        } else {
            let mut c = f.clone();
            let vals: Vec<f64> = f
                .values()
                .iter()
                .zip(dnp0.values())
                .map(|(a, b)| a - b)
                .collect();
            c.assign(&vals)
                .map_err(|_| CellStokesError::InconsistentBasis)?;
            coeff.push(c);
        }
    }
    // Cell mass matrix and basis means by face quadrature.
    let cell_grid = solutions[0].w.grid();
    let volc = cell_grid.cell_volume();
    let mut mass = [[0.0f64; 3]; 3];
    let mut basis_mean = [[0.0f64; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for d in 0..n {
                let wi = solutions[i].w.comp(d);
                let wj = solutions[j].w.comp(d);
                for f in 0..wi.len() {
                    acc += wi[f] * wj[f];
                }
            }
            mass[i][j] = acc * volc;
        }
        for d in 0..n {
            let wi = solutions[i].w.comp(d);
            let mut acc = 0.0;
            for v in wi {
                acc += *v;
            }
            basis_mean[i][d] = acc * volc;
        }
    }
    Ok(TwoScaleVelocity {
        n,
        w: solutions.iter().map(|s| s.w.clone()).collect(),
        q: solutions.iter().map(|s| s.q.clone()).collect(),
        coeff,
        mass,
        basis_mean,
    })
}
