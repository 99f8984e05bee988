//! Direct microscopic reference solvers on the perforated layer: the
//! Stokes system and the advection–diffusion equation, resolved on the
//! full geometry without upscaling. Convergence studies measure the
//! effective models of the other modules against these solutions.
//!
//! The Stokes problem is posed with no-slip conditions on the lateral
//! boundary and the obstacle surfaces and a prescribed-pressure (natural)
//! condition on the two plates: with the shifted pressure `π = p − p^b`
//! the weak form reads
//!
//! ```text
//!   ∫ ∇u:∇v − ∫ π ∇·v = ∫ f·v + ∫ p^b ∇·v − ∮ p^b v·ν,
//! ```
//!
//! so a constant `p^b` with `f = 0` produces an identically zero
//! right-hand side and the exact solution `u = 0`, `p = p^b`.
//!
//! The transport equation carries the thin-layer scalings as plain
//! coefficients (see [`MicroTransportParams::scaled`]): after dividing by
//! the time-derivative weight the solved equation is
//!
//! ```text
//!   ∂_t c + a·u·∇c = div(diag(D_h, …, D_v) ∇c) + g,
//! ```
//!
//! with Dirichlet data on the plates (half-cell fluxes), no-flux or
//! periodic lateral conditions, and no flux through the obstacle
//! surfaces. Fluxes are conservative and advection is first-order upwind
//! by default.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cell_diffusion::DiffusionCase;
use crate::discrete::{ScalarField, VectorField};
use crate::geometry::{AdmissibleScales, LayerGeometry};
use crate::indexutil as ix;
use crate::linsolve::{
    self, LinsolveError, MeanProjection, SaddleOptions, SparseMatrix, SpdOptions,
};
use crate::mac::{AxisBc, StokesSystem};
use crate::macro_transport::{AdvectionScheme, TimeScheme};

/// Errors from the microscopic reference solvers.
#[derive(Debug)]
pub enum MicroError {
    /// A data field does not conform to the layer grid.
    ShapeMismatch { what: &'static str },
    /// Bad solver or stepping parameters.
    InvalidParameters(&'static str),
    /// Linear solver failure.
    Solver(LinsolveError),
    /// The monotone scheme produced values outside the admissible range.
    NonphysicalValue { value: f64, step: usize },
}

impl fmt::Display for MicroError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MicroError::ShapeMismatch { what } => {
                write!(f, "field does not conform to the layer grid: {what}")
            }
            MicroError::InvalidParameters(s) => write!(f, "invalid parameters: {s}"),
            MicroError::Solver(e) => write!(f, "linear solve failed: {e}"),
            MicroError::NonphysicalValue { value, step } => write!(
                f,
                "monotone scheme left the admissible range at step {step}: {value}"
            ),
        }
    }
}

impl core::error::Error for MicroError {}

impl From<LinsolveError> for MicroError {
    fn from(e: LinsolveError) -> Self {
        MicroError::Solver(e)
    }
}

/// Iteration controls for the microscopic Stokes solve.
#[derive(Clone, Debug)]
pub struct MicroStokesOptions {
    /// Relative residual target of the pressure iteration.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for MicroStokesOptions {
    fn default() -> Self {
        MicroStokesOptions {
            tol: 1e-8,
            max_outer: 2000,
            max_inner: 400_000,
        }
    }
}

/// Microscopic Stokes solution on the layer.
#[derive(Clone, Debug)]
pub struct MicroStokesSolution {
    velocity: VectorField,
    /// Full pressure `p = π + p^b` on fluid cells.
    pressure: ScalarField,
    /// Shifted pressure `π` (the solver unknown).
    shifted_pressure: ScalarField,
    outer: usize,
    inner_iterations: usize,
    divergence_linf: f64,
    momentum_residual: f64,
    /// Vertical volume flux through each horizontal cut, one value per
    /// vertical face level (equal across levels for a divergence-free
    /// field with impermeable lateral walls).
    cut_fluxes: Vec<f64>,
}

impl MicroStokesSolution {
    pub fn velocity(&self) -> &VectorField {
        &self.velocity
    }

    pub fn pressure(&self) -> &ScalarField {
        &self.pressure
    }

    pub fn shifted_pressure(&self) -> &ScalarField {
        &self.shifted_pressure
    }

    pub fn outer_iterations(&self) -> usize {
        self.outer
    }

    pub fn inner_iterations(&self) -> usize {
        self.inner_iterations
    }

    pub fn divergence_linf(&self) -> f64 {
        self.divergence_linf
    }

    pub fn momentum_residual(&self) -> f64 {
        self.momentum_residual
    }

    pub fn cut_fluxes(&self) -> &[f64] {
        &self.cut_fluxes
    }
}

/// Solves the microscopic Stokes system. `f` holds the body force at
/// faces; `pb_cells` the boundary-pressure extension at cell centers;
/// `pb_bottom`/`pb_top` its plate traces per horizontal cell.
pub fn solve_micro_stokes(
    layer: &LayerGeometry,
    f: &VectorField,
    pb_cells: &ScalarField,
    pb_bottom: &[f64],
    pb_top: &[f64],
    opts: &MicroStokesOptions,
) -> Result<MicroStokesSolution, MicroError> {
    let grid = layer.grid();
    let n = grid.dim();
    if f.grid().cell_count() != grid.cell_count() {
        return Err(MicroError::ShapeMismatch {
            what: "force field grid",
        });
    }
    if pb_cells.values().len() != grid.cell_count() {
        return Err(MicroError::ShapeMismatch {
            what: "boundary-pressure cell extension",
        });
    }
    let hcount = ix::total(&grid.cells()[..n - 1]);
    if pb_bottom.len() != hcount || pb_top.len() != hcount {
        return Err(MicroError::ShapeMismatch {
            what: "plate pressure traces",
        });
    }
    let mut bc = vec![AxisBc::Wall; n];
    bc[n - 1] = AxisBc::Free;
    let system = StokesSystem::assemble(grid, layer.fluid_mask(), &bc);
    let mut rhs = vec![0.0f64; system.n_velocity()];
    system.add_force_rhs(f, 1.0, &mut rhs);
    system.add_boundary_pressure_rhs(pb_cells, pb_bottom, pb_top, &mut rhs);
    let saddle_opts = SaddleOptions {
        tol: opts.tol,
        max_outer: opts.max_outer,
        inner: SpdOptions {
            tol: 1e-10,
            max_iter: opts.max_inner,
            projection: MeanProjection::None,
        },
        // The natural plate condition fixes the pressure level.
        pressure_projection: MeanProjection::None,
        pressure_mass: None,
    };
    let g = vec![0.0f64; system.n_pressure()];
    let sol = linsolve::solve_saddle(&system.a, &system.b, &rhs, &g, &saddle_opts)?;
    let velocity = system.velocity_field(&sol.u);
    let shifted_pressure = system.pressure_field(&sol.p);
    let mut pressure = shifted_pressure.clone();
    for c in 0..grid.cell_count() {
        if layer.fluid_mask()[c] {
            let v = pressure.get(c) + pb_cells.get(c);
            pressure.set(c, v);
        }
    }
    // Vertical flux through each horizontal cut.
    let fdims = grid.face_dims(n - 1);
    let fstrides = ix::strides(&ix::pad_dims(&fdims));
    let area = grid.cell_volume() / grid.spacing()[n - 1];
    let levels = fdims[n - 1];
    let mut cut_fluxes = vec![0.0f64; levels];
    for (_, idx) in ix::iter(&fdims) {
        let lvl = idx[n - 1];
        cut_fluxes[lvl] += area * velocity.comp(n - 1)[ix::lin(&fstrides, &idx)];
    }
    Ok(MicroStokesSolution {
        velocity,
        pressure,
        shifted_pressure,
        outer: sol.outer.iterations,
        inner_iterations: sol.inner_iterations,
        divergence_linf: system.divergence_linf(&sol.u),
        momentum_residual: sol.momentum_residual,
        cut_fluxes,
    })
}

/// Lateral condition of the microscopic transport equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LateralBc {
    /// No diffusive flux through the lateral boundary.
    NoFlux,
    /// Periodic identification of opposite lateral boundaries (the layer
    /// tiles consistently; the lateral Stokes velocity vanishes there, so
    /// only diffusive fluxes wrap).
    Periodic,
}

/// Coefficients of the scaled microscopic transport equation
/// `∂_t c + a·u·∇c = div(diag(D_h,…,D_v)∇c) + g`.
#[derive(Clone, Copy, Debug)]
pub struct MicroTransportParams {
    /// Advective scale `a` multiplying the stored Stokes velocity.
    pub advect_coeff: f64,
    /// Horizontal diffusion coefficient.
    pub diff_horizontal: f64,
    /// Vertical diffusion coefficient.
    pub diff_vertical: f64,
    pub lateral: LateralBc,
}

impl MicroTransportParams {
    /// The thin-layer scalings for layer scales `(ε, α)` and molecular
    /// diffusivity `d`: the original equation
    /// `ε^{−α}∂_t c + ε^{−2}u·∇c = div(D∇c) + ε^{−α}g` with
    /// `D = ε^α·d·I` (slow-horizontal) or
    /// `D = d·diag(ε^{−α},…,ε^{−α},ε^α)` (fast-horizontal), multiplied
    /// through by `ε^α`.
    pub fn scaled(case: DiffusionCase, d: f64, scales: &AdmissibleScales) -> Self {
        let eps = scales.eps_f64();
        let ea = scales.half_thickness_f64();
        let advect_coeff = ea / (eps * eps);
        match case {
            DiffusionCase::SlowHorizontal => MicroTransportParams {
                advect_coeff,
                diff_horizontal: ea * ea * d,
                diff_vertical: ea * ea * d,
                lateral: LateralBc::NoFlux,
            },
            DiffusionCase::FastHorizontal => MicroTransportParams {
                advect_coeff,
                diff_horizontal: d,
                diff_vertical: ea * ea * d,
                lateral: LateralBc::Periodic,
            },
        }
    }
}

/// Full description of one microscopic transport run.
#[derive(Clone, Debug)]
pub struct MicroTransportProblem {
    pub params: MicroTransportParams,
    /// Source `g` at cell centers, constant in time.
    pub source: ScalarField,
    /// Dirichlet data at the bottom plate per horizontal cell.
    pub c_bottom: Vec<f64>,
    /// Dirichlet data at the top plate per horizontal cell.
    pub c_top: Vec<f64>,
    pub initial: ScalarField,
    pub dt: f64,
    pub steps: usize,
    pub time_scheme: TimeScheme,
    pub advection: AdvectionScheme,
    pub solver: SpdOptions,
}

/// Per-run monitors of the microscopic transport solve.
#[derive(Clone, Copy, Debug)]
pub struct MicroTransportDiagnostics {
    /// Largest relative mass-ledger residual over all steps:
    /// `d(mass)/dt + plate outflux − total source`.
    pub mass_residual: f64,
    /// Largest overshoot beyond the admissible range
    /// `[hull_min + t·min(0, inf g), hull_max + t·max(0, sup g)]`.
    pub bound_excess: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub linear_iterations: usize,
}

/// Result of a microscopic transport run.
#[derive(Clone, Debug)]
pub struct MicroTransportSolution {
    final_state: ScalarField,
    diagnostics: MicroTransportDiagnostics,
}

impl MicroTransportSolution {
    pub fn final_state(&self) -> &ScalarField {
        &self.final_state
    }

    pub fn diagnostics(&self) -> &MicroTransportDiagnostics {
        &self.diagnostics
    }
}

/// Runs the microscopic transport equation with the velocity of a
/// microscopic Stokes solution.
pub fn solve_micro_transport(
    layer: &LayerGeometry,
    velocity: &VectorField,
    problem: &MicroTransportProblem,
) -> Result<MicroTransportSolution, MicroError> {
    let grid = layer.grid();
    let n = grid.dim();
    let dims = grid.cells();
    let strides = ix::strides(&ix::pad_dims(dims));
    let open = layer.fluid_mask();
    if velocity.grid().cell_count() != grid.cell_count() {
        return Err(MicroError::ShapeMismatch {
            what: "velocity field grid",
        });
    }
    if problem.source.values().len() != grid.cell_count()
        || problem.initial.values().len() != grid.cell_count()
    {
        return Err(MicroError::ShapeMismatch {
            what: "source or initial state cell count",
        });
    }
    let hcount = ix::total(&dims[..n - 1]);
    if problem.c_bottom.len() != hcount || problem.c_top.len() != hcount {
        return Err(MicroError::ShapeMismatch {
            what: "plate data count",
        });
    }
    if !(problem.dt > 0.0) || problem.steps == 0 {
        return Err(MicroError::InvalidParameters(
            "positive dt and at least one step are required",
        ));
    }
    let p = &problem.params;
    if !(p.diff_horizontal >= 0.0) || !(p.diff_vertical > 0.0) {
        return Err(MicroError::InvalidParameters(
            "diffusion coefficients must be positive (vertical) and nonnegative (horizontal)",
        ));
    }

    // Unknown numbering over fluid cells.
    let mut slot = vec![usize::MAX; grid.cell_count()];
    let mut fluid_lin: Vec<usize> = Vec::new();
    for c in 0..grid.cell_count() {
        if open[c] {
            slot[c] = fluid_lin.len();
            fluid_lin.push(c);
        }
    }
    let nf = fluid_lin.len();
    let vol = grid.cell_volume();
    let h = grid.spacing();
    let theta = problem.time_scheme.theta_value();

    // Assemble the time-independent spatial operator `L` (per unit cell
    // volume) and the boundary-data load `bc`.
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut bc_load = vec![0.0f64; nf];

    // Records the conservative two-sided contribution of an open face
    // with given advective face velocity and diffusive conductance.
    fn couple(
        trips: &mut Vec<(usize, usize, f64)>,
        advection: AdvectionScheme,
        lo: usize,
        hi: usize,
        v_face: f64,
        cond: f64,
        he: f64,
    ) {
        // Diffusion.
        trips.push((lo, lo, cond));
        trips.push((lo, hi, -cond));
        trips.push((hi, hi, cond));
        trips.push((hi, lo, -cond));
        // Advection: flux `v·c_face·area/vol = v·c_face/h` out of `lo`.
        match advection {
            AdvectionScheme::Upwind => {
                if v_face >= 0.0 {
                    trips.push((lo, lo, v_face / he));
                    trips.push((hi, lo, -v_face / he));
                } else {
                    trips.push((lo, hi, v_face / he));
                    trips.push((hi, hi, -v_face / he));
                }
            }
            AdvectionScheme::Central => {
                trips.push((lo, lo, 0.5 * v_face / he));
                trips.push((lo, hi, 0.5 * v_face / he));
                trips.push((hi, lo, -0.5 * v_face / he));
                trips.push((hi, hi, -0.5 * v_face / he));
            }
        }
    }

    let face_strides: Vec<ix::Idx> = (0..n)
        .map(|e| ix::strides(&ix::pad_dims(&grid.face_dims(e))))
        .collect();
    for (c, idx) in ix::iter(dims) {
        if !open[c] {
            continue;
        }
        let row = slot[c];
        for e in 0..n {
            let fstrides = face_strides[e];
            let diff_e = if e == n - 1 {
                p.diff_vertical
            } else {
                p.diff_horizontal
            };
            let interior_cond = diff_e / (h[e] * h[e]);
            // High-side face of this cell along axis e (visit each face
            // from its low cell only).
            if idx[e] + 1 < dims[e] {
                let mut jidx = idx;
                jidx[e] += 1;
                let cj = ix::lin(&strides, &jidx);
                if open[cj] {
                    let mut fidx = idx;
                    fidx[e] += 1;
                    let v_face =
                        p.advect_coeff * velocity.comp(e)[ix::lin(&fstrides, &fidx)];
                    couple(
                        &mut trips,
                        problem.advection,
                        row,
                        slot[cj],
                        v_face,
                        interior_cond,
                        h[e],
                    );
                }
                // Interface faces (obstacle surface) carry no flux.
            } else if e < n - 1 {
                // High lateral boundary: wrap coupling when periodic and
                // both wrap partners are fluid; the wrapped Stokes
                // velocity is zero on the lateral wall, so only diffusion
                // crosses.
                if p.lateral == LateralBc::Periodic {
                    let mut jidx = idx;
                    jidx[e] = 0;
                    let cj = ix::lin(&strides, &jidx);
                    if open[cj] {
                        couple(
                            &mut trips,
                            problem.advection,
                            row,
                            slot[cj],
                            0.0,
                            interior_cond,
                            h[e],
                        );
                    }
                }
                // NoFlux: nothing.
            } else {
                // Top plate: Dirichlet through a half cell.
                let hl = horizontal_lin(&idx, dims, n);
                let mut fidx = idx;
                fidx[e] += 1;
                let v_face = p.advect_coeff * velocity.comp(e)[ix::lin(&fstrides, &fidx)];
                let cond = 2.0 * p.diff_vertical / (h[e] * h[e]);
                trips.push((row, row, cond));
                bc_load[row] += cond * problem.c_top[hl];
                let outflow_value_is_cell = match problem.advection {
                    AdvectionScheme::Upwind => v_face >= 0.0,
                    AdvectionScheme::Central => false,
                };
                if outflow_value_is_cell {
                    trips.push((row, row, v_face / h[e]));
                } else {
                    bc_load[row] -= v_face / h[e] * problem.c_top[hl];
                }
            }
            // Low-side boundary faces.
            if idx[e] == 0 {
                if e == n - 1 {
                    // Bottom plate.
                    let hl = horizontal_lin(&idx, dims, n);
                    let fidx = idx;
                    let v_face = p.advect_coeff * velocity.comp(e)[ix::lin(&fstrides, &fidx)];
                    let cond = 2.0 * p.diff_vertical / (h[e] * h[e]);
                    trips.push((row, row, cond));
                    bc_load[row] += cond * problem.c_bottom[hl];
                    let inflow_value_is_boundary = match problem.advection {
                        AdvectionScheme::Upwind => v_face >= 0.0,
                        AdvectionScheme::Central => true,
                    };
                    if inflow_value_is_boundary {
                        bc_load[row] += v_face / h[e] * problem.c_bottom[hl];
                    } else {
                        trips.push((row, row, -v_face / h[e]));
                    }
                }
                // Low lateral boundary: the wrap was handled from the
                // high side; NoFlux adds nothing.
            }
        }
    }
    let l_op = SparseMatrix::from_triplets(nf, nf, &trips, false)?;
    let mut step_trips: Vec<(usize, usize, f64)> = Vec::with_capacity(trips.len() + nf);
    for &(r, c, v) in &trips {
        step_trips.push((r, c, theta * v));
    }
    for i in 0..nf {
        step_trips.push((i, i, 1.0 / problem.dt));
    }
    let step_matrix = SparseMatrix::from_triplets(nf, nf, &step_trips, false)?;

    // Data hull and source growth for the extremum monitor.
    let mut hull_min = f64::INFINITY;
    let mut hull_max = f64::NEG_INFINITY;
    for &b in problem.c_bottom.iter().chain(problem.c_top.iter()) {
        hull_min = hull_min.min(b);
        hull_max = hull_max.max(b);
    }
    let mut g_min = 0.0f64;
    let mut g_max = 0.0f64;
    let mut source = vec![0.0f64; nf];
    let mut state = vec![0.0f64; nf];
    let mut total_source = 0.0f64;
    for (u, &c) in fluid_lin.iter().enumerate() {
        let g = problem.source.get(c);
        source[u] = g;
        g_min = g_min.min(g);
        g_max = g_max.max(g);
        total_source += g * vol;
        let v0 = problem.initial.get(c);
        state[u] = v0;
        hull_min = hull_min.min(v0);
        hull_max = hull_max.max(v0);
    }

    let monotone = problem.advection == AdvectionScheme::Upwind
        && problem.time_scheme == TimeScheme::ImplicitEuler;
    let mut mass_residual = 0.0f64;
    let mut bound_excess = 0.0f64;
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    let mut linear_iterations = 0usize;

    // Plate outflux of a state (for the mass ledger): recomputed from the
    // same flux expressions the matrix carries.
    let plate_outflux = |c_state: &[f64]| -> f64 {
        let mut out = 0.0f64;
        let hv = h[n - 1];
        let area = vol / hv;
        let fdims = grid.face_dims(n - 1);
        let fstrides = ix::strides(&ix::pad_dims(&fdims));
        for (c, idx) in ix::iter(dims) {
            if !open[c] {
                continue;
            }
            let u = slot[c];
            let hl = horizontal_lin(&idx, dims, n);
            if idx[n - 1] == 0 {
                let fidx = idx;
                let v_face =
                    p.advect_coeff * velocity.comp(n - 1)[ix::lin(&fstrides, &fidx)];
                let face_value = match problem.advection {
                    AdvectionScheme::Upwind => {
                        if v_face >= 0.0 {
                            problem.c_bottom[hl]
                        } else {
                            c_state[u]
                        }
                    }
                    AdvectionScheme::Central => problem.c_bottom[hl],
                };
                out += area
                    * (-v_face * face_value
                        + p.diff_vertical * (c_state[u] - problem.c_bottom[hl]) / (0.5 * hv));
            }
            if idx[n - 1] + 1 == dims[n - 1] {
                let mut fidx = idx;
                fidx[n - 1] += 1;
                let v_face =
                    p.advect_coeff * velocity.comp(n - 1)[ix::lin(&fstrides, &fidx)];
                let face_value = match problem.advection {
                    AdvectionScheme::Upwind => {
                        if v_face >= 0.0 {
                            c_state[u]
                        } else {
                            problem.c_top[hl]
                        }
                    }
                    AdvectionScheme::Central => problem.c_top[hl],
                };
                out += area
                    * (v_face * face_value
                        + p.diff_vertical * (c_state[u] - problem.c_top[hl]) / (0.5 * hv));
            }
        }
        out
    };

    let mut theta_state = vec![0.0f64; nf];
    for step in 1..=problem.steps {
        let t_new = step as f64 * problem.dt;
        // rhs = c_old/dt − (1−θ)·L c_old + bc + g.
        let mut rhs = vec![0.0f64; nf];
        l_op.matvec(&state, &mut rhs);
        for i in 0..nf {
            rhs[i] = state[i] / problem.dt - (1.0 - theta) * rhs[i] + bc_load[i] + source[i];
        }
        let (new_state, rep) = linsolve::solve_bicgstab(&step_matrix, &rhs, &problem.solver)?;
        linear_iterations += rep.iterations;

        for i in 0..nf {
            theta_state[i] = theta * new_state[i] + (1.0 - theta) * state[i];
        }
        let outflux = plate_outflux(&theta_state);
        let mut dmass = 0.0f64;
        for i in 0..nf {
            dmass += new_state[i] - state[i];
        }
        dmass *= vol / problem.dt;
        let residual = dmass + outflux - total_source;
        let scale = dmass
            .abs()
            .max(outflux.abs())
            .max(total_source.abs())
            .max(1e-30);
        mass_residual = mass_residual.max(residual.abs() / scale);

        let lo_bound = hull_min + t_new * g_min.min(0.0);
        let hi_bound = hull_max + t_new * g_max.max(0.0);
        let mut step_min = f64::INFINITY;
        let mut step_max = f64::NEG_INFINITY;
        for &v in &new_state {
            step_min = step_min.min(v);
            step_max = step_max.max(v);
        }
        min_value = min_value.min(step_min);
        max_value = max_value.max(step_max);
        let excess = (step_max - hi_bound).max(lo_bound - step_min).max(0.0);
        bound_excess = bound_excess.max(excess);
        if monotone && excess > 1e-8 * (1.0 + hi_bound.abs() + lo_bound.abs()) {
            return Err(MicroError::NonphysicalValue {
                value: if step_max - hi_bound > lo_bound - step_min {
                    step_max
                } else {
                    step_min
                },
                step,
            });
        }
        state = new_state;
    }

    let mut final_state = ScalarField::zeros_masked(grid, open.to_vec())
        .expect("fluid mask matches the layer grid");
    for (u, &c) in fluid_lin.iter().enumerate() {
        final_state.set(c, state[u]);
    }
    Ok(MicroTransportSolution {
        final_state,
        diagnostics: MicroTransportDiagnostics {
            mass_residual,
            bound_excess,
            min_value,
            max_value,
            linear_iterations,
        },
    })
}

/// Linear index of a cell's horizontal position.
fn horizontal_lin(idx: &ix::Idx, dims: &[usize], n: usize) -> usize {
    let hstrides = ix::strides(&ix::pad_dims(&dims[..n - 1]));
    let mut hidx = *idx;
    hidx[n - 1] = 0;
    ix::lin(&hstrides, &hidx)
}
