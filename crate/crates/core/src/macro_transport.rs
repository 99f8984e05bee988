//! Effective solute transport on the rescaled layer `Σ × (−1, 1)`.
//!
//! Both diffusivity scalings lead to a parabolic limit problem for the
//! concentration `c₀(x̄, ζ, t)` in which advection acts only vertically,
//! with the column-constant Darcy flux `ū_v(x̄)`:
//!
//! * slow-horizontal: `φ ∂_t c₀ + ū_v ∂_ζ c₀ = ∂_ζ(D_v ∂_ζ c₀) + g₀`,
//!   an independent one-dimensional problem per column (solved directly
//!   with the Thomas algorithm each step);
//! * fast-horizontal: the same plus horizontal diffusion
//!   `div_x̄(D̄ ∇_x̄ c₀)` with the effective horizontal block `D̄`
//!   (restricted here to diagonal `D̄`; solved with BiCGStab).
//!
//! `φ` is the cell porosity weighting the time derivative. Boundary data
//! is Dirichlet at `ζ = ±1`, imposed through half-cell fluxes so the
//! boundary value sits exactly on the plate; horizontal axes are
//! periodic. Fluxes are conservative, advection is first-order upwind by
//! default (a centered variant is available), and time stepping is
//! implicit Euler by default (Crank–Nicolson available). Every step
//! updates a mass ledger and a discrete extremum monitor.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cell_diffusion::{
    CellDiffusionSolutions, DiffusionCase, EffectiveDiffusion, VerticalCorrector,
};
use crate::discrete::{ScalarField, StructuredGrid};
use crate::indexutil as ix;
use crate::interp;
use crate::linsolve::{self, LinsolveError, SparseMatrix, SpdOptions};

/// Errors from the effective transport solve.
#[derive(Debug)]
pub enum MacroTransportError {
    /// The effective horizontal block has a significant off-diagonal
    /// entry; this solver only treats diagonal horizontal tensors.
    NonDiagonalTensor { entry: f64 },
    /// A coefficient that must be positive is not.
    NonpositiveCoefficient { what: &'static str, value: f64 },
    /// A data field does not conform to the macro grid.
    ShapeMismatch { what: &'static str },
    /// The grid is not a layer grid (periodic horizontally, bounded
    /// vertically).
    InvalidGrid(String),
    /// Bad time-stepping parameters.
    InvalidParameters(&'static str),
    /// Linear solver failure.
    Solver(LinsolveError),
    /// The monotone scheme produced values outside the admissible range,
    /// which indicates a solver failure rather than model behavior.
    NonphysicalNegativity { value: f64, step: usize },
    /// Corrector reconstruction was given solutions for the other case.
    CaseMismatch,
}

impl fmt::Display for MacroTransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacroTransportError::NonDiagonalTensor { entry } => write!(
                f,
                "effective horizontal diffusion must be diagonal, found off-diagonal {entry}"
            ),
            MacroTransportError::NonpositiveCoefficient { what, value } => {
                write!(f, "{what} must be positive, got {value}")
            }
            MacroTransportError::ShapeMismatch { what } => {
                write!(f, "field does not conform to the macro grid: {what}")
            }
            MacroTransportError::InvalidGrid(s) => write!(f, "invalid macro grid: {s}"),
            MacroTransportError::InvalidParameters(s) => write!(f, "invalid parameters: {s}"),
            MacroTransportError::Solver(e) => write!(f, "transport step failed: {e}"),
            MacroTransportError::NonphysicalNegativity { value, step } => write!(
                f,
                "monotone scheme left the admissible range at step {step}: {value}"
            ),
            MacroTransportError::CaseMismatch => {
                write!(f, "cell solutions do not match the requested diffusion case")
            }
        }
    }
}

impl core::error::Error for MacroTransportError {}

impl From<LinsolveError> for MacroTransportError {
    fn from(e: LinsolveError) -> Self {
        MacroTransportError::Solver(e)
    }
}

/// Time integrator for the parabolic step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeScheme {
    /// First-order implicit Euler (default; unconditionally monotone with
    /// upwind advection).
    ImplicitEuler,
    /// Second-order Crank–Nicolson (may oscillate at large steps).
    CrankNicolson,
}

impl TimeScheme {
    pub(crate) fn theta_value(self) -> f64 {
        match self {
            TimeScheme::ImplicitEuler => 1.0,
            TimeScheme::CrankNicolson => 0.5,
        }
    }
}

/// Spatial treatment of the advective flux.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdvectionScheme {
    /// First-order upwind (default; monotone).
    Upwind,
    /// Second-order centered (may oscillate at cell Péclet above 1).
    Central,
}

/// Coefficients of the limit transport model, extracted from an effective
/// diffusion tensor.
#[derive(Clone, Debug)]
pub struct TransportCoefficients {
    porosity: f64,
    vertical: f64,
    /// Per-horizontal-axis diffusion; empty in the slow-horizontal case.
    horizontal: Vec<f64>,
    case: DiffusionCase,
}

impl TransportCoefficients {
    /// Extracts the coefficients the macro model needs. The horizontal
    /// block must be diagonal (relative off-diagonal below `1e−12`); a
    /// general symmetric block is outside this solver's scope.
    pub fn from_effective(eff: &EffectiveDiffusion) -> Result<Self, MacroTransportError> {
        let n = eff.dim();
        let nh = n - 1;
        let porosity = eff.porosity();
        if !(porosity > 0.0) {
            return Err(MacroTransportError::NonpositiveCoefficient {
                what: "porosity",
                value: porosity,
            });
        }
        let vertical = eff.vertical();
        if !(vertical > 0.0) {
            return Err(MacroTransportError::NonpositiveCoefficient {
                what: "vertical effective diffusion",
                value: vertical,
            });
        }
        let mut horizontal = Vec::new();
        if eff.case() == DiffusionCase::FastHorizontal {
            let mut scale = 0.0f64;
            for i in 0..nh {
                scale = scale.max(eff.entry(i, i).abs());
            }
            for i in 0..nh {
                for j in 0..nh {
                    if i != j && eff.entry(i, j).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                        return Err(MacroTransportError::NonDiagonalTensor {
                            entry: eff.entry(i, j),
                        });
                    }
                }
                horizontal.push(eff.entry(i, i));
            }
        }
        Ok(TransportCoefficients {
            porosity,
            vertical,
            horizontal,
            case: eff.case(),
        })
    }

    /// Builds coefficients directly (for closed-form tests).
    pub fn from_parts(
        case: DiffusionCase,
        porosity: f64,
        vertical: f64,
        horizontal: Vec<f64>,
    ) -> Result<Self, MacroTransportError> {
        if !(porosity > 0.0) {
            return Err(MacroTransportError::NonpositiveCoefficient {
                what: "porosity",
                value: porosity,
            });
        }
        if !(vertical > 0.0) {
            return Err(MacroTransportError::NonpositiveCoefficient {
                what: "vertical effective diffusion",
                value: vertical,
            });
        }
        if case == DiffusionCase::SlowHorizontal && !horizontal.is_empty() {
            return Err(MacroTransportError::InvalidParameters(
                "slow-horizontal transport has no horizontal diffusion",
            ));
        }
        Ok(TransportCoefficients {
            porosity,
            vertical,
            horizontal,
            case,
        })
    }

    pub fn case(&self) -> DiffusionCase {
        self.case
    }

    pub fn porosity(&self) -> f64 {
        self.porosity
    }

    pub fn vertical(&self) -> f64 {
        self.vertical
    }

    pub fn horizontal(&self) -> &[f64] {
        &self.horizontal
    }
}

/// Full description of one effective transport run.
#[derive(Clone, Debug)]
pub struct MacroTransportProblem {
    pub grid: StructuredGrid,
    pub coefficients: TransportCoefficients,
    /// Column-constant vertical Darcy flux, one value per horizontal cell.
    pub column_velocity: Vec<f64>,
    /// Macro source `g₀` at cell centers, constant in time.
    pub source: ScalarField,
    /// Dirichlet data at `ζ = −1` per horizontal cell, constant in time.
    pub c_bottom: Vec<f64>,
    /// Dirichlet data at `ζ = +1` per horizontal cell, constant in time.
    pub c_top: Vec<f64>,
    pub initial: ScalarField,
    pub dt: f64,
    pub steps: usize,
    pub time_scheme: TimeScheme,
    pub advection: AdvectionScheme,
    /// Step indices at which the state is recorded (the final state is
    /// always recorded).
    pub snapshot_steps: Vec<usize>,
    pub solver: SpdOptions,
}

/// Per-run monitors.
#[derive(Clone, Copy, Debug)]
pub struct MacroTransportDiagnostics {
    /// Largest relative mass-ledger residual over all steps:
    /// `φ·d(mass)/dt + boundary outflux − total source`.
    pub mass_residual: f64,
    /// Largest overshoot beyond the admissible range
    /// `[hull_min + t·min(0, inf g/φ), hull_max + t·max(0, sup g/φ)]`
    /// where the hull spans the initial and boundary data.
    pub hull_excess: f64,
    pub min_value: f64,
    pub max_value: f64,
    /// Largest advective step ratio `|ū_v|·dt/h_ζ`.
    pub advective_cfl: f64,
    /// Largest cell Péclet number `|ū_v|·h_ζ/(2 D_v)`.
    pub cell_peclet: f64,
    /// Set when the chosen schemes cannot guarantee monotone profiles for
    /// these parameters (centered advection at Péclet above 1, or
    /// Crank–Nicolson at advective step ratio above 1).
    pub oscillation_risk: bool,
    pub linear_iterations: usize,
}

/// Result of an effective transport run.
#[derive(Clone, Debug)]
pub struct MacroTransportSolution {
    final_state: ScalarField,
    snapshots: Vec<(usize, ScalarField)>,
    diagnostics: MacroTransportDiagnostics,
}

impl MacroTransportSolution {
    pub fn final_state(&self) -> &ScalarField {
        &self.final_state
    }

    /// Recorded states as `(step index, state)`, in step order.
    pub fn snapshots(&self) -> &[(usize, ScalarField)] {
        &self.snapshots
    }

    pub fn diagnostics(&self) -> &MacroTransportDiagnostics {
        &self.diagnostics
    }
}

struct Layout {
    n: usize,
    hdims: Vec<usize>,
    hcount: usize,
    mv: usize,
    strides: ix::Idx,
}

fn layout(grid: &StructuredGrid) -> Layout {
    let n = grid.dim();
    let hdims: Vec<usize> = grid.cells()[..n - 1].to_vec();
    Layout {
        n,
        hcount: ix::total(&hdims),
        hdims,
        mv: grid.cells()[n - 1],
        strides: ix::strides(&ix::pad_dims(grid.cells())),
    }
}

fn check_problem(p: &MacroTransportProblem) -> Result<Layout, MacroTransportError> {
    let n = p.grid.dim();
    for d in 0..n - 1 {
        if !p.grid.periodic()[d] {
            return Err(MacroTransportError::InvalidGrid(String::from(
                "horizontal axes must be periodic",
            )));
        }
    }
    if p.grid.periodic()[n - 1] {
        return Err(MacroTransportError::InvalidGrid(String::from(
            "vertical axis must be bounded",
        )));
    }
    let lay = layout(&p.grid);
    if p.column_velocity.len() != lay.hcount {
        return Err(MacroTransportError::ShapeMismatch {
            what: "column velocity count",
        });
    }
    if p.c_bottom.len() != lay.hcount || p.c_top.len() != lay.hcount {
        return Err(MacroTransportError::ShapeMismatch {
            what: "boundary data count",
        });
    }
    if p.source.values().len() != p.grid.cell_count()
        || p.initial.values().len() != p.grid.cell_count()
    {
        return Err(MacroTransportError::ShapeMismatch {
            what: "source or initial state cell count",
        });
    }
    if !(p.dt > 0.0) || !p.dt.is_finite() {
        return Err(MacroTransportError::InvalidParameters("dt must be positive"));
    }
    if p.steps == 0 {
        return Err(MacroTransportError::InvalidParameters(
            "at least one step is required",
        ));
    }
    if p.coefficients.case == DiffusionCase::FastHorizontal
        && p.coefficients.horizontal.len() != n - 1
    {
        return Err(MacroTransportError::ShapeMismatch {
            what: "horizontal diffusion entries",
        });
    }
    Ok(lay)
}

/// Face coefficients of the one-dimensional vertical operator for one
/// column: `L c` restricted to that column, per unit cell volume, split
/// into matrix stencil (`lower`, `diag`, `upper`) and the boundary-data
/// load `bc` (to be added to the right-hand side with its time weight).
struct ColumnOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    bc: Vec<f64>,
}

fn column_operator(
    mv: usize,
    h: f64,
    v: f64,
    dv: f64,
    cb_bottom: f64,
    cb_top: f64,
    advection: AdvectionScheme,
) -> ColumnOperator {
    let mut lower = vec![0.0f64; mv];
    let mut diag = vec![0.0f64; mv];
    let mut upper = vec![0.0f64; mv];
    let mut bc = vec![0.0f64; mv];
    // Interior faces between cells l and l+1: flux per unit area
    // `v·c_face − dv·(c_{l+1} − c_l)/h`, counted out of l and into l+1;
    // dividing the balance by the cell volume turns areas into 1/h.
    for l in 0..mv.saturating_sub(1) {
        let diff = dv / (h * h);
        diag[l] += diff;
        upper[l] -= diff;
        diag[l + 1] += diff;
        lower[l + 1] -= diff;
        match advection {
            AdvectionScheme::Upwind => {
                if v >= 0.0 {
                    diag[l] += v / h;
                    lower[l + 1] -= v / h;
                } else {
                    upper[l] += v / h;
                    diag[l + 1] -= v / h;
                }
            }
            AdvectionScheme::Central => {
                diag[l] += 0.5 * v / h;
                upper[l] += 0.5 * v / h;
                lower[l + 1] -= 0.5 * v / h;
                diag[l + 1] -= 0.5 * v / h;
            }
        }
    }
    // Bottom plate: Dirichlet value on the face, half-cell diffusive flux
    // `dv·(c_0 − cb)/(h/2)` outward, advective flux `−v·c_face` outward
    // with the face value equal to the boundary value when the flow
    // enters and the cell value when it leaves (upwind), or the boundary
    // value itself (central: the data sits exactly on the face).
    {
        let diff = 2.0 * dv / (h * h);
        diag[0] += diff;
        bc[0] += diff * cb_bottom;
        let inflow_value_is_boundary = match advection {
            AdvectionScheme::Upwind => v >= 0.0,
            AdvectionScheme::Central => true,
        };
        if inflow_value_is_boundary {
            bc[0] += v / h * cb_bottom;
        } else {
            diag[0] -= v / h;
        }
    }
    // Top plate, mirrored.
    {
        let last = mv - 1;
        let diff = 2.0 * dv / (h * h);
        diag[last] += diff;
        bc[last] += diff * cb_top;
        let outflow_value_is_cell = match advection {
            AdvectionScheme::Upwind => v >= 0.0,
            AdvectionScheme::Central => false,
        };
        if outflow_value_is_cell {
            diag[last] += v / h;
        } else {
            bc[last] -= v / h * cb_top;
        }
    }
    ColumnOperator {
        lower,
        diag,
        upper,
        bc,
    }
}

/// Net outflux through the two plates for one column at state `c`,
/// per unit horizontal area (used by the mass ledger).
fn column_boundary_outflux(
    c: &[f64],
    mv: usize,
    h: f64,
    v: f64,
    dv: f64,
    cb_bottom: f64,
    cb_top: f64,
    advection: AdvectionScheme,
) -> f64 {
    let c0 = c[0];
    let cl = c[mv - 1];
    let bottom_face = match advection {
        AdvectionScheme::Upwind => {
            if v >= 0.0 {
                cb_bottom
            } else {
                c0
            }
        }
        AdvectionScheme::Central => cb_bottom,
    };
    let top_face = match advection {
        AdvectionScheme::Upwind => {
            if v >= 0.0 {
                cl
            } else {
                cb_top
            }
        }
        AdvectionScheme::Central => cb_top,
    };
    let bottom = -v * bottom_face + dv * (c0 - cb_bottom) / (0.5 * h);
    let top = v * top_face + dv * (cl - cb_top) / (0.5 * h);
    bottom + top
}

/// Runs the effective transport model.
pub fn solve_macro_transport(
    p: &MacroTransportProblem,
) -> Result<MacroTransportSolution, MacroTransportError> {
    let lay = check_problem(p)?;
    let h = p.grid.spacing()[lay.n - 1];
    let phi = p.coefficients.porosity;
    let dv = p.coefficients.vertical;
    let theta = p.time_scheme.theta_value();

    // Data hull and source growth rate for the extremum monitor.
    let mut hull_min = f64::INFINITY;
    let mut hull_max = f64::NEG_INFINITY;
    for &b in p.c_bottom.iter().chain(p.c_top.iter()) {
        hull_min = hull_min.min(b);
        hull_max = hull_max.max(b);
    }
    for &v in p.initial.values() {
        hull_min = hull_min.min(v);
        hull_max = hull_max.max(v);
    }
    let mut g_min = 0.0f64;
    let mut g_max = 0.0f64;
    for &g in p.source.values() {
        g_min = g_min.min(g);
        g_max = g_max.max(g);
    }

    let mut cfl = 0.0f64;
    let mut peclet = 0.0f64;
    for &v in &p.column_velocity {
        cfl = cfl.max(v.abs() * p.dt / (h * phi));
        peclet = peclet.max(v.abs() * h / (2.0 * dv));
    }
    let oscillation_risk = (p.advection == AdvectionScheme::Central && peclet > 1.0)
        || (p.time_scheme == TimeScheme::CrankNicolson && cfl > 1.0);

    let total_source: f64 = p.source.values().iter().sum::<f64>() * p.grid.cell_volume();

    let mut state: Vec<f64> = p.initial.values().to_vec();
    let mut snapshots: Vec<(usize, ScalarField)> = Vec::new();
    let mut mass_residual = 0.0f64;
    let mut hull_excess = 0.0f64;
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    let mut linear_iterations = 0usize;
    let monotone =
        p.advection == AdvectionScheme::Upwind && p.time_scheme == TimeScheme::ImplicitEuler;

    // Column operators are time-independent: build them once.
    let mut columns: Vec<ColumnOperator> = Vec::with_capacity(lay.hcount);
    let mut column_cells: Vec<Vec<usize>> = Vec::with_capacity(lay.hcount);
    for (hc, hidx) in ix::iter(&lay.hdims) {
        columns.push(column_operator(
            lay.mv,
            h,
            p.column_velocity[hc],
            dv,
            p.c_bottom[hc],
            p.c_top[hc],
            p.advection,
        ));
        let mut cells = Vec::with_capacity(lay.mv);
        for l in 0..lay.mv {
            let mut idx = hidx;
            idx[lay.n - 1] = l;
            cells.push(ix::lin(&lay.strides, &idx));
        }
        column_cells.push(cells);
    }

    let fast = p.coefficients.case == DiffusionCase::FastHorizontal;
    // Fast case: one sparse operator `L` for the full grid (vertical
    // stencils from the column operators plus horizontal diffusion) and
    // the stepping matrix `(φ/dt)·I + θ·L`, both reused every step.
    let fast_system: Option<(SparseMatrix, SparseMatrix, Vec<f64>)> = if fast {
        let ncells = p.grid.cell_count();
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut bc = vec![0.0f64; ncells];
        for hc in 0..lay.hcount {
            let op = &columns[hc];
            let cells = &column_cells[hc];
            for l in 0..lay.mv {
                let row = cells[l];
                trips.push((row, row, op.diag[l]));
                if l > 0 {
                    trips.push((row, cells[l - 1], op.lower[l]));
                }
                if l + 1 < lay.mv {
                    trips.push((row, cells[l + 1], op.upper[l]));
                }
                bc[row] += op.bc[l];
            }
        }
        for (c, idx) in ix::iter(p.grid.cells()) {
            for e in 0..lay.n - 1 {
                let de = p.coefficients.horizontal[e];
                if de == 0.0 {
                    continue;
                }
                let he = p.grid.spacing()[e];
                let coeff = de / (he * he);
                let mut hi_idx = idx;
                hi_idx[e] = (idx[e] + 1) % p.grid.cells()[e];
                let hi = ix::lin(&lay.strides, &hi_idx);
                trips.push((c, c, coeff));
                trips.push((c, hi, -coeff));
                trips.push((hi, hi, coeff));
                trips.push((hi, c, -coeff));
            }
        }
        let l_op = SparseMatrix::from_triplets(ncells, ncells, &trips, false)
            .map_err(MacroTransportError::Solver)?;
        let mut step_trips: Vec<(usize, usize, f64)> = Vec::with_capacity(trips.len() + ncells);
        for &(r, c, v) in &trips {
            step_trips.push((r, c, theta * v));
        }
        for row in 0..ncells {
            step_trips.push((row, row, phi / p.dt));
        }
        let matrix = SparseMatrix::from_triplets(ncells, ncells, &step_trips, false)
            .map_err(MacroTransportError::Solver)?;
        Some((l_op, matrix, bc))
    } else {
        None
    };

    let record = |step: usize, state: &[f64], snaps: &mut Vec<(usize, ScalarField)>| {
        let mut f = ScalarField::zeros(&p.grid);
        f.assign(state).expect("state length matches the grid");
        snaps.push((step, f));
    };

    for step in 1..=p.steps {
        let t_new = step as f64 * p.dt;
        let mut new_state = vec![0.0f64; state.len()];
        if let Some((l_op, matrix, bc)) = &fast_system {
            // rhs = (φ/dt)·c_old − (1−θ)·L c_old + bc + g.
            let ncells = state.len();
            let mut rhs = vec![0.0f64; ncells];
            l_op.matvec(&state, &mut rhs);
            for i in 0..ncells {
                rhs[i] = phi / p.dt * state[i] - (1.0 - theta) * rhs[i]
                    + bc[i]
                    + p.source.values()[i];
            }
            let (x, rep) = linsolve::solve_bicgstab(matrix, &rhs, &p.solver)?;
            linear_iterations += rep.iterations;
            new_state.copy_from_slice(&x);
        } else {
            for hc in 0..lay.hcount {
                let op = &columns[hc];
                let cells = &column_cells[hc];
                let mut lower = vec![0.0f64; lay.mv];
                let mut diagv = vec![0.0f64; lay.mv];
                let mut upper = vec![0.0f64; lay.mv];
                let mut rhs = vec![0.0f64; lay.mv];
                for l in 0..lay.mv {
                    lower[l] = theta * op.lower[l];
                    upper[l] = theta * op.upper[l];
                    diagv[l] = phi / p.dt + theta * op.diag[l];
                    let c_old = state[cells[l]];
                    let mut l_old = op.diag[l] * c_old;
                    if l > 0 {
                        l_old += op.lower[l] * state[cells[l - 1]];
                    }
                    if l + 1 < lay.mv {
                        l_old += op.upper[l] * state[cells[l + 1]];
                    }
                    rhs[l] = phi / p.dt * c_old - (1.0 - theta) * l_old
                        + op.bc[l]
                        + p.source.values()[cells[l]];
                }
                let x = linsolve::solve_tridiagonal(&lower, &diagv, &upper, &rhs)?;
                for l in 0..lay.mv {
                    new_state[cells[l]] = x[l];
                }
            }
        }

        // Mass ledger at the θ-average state: conservative fluxes make the
        // interior contributions cancel, so the balance reduces to the
        // plate outflux against storage and source.
        let vol = p.grid.cell_volume();
        let harea = vol / h;
        let mut outflux = 0.0f64;
        let mut theta_col = vec![0.0f64; lay.mv];
        for hc in 0..lay.hcount {
            let cells = &column_cells[hc];
            for l in 0..lay.mv {
                theta_col[l] = theta * new_state[cells[l]] + (1.0 - theta) * state[cells[l]];
            }
            outflux += harea
                * column_boundary_outflux(
                    &theta_col,
                    lay.mv,
                    h,
                    p.column_velocity[hc],
                    dv,
                    p.c_bottom[hc],
                    p.c_top[hc],
                    p.advection,
                );
        }
        let mut dmass = 0.0f64;
        for i in 0..state.len() {
            dmass += new_state[i] - state[i];
        }
        dmass *= phi * vol / p.dt;
        let residual = dmass + outflux - total_source;
        let scale = dmass
            .abs()
            .max(outflux.abs())
            .max(total_source.abs())
            .max(1e-30);
        mass_residual = mass_residual.max(residual.abs() / scale);

        // Extremum monitor against the data hull grown by the source.
        let lo_bound = hull_min + t_new * (g_min / phi).min(0.0);
        let hi_bound = hull_max + t_new * (g_max / phi).max(0.0);
        let mut step_min = f64::INFINITY;
        let mut step_max = f64::NEG_INFINITY;
        for &v in &new_state {
            step_min = step_min.min(v);
            step_max = step_max.max(v);
        }
        min_value = min_value.min(step_min);
        max_value = max_value.max(step_max);
        let excess = (step_max - hi_bound).max(lo_bound - step_min).max(0.0);
        hull_excess = hull_excess.max(excess);
        if monotone && excess > 1e-8 * (1.0 + hi_bound.abs() + lo_bound.abs()) {
            return Err(MacroTransportError::NonphysicalNegativity {
                value: if step_max - hi_bound > lo_bound - step_min {
                    step_max
                } else {
                    step_min
                },
                step,
            });
        }

        state = new_state;
        if p.snapshot_steps.contains(&step) && step != p.steps {
            record(step, &state, &mut snapshots);
        }
    }
    record(p.steps, &state, &mut snapshots);
    let final_state = snapshots.last().expect("final state recorded").1.clone();

    Ok(MacroTransportSolution {
        final_state,
        snapshots,
        diagnostics: MacroTransportDiagnostics {
            mass_residual,
            hull_excess,
            min_value,
            max_value,
            advective_cfl: cfl,
            cell_peclet: peclet,
            oscillation_risk,
            linear_iterations,
        },
    })
}

/// First-order corrector of the concentration: for the fast-horizontal
/// case the horizontal cell correctors weighted by the horizontal macro
/// gradient, for the slow-horizontal case the full-cell vertical
/// corrector weighted by the vertical macro gradient.
#[derive(Clone, Debug)]
pub struct ConcentrationCorrector {
    case: DiffusionCase,
    /// Cell-centered macro gradient components pairing with the
    /// correctors (horizontal components for fast, the vertical one for
    /// slow).
    gradients: Vec<ScalarField>,
    /// Matching corrector fields on the unit cell.
    correctors: Vec<ScalarField>,
}

impl ConcentrationCorrector {
    pub fn case(&self) -> DiffusionCase {
        self.case
    }

    /// Evaluates the corrector at macro point `x` (layer coordinates) and
    /// micro point `y` (unit-cell coordinates in `[0, 1)ⁿ`).
    pub fn sample(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (grad, chi) in self.gradients.iter().zip(self.correctors.iter()) {
            acc += interp::sample_cell_field(grad, x) * interp::sample_cell_field(chi, y);
        }
        acc
    }
}

/// Cell-centered partial derivative of a macro field along `axis`:
/// centered differences, periodic horizontally, one-sided at the plates.
fn macro_gradient(c0: &ScalarField, axis: usize) -> ScalarField {
    let grid = c0.grid().clone();
    let dims = grid.cells().to_vec();
    let strides = ix::strides(&ix::pad_dims(&dims));
    let h = grid.spacing()[axis];
    let mut out = ScalarField::zeros(&grid);
    for (c, idx) in ix::iter(&dims) {
        let last = dims[axis] - 1;
        let val = if grid.periodic()[axis] {
            let mut lo = idx;
            lo[axis] = (idx[axis] + last) % dims[axis];
            let mut hi = idx;
            hi[axis] = (idx[axis] + 1) % dims[axis];
            (c0.get(ix::lin(&strides, &hi)) - c0.get(ix::lin(&strides, &lo))) / (2.0 * h)
        } else if idx[axis] == 0 {
            let mut hi = idx;
            hi[axis] = 1;
            (c0.get(ix::lin(&strides, &hi)) - c0.get(c)) / h
        } else if idx[axis] == last {
            let mut lo = idx;
            lo[axis] = last - 1;
            (c0.get(c) - c0.get(ix::lin(&strides, &lo))) / h
        } else {
            let mut lo = idx;
            lo[axis] = idx[axis] - 1;
            let mut hi = idx;
            hi[axis] = idx[axis] + 1;
            (c0.get(ix::lin(&strides, &hi)) - c0.get(ix::lin(&strides, &lo))) / (2.0 * h)
        };
        out.set(c, val);
    }
    out
}

/// Builds the concentration corrector sampler from a macro state and the
/// matching cell solutions.
pub fn reconstruct_correctors(
    case: DiffusionCase,
    c0: &ScalarField,
    solutions: &CellDiffusionSolutions,
) -> Result<ConcentrationCorrector, MacroTransportError> {
    if solutions.case() != case {
        return Err(MacroTransportError::CaseMismatch);
    }
    let n = c0.grid().dim();
    let mut gradients = Vec::new();
    let mut correctors = Vec::new();
    match case {
        DiffusionCase::FastHorizontal => {
            if solutions.horizontal().len() != n - 1 {
                return Err(MacroTransportError::CaseMismatch);
            }
            for corr in solutions.horizontal() {
                gradients.push(macro_gradient(c0, corr.axis()));
                correctors.push(corr.field().clone());
            }
        }
        DiffusionCase::SlowHorizontal => match solutions.vertical() {
            VerticalCorrector::FullCell(corr) => {
                gradients.push(macro_gradient(c0, n - 1));
                correctors.push(corr.field().clone());
            }
            VerticalCorrector::Profile(_) => return Err(MacroTransportError::CaseMismatch),
        },
    }
    Ok(ConcentrationCorrector {
        case,
        gradients,
        correctors,
    })
}
