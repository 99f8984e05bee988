//! Convergence studies tying the effective models to the microscopic
//! reference solvers: norm scaling laws in `ε` (slope fits on log–log
//! data) and two-scale comparison errors on matched grids.
//!
//! The macro grid of every study step is chosen to match that step's
//! rescaled micro grid — same horizontal cell count and the vertical
//! coordinate `ζ = x_v / ε^α` on `(−1, 1)` with the same number of cells
//! — so micro and macro cell centers coincide exactly and comparisons
//! need no resampling. Cell problems are scale-independent and are solved
//! once per study.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Needed for the arithmetic methods under no_std builds; test and example
// builds unify num-traits with its std feature, where the inherent f64
// methods shadow the trait and the import goes quiet.
#[allow(unused_imports)]
use num_traits::Float;

use crate::cell_diffusion::{self, CellDiffusionError, DiffusionCase, EffectiveDiffusion};
use crate::cell_stokes::{
    self, CellStokesError, CellStokesOptions, CellStokesSolution, PermeabilityTensor,
    TwoScaleVelocity,
};
use crate::discrete::{
    self, DiscreteError, NormWeights, ScalarField, StructuredGrid, VectorField,
};
use crate::geometry::{
    self, AdmissibleScales, GeometryError, InclusionSpec, LayerGeometry, UnitCellGeometry,
};
use crate::indexutil as ix;
use crate::linsolve::{MeanProjection, SpdOptions};
use crate::macro_darcy::{self, MacroDarcyError};
use crate::macro_transport::{
    self, AdvectionScheme, MacroTransportError, MacroTransportProblem, TimeScheme,
    TransportCoefficients,
};
use crate::micro_reference::{
    self, MicroError, MicroStokesOptions, MicroStokesSolution, MicroTransportParams,
    MicroTransportProblem,
};
use crate::Frac;

/// Errors from convergence studies.
#[derive(Debug)]
pub enum ConvergenceError {
    Geometry(GeometryError),
    CellStokes(CellStokesError),
    CellDiffusion(CellDiffusionError),
    Darcy(MacroDarcyError),
    Transport(MacroTransportError),
    Micro(MicroError),
    Grid(DiscreteError),
    /// Slope fitting needs at least two points.
    InsufficientPoints { got: usize },
    /// Log–log fitting needs strictly positive data.
    NonpositiveValue { value: f64 },
    /// The scale list must decrease strictly.
    NotDecreasing,
    /// Matched-grid comparison got fields of different shapes.
    ShapeMismatch { what: &'static str },
    /// A plan parameter is unusable.
    InvalidPlan(&'static str),
}

impl fmt::Display for ConvergenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvergenceError::Geometry(e) => write!(f, "geometry: {e}"),
            ConvergenceError::CellStokes(e) => write!(f, "cell flow problem: {e}"),
            ConvergenceError::CellDiffusion(e) => write!(f, "cell diffusion problem: {e}"),
            ConvergenceError::Darcy(e) => write!(f, "effective filtration: {e}"),
            ConvergenceError::Transport(e) => write!(f, "effective transport: {e}"),
            ConvergenceError::Micro(e) => write!(f, "microscopic reference: {e}"),
            ConvergenceError::Grid(e) => write!(f, "grid: {e}"),
            ConvergenceError::InsufficientPoints { got } => {
                write!(f, "slope fit needs at least two points, got {got}")
            }
            ConvergenceError::NonpositiveValue { value } => {
                write!(f, "log-log fit needs positive values, got {value}")
            }
            ConvergenceError::NotDecreasing => {
                write!(f, "scale values must decrease strictly")
            }
            ConvergenceError::ShapeMismatch { what } => {
                write!(f, "matched-grid comparison shape mismatch: {what}")
            }
            ConvergenceError::InvalidPlan(s) => write!(f, "invalid study plan: {s}"),
        }
    }
}

impl core::error::Error for ConvergenceError {}

macro_rules! from_error {
    ($variant:ident, $ty:ty) => {
        impl From<$ty> for ConvergenceError {
            fn from(e: $ty) -> Self {
                ConvergenceError::$variant(e)
            }
        }
    };
}

from_error!(Geometry, GeometryError);
from_error!(CellStokes, CellStokesError);
from_error!(CellDiffusion, CellDiffusionError);
from_error!(Darcy, MacroDarcyError);
from_error!(Transport, MacroTransportError);
from_error!(Micro, MicroError);
from_error!(Grid, DiscreteError);

// ---------------------------------------------------------------------
// Manufactured study data.
//
// Smooth data with a mild horizontal modulation and a vertical profile,
// given in rescaled coordinates `(x̄, ζ)` with `ζ ∈ (−1, 1)`. The same
// closed forms drive the microscopic problems (evaluated at
// `ζ = x_v/ε^α`, the boundary pressure additionally scaled by `ε^α`) and
// the effective problems (evaluated directly).
// ---------------------------------------------------------------------

/// Component `comp` of the manufactured body force at `(x̄, ζ)`.
pub fn force_component(comp: usize, dim: usize, x: &[f64]) -> f64 {
    let s = (2.0 * core::f64::consts::PI * x[0]).sin();
    if comp == 0 {
        0.4 + 0.3 * s
    } else if comp + 1 == dim {
        let zeta = x[dim - 1];
        0.5 * (core::f64::consts::FRAC_PI_2 * zeta).cos() + 0.25 * s
    } else {
        0.0
    }
}

/// Manufactured boundary-pressure extension at `(x̄, ζ)`; its traces at
/// `ζ = ±1` are the plate pressures.
pub fn boundary_pressure(dim: usize, x: &[f64]) -> f64 {
    let s = (2.0 * core::f64::consts::PI * x[0]).sin();
    let zeta = x[dim - 1];
    (0.8 + 0.15 * s) * zeta
}

/// Manufactured solute source at `(x̄, ζ)`.
pub fn volume_source(dim: usize, x: &[f64]) -> f64 {
    let s = (2.0 * core::f64::consts::PI * x[0]).sin();
    let zeta = x[dim - 1];
    0.5 + 0.4 * (core::f64::consts::FRAC_PI_2 * zeta).cos() * (1.0 + 0.3 * s)
}

// ---------------------------------------------------------------------
// Study plan.
// ---------------------------------------------------------------------

/// Transport stage of a study.
#[derive(Clone, Debug)]
pub struct TransportPlan {
    pub case: DiffusionCase,
    /// Shared micro/macro time step.
    pub dt: f64,
    /// Final time; must be an integer number of steps.
    pub t_end: f64,
}

/// A convergence study: one unit-cell geometry swept over a strictly
/// decreasing list of admissible scale parameters.
#[derive(Clone, Debug)]
pub struct SweepPlan {
    pub dim: usize,
    /// Unit-cell resolution (cells per axis).
    pub resolution: usize,
    pub inclusion: InclusionSpec,
    pub alpha: Frac,
    /// Strictly decreasing, each admissible for `alpha`.
    pub epsilons: Vec<Frac>,
    /// Horizontal extent `Σ` as integer intervals, one per horizontal
    /// axis.
    pub sigma: Vec<(i64, i64)>,
    /// Molecular diffusivity for the transport stage.
    pub diffusivity: f64,
    /// `None` runs the flow stages only.
    pub transport: Option<TransportPlan>,
}

/// Validates a plan and resolves its scale list.
pub fn validate_sweep(plan: &SweepPlan) -> Result<Vec<AdmissibleScales>, ConvergenceError> {
    if plan.epsilons.len() < 2 {
        return Err(ConvergenceError::InsufficientPoints {
            got: plan.epsilons.len(),
        });
    }
    let mut scales = Vec::with_capacity(plan.epsilons.len());
    let mut last = f64::INFINITY;
    for &eps in &plan.epsilons {
        let s = geometry::check_admissible_scales(eps, plan.alpha)?;
        let e = s.eps_f64();
        if e >= last {
            return Err(ConvergenceError::NotDecreasing);
        }
        last = e;
        scales.push(s);
    }
    if plan.sigma.len() != plan.dim - 1 {
        return Err(ConvergenceError::InvalidPlan(
            "one horizontal interval per horizontal axis is required",
        ));
    }
    if let Some(tp) = &plan.transport {
        if !(tp.dt > 0.0) || !(tp.t_end > 0.0) {
            return Err(ConvergenceError::InvalidPlan(
                "transport needs positive dt and final time",
            ));
        }
        let steps = (tp.t_end / tp.dt).round();
        if steps < 1.0 || ((steps * tp.dt - tp.t_end) / tp.t_end).abs() > 1e-9 {
            return Err(ConvergenceError::InvalidPlan(
                "final time must be an integer number of steps",
            ));
        }
        if !(plan.diffusivity > 0.0) {
            return Err(ConvergenceError::InvalidPlan(
                "transport needs a positive diffusivity",
            ));
        }
    }
    Ok(scales)
}

// ---------------------------------------------------------------------
// Slope fitting.
// ---------------------------------------------------------------------

/// Least-squares fit of `log(value)` against `log(ε)`.
#[derive(Clone, Copy, Debug)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination of the log–log fit.
    pub r_squared: f64,
}

/// Fits a power law `value ≈ C·ε^slope` by least squares in log–log
/// coordinates.
pub fn fit_slope(eps: &[f64], values: &[f64]) -> Result<SlopeFit, ConvergenceError> {
    if eps.len() != values.len() || eps.len() < 2 {
        return Err(ConvergenceError::InsufficientPoints {
            got: eps.len().min(values.len()),
        });
    }
    let m = eps.len();
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for i in 0..m {
        if !(eps[i] > 0.0) {
            return Err(ConvergenceError::NonpositiveValue { value: eps[i] });
        }
        if !(values[i] > 0.0) {
            return Err(ConvergenceError::NonpositiveValue { value: values[i] });
        }
        xs.push(eps[i].ln());
        ys.push(values[i].ln());
    }
    let mf = m as f64;
    let xbar: f64 = xs.iter().sum::<f64>() / mf;
    let ybar: f64 = ys.iter().sum::<f64>() / mf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..m {
        sxx += (xs[i] - xbar) * (xs[i] - xbar);
        sxy += (xs[i] - xbar) * (ys[i] - ybar);
    }
    if sxx == 0.0 {
        return Err(ConvergenceError::NotDecreasing);
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..m {
        let fit = intercept + slope * xs[i];
        ss_res += (ys[i] - fit) * (ys[i] - fit);
        ss_tot += (ys[i] - ybar) * (ys[i] - ybar);
    }
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-28 {
        1.0
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

/// The scaling exponents predicted for the microscopic Stokes solution:
/// `‖u‖ ~ ε^{2+α/2}`, `‖∇u‖ ~ ε^{1+α/2}`, `‖p‖ ~ ε^{3α/2}` (plain
/// `L²(Ω_ε)` norms, so each carries the layer-measure factor `ε^{α/2}`).
#[derive(Clone, Copy, Debug)]
pub struct ExpectedSlopes {
    pub velocity: f64,
    pub velocity_gradient: f64,
    pub pressure: f64,
}

pub fn expected_slopes(alpha: Frac) -> ExpectedSlopes {
    let a = crate::frac_to_f64(alpha);
    ExpectedSlopes {
        velocity: 2.0 + 0.5 * a,
        velocity_gradient: 1.0 + 0.5 * a,
        pressure: 1.5 * a,
    }
}

// ---------------------------------------------------------------------
// Two-scale comparison.
// ---------------------------------------------------------------------

/// Relative two-scale comparison errors at one scale.
#[derive(Clone, Copy, Debug)]
pub struct TwoScaleErrors {
    /// `‖ε^{−2}u_ε − u₀(x, x/ε)‖ / ‖u₀(x, x/ε)‖` over active faces.
    pub velocity: f64,
    /// `‖ε^{−α}p_ε − p₀‖ / ‖p₀‖` over fluid cells.
    pub pressure: f64,
    /// `‖c_ε − c₀‖ / ‖c₀‖` over fluid cells, when transport ran.
    pub concentration: Option<f64>,
}

fn wrap_unit(t: f64) -> f64 {
    t - t.floor()
}

/// Computes the two-scale errors of a microscopic solution against the
/// effective reconstruction. `macro_pressure` (and the concentrations, if
/// given) must live on the matched macro grid: identical cell counts, so
/// cell values are compared index-wise without resampling.
pub fn two_scale_error(
    layer: &LayerGeometry,
    micro: &MicroStokesSolution,
    u0: &TwoScaleVelocity,
    macro_pressure: &ScalarField,
    micro_concentration: Option<&ScalarField>,
    macro_concentration: Option<&ScalarField>,
) -> Result<TwoScaleErrors, ConvergenceError> {
    let grid = layer.grid();
    let n = grid.dim();
    if macro_pressure.grid().cells() != grid.cells() {
        return Err(ConvergenceError::ShapeMismatch {
            what: "macro pressure grid does not match the micro grid",
        });
    }
    let eps = layer.scales().eps_f64();
    let ea = layer.scales().half_thickness_f64();
    let inv_eps2 = 1.0 / (eps * eps);
    let w = NormWeights::default();

    // Velocity over active faces.
    let u = micro.velocity();
    let masks: Vec<Vec<bool>> = (0..n).map(|d| u.mask(d).to_vec()).collect();
    let mut diff = VectorField::zeros_masked(grid, masks.clone())?;
    let mut reference = VectorField::zeros_masked(grid, masks)?;
    let mut xmac = [0.0f64; ix::MAX_DIM];
    let mut y = [0.0f64; ix::MAX_DIM];
    for d in 0..n {
        let fdims = grid.face_dims(d);
        let count = ix::total(&fdims);
        let mut dvals = vec![0.0f64; count];
        let mut rvals = vec![0.0f64; count];
        for (fc, idx) in ix::iter(&fdims) {
            if !u.mask(d)[fc] {
                continue;
            }
            let x = grid.face_center(d, &idx[..n]);
            for e in 0..n {
                xmac[e] = x[e];
                y[e] = wrap_unit(x[e] / eps);
            }
            xmac[n - 1] = x[n - 1] / ea;
            let val0 = u0.velocity(&xmac[..n], &y[..n], d);
            rvals[fc] = val0;
            dvals[fc] = u.comp(d)[fc] * inv_eps2 - val0;
        }
        diff.assign_comp(d, &dvals)?;
        reference.assign_comp(d, &rvals)?;
    }
    let dn = discrete::weighted_norms_vector(&diff, &w).l2;
    let rn = discrete::weighted_norms_vector(&reference, &w).l2;
    let velocity = dn / rn.max(f64::MIN_POSITIVE);

    // Pressure over fluid cells, index-matched.
    let mask = layer.fluid_mask().to_vec();
    let mut pdiff = ScalarField::zeros_masked(grid, mask.clone())?;
    let mut pref = ScalarField::zeros_masked(grid, mask.clone())?;
    let inv_ea = 1.0 / ea;
    for c in 0..grid.cell_count() {
        if !layer.fluid_mask()[c] {
            continue;
        }
        let p0 = macro_pressure.get(c);
        pref.set(c, p0);
        pdiff.set(c, micro.pressure().get(c) * inv_ea - p0);
    }
    let pn = discrete::weighted_norms(&pdiff, &w).l2;
    let prn = discrete::weighted_norms(&pref, &w).l2;
    let pressure = pn / prn.max(f64::MIN_POSITIVE);

    // Concentration over fluid cells, index-matched.
    let concentration = match (micro_concentration, macro_concentration) {
        (Some(ce), Some(c0)) => {
            if c0.grid().cells() != grid.cells() || ce.grid().cells() != grid.cells() {
                return Err(ConvergenceError::ShapeMismatch {
                    what: "concentration grids do not match the micro grid",
                });
            }
            let mut cdiff = ScalarField::zeros_masked(grid, mask.clone())?;
            let mut cref = ScalarField::zeros_masked(grid, mask)?;
            for c in 0..grid.cell_count() {
                if !layer.fluid_mask()[c] {
                    continue;
                }
                cref.set(c, c0.get(c));
                cdiff.set(c, ce.get(c) - c0.get(c));
            }
            let cn = discrete::weighted_norms(&cdiff, &w).l2;
            let crn = discrete::weighted_norms(&cref, &w).l2;
            Some(cn / crn.max(f64::MIN_POSITIVE))
        }
        (None, None) => None,
        _ => {
            return Err(ConvergenceError::ShapeMismatch {
                what: "concentration comparison needs both states",
            })
        }
    };

    Ok(TwoScaleErrors {
        velocity,
        pressure,
        concentration,
    })
}

// ---------------------------------------------------------------------
// The study itself.
// ---------------------------------------------------------------------

/// Everything measured at one scale.
#[derive(Clone, Debug)]
pub struct SweepRecord {
    pub scales: AdmissibleScales,
    /// `L²(Ω_ε)` norm of the microscopic velocity.
    pub velocity_l2: f64,
    /// `L²(Ω_ε)` norm of its gradient.
    pub velocity_grad_l2: f64,
    /// `L²(Ω_ε)` norm of the microscopic pressure.
    pub pressure_l2: f64,
    pub two_scale: TwoScaleErrors,
    /// Mean vertical micro flux over all horizontal cuts, divided by
    /// `ε²` times the total effective vertical flux (≈ 1 when the
    /// effective law holds).
    pub flux_ratio: f64,
    pub stokes_outer: usize,
    pub stokes_inner: usize,
    pub micro_divergence_linf: f64,
    pub micro_mass_residual: Option<f64>,
    pub micro_bound_excess: Option<f64>,
    pub macro_mass_residual: Option<f64>,
}

/// Result of a full study.
#[derive(Clone, Debug)]
pub struct ScalingStudy {
    pub records: Vec<SweepRecord>,
    pub expected: ExpectedSlopes,
    pub velocity_fit: SlopeFit,
    pub gradient_fit: SlopeFit,
    pub pressure_fit: SlopeFit,
    pub permeability: PermeabilityTensor,
    pub effective_diffusion: Option<EffectiveDiffusion>,
}

/// Sampler bundle for the study data of one scale.
struct StudyData {
    force: VectorField,
    pb_cells: ScalarField,
    pb_bottom: Vec<f64>,
    pb_top: Vec<f64>,
}

fn micro_data(layer: &LayerGeometry, n: usize) -> StudyData {
    let grid = layer.grid();
    let ea = layer.scales().half_thickness_f64();
    let to_macro = |x: &[f64]| -> [f64; ix::MAX_DIM] {
        let mut out = [0.0f64; ix::MAX_DIM];
        out[..n].copy_from_slice(&x[..n]);
        out[n - 1] = x[n - 1] / ea;
        out
    };
    let force = VectorField::from_fn(grid, |comp, x| {
        let xm = to_macro(x);
        force_component(comp, n, &xm[..n])
    });
    let pb_cells = ScalarField::from_fn(grid, |x| {
        let xm = to_macro(x);
        ea * boundary_pressure(n, &xm[..n])
    });
    let hdims: Vec<usize> = grid.cells()[..n - 1].to_vec();
    let hcount = ix::total(&hdims);
    let mut pb_bottom = vec![0.0f64; hcount];
    let mut pb_top = vec![0.0f64; hcount];
    let mut xm = [0.0f64; ix::MAX_DIM];
    for (hc, hidx) in ix::iter(&hdims) {
        let mut idx = [0usize; ix::MAX_DIM];
        idx[..n - 1].copy_from_slice(&hidx[..n - 1]);
        let center = grid.cell_center(&idx[..n]);
        xm[..n - 1].copy_from_slice(&center[..n - 1]);
        xm[n - 1] = -1.0;
        pb_bottom[hc] = ea * boundary_pressure(n, &xm[..n]);
        xm[n - 1] = 1.0;
        pb_top[hc] = ea * boundary_pressure(n, &xm[..n]);
    }
    StudyData {
        force,
        pb_cells,
        pb_bottom,
        pb_top,
    }
}

fn transport_solver_options() -> SpdOptions {
    SpdOptions {
        tol: 1e-10,
        max_iter: 200_000,
        projection: MeanProjection::None,
    }
}

/// Scale-independent preparation shared by every sweep member: the unit
/// cell, its flow solutions and permeability, and (when transport runs)
/// the effective diffusion data.
pub struct StudyPrep {
    pub cell: UnitCellGeometry,
    pub cell_solutions: Vec<CellStokesSolution>,
    pub permeability: PermeabilityTensor,
    pub effective: Option<EffectiveDiffusion>,
}

/// Solves the scale-independent problems of a study once.
pub fn prepare_study(plan: &SweepPlan) -> Result<StudyPrep, ConvergenceError> {
    let cell = geometry::build_unit_cell(&plan.inclusion, plan.dim, plan.resolution)?;
    let opts = CellStokesOptions::default();
    let mut cell_solutions = Vec::with_capacity(plan.dim);
    for axis in 0..plan.dim {
        cell_solutions.push(cell_stokes::solve_stokes_cell(&cell, axis, &opts)?);
    }
    let permeability = cell_stokes::permeability(&cell_solutions)?;
    let effective: Option<EffectiveDiffusion> = if let Some(tp) = &plan.transport {
        let dopts = SpdOptions {
            tol: 1e-10,
            max_iter: 200_000,
            projection: MeanProjection::None,
        };
        let sols = cell_diffusion::solve_diffusion_cell(&cell, tp.case, plan.diffusivity, &dopts)?;
        Some(cell_diffusion::effective_diffusion(&cell, &sols, plan.diffusivity)?)
    } else {
        None
    };
    Ok(StudyPrep {
        cell,
        cell_solutions,
        permeability,
        effective,
    })
}

/// Runs the microscopic and effective stages of a study at one scale.
pub fn study_scale(
    plan: &SweepPlan,
    prep: &StudyPrep,
    scales: &AdmissibleScales,
) -> Result<SweepRecord, ConvergenceError> {
    run_one_scale(
        plan,
        &prep.cell_solutions,
        &prep.permeability,
        prep.effective.as_ref(),
        &prep.cell,
        scales,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_one_scale(
    plan: &SweepPlan,
    cell_solutions: &[CellStokesSolution],
    k: &PermeabilityTensor,
    eff: Option<&EffectiveDiffusion>,
    cell: &UnitCellGeometry,
    scales: &AdmissibleScales,
) -> Result<SweepRecord, ConvergenceError> {
    let n = plan.dim;
    let layer = geometry::build_layer(cell, scales.eps, scales.alpha, &plan.sigma)?;
    let grid = layer.grid().clone();
    let data = micro_data(&layer, n);
    let stokes_opts = MicroStokesOptions::default();
    let micro = micro_reference::solve_micro_stokes(
        &layer,
        &data.force,
        &data.pb_cells,
        &data.pb_bottom,
        &data.pb_top,
        &stokes_opts,
    )?;
    let w = NormWeights::default();
    let nu = discrete::weighted_norms_vector(micro.velocity(), &w);
    let np = discrete::weighted_norms(micro.pressure(), &w);

    // Effective stages on the matched grid.
    let hdims: Vec<usize> = grid.cells()[..n - 1].to_vec();
    let mgrid = macro_darcy::macro_grid(&hdims, grid.cells()[n - 1])?;
    let f0: Vec<ScalarField> = (0..n)
        .map(|d| ScalarField::from_fn(&mgrid, |x| force_component(d, n, x)))
        .collect();
    let hcount = ix::total(&hdims);
    let mut p_bottom = vec![0.0f64; hcount];
    let mut p_top = vec![0.0f64; hcount];
    let mut xm = [0.0f64; ix::MAX_DIM];
    for (hc, hidx) in ix::iter(&hdims) {
        let mut idx = [0usize; ix::MAX_DIM];
        idx[..n - 1].copy_from_slice(&hidx[..n - 1]);
        let center = mgrid.cell_center(&idx[..n]);
        xm[..n - 1].copy_from_slice(&center[..n - 1]);
        xm[n - 1] = -1.0;
        p_bottom[hc] = boundary_pressure(n, &xm[..n]);
        xm[n - 1] = 1.0;
        p_top[hc] = boundary_pressure(n, &xm[..n]);
    }
    let darcy = macro_darcy::solve_darcy(&mgrid, k, &f0, &p_bottom, &p_top)?;
    let u0 = cell_stokes::reconstruct_u0(cell_solutions, &f0, darcy.vertical_gradient())?;

    // Transport stage.
    let mut micro_mass = None;
    let mut micro_bound = None;
    let mut macro_mass = None;
    let (c_micro, c_macro) = if let (Some(tp), Some(eff)) = (&plan.transport, eff) {
        let steps = (tp.t_end / tp.dt).round() as usize;
        let ea = scales.half_thickness_f64();
        let source = ScalarField::from_fn(&grid, |x| {
            let mut xmac = [0.0f64; ix::MAX_DIM];
            xmac[..n].copy_from_slice(&x[..n]);
            xmac[n - 1] = x[n - 1] / ea;
            volume_source(n, &xmac[..n])
        });
        let zeros_h = vec![0.0f64; hcount];
        let mproblem = MicroTransportProblem {
            params: MicroTransportParams::scaled(tp.case, plan.diffusivity, scales),
            source,
            c_bottom: zeros_h.clone(),
            c_top: zeros_h.clone(),
            initial: ScalarField::zeros(&grid),
            dt: tp.dt,
            steps,
            time_scheme: TimeScheme::ImplicitEuler,
            advection: AdvectionScheme::Upwind,
            solver: transport_solver_options(),
        };
        let cmic = micro_reference::solve_micro_transport(&layer, micro.velocity(), &mproblem)?;
        micro_mass = Some(cmic.diagnostics().mass_residual);
        micro_bound = Some(cmic.diagnostics().bound_excess);

        let porosity = eff.porosity();
        let g0 = ScalarField::from_fn(&mgrid, |x| porosity * volume_source(n, x));
        let coefficients = TransportCoefficients::from_effective(eff)?;
        let mac_problem = MacroTransportProblem {
            grid: mgrid.clone(),
            coefficients,
            column_velocity: darcy.column_flux().to_vec(),
            source: g0,
            c_bottom: zeros_h.clone(),
            c_top: zeros_h,
            initial: ScalarField::zeros(&mgrid),
            dt: tp.dt,
            steps,
            time_scheme: TimeScheme::ImplicitEuler,
            advection: AdvectionScheme::Upwind,
            snapshot_steps: Vec::new(),
            solver: transport_solver_options(),
        };
        let cmac = macro_transport::solve_macro_transport(&mac_problem)?;
        macro_mass = Some(cmac.diagnostics().mass_residual);
        (
            Some(cmic.final_state().clone()),
            Some(cmac.final_state().clone()),
        )
    } else {
        (None, None)
    };

    let two = two_scale_error(
        &layer,
        &micro,
        &u0,
        darcy.pressure(),
        c_micro.as_ref(),
        c_macro.as_ref(),
    )?;

    // Mean micro cut flux against the effective total vertical flux.
    let cut_mean = micro.cut_fluxes().iter().sum::<f64>() / micro.cut_fluxes().len() as f64;
    let h_area = mgrid.cell_volume() / mgrid.spacing()[n - 1];
    let macro_total: f64 = darcy.column_flux().iter().sum::<f64>() * h_area;
    let eps = scales.eps_f64();
    let denom = eps * eps * macro_total;
    let flux_ratio = if denom.abs() > f64::MIN_POSITIVE {
        cut_mean / denom
    } else {
        f64::NAN
    };

    Ok(SweepRecord {
        scales: scales.clone(),
        velocity_l2: nu.l2,
        velocity_grad_l2: nu.grad_l2,
        pressure_l2: np.l2,
        two_scale: two,
        flux_ratio,
        stokes_outer: micro.outer_iterations(),
        stokes_inner: micro.inner_iterations(),
        micro_divergence_linf: micro.divergence_linf(),
        micro_mass_residual: micro_mass,
        micro_bound_excess: micro_bound,
        macro_mass_residual: macro_mass,
    })
}

/// Runs the full study: cell problems once, then the microscopic and
/// effective stages at every scale, then the log–log slope fits.
pub fn scaling_study(plan: &SweepPlan) -> Result<ScalingStudy, ConvergenceError> {
    let scales_list = validate_sweep(plan)?;
    let prep = prepare_study(plan)?;
    let mut records = Vec::with_capacity(scales_list.len());
    for scales in &scales_list {
        records.push(study_scale(plan, &prep, scales)?);
    }
    assemble_study(plan, prep, records)
}

/// Fits the slopes and packs the study result from records gathered in
/// scale order (largest first). Split out so callers running sweep
/// members concurrently can reduce deterministically.
pub fn assemble_study(
    plan: &SweepPlan,
    prep: StudyPrep,
    records: Vec<SweepRecord>,
) -> Result<ScalingStudy, ConvergenceError> {
    let eps: Vec<f64> = records.iter().map(|r| r.scales.eps_f64()).collect();
    let vu: Vec<f64> = records.iter().map(|r| r.velocity_l2).collect();
    let vg: Vec<f64> = records.iter().map(|r| r.velocity_grad_l2).collect();
    let vp: Vec<f64> = records.iter().map(|r| r.pressure_l2).collect();
    let velocity_fit = fit_slope(&eps, &vu)?;
    let gradient_fit = fit_slope(&eps, &vg)?;
    let pressure_fit = fit_slope(&eps, &vp)?;
    Ok(ScalingStudy {
        records,
        expected: expected_slopes(plan.alpha),
        velocity_fit,
        gradient_fit,
        pressure_fit,
        permeability: prep.permeability,
        effective_diffusion: prep.effective,
    })
}

/// The grid every effective stage of a study uses for scale `s`: matched
/// to the rescaled micro grid of the layer.
pub fn matched_macro_grid(
    layer: &LayerGeometry,
) -> Result<StructuredGrid, DiscreteError> {
    let grid = layer.grid();
    let n = grid.dim();
    macro_darcy::macro_grid(&grid.cells()[..n - 1], grid.cells()[n - 1])
}
