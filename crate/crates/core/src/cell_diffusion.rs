//! Diffusion cell problems on the fluid part of the unit cell and the
//! effective diffusion tensor they induce, for both diffusion scalings of
//! the thin perforated layer.
//!
//! Two scalings of the microscale diffusivity are supported:
//! * [`DiffusionCase::SlowHorizontal`] — isotropic diffusivity scaled by
//!   the layer thickness; the limit transports only vertically and its
//!   effective coefficient comes from a full-cell corrector driven by the
//!   vertical unit gradient.
//! * [`DiffusionCase::FastHorizontal`] — horizontal diffusivity scaled up,
//!   vertical scaled down; horizontal correctors decouple slab-by-slab in
//!   the vertical coordinate (the corrector space is periodic in the
//!   horizontal variables only, normalized per slab), while the vertical
//!   corrector reduces to a one-dimensional profile problem on the area
//!   profile `A(y_v)` whose solution is known in closed form.
//!
//! All correctors are independent of the scalar diffusivity `D` (it
//! factors out of their linear problems); `D` re-enters when the effective
//! tensor is assembled.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Needed for the arithmetic methods under no_std builds; test and example
// builds unify num-traits with its std feature, where the inherent f64
// methods shadow the trait and the import goes quiet.
#[allow(unused_imports)]
use num_traits::Float;

use crate::discrete::ScalarField;
use crate::geometry::{self, AreaProfile, UnitCellGeometry};
use crate::indexutil as ix;
use crate::linsolve::{LinsolveError, MeanProjection, SparseMatrix, SpdOptions};

/// Diffusivity scaling of the thin layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffusionCase {
    /// Isotropic diffusivity damped with the layer thickness; the limit
    /// model diffuses only vertically.
    SlowHorizontal,
    /// Horizontal diffusivity amplified, vertical damped; the limit model
    /// diffuses in all directions with a block-diagonal tensor.
    FastHorizontal,
}

/// Errors from corrector solves and tensor assembly.
#[derive(Debug)]
pub enum CellDiffusionError {
    /// Horizontal corrector requested for the vertical axis or beyond.
    InvalidAxis { axis: usize, dim: usize },
    /// `D ≤ 0`.
    NonpositiveDiffusivity(f64),
    /// A slab of the area profile has non-positive fluid measure.
    NonpositiveProfile { slab: usize, value: f64 },
    /// Linear solver failure.
    Solver(LinsolveError),
    /// The assembled tensor violates a structural invariant (symmetry,
    /// positivity, or the porosity bound).
    StructureViolation { what: &'static str, value: f64 },
    /// Energy- and flux-form assembly disagree beyond tolerance.
    FormulaMismatch { discrepancy: f64, tolerance: f64 },
    /// Solutions passed to assembly do not match the requested case.
    CaseMismatch,
}

impl fmt::Display for CellDiffusionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellDiffusionError::InvalidAxis { axis, dim } => {
                write!(f, "axis {axis} is not horizontal in dimension {dim}")
            }
            CellDiffusionError::NonpositiveDiffusivity(d) => {
                write!(f, "diffusivity must be positive, got {d}")
            }
            CellDiffusionError::NonpositiveProfile { slab, value } => {
                write!(f, "area profile slab {slab} has non-positive measure {value}")
            }
            CellDiffusionError::Solver(e) => write!(f, "corrector solve failed: {e}"),
            CellDiffusionError::StructureViolation { what, value } => {
                write!(f, "effective tensor invariant violated ({what}): {value}")
            }
            CellDiffusionError::FormulaMismatch {
                discrepancy,
                tolerance,
            } => write!(
                f,
                "energy and flux assemblies disagree: {discrepancy:.3e} > {tolerance:.1e}"
            ),
            CellDiffusionError::CaseMismatch => {
                write!(f, "cell solutions do not match the requested diffusion case")
            }
        }
    }
}

impl core::error::Error for CellDiffusionError {}

impl From<LinsolveError> for CellDiffusionError {
    fn from(e: LinsolveError) -> Self {
        CellDiffusionError::Solver(e)
    }
}

/// One horizontal corrector: driven by a horizontal unit gradient, solved
/// independently on every vertical slab (no vertical coupling), mean-zero
/// on each connected component of each slab.
#[derive(Clone, Debug)]
pub struct HorizontalCorrector {
    axis: usize,
    chi: ScalarField,
    disconnected_slabs: Vec<usize>,
    iterations: usize,
}

impl HorizontalCorrector {
    pub fn axis(&self) -> usize {
        self.axis
    }

    /// Corrector values on fluid cells (zero elsewhere).
    pub fn field(&self) -> &ScalarField {
        &self.chi
    }

    /// Slabs whose fluid cross-section splits into several components
    /// (flagged, solved per component).
    pub fn disconnected_slabs(&self) -> &[usize] {
        &self.disconnected_slabs
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// Full-cell vertical corrector (slow-horizontal case).
#[derive(Clone, Debug)]
pub struct VerticalCellCorrector {
    chi: ScalarField,
    iterations: usize,
}

impl VerticalCellCorrector {
    pub fn field(&self) -> &ScalarField {
        &self.chi
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

/// One-dimensional vertical corrector profile (fast-horizontal case):
/// `1 + χ'(y_v) = c / A(y_v)` with `c` the harmonic mean of the area
/// profile, the value forced by periodicity.
#[derive(Clone, Debug)]
pub struct VerticalProfile {
    /// Harmonic mean `c = (∫ A^{-1})^{-1}` (closed form).
    conductance: f64,
    /// Per-slab slope `χ' = c/A − 1`.
    slope: Vec<f64>,
    /// Corrector at slab interfaces (`m + 1` nodes, last = first), shifted
    /// to zero mean.
    interface_values: Vec<f64>,
    /// Relative disagreement of an independent staggered finite-difference
    /// solve against the closed form.
    fd_discrepancy: f64,
}

impl VerticalProfile {
    /// Harmonic mean of the area profile; the effective vertical
    /// coefficient is `D` times this.
    pub fn conductance(&self) -> f64 {
        self.conductance
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slope
    }

    pub fn interface_values(&self) -> &[f64] {
        &self.interface_values
    }

    /// Relative closed-form vs finite-difference disagreement.
    pub fn fd_discrepancy(&self) -> f64 {
        self.fd_discrepancy
    }

    /// Piecewise-linear evaluation of `χ(y_v)`, `y_v` wrapped into `[0,1)`.
    pub fn sample(&self, y_v: f64) -> f64 {
        let m = self.slope.len();
        let t = y_v - y_v.floor();
        let scaled = t * m as f64;
        let k = (scaled.floor() as usize).min(m - 1);
        let frac = scaled - k as f64;
        let h = 1.0 / m as f64;
        self.interface_values[k] + self.slope[k] * frac * h
    }
}

/// Vertical corrector in either representation.
#[derive(Clone, Debug)]
pub enum VerticalCorrector {
    FullCell(VerticalCellCorrector),
    Profile(VerticalProfile),
}

/// The full set of correctors for one cell and case.
#[derive(Clone, Debug)]
pub struct CellDiffusionSolutions {
    case: DiffusionCase,
    horizontal: Vec<HorizontalCorrector>,
    vertical: VerticalCorrector,
}

impl CellDiffusionSolutions {
    pub fn case(&self) -> DiffusionCase {
        self.case
    }

    /// Horizontal correctors for axes `0..n−1`.
    pub fn horizontal(&self) -> &[HorizontalCorrector] {
        &self.horizontal
    }

    pub fn vertical(&self) -> &VerticalCorrector {
        &self.vertical
    }
}

/// Shared assembly of a cell-centered diffusion problem on a subset of
/// cells: rows over `unknowns` (local indices into `cells`), Laplacian-type
/// coupling across both-open faces along `axes` with periodic wrap, and the
/// right-hand side produced by a unit background gradient along
/// `drive_axis` (indicator-jump form).
struct SubcellProblem {
    matrix: SparseMatrix,
    rhs: Vec<f64>,
}

fn assemble_subcell(
    dims: &[usize],
    spacing: &[f64],
    cell_volume: f64,
    slot: &dyn Fn(usize) -> Option<usize>,
    n_unknowns: usize,
    axes: &[usize],
    drive_axis: usize,
) -> SubcellProblem {
    let strides = ix::strides(&ix::pad_dims(dims));
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0f64; n_unknowns];
    for (c, idx) in ix::iter(dims) {
        let Some(row) = slot(c) else { continue };
        for &e in axes {
            let mut hi_idx = idx;
            hi_idx[e] = (idx[e] + 1) % dims[e];
            let chi = ix::lin(&strides, &hi_idx);
            let coeff = cell_volume / (spacing[e] * spacing[e]);
            let area = cell_volume / spacing[e];
            if let Some(col) = slot(chi) {
                // Both cells open: full pair on the shared face.
                trips.push((row, row, coeff));
                trips.push((row, col, -coeff));
                trips.push((col, col, coeff));
                trips.push((col, row, -coeff));
                if e == drive_axis {
                    // Indicator is 1 on this face: contributes ±area to the
                    // two cells' balance.
                    rhs[row] += area;
                    rhs[col] -= area;
                }
            }
            // Closed faces carry no flux (dropped-flux Neumann) and no
            // right-hand side.
        }
    }
    let matrix = SparseMatrix::from_triplets(n_unknowns, n_unknowns, &trips, true)
        .expect("diffusion stencil assembly produced an invalid matrix");
    SubcellProblem { matrix, rhs }
}

/// Solves the horizontal corrector problem for `axis < n−1`: independent
/// per-slab solves with horizontal-only gradients, normalized to zero mean
/// on every connected component of every slab. The scalar diffusivity `d`
/// is validated but does not influence the corrector.
pub fn solve_horizontal_cell(
    cell: &UnitCellGeometry,
    d: f64,
    axis: usize,
    opts: &SpdOptions,
) -> Result<HorizontalCorrector, CellDiffusionError> {
    let n = cell.dim();
    if !(d > 0.0) {
        return Err(CellDiffusionError::NonpositiveDiffusivity(d));
    }
    if axis + 1 >= n {
        return Err(CellDiffusionError::InvalidAxis { axis, dim: n });
    }
    let grid = cell.grid();
    let m = cell.resolution();
    let hdims: Vec<usize> = grid.cells()[..n - 1].to_vec();
    let h_count = ix::total(&hdims);
    let cell_strides = ix::strides(&ix::pad_dims(grid.cells()));
    let mut chi = ScalarField::zeros_masked(&grid, cell.fluid_mask().to_vec())
        .expect("fluid mask matches the grid");
    let mut disconnected = Vec::new();
    let mut iterations = 0usize;
    let haxes: Vec<usize> = (0..n - 1).collect();
    for k in 0..m {
        // Slab mask and local numbering.
        let mut open = vec![false; h_count];
        let mut slab_lin = vec![0usize; h_count];
        for (hc, hidx) in ix::iter(&hdims) {
            let mut idx = hidx;
            idx[n - 1] = k;
            let c = ix::lin(&cell_strides, &idx);
            slab_lin[hc] = c;
            open[hc] = cell.fluid_mask()[c];
        }
        let (ncomp, labels) = geometry::flood_fill_labels(&hdims, &open, true);
        if ncomp == 0 {
            continue;
        }
        if ncomp > 1 {
            disconnected.push(k);
        }
        let mut slots = vec![None; h_count];
        let mut groups = Vec::new();
        let mut count = 0usize;
        for hc in 0..h_count {
            if open[hc] {
                slots[hc] = Some(count);
                groups.push(labels[hc]);
                count += 1;
            }
        }
        let problem = assemble_subcell(
            &hdims,
            grid.spacing(),
            grid.cell_volume() / grid.spacing()[n - 1],
            &|c| slots[c],
            count,
            &haxes,
            axis,
        );
        let slab_opts = SpdOptions {
            projection: MeanProjection::Groups(groups),
            ..opts.clone()
        };
        let (x, rep) = crate::linsolve::solve_spd(&problem.matrix, &problem.rhs, &slab_opts)?;
        iterations += rep.iterations;
        for hc in 0..h_count {
            if let Some(u) = slots[hc] {
                chi.set(slab_lin[hc], x[u]);
            }
        }
    }
    Ok(HorizontalCorrector {
        axis,
        chi,
        disconnected_slabs: disconnected,
        iterations,
    })
}

/// Solves the full-cell vertical corrector (slow-horizontal case): the
/// whole-cell periodic problem driven by the vertical unit gradient, with
/// gradients in all directions, normalized to zero mean over the fluid.
pub fn solve_vertical_cell_full(
    cell: &UnitCellGeometry,
    d: f64,
    opts: &SpdOptions,
) -> Result<VerticalCellCorrector, CellDiffusionError> {
    let n = cell.dim();
    if !(d > 0.0) {
        return Err(CellDiffusionError::NonpositiveDiffusivity(d));
    }
    let grid = cell.grid();
    let open = cell.fluid_mask();
    let mut slots = vec![None; open.len()];
    let mut count = 0usize;
    for (c, slot) in slots.iter_mut().enumerate() {
        if open[c] {
            *slot = Some(count);
            count += 1;
        }
    }
    let axes: Vec<usize> = (0..n).collect();
    let problem = assemble_subcell(
        grid.cells(),
        grid.spacing(),
        grid.cell_volume(),
        &|c| slots[c],
        count,
        &axes,
        n - 1,
    );
    let solve_opts = SpdOptions {
        projection: MeanProjection::Global,
        ..opts.clone()
    };
    let (x, rep) = crate::linsolve::solve_spd(&problem.matrix, &problem.rhs, &solve_opts)?;
    let mut chi = ScalarField::zeros_masked(&grid, open.to_vec()).expect("mask matches grid");
    for (c, slot) in slots.iter().enumerate() {
        if let Some(u) = slot {
            chi.set(c, x[*u]);
        }
    }
    Ok(VerticalCellCorrector {
        chi,
        iterations: rep.iterations,
    })
}

/// Solves the one-dimensional vertical profile problem (fast-horizontal
/// case) in closed form — `1 + χ' = c/A` with `c` the harmonic mean — and
/// cross-checks it against an independent staggered finite-difference
/// solve with harmonic interface averages.
pub fn solve_vertical_cell_1d(
    profile: &AreaProfile,
    d: f64,
) -> Result<VerticalProfile, CellDiffusionError> {
    if !(d > 0.0) {
        return Err(CellDiffusionError::NonpositiveDiffusivity(d));
    }
    let a = profile.samples();
    let m = a.len();
    for (k, &v) in a.iter().enumerate() {
        if !(v > 0.0) {
            return Err(CellDiffusionError::NonpositiveProfile { slab: k, value: v });
        }
    }
    let h = 1.0 / m as f64;
    // Closed form: periodicity forces the flux c = harmonic mean of A.
    let inv_mean: f64 = a.iter().map(|&v| h / v).sum();
    let c = 1.0 / inv_mean;
    let slope: Vec<f64> = a.iter().map(|&v| c / v - 1.0).collect();
    let mut interface_values = vec![0.0f64; m + 1];
    for k in 0..m {
        interface_values[k + 1] = interface_values[k] + h * slope[k];
    }
    // Defect from accumulated roundoff is spread so the profile closes.
    let defect = interface_values[m];
    for (k, v) in interface_values.iter_mut().enumerate() {
        *v -= defect * (k as f64) / (m as f64);
    }
    // Zero mean of the piecewise-linear profile.
    let mut mean = 0.0;
    for k in 0..m {
        mean += 0.5 * (interface_values[k] + interface_values[k + 1]) * h;
    }
    for v in interface_values.iter_mut() {
        *v -= mean;
    }
    // Independent staggered FD path: unknowns at slab centers, harmonic
    // interface conductivities, periodic wrap; the constant flux it
    // produces must reproduce `c` to rounding.
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0f64; m];
    let interface_a = |k: usize| -> f64 {
        let lo = a[k];
        let hi = a[(k + 1) % m];
        2.0 / (1.0 / lo + 1.0 / hi)
    };
    for k in 0..m {
        let hi = (k + 1) % m;
        let ai = interface_a(k);
        let coeff = ai / (h * h);
        trips.push((k, k, coeff));
        trips.push((k, hi, -coeff));
        trips.push((hi, hi, coeff));
        trips.push((hi, k, -coeff));
        rhs[k] += ai / h;
        rhs[hi] -= ai / h;
    }
    let matrix = SparseMatrix::from_triplets(m, m, &trips, true)
        .expect("profile stencil assembly produced an invalid matrix");
    let opts = SpdOptions {
        tol: 1e-13,
        max_iter: 100 * m + 100,
        projection: MeanProjection::Global,
    };
    let (x, _rep) = crate::linsolve::solve_spd(&matrix, &rhs, &opts)?;
    let mut c_fd = 0.0;
    for k in 0..m {
        let hi = (k + 1) % m;
        c_fd += interface_a(k) * ((x[hi] - x[k]) / h + 1.0);
    }
    c_fd /= m as f64;
    let fd_discrepancy = (c_fd - c).abs() / c;
    Ok(VerticalProfile {
        conductance: c,
        slope,
        interface_values,
        fd_discrepancy,
    })
}

/// Iteration controls shared by the corrector solves.
pub fn default_corrector_options() -> SpdOptions {
    SpdOptions {
        tol: 1e-10,
        max_iter: 200_000,
        projection: MeanProjection::None,
    }
}

/// Solves every corrector the given case needs: the fast-horizontal case
/// takes `n−1` slab-wise horizontal correctors plus the one-dimensional
/// vertical profile; the slow-horizontal case needs only the full-cell
/// vertical corrector (its limit model has no horizontal diffusion).
pub fn solve_diffusion_cell(
    cell: &UnitCellGeometry,
    case: DiffusionCase,
    d: f64,
    opts: &SpdOptions,
) -> Result<CellDiffusionSolutions, CellDiffusionError> {
    let n = cell.dim();
    let mut horizontal = Vec::new();
    let vertical = match case {
        DiffusionCase::SlowHorizontal => {
            VerticalCorrector::FullCell(solve_vertical_cell_full(cell, d, opts)?)
        }
        DiffusionCase::FastHorizontal => {
            for axis in 0..n - 1 {
                horizontal.push(solve_horizontal_cell(cell, d, axis, opts)?);
            }
            let profile = geometry::area_profile(cell);
            VerticalCorrector::Profile(solve_vertical_cell_1d(&profile, d)?)
        }
    };
    Ok(CellDiffusionSolutions {
        case,
        horizontal,
        vertical,
    })
}

/// The effective diffusion tensor. Cross entries between horizontal axes
/// and the vertical axis are zero by the structure of the limit model;
/// in the slow-horizontal case only the vertical entry enters the macro
/// equations.
#[derive(Clone, Debug)]
pub struct EffectiveDiffusion {
    case: DiffusionCase,
    n: usize,
    d: f64,
    tensor: [[f64; 3]; 3],
    formula_discrepancy: f64,
    porosity: f64,
}

impl EffectiveDiffusion {
    pub fn case(&self) -> DiffusionCase {
        self.case
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diffusivity(&self) -> f64 {
        self.d
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.tensor[i][j]
    }

    /// Effective vertical coefficient (the `(v,v)` entry).
    pub fn vertical(&self) -> f64 {
        self.tensor[self.n - 1][self.n - 1]
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.tensor
    }

    pub fn formula_discrepancy(&self) -> f64 {
        self.formula_discrepancy
    }

    pub fn porosity(&self) -> f64 {
        self.porosity
    }
}

/// Assembles the effective tensor from the correctors by the energy form,
/// cross-checked against the flux form, and validates the structural
/// invariants (symmetry and positivity of the horizontal block, vertical
/// entry within `(0, D·|Y_f|]`).
pub fn effective_diffusion(
    cell: &UnitCellGeometry,
    solutions: &CellDiffusionSolutions,
    d: f64,
) -> Result<EffectiveDiffusion, CellDiffusionError> {
    if !(d > 0.0) {
        return Err(CellDiffusionError::NonpositiveDiffusivity(d));
    }
    let n = cell.dim();
    let grid = cell.grid();
    let dims = grid.cells();
    let strides = ix::strides(&ix::pad_dims(dims));
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let open = cell.fluid_mask();
    let porosity = cell.porosity();
    let mut tensor = [[0.0f64; 3]; 3];
    let mut discrepancy = 0.0f64;
    let nh = n - 1;

    // Horizontal block (fast case only): gradients along horizontal axes;
    // dropped faces contribute nothing.
    if solutions.case == DiffusionCase::FastHorizontal {
        if solutions.horizontal.len() != nh {
            return Err(CellDiffusionError::CaseMismatch);
        }
        let face_val = |corr: &HorizontalCorrector, e: usize, c: usize, chi_idx: usize| -> f64 {
            let delta = if corr.axis == e { 1.0 } else { 0.0 };
            delta + (corr.chi.get(chi_idx) - corr.chi.get(c)) / h[e]
        };
        for i in 0..nh {
            for j in i..nh {
                let mut energy = 0.0;
                let mut flux = 0.0;
                for (c, idx) in ix::iter(dims) {
                    if !open[c] {
                        continue;
                    }
                    for e in 0..nh {
                        let mut hi_idx = idx;
                        hi_idx[e] = (idx[e] + 1) % dims[e];
                        let chi_idx = ix::lin(&strides, &hi_idx);
                        if !open[chi_idx] {
                            continue;
                        }
                        let vi = face_val(&solutions.horizontal[i], e, c, chi_idx);
                        let vj = face_val(&solutions.horizontal[j], e, c, chi_idx);
                        energy += vi * vj * vol;
                        if e == j {
                            flux += vi * vol;
                        }
                    }
                }
                energy *= d;
                flux *= d;
                let scale = energy.abs().max(flux.abs()).max(d * 1e-12);
                discrepancy = discrepancy.max((energy - flux).abs() / scale);
                tensor[i][j] = energy;
                tensor[j][i] = energy;
            }
        }
    }

    // Vertical entry.
    match (&solutions.vertical, solutions.case) {
        (VerticalCorrector::Profile(profile), DiffusionCase::FastHorizontal) => {
            // Energy of the closed-form profile: ∫ A (c/A)² = c² ∫ 1/A = c
            // up to rounding; the flux form is c by definition.
            let a = geometry::area_profile(cell);
            let samples = a.samples();
            let m = samples.len();
            let hm = 1.0 / m as f64;
            let mut energy = 0.0;
            for k in 0..m {
                let v = 1.0 + profile.slope[k];
                energy += samples[k] * v * v * hm;
            }
            energy *= d;
            let flux = d * profile.conductance;
            let scale = flux.abs().max(d * 1e-12);
            discrepancy = discrepancy.max((energy - flux).abs() / scale);
            discrepancy = discrepancy.max(profile.fd_discrepancy);
            tensor[n - 1][n - 1] = flux;
        }
        (VerticalCorrector::FullCell(corr), DiffusionCase::SlowHorizontal) => {
            let mut energy = 0.0;
            let mut flux = 0.0;
            for (c, idx) in ix::iter(dims) {
                if !open[c] {
                    continue;
                }
                for e in 0..n {
                    let mut hi_idx = idx;
                    hi_idx[e] = (idx[e] + 1) % dims[e];
                    let chi_idx = ix::lin(&strides, &hi_idx);
                    if !open[chi_idx] {
                        continue;
                    }
                    let delta = if e == n - 1 { 1.0 } else { 0.0 };
                    let v = delta + (corr.chi.get(chi_idx) - corr.chi.get(c)) / h[e];
                    energy += v * v * vol;
                    if e == n - 1 {
                        flux += v * vol;
                    }
                }
            }
            energy *= d;
            flux *= d;
            let scale = energy.abs().max(flux.abs()).max(d * 1e-12);
            discrepancy = discrepancy.max((energy - flux).abs() / scale);
            tensor[n - 1][n - 1] = energy;
        }
        _ => return Err(CellDiffusionError::CaseMismatch),
    }

    if discrepancy > 1e-5 {
        return Err(CellDiffusionError::FormulaMismatch {
            discrepancy,
            tolerance: 1e-5,
        });
    }
    let dvv = tensor[n - 1][n - 1];
    if !(dvv > 0.0) {
        return Err(CellDiffusionError::StructureViolation {
            what: "vertical entry must be positive",
            value: dvv,
        });
    }
    if dvv > d * porosity * (1.0 + 1e-10) + 1e-14 {
        return Err(CellDiffusionError::StructureViolation {
            what: "vertical entry exceeds the porosity bound",
            value: dvv,
        });
    }
    for i in 0..nh {
        let dii = tensor[i][i];
        if dii < -1e-14 || dii > d * porosity * (1.0 + 1e-10) + 1e-14 {
            return Err(CellDiffusionError::StructureViolation {
                what: "horizontal diagonal entry outside the porosity bound",
                value: dii,
            });
        }
    }
    if nh > 0 {
        let min_h = crate::cell_stokes::symmetric_min_eigenvalue(&tensor, nh);
        if min_h < -1e-12 * d {
            return Err(CellDiffusionError::StructureViolation {
                what: "horizontal block not positive semidefinite",
                value: min_h,
            });
        }
    }
    Ok(EffectiveDiffusion {
        case: solutions.case,
        n,
        d,
        tensor,
        formula_discrepancy: discrepancy,
        porosity,
    })
}
