//! Structured grids, staggered (MAC) fields, masked discrete operators, and
//! weighted norms.
//!
//! Scalars (pressure, concentration) are cell-centered; velocity components
//! live on the faces normal to their direction, in the usual
//! marker-and-cell arrangement. Every field carries an activity mask; values
//! at inactive (solid or constrained) entries are kept exactly zero, so the
//! discrete operators stay linear without any mask-dependent branching.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Needed for the arithmetic methods under no_std builds; test and example
// builds unify num-traits with its std feature, where the inherent f64
// methods shadow the trait and the import goes quiet.
#[allow(unused_imports)]
use num_traits::Float;

use crate::indexutil as ix;
use crate::{frac_to_f64, Frac};

/// Errors raised by grid and field construction or by operator application.
#[derive(Clone, Debug, PartialEq)]
pub enum DiscreteError {
    /// Two fields/grids that must match were built on different grids.
    GridMismatch,
    /// A supplied buffer has the wrong length or an argument is out of range.
    ShapeMismatch { expected: usize, got: usize },
    /// Invalid construction parameters (zero cells, unsupported dimension…).
    InvalidGrid(String),
}

impl fmt::Display for DiscreteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiscreteError::GridMismatch => write!(f, "fields live on different grids"),
            DiscreteError::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected} entries, got {got}")
            }
            DiscreteError::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
        }
    }
}

impl core::error::Error for DiscreteError {}

/// Uniform structured grid on an axis-aligned box, with per-axis
/// periodicity flags. Spacing is stored both as an exact rational
/// (`extent / cells`) and as `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct StructuredGrid {
    n: usize,
    cells: Vec<usize>,
    origin: Vec<Frac>,
    extent: Vec<Frac>,
    spacing_frac: Vec<Frac>,
    spacing: Vec<f64>,
    origin_f64: Vec<f64>,
    periodic: Vec<bool>,
}

impl StructuredGrid {
    /// Builds a grid over the box `origin + [0, extent]` with the given cell
    /// counts. The per-axis spacing `extent/cells` is exact in rationals.
    pub fn new(
        cells: &[usize],
        origin: &[Frac],
        extent: &[Frac],
        periodic: &[bool],
    ) -> Result<Self, DiscreteError> {
        let n = cells.len();
        if n == 0 || n > ix::MAX_DIM {
            return Err(DiscreteError::InvalidGrid(alloc::format!(
                "dimension {n} not supported (1 to {} axes)",
                ix::MAX_DIM
            )));
        }
        if origin.len() != n || extent.len() != n || periodic.len() != n {
            return Err(DiscreteError::ShapeMismatch {
                expected: n,
                got: origin.len().max(extent.len()).max(periodic.len()),
            });
        }
        for d in 0..n {
            if cells[d] == 0 {
                return Err(DiscreteError::InvalidGrid(alloc::format!(
                    "axis {d} has zero cells"
                )));
            }
            if extent[d] <= Frac::new(0, 1) {
                return Err(DiscreteError::InvalidGrid(alloc::format!(
                    "axis {d} has non-positive extent"
                )));
            }
        }
        let spacing_frac: Vec<Frac> = (0..n)
            .map(|d| extent[d] / Frac::new(cells[d] as i64, 1))
            .collect();
        let spacing: Vec<f64> = spacing_frac.iter().map(|&s| frac_to_f64(s)).collect();
        let origin_f64: Vec<f64> = origin.iter().map(|&o| frac_to_f64(o)).collect();
        Ok(StructuredGrid {
            n,
            cells: cells.to_vec(),
            origin: origin.to_vec(),
            extent: extent.to_vec(),
            spacing_frac,
            spacing,
            origin_f64,
            periodic: periodic.to_vec(),
        })
    }

    /// Unit box `(0,1)^n` with `m` cells per axis, fully periodic.
    pub fn unit_cell(n: usize, m: usize) -> Result<Self, DiscreteError> {
        let zero = Frac::new(0, 1);
        let one = Frac::new(1, 1);
        Self::new(
            &vec![m; n],
            &vec![zero; n],
            &vec![one; n],
            &vec![true; n],
        )
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        ix::total(&self.cells)
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn spacing_frac(&self) -> &[Frac] {
        &self.spacing_frac
    }

    pub fn origin(&self) -> &[Frac] {
        &self.origin
    }

    pub fn extent(&self) -> &[Frac] {
        &self.extent
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Same box and resolution with different periodicity flags (used when
    /// one equation on the grid is periodic in a direction and another is
    /// not). Fields are not transferable between the two variants because
    /// face array shapes differ.
    pub fn with_periodic(&self, periodic: &[bool]) -> Result<Self, DiscreteError> {
        Self::new(&self.cells, &self.origin, &self.extent, periodic)
    }

    /// Dimensions of the face array for the velocity component along `axis`:
    /// equal to the cell dimensions except that a non-periodic axis has one
    /// extra layer of faces (both domain boundaries are represented).
    pub fn face_dims(&self, axis: usize) -> Vec<usize> {
        let mut d = self.cells.clone();
        if !self.periodic[axis] {
            d[axis] += 1;
        }
        d
    }

    pub fn face_count(&self, axis: usize) -> usize {
        ix::total(&self.face_dims(axis))
    }

    /// Physical coordinates of a cell center.
    pub fn cell_center(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.n)
            .map(|d| self.origin_f64[d] + (idx[d] as f64 + 0.5) * self.spacing[d])
            .collect()
    }

    /// Physical coordinates of the center of the `axis`-normal face with the
    /// given face index (the face sits on the low side of cell `idx[axis]`).
    pub fn face_center(&self, axis: usize, idx: &[usize]) -> Vec<f64> {
        (0..self.n)
            .map(|d| {
                let off = if d == axis { 0.0 } else { 0.5 };
                self.origin_f64[d] + (idx[d] as f64 + off) * self.spacing[d]
            })
            .collect()
    }

    /// Linear index of a cell.
    pub fn cell_lin(&self, idx: &[usize]) -> usize {
        let dims = ix::pad_dims(&self.cells);
        ix::lin(&ix::strides(&dims), &ix::pad_idx(idx))
    }
}

/// Cell-centered scalar field with an activity mask. Inactive entries are
/// exactly zero.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: StructuredGrid,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl ScalarField {
    pub fn zeros(grid: &StructuredGrid) -> Self {
        let len = grid.cell_count();
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; len],
            mask: vec![true; len],
        }
    }

    pub fn zeros_masked(grid: &StructuredGrid, mask: Vec<bool>) -> Result<Self, DiscreteError> {
        let len = grid.cell_count();
        if mask.len() != len {
            return Err(DiscreteError::ShapeMismatch {
                expected: len,
                got: mask.len(),
            });
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values: vec![0.0; len],
            mask,
        })
    }

    /// Samples `f` at active cell centers; inactive cells stay zero.
    pub fn from_fn(grid: &StructuredGrid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for (c, idx) in ix::iter(grid.cells()) {
            out.values[c] = f(&grid.cell_center(&idx[..grid.dim()]));
        }
        out
    }

    pub fn from_fn_masked(
        grid: &StructuredGrid,
        mask: Vec<bool>,
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> Result<Self, DiscreteError> {
        let mut out = Self::zeros_masked(grid, mask)?;
        for (c, idx) in ix::iter(grid.cells()) {
            if out.mask[c] {
                out.values[c] = f(&grid.cell_center(&idx[..grid.dim()]));
            }
        }
        Ok(out)
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, c: usize) -> f64 {
        self.values[c]
    }

    /// Sets an active entry; writes to inactive entries are ignored so the
    /// zero invariant cannot be broken.
    pub fn set(&mut self, c: usize, v: f64) {
        if self.mask[c] {
            self.values[c] = v;
        }
    }

    /// Overwrites all active entries from a slice (inactive entries zeroed).
    pub fn assign(&mut self, vals: &[f64]) -> Result<(), DiscreteError> {
        if vals.len() != self.values.len() {
            return Err(DiscreteError::ShapeMismatch {
                expected: self.values.len(),
                got: vals.len(),
            });
        }
        for (c, v) in vals.iter().enumerate() {
            self.values[c] = if self.mask[c] { *v } else { 0.0 };
        }
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }
}

/// Face-centered (MAC) vector field: component `d` lives on `d`-normal
/// faces. Each component carries its own activity mask; inactive faces are
/// exactly zero.
#[derive(Clone, Debug)]
pub struct VectorField {
    grid: StructuredGrid,
    comps: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
}

impl VectorField {
    pub fn zeros(grid: &StructuredGrid) -> Self {
        let comps: Vec<Vec<f64>> = (0..grid.dim())
            .map(|d| vec![0.0; grid.face_count(d)])
            .collect();
        let masks: Vec<Vec<bool>> = (0..grid.dim())
            .map(|d| vec![true; grid.face_count(d)])
            .collect();
        VectorField {
            grid: grid.clone(),
            comps,
            masks,
        }
    }

    pub fn zeros_masked(
        grid: &StructuredGrid,
        masks: Vec<Vec<bool>>,
    ) -> Result<Self, DiscreteError> {
        if masks.len() != grid.dim() {
            return Err(DiscreteError::ShapeMismatch {
                expected: grid.dim(),
                got: masks.len(),
            });
        }
        for (d, m) in masks.iter().enumerate() {
            if m.len() != grid.face_count(d) {
                return Err(DiscreteError::ShapeMismatch {
                    expected: grid.face_count(d),
                    got: m.len(),
                });
            }
        }
        let comps: Vec<Vec<f64>> = (0..grid.dim())
            .map(|d| vec![0.0; grid.face_count(d)])
            .collect();
        Ok(VectorField {
            grid: grid.clone(),
            comps,
            masks,
        })
    }

    /// Samples `f(component, face_center)` at active faces.
    pub fn from_fn(grid: &StructuredGrid, mut f: impl FnMut(usize, &[f64]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for d in 0..grid.dim() {
            let dims = grid.face_dims(d);
            for (c, idx) in ix::iter(&dims) {
                out.comps[d][c] = f(d, &grid.face_center(d, &idx[..grid.dim()]));
            }
        }
        out
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn comp(&self, d: usize) -> &[f64] {
        &self.comps[d]
    }

    pub fn mask(&self, d: usize) -> &[bool] {
        &self.masks[d]
    }

    pub fn get(&self, d: usize, f: usize) -> f64 {
        self.comps[d][f]
    }

    pub fn set(&mut self, d: usize, f: usize, v: f64) {
        if self.masks[d][f] {
            self.comps[d][f] = v;
        }
    }

    /// Overwrites component `d` from a slice (inactive faces zeroed).
    pub fn assign_comp(&mut self, d: usize, vals: &[f64]) -> Result<(), DiscreteError> {
        if vals.len() != self.comps[d].len() {
            return Err(DiscreteError::ShapeMismatch {
                expected: self.comps[d].len(),
                got: vals.len(),
            });
        }
        for (c, v) in vals.iter().enumerate() {
            self.comps[d][c] = if self.masks[d][c] { *v } else { 0.0 };
        }
        Ok(())
    }
}

/// Conservative face-difference divergence, cell by cell:
/// `div v (cell) = Σ_d (v_d(high face) − v_d(low face)) / h_d`,
/// wrapping on periodic axes.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid();
    let n = grid.dim();
    let mut out = ScalarField::zeros(grid);
    for (c, idx) in ix::iter(grid.cells()) {
        let mut acc = 0.0;
        for d in 0..n {
            let fdims = ix::pad_dims(&grid.face_dims(d));
            let fstr = ix::strides(&fdims);
            let lo = ix::lin(&fstr, &idx);
            let mut hi_idx = idx;
            hi_idx[d] = if grid.periodic()[d] {
                (idx[d] + 1) % grid.cells()[d]
            } else {
                idx[d] + 1
            };
            let hi = ix::lin(&fstr, &hi_idx);
            acc += (v.comps[d][hi] - v.comps[d][lo]) / grid.spacing()[d];
        }
        out.values[c] = acc;
    }
    out
}

/// Face-difference gradient, the (negative-transpose) adjoint of
/// [`divergence`] with respect to the plain volume-weighted inner products:
/// interior/periodic faces get `(p(high cell) − p(low cell)) / h_d`;
/// non-periodic domain-boundary faces are set to zero (boundary conditions
/// are the solvers' business).
pub fn gradient(p: &ScalarField) -> VectorField {
    let grid = p.grid();
    let n = grid.dim();
    let mut out = VectorField::zeros(grid);
    let cdims = ix::pad_dims(grid.cells());
    let cstr = ix::strides(&cdims);
    for d in 0..n {
        let fdims = grid.face_dims(d);
        for (f, idx) in ix::iter(&fdims) {
            let nd = grid.cells()[d];
            let (lo_cell, hi_cell) = if grid.periodic()[d] {
                let mut lo = idx;
                lo[d] = (idx[d] + nd - 1) % nd;
                (Some(lo), Some(idx))
            } else if idx[d] == 0 || idx[d] == nd {
                (None, None)
            } else {
                let mut lo = idx;
                lo[d] = idx[d] - 1;
                (Some(lo), Some(idx))
            };
            out.comps[d][f] = match (lo_cell, hi_cell) {
                (Some(lo), Some(hi)) => {
                    (p.values[ix::lin(&cstr, &hi)] - p.values[ix::lin(&cstr, &lo)])
                        / grid.spacing()[d]
                }
                _ => 0.0,
            };
        }
    }
    out
}

/// Volume-weighted inner product of two cell fields.
pub fn dot_cells(a: &ScalarField, b: &ScalarField) -> Result<f64, DiscreteError> {
    if a.grid() != b.grid() {
        return Err(DiscreteError::GridMismatch);
    }
    let vol = a.grid().cell_volume();
    let mut acc = 0.0;
    for c in 0..a.values.len() {
        acc += a.values[c] * b.values[c];
    }
    Ok(acc * vol)
}

/// Volume-weighted inner product of two face fields (every face weighted by
/// one cell volume; used for discrete adjointness identities).
pub fn dot_faces(a: &VectorField, b: &VectorField) -> Result<f64, DiscreteError> {
    if a.grid() != b.grid() {
        return Err(DiscreteError::GridMismatch);
    }
    let vol = a.grid().cell_volume();
    let mut acc = 0.0;
    for d in 0..a.grid().dim() {
        let (ca, cb) = (&a.comps[d], &b.comps[d]);
        for f in 0..ca.len() {
            acc += ca[f] * cb[f];
        }
    }
    Ok(acc * vol)
}

/// Multiplicative prefactors (typically powers of `ε`) applied to the norm
/// groups returned by [`weighted_norms`].
#[derive(Clone, Copy, Debug)]
pub struct NormWeights {
    pub l2: f64,
    pub grad_l2: f64,
    pub linf: f64,
}

impl Default for NormWeights {
    fn default() -> Self {
        NormWeights {
            l2: 1.0,
            grad_l2: 1.0,
            linf: 1.0,
        }
    }
}

/// Weighted norms of a field: `L²`, the `L²` norms of the horizontal and
/// vertical parts of its discrete gradient (last axis = vertical), their
/// combination, and `L∞` — each multiplied by the requested prefactor.
#[derive(Clone, Copy, Debug, Default)]
pub struct NormRecord {
    pub l2: f64,
    pub grad_horizontal_l2: f64,
    pub grad_vertical_l2: f64,
    pub grad_l2: f64,
    pub linf: f64,
}

/// Norms of a cell-centered field over its active cells. Gradient terms are
/// accumulated only across faces whose two neighboring cells are both
/// active (fluxes into masked regions are dropped, matching the Neumann
/// treatment of interior walls).
pub fn weighted_norms(field: &ScalarField, w: &NormWeights) -> NormRecord {
    let grid = field.grid();
    let n = grid.dim();
    let vol = grid.cell_volume();
    let mut l2sq = 0.0;
    let mut linf: f64 = 0.0;
    for c in 0..field.values.len() {
        if field.mask[c] {
            l2sq += field.values[c] * field.values[c];
            linf = linf.max(field.values[c].abs());
        }
    }
    let cdims = ix::pad_dims(grid.cells());
    let cstr = ix::strides(&cdims);
    let mut gh = 0.0;
    let mut gv = 0.0;
    for d in 0..n {
        let h = grid.spacing()[d];
        let mut acc = 0.0;
        for (c, idx) in ix::iter(grid.cells()) {
            if !field.mask[c] {
                continue;
            }
            let nd = grid.cells()[d];
            let hi_idx = if grid.periodic()[d] {
                let mut j = idx;
                j[d] = (idx[d] + 1) % nd;
                Some(j)
            } else if idx[d] + 1 < nd {
                let mut j = idx;
                j[d] = idx[d] + 1;
                Some(j)
            } else {
                None
            };
            if let Some(j) = hi_idx {
                let cj = ix::lin(&cstr, &j);
                if field.mask[cj] {
                    let g = (field.values[cj] - field.values[c]) / h;
                    acc += g * g;
                }
            }
        }
        if d + 1 == n {
            gv += acc;
        } else {
            gh += acc;
        }
    }
    NormRecord {
        l2: w.l2 * (l2sq * vol).sqrt(),
        grad_horizontal_l2: w.grad_l2 * (gh * vol).sqrt(),
        grad_vertical_l2: w.grad_l2 * (gv * vol).sqrt(),
        grad_l2: w.grad_l2 * ((gh + gv) * vol).sqrt(),
        linf: w.linf * linf,
    }
}

/// Norms of a MAC velocity field over its active faces. `L²` uses one cell
/// volume per face with half weight on non-periodic domain-boundary faces;
/// gradient terms difference each component along every axis across pairs
/// of active faces (an interior-only seminorm — wall contributions belong
/// to the solvers' energy forms).
pub fn weighted_norms_vector(field: &VectorField, w: &NormWeights) -> NormRecord {
    let grid = field.grid();
    let n = grid.dim();
    let vol = grid.cell_volume();
    let mut l2sq = 0.0;
    let mut linf: f64 = 0.0;
    for d in 0..n {
        let fdims = grid.face_dims(d);
        for (f, idx) in ix::iter(&fdims) {
            if !field.masks[d][f] {
                continue;
            }
            let boundary = !grid.periodic()[d] && (idx[d] == 0 || idx[d] == grid.cells()[d]);
            let weight = if boundary { 0.5 } else { 1.0 };
            let v = field.comps[d][f];
            l2sq += weight * v * v;
            linf = linf.max(v.abs());
        }
    }
    let mut gh = 0.0;
    let mut gv = 0.0;
    for d in 0..n {
        let fdims = grid.face_dims(d);
        let fpad = ix::pad_dims(&fdims);
        let fstr = ix::strides(&fpad);
        for e in 0..n {
            let he = grid.spacing()[e];
            let mut acc = 0.0;
            for (f, idx) in ix::iter(&fdims) {
                if !field.masks[d][f] {
                    continue;
                }
                let ne = fdims[e];
                let hi_idx = if grid.periodic()[e] {
                    let mut j = idx;
                    j[e] = (idx[e] + 1) % ne;
                    Some(j)
                } else if idx[e] + 1 < ne {
                    let mut j = idx;
                    j[e] = idx[e] + 1;
                    Some(j)
                } else {
                    None
                };
                if let Some(j) = hi_idx {
                    let fj = ix::lin(&fstr, &j);
                    if field.masks[d][fj] {
                        let g = (field.comps[d][fj] - field.comps[d][f]) / he;
                        acc += g * g;
                    }
                }
            }
            if e + 1 == n {
                gv += acc;
            } else {
                gh += acc;
            }
        }
    }
    NormRecord {
        l2: w.l2 * (l2sq * vol).sqrt(),
        grad_horizontal_l2: w.grad_l2 * (gh * vol).sqrt(),
        grad_vertical_l2: w.grad_l2 * (gv * vol).sqrt(),
        grad_l2: w.grad_l2 * ((gh + gv) * vol).sqrt(),
        linf: w.linf * linf,
    }
}
