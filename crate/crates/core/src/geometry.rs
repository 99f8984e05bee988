//! Periodic unit-cell geometry and thin-layer construction.
//!
//! The reference cell is `Y = (0,1)^n`, split into a fluid part `Y_f` and a
//! solid inclusion `Y_s` with interface `Γ`. The thin layer is
//! `Σ × (−ε^α, ε^α)`, tiled by `ε`-scaled copies of the cell; admissibility
//! of `(ε, α)` means both `1/ε` and `ε^α/ε` are integers, so no micro-cell
//! is cut by the outer boundary. Masks are rasterized by cell-center
//! membership, which keeps them exact under tiling.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Needed for the arithmetic methods under no_std builds; test and example
// builds unify num-traits with its std feature, where the inherent f64
// methods shadow the trait and the import goes quiet.
#[allow(unused_imports)]
use num_traits::Float;

use crate::discrete::StructuredGrid;
use crate::indexutil as ix;
use crate::Frac;

/// Errors raised while validating scales or building geometry.
#[derive(Clone, Debug, PartialEq)]
pub enum GeometryError {
    /// `(ε, α)` cannot satisfy the integrality constraints exactly.
    NonRepresentable(String),
    /// A parameter is outside its admissible range.
    OutOfRange(String),
    /// The fluid region splits into several connected components.
    DisconnectedFluid { components: usize },
    /// The fluid region is empty.
    EmptyFluid,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::NonRepresentable(msg) => {
                write!(f, "scales not exactly representable: {msg}")
            }
            GeometryError::OutOfRange(msg) => write!(f, "parameter out of range: {msg}"),
            GeometryError::DisconnectedFluid { components } => {
                write!(f, "fluid region has {components} connected components")
            }
            GeometryError::EmptyFluid => write!(f, "fluid region is empty"),
        }
    }
}

impl core::error::Error for GeometryError {}

/// Validated scale pair `(ε, α)` with the derived integer layout of the
/// layer: writing `α = p/q` in lowest terms, admissibility forces
/// `1/ε = d^q` for an integer `d ≥ 2`; then `ε^α = d^{−p}` and
/// `ε^α/ε = d^{q−p}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibleScales {
    pub eps: Frac,
    pub alpha: Frac,
    /// The base `d` with `1/ε = d^q`.
    pub base: i64,
    /// `1/ε`: micro-cells per unit horizontal length.
    pub cells_per_unit: i64,
    /// `ε^α/ε`: micro-cells across the half thickness.
    pub vertical_ratio: i64,
    /// `ε^α`, the half thickness, exact.
    pub half_thickness: Frac,
}

impl AdmissibleScales {
    pub fn eps_f64(&self) -> f64 {
        crate::frac_to_f64(self.eps)
    }

    pub fn alpha_f64(&self) -> f64 {
        crate::frac_to_f64(self.alpha)
    }

    pub fn half_thickness_f64(&self) -> f64 {
        crate::frac_to_f64(self.half_thickness)
    }
}

fn checked_pow(base: i64, exp: i64) -> Option<i64> {
    let mut acc: i128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as i128)?;
        if acc > i64::MAX as i128 {
            return None;
        }
    }
    Some(acc as i64)
}

/// Validates that `ε ∈ (0,1)` and `α ∈ (0,1)` are exactly representable on
/// the layer grid: `1/ε` must be an integer that is a perfect `q`-th power
/// (`α = p/q` reduced), which makes both `1/ε` and `ε^α/ε` integers.
pub fn check_admissible_scales(eps: Frac, alpha: Frac) -> Result<AdmissibleScales, GeometryError> {
    let zero = Frac::new(0, 1);
    let one = Frac::new(1, 1);
    if !(alpha > zero && alpha < one) {
        return Err(GeometryError::OutOfRange(format!(
            "α = {alpha} must lie strictly between 0 and 1"
        )));
    }
    if !(eps > zero && eps < one) {
        return Err(GeometryError::OutOfRange(format!(
            "ε = {eps} must lie strictly between 0 and 1"
        )));
    }
    let p = *alpha.numer();
    let q = *alpha.denom();
    if *eps.numer() != 1 {
        return Err(GeometryError::NonRepresentable(format!(
            "1/ε must be an integer, got ε = {eps}"
        )));
    }
    let n_cells = *eps.denom();
    // Find integer d ≥ 2 with d^q = 1/ε; gcd(p, q) = 1 makes this the exact
    // condition for ε^α/ε = (1/ε)^{(q−p)/q} to be an integer.
    let guess = (n_cells as f64).powf(1.0 / q as f64).round() as i64;
    let mut base = None;
    for d in (guess - 2).max(2)..=(guess + 2) {
        if checked_pow(d, q) == Some(n_cells) {
            base = Some(d);
            break;
        }
    }
    let base = base.ok_or_else(|| {
        GeometryError::NonRepresentable(format!(
            "ε^α is irrational for ε = {eps}, α = {alpha}: 1/ε must be a perfect {q}-th power"
        ))
    })?;
    let vertical_ratio = checked_pow(base, q - p).ok_or_else(|| {
        GeometryError::OutOfRange(format!("ε^α/ε overflows for ε = {eps}, α = {alpha}"))
    })?;
    let half_denom = checked_pow(base, p).ok_or_else(|| {
        GeometryError::OutOfRange(format!("1/ε^α overflows for ε = {eps}, α = {alpha}"))
    })?;
    Ok(AdmissibleScales {
        eps,
        alpha,
        base,
        cells_per_unit: n_cells,
        vertical_ratio,
        half_thickness: Frac::new(1, half_denom),
    })
}

/// Shape of the solid inclusion `Y_s` inside the open unit cell.
///
/// Coordinates are cell units in `(0,1)`. Balls must lie strictly inside the
/// cell. Boxes may touch (or span) the cell faces, in which case the
/// periodic connectivity check on the rasterized mask decides validity.
/// Cylinders extrude a horizontal section over the full cell height; their
/// section must lie strictly inside `(0,1)^{n−1}`.
#[derive(Clone, Debug, PartialEq)]
pub enum InclusionSpec {
    /// No solid inclusion: a full-fluid (degenerate) test cell.
    None,
    /// Solid ball (disk in 2-D): `center` has length `n`.
    Ball { center: Vec<f64>, radius: f64 },
    /// Solid axis-aligned box: `center` and `half_widths` have length `n`.
    Box {
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
    /// Vertical solid cylinder over a ball section: `center` has length
    /// `n − 1` (horizontal coordinates only).
    CylinderBall { center: Vec<f64>, radius: f64 },
    /// Vertical solid cylinder over a box section: `center` and
    /// `half_widths` have length `n − 1`.
    CylinderBox {
        center: Vec<f64>,
        half_widths: Vec<f64>,
    },
}

impl InclusionSpec {
    /// Whether this spec describes any solid at all.
    pub fn has_solid(&self) -> bool {
        !matches!(self, InclusionSpec::None)
    }

    /// Whether the inclusion is a vertical cylinder (its horizontal section
    /// extruded over the full cell height).
    pub fn is_cylinder(&self) -> bool {
        matches!(
            self,
            InclusionSpec::CylinderBall { .. } | InclusionSpec::CylinderBox { .. }
        )
    }

    fn validate(&self, n: usize) -> Result<(), GeometryError> {
        let check_len = |v: &Vec<f64>, want: usize, what: &str| {
            if v.len() != want {
                Err(GeometryError::OutOfRange(format!(
                    "{what} must have {want} entries, got {}",
                    v.len()
                )))
            } else {
                Ok(())
            }
        };
        let finite = |v: f64| v.is_finite();
        match self {
            InclusionSpec::None => Ok(()),
            InclusionSpec::Ball { center, radius } => {
                check_len(center, n, "ball center")?;
                if !finite(*radius) || *radius <= 0.0 {
                    return Err(GeometryError::OutOfRange(
                        "ball radius must be positive".into(),
                    ));
                }
                for (d, &c) in center.iter().enumerate() {
                    if !finite(c) || c - radius <= 0.0 || c + radius >= 1.0 {
                        return Err(GeometryError::OutOfRange(format!(
                            "ball must lie strictly inside the open cell (axis {d})"
                        )));
                    }
                }
                Ok(())
            }
            InclusionSpec::Box {
                center,
                half_widths,
            } => {
                check_len(center, n, "box center")?;
                check_len(half_widths, n, "box half-widths")?;
                for d in 0..n {
                    let (c, w) = (center[d], half_widths[d]);
                    if !finite(c) || !finite(w) || w <= 0.0 {
                        return Err(GeometryError::OutOfRange(format!(
                            "box half-width must be positive (axis {d})"
                        )));
                    }
                    if c - w < 0.0 || c + w > 1.0 {
                        return Err(GeometryError::OutOfRange(format!(
                            "box must stay inside the closed cell (axis {d})"
                        )));
                    }
                }
                Ok(())
            }
            InclusionSpec::CylinderBall { center, radius } => {
                if n < 3 {
                    return Err(GeometryError::OutOfRange(
                        "cylinder inclusions need n ≥ 3 (use a box that spans the vertical axis in 2-D)"
                            .into(),
                    ));
                }
                check_len(center, n - 1, "cylinder section center")?;
                if !finite(*radius) || *radius <= 0.0 {
                    return Err(GeometryError::OutOfRange(
                        "cylinder radius must be positive".into(),
                    ));
                }
                for (d, &c) in center.iter().enumerate() {
                    if !finite(c) || c - radius <= 0.0 || c + radius >= 1.0 {
                        return Err(GeometryError::OutOfRange(format!(
                            "cylinder section must lie strictly inside the open cross-section (axis {d})"
                        )));
                    }
                }
                Ok(())
            }
            InclusionSpec::CylinderBox {
                center,
                half_widths,
            } => {
                if n < 3 {
                    return Err(GeometryError::OutOfRange(
                        "cylinder inclusions need n ≥ 3 (use a box that spans the vertical axis in 2-D)"
                            .into(),
                    ));
                }
                check_len(center, n - 1, "cylinder section center")?;
                check_len(half_widths, n - 1, "cylinder section half-widths")?;
                for d in 0..n - 1 {
                    let (c, w) = (center[d], half_widths[d]);
                    if !finite(c) || !finite(w) || w <= 0.0 || c - w <= 0.0 || c + w >= 1.0 {
                        return Err(GeometryError::OutOfRange(format!(
                            "cylinder section must lie strictly inside the open cross-section (axis {d})"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Membership test: is the point (in cell units) inside the solid?
    fn solid_at(&self, x: &[f64]) -> bool {
        match self {
            InclusionSpec::None => false,
            InclusionSpec::Ball { center, radius } => {
                let mut d2 = 0.0;
                for (xi, ci) in x.iter().zip(center.iter()) {
                    d2 += (xi - ci) * (xi - ci);
                }
                d2 < radius * radius
            }
            InclusionSpec::Box {
                center,
                half_widths,
            } => x
                .iter()
                .zip(center.iter().zip(half_widths.iter()))
                .all(|(xi, (ci, wi))| (xi - ci).abs() < *wi),
            InclusionSpec::CylinderBall { center, radius } => {
                let mut d2 = 0.0;
                for (xi, ci) in x.iter().take(center.len()).zip(center.iter()) {
                    d2 += (xi - ci) * (xi - ci);
                }
                d2 < radius * radius
            }
            InclusionSpec::CylinderBox {
                center,
                half_widths,
            } => x
                .iter()
                .take(center.len())
                .zip(center.iter().zip(half_widths.iter()))
                .all(|(xi, (ci, wi))| (xi - ci).abs() < *wi),
        }
    }
}

/// Rasterized unit cell: the fluid mask over an `m^n` grid plus derived
/// quantities. The mask is periodic-consistent (one fluid component on the
/// torus).
#[derive(Clone, Debug)]
pub struct UnitCellGeometry {
    n: usize,
    m: usize,
    inclusion: InclusionSpec,
    fluid: Vec<bool>,
    fluid_cells: usize,
}

impl UnitCellGeometry {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Cells per unit edge.
    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn inclusion(&self) -> &InclusionSpec {
        &self.inclusion
    }

    /// Fluid mask in linear order (axis 0 fastest).
    pub fn fluid_mask(&self) -> &[bool] {
        &self.fluid
    }

    pub fn fluid_cells(&self) -> usize {
        self.fluid_cells
    }

    /// Fluid volume fraction `|Y_f|` = fluid cells / `m^n`.
    pub fn porosity(&self) -> f64 {
        self.fluid_cells as f64 / ix::total(&vec![self.m; self.n]) as f64
    }

    /// Whether the cell contains any solid (`Γ ≠ ∅`).
    pub fn has_solid(&self) -> bool {
        self.fluid_cells < ix::total(&vec![self.m; self.n])
    }

    pub fn is_fluid(&self, idx: &[usize]) -> bool {
        let dims = ix::pad_dims(&vec![self.m; self.n]);
        self.fluid[ix::lin(&ix::strides(&dims), &ix::pad_idx(idx))]
    }

    /// The fully periodic `m^n` grid this mask lives on.
    pub fn grid(&self) -> StructuredGrid {
        StructuredGrid::unit_cell(self.n, self.m).expect("validated at construction")
    }
}

fn flood_fill_components(dims: &[usize], open: &[bool], periodic: bool) -> usize {
    flood_fill_labels(dims, open, periodic).0
}

/// Labels connected components of `open` cells (axis-aligned adjacency,
/// optionally wrapping). Returns the component count and a per-cell label
/// (`usize::MAX` on closed cells).
pub(crate) fn flood_fill_labels(
    dims: &[usize],
    open: &[bool],
    periodic: bool,
) -> (usize, Vec<usize>) {
    let n = dims.len();
    let padded = ix::pad_dims(dims);
    let strides = ix::strides(&padded);
    let mut labels = vec![usize::MAX; open.len()];
    let mut stack: Vec<usize> = Vec::new();
    let mut components = 0;
    for start in 0..open.len() {
        if !open[start] || labels[start] != usize::MAX {
            continue;
        }
        let label = components;
        components += 1;
        labels[start] = label;
        stack.push(start);
        while let Some(c) = stack.pop() {
            // Decode the multi-index.
            let mut idx = [0usize; ix::MAX_DIM];
            let mut rem = c;
            for d in 0..n {
                idx[d] = rem % padded[d];
                rem /= padded[d];
            }
            for d in 0..n {
                for dir in [-1isize, 1] {
                    let nd = dims[d] as isize;
                    let raw = idx[d] as isize + dir;
                    let wrapped = if periodic {
                        ((raw % nd) + nd) % nd
                    } else if raw < 0 || raw >= nd {
                        continue;
                    } else {
                        raw
                    };
                    let mut j = idx;
                    j[d] = wrapped as usize;
                    let cj = ix::lin(&strides, &j);
                    if open[cj] && labels[cj] == usize::MAX {
                        labels[cj] = label;
                        stack.push(cj);
                    }
                }
            }
        }
    }
    (components, labels)
}

/// Rasterizes `Y_f = Y \ Y_s` on an `m^n` grid by cell-center membership
/// and verifies that the fluid is non-empty and connected on the torus.
pub fn build_unit_cell(
    spec: &InclusionSpec,
    n: usize,
    m: usize,
) -> Result<UnitCellGeometry, GeometryError> {
    if !(2..=3).contains(&n) {
        return Err(GeometryError::OutOfRange(format!(
            "dimension n = {n} not supported (2 or 3)"
        )));
    }
    if m < 8 {
        return Err(GeometryError::OutOfRange(format!(
            "cell resolution m = {m} too coarse (need m ≥ 8)"
        )));
    }
    spec.validate(n)?;
    let dims = vec![m; n];
    let total = ix::total(&dims);
    let mut fluid = vec![false; total];
    let mut fluid_cells = 0usize;
    let mut center = [0.0f64; ix::MAX_DIM];
    for (c, idx) in ix::iter(&dims) {
        for d in 0..n {
            center[d] = (idx[d] as f64 + 0.5) / m as f64;
        }
        let is_fluid = !spec.solid_at(&center[..n]);
        fluid[c] = is_fluid;
        fluid_cells += is_fluid as usize;
    }
    if fluid_cells == 0 {
        return Err(GeometryError::EmptyFluid);
    }
    let components = flood_fill_components(&dims, &fluid, true);
    if components > 1 {
        return Err(GeometryError::DisconnectedFluid { components });
    }
    Ok(UnitCellGeometry {
        n,
        m,
        inclusion: spec.clone(),
        fluid,
        fluid_cells,
    })
}

/// Classification of a grid face of the layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceTag {
    /// Top boundary face `S⁺` (fluid cell below).
    Top,
    /// Bottom boundary face `S⁻` (fluid cell above).
    Bottom,
    /// Lateral boundary face with a fluid neighbor.
    Lateral,
    /// Interior face between a fluid and a solid cell (on `Γ`).
    Interface,
    /// Interior face with fluid on both sides.
    InteriorFluid,
    /// Face entirely inside or bordering only solid.
    Solid,
}

/// The thin perforated layer `Σ × (−ε^α, ε^α)`: the unit-cell mask tiled
/// over the admissible micro-cell layout, on an isotropic grid of spacing
/// `ε/m` (so each micro-cell is rasterized exactly like the unit cell).
#[derive(Clone, Debug)]
pub struct LayerGeometry {
    cell: UnitCellGeometry,
    scales: AdmissibleScales,
    sigma: Vec<(i64, i64)>,
    grid: StructuredGrid,
    fluid: Vec<bool>,
    fluid_cells: usize,
}

impl LayerGeometry {
    pub fn cell(&self) -> &UnitCellGeometry {
        &self.cell
    }

    pub fn scales(&self) -> &AdmissibleScales {
        &self.scales
    }

    /// The horizontal cross-section `Σ` as per-axis integer intervals.
    pub fn sigma(&self) -> &[(i64, i64)] {
        &self.sigma
    }

    /// The non-periodic grid covering `Σ × (−ε^α, ε^α)`.
    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn fluid_mask(&self) -> &[bool] {
        &self.fluid
    }

    pub fn fluid_cells(&self) -> usize {
        self.fluid_cells
    }

    pub fn is_fluid(&self, idx: &[usize]) -> bool {
        let dims = ix::pad_dims(self.grid.cells());
        self.fluid[ix::lin(&ix::strides(&dims), &ix::pad_idx(idx))]
    }

    /// Number of micro-cells per horizontal axis and across the full
    /// thickness.
    pub fn micro_cells(&self) -> (Vec<i64>, i64) {
        let horizontal = self
            .sigma
            .iter()
            .map(|&(a, b)| (b - a) * self.scales.cells_per_unit)
            .collect();
        (horizontal, 2 * self.scales.vertical_ratio)
    }

    /// Classifies the `axis`-normal face at face index `idx`.
    pub fn face_tag(&self, axis: usize, idx: &[usize]) -> FaceTag {
        let n = self.grid.dim();
        let cells = self.grid.cells();
        let cdims = ix::pad_dims(cells);
        let cstr = ix::strides(&cdims);
        let fluid_at = |j: &[usize; ix::MAX_DIM]| self.fluid[ix::lin(&cstr, j)];
        let pidx = ix::pad_idx(idx);
        let lo = if idx[axis] == 0 {
            None
        } else {
            let mut j = pidx;
            j[axis] -= 1;
            Some(fluid_at(&j))
        };
        let hi = if idx[axis] == cells[axis] {
            None
        } else {
            Some(fluid_at(&pidx))
        };
        match (lo, hi) {
            (None, Some(f)) | (Some(f), None) => {
                if !f {
                    FaceTag::Solid
                } else if axis + 1 == n {
                    if idx[axis] == 0 {
                        FaceTag::Bottom
                    } else {
                        FaceTag::Top
                    }
                } else {
                    FaceTag::Lateral
                }
            }
            (Some(a), Some(b)) => match (a, b) {
                (true, true) => FaceTag::InteriorFluid,
                (false, false) => FaceTag::Solid,
                _ => FaceTag::Interface,
            },
            (None, None) => FaceTag::Solid,
        }
    }
}

/// Tiles the unit cell over the admissible layout of `Σ × (−ε^α, ε^α)` and
/// verifies that the layer's fluid region is one connected component
/// (without periodic identification — the physical layer is not a torus).
///
/// `sigma` lists the integer interval of `Σ` per horizontal axis
/// (`n − 1` entries).
pub fn build_layer(
    cell: &UnitCellGeometry,
    eps: Frac,
    alpha: Frac,
    sigma: &[(i64, i64)],
) -> Result<LayerGeometry, GeometryError> {
    let scales = check_admissible_scales(eps, alpha)?;
    let n = cell.dim();
    if sigma.len() != n - 1 {
        return Err(GeometryError::OutOfRange(format!(
            "Σ must have {} axis intervals, got {}",
            n - 1,
            sigma.len()
        )));
    }
    for (d, &(a, b)) in sigma.iter().enumerate() {
        if b <= a {
            return Err(GeometryError::OutOfRange(format!(
                "Σ interval on axis {d} is empty ({a}..{b})"
            )));
        }
    }
    let m = cell.resolution() as i64;
    let mut cells_per_axis: Vec<usize> = Vec::with_capacity(n);
    let mut origin: Vec<Frac> = Vec::with_capacity(n);
    let mut extent: Vec<Frac> = Vec::with_capacity(n);
    let mut total_cells: i128 = 1;
    for &(a, b) in sigma {
        let c = (b - a)
            .checked_mul(scales.cells_per_unit)
            .and_then(|v| v.checked_mul(m))
            .ok_or_else(|| GeometryError::OutOfRange("layer grid size overflows".into()))?;
        cells_per_axis.push(c as usize);
        origin.push(Frac::new(a, 1));
        extent.push(Frac::new(b - a, 1));
        total_cells *= c as i128;
    }
    let vert = 2 * scales.vertical_ratio * m;
    cells_per_axis.push(vert as usize);
    origin.push(-scales.half_thickness);
    extent.push(Frac::new(2, 1) * scales.half_thickness);
    total_cells *= vert as i128;
    if total_cells > 1 << 27 {
        return Err(GeometryError::OutOfRange(format!(
            "layer grid with {total_cells} cells exceeds the supported size"
        )));
    }
    let periodic = vec![false; n];
    let grid = StructuredGrid::new(&cells_per_axis, &origin, &extent, &periodic)
        .map_err(|e| GeometryError::OutOfRange(format!("layer grid: {e}")))?;
    // Tile the mask: Σ corners are integers and the layer bottom sits at an
    // integer multiple of ε, so every axis is micro-cell aligned and the
    // in-cell index is simply the global index modulo m.
    let mc = cell.resolution();
    let total = ix::total(&cells_per_axis);
    let mut fluid = vec![false; total];
    let mut fluid_cells = 0usize;
    let cell_dims = ix::pad_dims(&vec![mc; n]);
    let cell_str = ix::strides(&cell_dims);
    for (c, idx) in ix::iter(&cells_per_axis) {
        let mut cj = [0usize; ix::MAX_DIM];
        for d in 0..n {
            cj[d] = idx[d] % mc;
        }
        let f = cell.fluid_mask()[ix::lin(&cell_str, &cj)];
        fluid[c] = f;
        fluid_cells += f as usize;
    }
    if fluid_cells == 0 {
        return Err(GeometryError::EmptyFluid);
    }
    let components = flood_fill_components(&cells_per_axis, &fluid, false);
    if components > 1 {
        return Err(GeometryError::DisconnectedFluid { components });
    }
    Ok(LayerGeometry {
        cell: cell.clone(),
        scales,
        sigma: sigma.to_vec(),
        grid,
        fluid,
        fluid_cells,
    })
}

/// Horizontal fluid cross-section area per vertical slab of the unit cell.
#[derive(Clone, Debug)]
pub struct AreaProfile {
    samples: Vec<f64>,
    min_value: f64,
}

impl AreaProfile {
    /// `A(y_n)` sampled at the `m` slab midpoints, values in `[0, 1]`.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// The essential lower bound `a_0 = min_k A_k`.
    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    /// Builds a profile directly from samples (for closed-form tests).
    pub fn from_samples(samples: Vec<f64>) -> Result<Self, GeometryError> {
        if samples.is_empty() {
            return Err(GeometryError::OutOfRange("empty area profile".into()));
        }
        let mut min_value = f64::INFINITY;
        for &a in &samples {
            if !a.is_finite() || a < 0.0 || a > 1.0 {
                return Err(GeometryError::OutOfRange(
                    "area profile samples must lie in [0, 1]".into(),
                ));
            }
            min_value = min_value.min(a);
        }
        Ok(AreaProfile { samples, min_value })
    }
}

/// Computes the per-slab fluid fraction `A(y_n)` of the cell: slab `k`
/// (vertical index) contributes `fluid cells in slab / m^{n−1}`.
pub fn area_profile(cell: &UnitCellGeometry) -> AreaProfile {
    let n = cell.dim();
    let m = cell.resolution();
    let dims = ix::pad_dims(&vec![m; n]);
    let strides = ix::strides(&dims);
    let horizontal = ix::total(&vec![m; n - 1]);
    let mut samples = vec![0.0; m];
    for k in 0..m {
        let mut count = 0usize;
        for (_, hidx) in ix::iter(&vec![m; n - 1]) {
            let mut j = hidx;
            j[n - 1] = k;
            count += cell.fluid_mask()[ix::lin(&strides, &j)] as usize;
        }
        samples[k] = count as f64 / horizontal as f64;
    }
    let min_value = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    AreaProfile { samples, min_value }
}
