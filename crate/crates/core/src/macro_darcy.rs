//! Effective filtration model on the rescaled layer `Σ × (−1, 1)`: a
//! Darcy law driven by the cell permeability tensor in which, at leading
//! order, only the vertical pressure gradient survives, and incompressi-
//! bility reduces to a per-column condition on the vertical flux.
//!
//! Writing `ζ` for the rescaled vertical coordinate and `K` for the
//! permeability tensor, the model is
//!
//! ```text
//!   ū(x̄, ζ) = K (f₀(x̄, ζ) − ∂_ζ p₀(x̄, ζ) e_v),
//!   ∂_ζ ū·e_v = 0,    p₀(x̄, ±1) = P^±(x̄),
//! ```
//!
//! which decouples into an independent two-point boundary-value problem in
//! `ζ` for every horizontal position. The discretization stores `p₀` at
//! vertical nodes (so the boundary values are imposed exactly) and solves
//! each column directly with the Thomas algorithm; the vertical velocity
//! then comes out constant along each column up to rounding.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Needed for the arithmetic methods under no_std builds; test and example
// builds unify num-traits with its std feature, where the inherent f64
// methods shadow the trait and the import goes quiet.
#[allow(unused_imports)]
use num_traits::Float;

use crate::cell_stokes::PermeabilityTensor;
use crate::discrete::{ScalarField, StructuredGrid};
use crate::indexutil as ix;
use crate::interp;
use crate::linsolve::{self, LinsolveError};
use crate::Frac;

/// Errors from the effective filtration solve.
#[derive(Debug)]
pub enum MacroDarcyError {
    /// The vertical permeability entry is not strictly positive (the
    /// column problems would be singular).
    SingularTensor { vertical_entry: f64 },
    /// Tensor dimension and grid dimension disagree.
    DimensionMismatch { expected: usize, got: usize },
    /// A data field does not conform to the macro grid.
    ShapeMismatch { what: &'static str },
    /// The grid is not a layer grid (periodic horizontally, bounded
    /// vertically).
    InvalidGrid(String),
    /// Direct column solve failed (cannot happen for a positive vertical
    /// entry; kept for faithful error propagation).
    Solver(LinsolveError),
}

impl fmt::Display for MacroDarcyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MacroDarcyError::SingularTensor { vertical_entry } => write!(
                f,
                "vertical permeability entry must be positive, got {vertical_entry}"
            ),
            MacroDarcyError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            MacroDarcyError::ShapeMismatch { what } => {
                write!(f, "field does not conform to the macro grid: {what}")
            }
            MacroDarcyError::InvalidGrid(s) => write!(f, "invalid macro grid: {s}"),
            MacroDarcyError::Solver(e) => write!(f, "column solve failed: {e}"),
        }
    }
}

impl core::error::Error for MacroDarcyError {}

impl From<LinsolveError> for MacroDarcyError {
    fn from(e: LinsolveError) -> Self {
        MacroDarcyError::Solver(e)
    }
}

/// Builds the macro grid `Σ × (−1, 1)`: `horizontal` cells per periodic
/// horizontal axis, `vertical` cells across the bounded rescaled layer.
pub fn macro_grid(
    horizontal: &[usize],
    vertical: usize,
) -> Result<StructuredGrid, crate::discrete::DiscreteError> {
    let n = horizontal.len() + 1;
    let mut cells = horizontal.to_vec();
    cells.push(vertical);
    let mut origin = vec![Frac::new(0, 1); n];
    origin[n - 1] = Frac::new(-1, 1);
    let mut extent = vec![Frac::new(1, 1); n];
    extent[n - 1] = Frac::new(2, 1);
    let mut periodic = vec![true; n];
    periodic[n - 1] = false;
    StructuredGrid::new(&cells, &origin, &extent, &periodic)
}

fn check_layer_grid(grid: &StructuredGrid) -> Result<(), MacroDarcyError> {
    let n = grid.dim();
    for d in 0..n - 1 {
        if !grid.periodic()[d] {
            return Err(MacroDarcyError::InvalidGrid(String::from(
                "horizontal axes must be periodic",
            )));
        }
    }
    if grid.periodic()[n - 1] {
        return Err(MacroDarcyError::InvalidGrid(String::from(
            "vertical axis must be bounded",
        )));
    }
    Ok(())
}

/// Solution of the effective filtration problem.
#[derive(Clone, Debug)]
pub struct DarcySolution {
    grid: StructuredGrid,
    /// Pressure at vertical nodes, stored per column:
    /// `node_pressure[column * (mv + 1) + level]`.
    node_pressure: Vec<f64>,
    /// Pressure averaged to cell centers.
    pressure: ScalarField,
    /// Vertical pressure gradient `∂_ζ p₀` at cell centers.
    vertical_gradient: ScalarField,
    /// Darcy velocity components at cell centers.
    velocity: Vec<ScalarField>,
    /// Per-column vertical flux (constant along each column).
    column_flux: Vec<f64>,
}

impl DarcySolution {
    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    /// Cell-centered pressure.
    pub fn pressure(&self) -> &ScalarField {
        &self.pressure
    }

    /// Cell-centered vertical pressure gradient `∂_ζ p₀`.
    pub fn vertical_gradient(&self) -> &ScalarField {
        &self.vertical_gradient
    }

    /// Cell-centered Darcy velocity component `comp`.
    pub fn velocity(&self, comp: usize) -> &ScalarField {
        &self.velocity[comp]
    }

    pub fn velocity_components(&self) -> &[ScalarField] {
        &self.velocity
    }

    /// Vertical flux of each column, indexed by horizontal cell.
    pub fn column_flux(&self) -> &[f64] {
        &self.column_flux
    }

    /// Pressure at vertical level `level` (0 ..= vertical cells) of the
    /// column holding horizontal cell `column`.
    pub fn node_pressure(&self, column: usize, level: usize) -> f64 {
        let mv = self.grid.cells()[self.grid.dim() - 1];
        self.node_pressure[column * (mv + 1) + level]
    }

    /// Continuous pressure sample: piecewise linear in `ζ` (exact at the
    /// nodes, so the boundary data is reproduced), multilinear and
    /// periodic in the horizontal variables.
    pub fn sample_pressure(&self, x: &[f64]) -> f64 {
        let n = self.grid.dim();
        let mv = self.grid.cells()[n - 1];
        let h = self.grid.spacing()[n - 1];
        let zeta = x[n - 1];
        let origin_v = crate::frac_to_f64(self.grid.origin()[n - 1]);
        let s = ((zeta - origin_v) / h).max(0.0).min(mv as f64);
        let l = (s.floor() as usize).min(mv - 1);
        let t = s - l as f64;
        let lo = self.level_slice(l);
        let hi = self.level_slice(l + 1);
        let a = interp::sample_horizontal(&self.grid, &lo, &x[..n - 1]);
        let b = interp::sample_horizontal(&self.grid, &hi, &x[..n - 1]);
        a * (1.0 - t) + b * t
    }

    fn level_slice(&self, level: usize) -> Vec<f64> {
        let n = self.grid.dim();
        let mv = self.grid.cells()[n - 1];
        let hcount = ix::total(&self.grid.cells()[..n - 1]);
        (0..hcount)
            .map(|c| self.node_pressure[c * (mv + 1) + level])
            .collect()
    }
}

/// Solves the effective filtration problem: `f0` holds the cell-centered
/// macro force components, `p_bottom`/`p_top` the boundary pressure per
/// horizontal cell at `ζ = −1` and `ζ = +1`.
pub fn solve_darcy(
    grid: &StructuredGrid,
    k: &PermeabilityTensor,
    f0: &[ScalarField],
    p_bottom: &[f64],
    p_top: &[f64],
) -> Result<DarcySolution, MacroDarcyError> {
    let n = grid.dim();
    check_layer_grid(grid)?;
    if k.dim() != n {
        return Err(MacroDarcyError::DimensionMismatch {
            expected: n,
            got: k.dim(),
        });
    }
    if f0.len() != n {
        return Err(MacroDarcyError::ShapeMismatch {
            what: "force must have one component per axis",
        });
    }
    for comp in f0 {
        if comp.values().len() != grid.cell_count() {
            return Err(MacroDarcyError::ShapeMismatch {
                what: "force component cell count",
            });
        }
    }
    let hdims: Vec<usize> = grid.cells()[..n - 1].to_vec();
    let hcount = ix::total(&hdims);
    if p_bottom.len() != hcount || p_top.len() != hcount {
        return Err(MacroDarcyError::ShapeMismatch {
            what: "boundary pressure must hold one value per horizontal cell",
        });
    }
    let knn = k.entry(n - 1, n - 1);
    if !(knn > 0.0) || !knn.is_finite() {
        return Err(MacroDarcyError::SingularTensor {
            vertical_entry: knn,
        });
    }
    let mv = grid.cells()[n - 1];
    let h = grid.spacing()[n - 1];
    let strides = ix::strides(&ix::pad_dims(grid.cells()));

    let mut node_pressure = vec![0.0f64; hcount * (mv + 1)];
    let mut pressure = ScalarField::zeros(grid);
    let mut vertical_gradient = ScalarField::zeros(grid);
    let mut velocity: Vec<ScalarField> = (0..n).map(|_| ScalarField::zeros(grid)).collect();
    let mut column_flux = vec![0.0f64; hcount];

    let mut g = vec![0.0f64; mv];
    for (hc, hidx) in ix::iter(&hdims) {
        // Vertical component of K f0 at the column's cell centers.
        let mut cells_lin = vec![0usize; mv];
        for l in 0..mv {
            let mut idx = hidx;
            idx[n - 1] = l;
            let c = ix::lin(&strides, &idx);
            cells_lin[l] = c;
            let mut acc = 0.0;
            for d in 0..n {
                acc += k.entry(n - 1, d) * f0[d].get(c);
            }
            g[l] = acc;
        }
        // Interior nodes l = 1..mv−1: equal vertical flux in the cells
        // below and above the node.
        let interior = mv.saturating_sub(1);
        let p_nodes = if interior == 0 {
            vec![p_bottom[hc], p_top[hc]]
        } else {
            let mut lower = vec![0.0f64; interior];
            let mut diagv = vec![0.0f64; interior];
            let mut upper = vec![0.0f64; interior];
            let mut rhs = vec![0.0f64; interior];
            let w = knn / h;
            for i in 0..interior {
                let l = i + 1;
                lower[i] = w;
                diagv[i] = -2.0 * w;
                upper[i] = w;
                rhs[i] = g[l] - g[l - 1];
            }
            rhs[0] -= w * p_bottom[hc];
            rhs[interior - 1] -= w * p_top[hc];
            let x = linsolve::solve_tridiagonal(&lower, &diagv, &upper, &rhs)?;
            let mut p = Vec::with_capacity(mv + 1);
            p.push(p_bottom[hc]);
            p.extend_from_slice(&x);
            p.push(p_top[hc]);
            p
        };
        for (l, &pv) in p_nodes.iter().enumerate() {
            node_pressure[hc * (mv + 1) + l] = pv;
        }
        // Cell-centered fields and the column's vertical flux.
        let mut flux_mean = 0.0;
        for l in 0..mv {
            let c = cells_lin[l];
            let dp = (p_nodes[l + 1] - p_nodes[l]) / h;
            pressure.set(c, 0.5 * (p_nodes[l] + p_nodes[l + 1]));
            vertical_gradient.set(c, dp);
            for i in 0..n {
                let mut acc = 0.0;
                for d in 0..n {
                    acc += k.entry(i, d) * f0[d].get(c);
                }
                acc -= k.entry(i, n - 1) * dp;
                velocity[i].set(c, acc);
            }
            flux_mean += velocity[n - 1].get(c);
        }
        column_flux[hc] = flux_mean / mv as f64;
    }

    Ok(DarcySolution {
        grid: grid.clone(),
        node_pressure,
        pressure,
        vertical_gradient,
        velocity,
        column_flux,
    })
}

/// Residual diagnostics of a filtration solution.
#[derive(Clone, Copy, Debug)]
pub struct DarcyDiagnostics {
    /// Largest deviation of the vertical velocity from its column mean.
    pub column_variation: f64,
    /// Largest pointwise residual of the Darcy law
    /// `ū − K(f₀ − ∂_ζ p₀ e_v)` over all cells and components.
    pub law_residual: f64,
    /// Largest boundary-pressure mismatch at the two plates.
    pub boundary_mismatch: f64,
}

/// Re-checks a filtration solution against its defining relations.
pub fn verify_darcy(
    solution: &DarcySolution,
    k: &PermeabilityTensor,
    f0: &[ScalarField],
    p_bottom: &[f64],
    p_top: &[f64],
) -> Result<DarcyDiagnostics, MacroDarcyError> {
    let grid = &solution.grid;
    let n = grid.dim();
    if k.dim() != n {
        return Err(MacroDarcyError::DimensionMismatch {
            expected: n,
            got: k.dim(),
        });
    }
    let hdims: Vec<usize> = grid.cells()[..n - 1].to_vec();
    let hcount = ix::total(&hdims);
    if p_bottom.len() != hcount || p_top.len() != hcount || f0.len() != n {
        return Err(MacroDarcyError::ShapeMismatch {
            what: "diagnostic data shapes",
        });
    }
    let mv = grid.cells()[n - 1];
    let strides = ix::strides(&ix::pad_dims(grid.cells()));
    let mut column_variation = 0.0f64;
    let mut law_residual = 0.0f64;
    let mut boundary_mismatch = 0.0f64;
    for (hc, hidx) in ix::iter(&hdims) {
        boundary_mismatch = boundary_mismatch
            .max((solution.node_pressure(hc, 0) - p_bottom[hc]).abs())
            .max((solution.node_pressure(hc, mv) - p_top[hc]).abs());
        for l in 0..mv {
            let mut idx = hidx;
            idx[n - 1] = l;
            let c = ix::lin(&strides, &idx);
            column_variation = column_variation
                .max((solution.velocity[n - 1].get(c) - solution.column_flux[hc]).abs());
            let dp = solution.vertical_gradient.get(c);
            for i in 0..n {
                let mut acc = 0.0;
                for d in 0..n {
                    acc += k.entry(i, d) * f0[d].get(c);
                }
                acc -= k.entry(i, n - 1) * dp;
                law_residual = law_residual.max((solution.velocity[i].get(c) - acc).abs());
            }
        }
    }
    Ok(DarcyDiagnostics {
        column_variation,
        law_residual,
        boundary_mismatch,
    })
}
