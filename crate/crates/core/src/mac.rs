//! Shared staggered-grid (MAC) Stokes assembly.
//!
//! Velocity unknowns live on grid faces (component `d` on `d`-normal
//! faces), pressure unknowns on fluid cell centers. The viscous block is
//! the energy form `a(u, v) = Σ_cells h^n ∇u : ∇v` with one-sided
//! differences; no-slip at solid obstacles and at wall boundaries is
//! imposed by deactivating faces (their value is exactly zero), so the
//! effective wall passes through the deactivated face positions half a
//! cell inside the obstacle. The divergence block is scaled so that the
//! saddle system `A u + Bᵀ p = F`, `B u = 0` is the discrete analog of the
//! weak form with `−∫ p ∇·v`: pressures returned by the solver need no
//! sign flip. The pressure Schur complement is preconditioned by the
//! (scalar) mass matrix, which on our uniform grids is a constant scaling
//! and therefore left as the identity.

use alloc::vec;
use alloc::vec::Vec;

use crate::discrete::{ScalarField, StructuredGrid, VectorField};
use crate::indexutil as ix;
use crate::linsolve::SparseMatrix;

/// Per-axis boundary treatment for the velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum AxisBc {
    /// Identified endpoints (unit-cell problems).
    Periodic,
    /// No-slip plane: normal faces on the boundary are removed, tangential
    /// faces see a zero partner.
    Wall,
    /// Natural (traction) boundary: normal faces on the boundary stay
    /// active, tangential derivatives across the boundary are dropped.
    Free,
}

/// Assembled Stokes operator for one grid/mask/boundary configuration.
pub(crate) struct StokesSystem {
    grid: StructuredGrid,
    bc: Vec<AxisBc>,
    /// Per component: face linear index → velocity unknown, if active.
    active: Vec<Vec<Option<usize>>>,
    /// Per velocity unknown: (component, face multi-index).
    unknown_face: Vec<(usize, ix::Idx)>,
    /// Cell linear index → pressure row, for fluid cells.
    pressure_row: Vec<Option<usize>>,
    /// Pressure row → cell multi-index.
    row_cell: Vec<ix::Idx>,
    pub(crate) a: SparseMatrix,
    pub(crate) b: SparseMatrix,
}

impl StokesSystem {
    /// Builds the operator. `fluid` is the cell activity mask; `bc` must
    /// agree with the grid's periodicity axis by axis.
    pub(crate) fn assemble(grid: &StructuredGrid, fluid: &[bool], bc: &[AxisBc]) -> Self {
        let n = grid.dim();
        assert_eq!(fluid.len(), grid.cell_count());
        assert_eq!(bc.len(), n);
        for d in 0..n {
            assert_eq!(
                bc[d] == AxisBc::Periodic,
                grid.periodic()[d],
                "boundary condition must match grid periodicity on axis {d}"
            );
        }
        let cells = grid.cells();
        let cell_strides = ix::strides(&ix::pad_dims(cells));
        let h = grid.spacing();
        let vol = grid.cell_volume();

        let cell_fluid = |idx: &ix::Idx| -> bool { fluid[ix::lin(&cell_strides, idx)] };

        // Face activity per component.
        let mut active: Vec<Vec<Option<usize>>> = Vec::with_capacity(n);
        let mut unknown_face: Vec<(usize, ix::Idx)> = Vec::new();
        for d in 0..n {
            let dims = grid.face_dims(d);
            let mut comp_active = vec![None; ix::total(&dims)];
            for (f, idx) in ix::iter(&dims) {
                let is_active = if bc[d] == AxisBc::Periodic {
                    let mut lo = idx;
                    lo[d] = if idx[d] == 0 { cells[d] - 1 } else { idx[d] - 1 };
                    cell_fluid(&lo) && cell_fluid(&idx)
                } else if idx[d] == 0 {
                    bc[d] == AxisBc::Free && cell_fluid(&idx)
                } else if idx[d] == cells[d] {
                    let mut lo = idx;
                    lo[d] = cells[d] - 1;
                    bc[d] == AxisBc::Free && cell_fluid(&lo)
                } else {
                    let mut lo = idx;
                    lo[d] = idx[d] - 1;
                    cell_fluid(&lo) && cell_fluid(&idx)
                };
                if is_active {
                    comp_active[f] = Some(unknown_face.len());
                    unknown_face.push((d, idx));
                }
            }
            active.push(comp_active);
        }
        let n_u = unknown_face.len();

        // Pressure rows over fluid cells.
        let mut pressure_row = vec![None; grid.cell_count()];
        let mut row_cell = Vec::new();
        for (c, idx) in ix::iter(cells) {
            if fluid[c] {
                pressure_row[c] = Some(row_cell.len());
                row_cell.push(idx);
            }
        }
        let n_p = row_cell.len();

        // Viscous block.
        let mut a_trip: Vec<(usize, usize, f64)> = Vec::new();
        let mut add_pair = |lo: Option<usize>, hi: Option<usize>, coeff: f64| match (lo, hi) {
            (Some(i), Some(j)) => {
                a_trip.push((i, i, coeff));
                a_trip.push((j, j, coeff));
                a_trip.push((i, j, -coeff));
                a_trip.push((j, i, -coeff));
            }
            (Some(i), None) | (None, Some(i)) => a_trip.push((i, i, coeff)),
            (None, None) => {}
        };
        for d in 0..n {
            let fdims = grid.face_dims(d);
            let fstrides = ix::strides(&ix::pad_dims(&fdims));
            let face_at = |idx: &ix::Idx| -> Option<usize> { active[d][ix::lin(&fstrides, idx)] };
            // Normal derivative ∂_d u_d, one pair per fluid cell.
            let coeff_dd = vol / (h[d] * h[d]);
            for (c, idx) in ix::iter(cells) {
                if !fluid[c] {
                    continue;
                }
                let lo = face_at(&idx);
                let mut hi_idx = idx;
                hi_idx[d] = if bc[d] == AxisBc::Periodic && idx[d] + 1 == cells[d] {
                    0
                } else {
                    idx[d] + 1
                };
                let hi = face_at(&hi_idx);
                add_pair(lo, hi, coeff_dd);
            }
            // Transverse derivatives ∂_e u_d, pairs of e-adjacent faces.
            for e in 0..n {
                if e == d {
                    continue;
                }
                let coeff = vol / (h[e] * h[e]);
                for (f, idx) in ix::iter(&fdims) {
                    let lo = active[d][f];
                    if idx[e] + 1 < fdims[e] {
                        let mut hi_idx = idx;
                        hi_idx[e] = idx[e] + 1;
                        add_pair(lo, face_at(&hi_idx), coeff);
                    } else if bc[e] == AxisBc::Periodic {
                        let mut hi_idx = idx;
                        hi_idx[e] = 0;
                        add_pair(lo, face_at(&hi_idx), coeff);
                    }
                    // Wall boundaries on axis e: zero partner outside.
                    if bc[e] == AxisBc::Wall {
                        if idx[e] == 0 {
                            add_pair(lo, None, coeff);
                        }
                        if idx[e] + 1 == fdims[e] {
                            add_pair(lo, None, coeff);
                        }
                    }
                }
            }
        }
        let a = SparseMatrix::from_triplets(n_u, n_u, &a_trip, true)
            .expect("viscous block assembly produced an invalid matrix");

        // Divergence block, scaled to −h^n · div.
        let mut b_trip: Vec<(usize, usize, f64)> = Vec::new();
        for (row, idx) in row_cell.iter().enumerate() {
            for d in 0..n {
                let fdims = grid.face_dims(d);
                let fstrides = ix::strides(&ix::pad_dims(&fdims));
                let area = vol / h[d];
                if let Some(col) = active[d][ix::lin(&fstrides, idx)] {
                    b_trip.push((row, col, area));
                }
                let mut hi_idx = *idx;
                hi_idx[d] = if bc[d] == AxisBc::Periodic && idx[d] + 1 == cells[d] {
                    0
                } else {
                    idx[d] + 1
                };
                if let Some(col) = active[d][ix::lin(&fstrides, &hi_idx)] {
                    b_trip.push((row, col, -area));
                }
            }
        }
        let b = SparseMatrix::from_triplets(n_p, n_u, &b_trip, false)
            .expect("divergence block assembly produced an invalid matrix");

        StokesSystem {
            grid: grid.clone(),
            bc: bc.to_vec(),
            active,
            unknown_face,
            pressure_row,
            row_cell,
            a,
            b,
        }
    }

    pub(crate) fn n_velocity(&self) -> usize {
        self.unknown_face.len()
    }

    pub(crate) fn n_pressure(&self) -> usize {
        self.row_cell.len()
    }

    /// Right-hand side of the cell problem driven by the unit vector
    /// `e_axis`: `h^n` on every active `axis`-face.
    pub(crate) fn unit_force_rhs(&self, axis: usize) -> Vec<f64> {
        let mut rhs = vec![0.0; self.n_velocity()];
        let vol = self.grid.cell_volume();
        for (u, &(d, _)) in self.unknown_face.iter().enumerate() {
            if d == axis {
                rhs[u] = vol;
            }
        }
        rhs
    }

    /// Adds `scale · h^n · f` to the right-hand side, sampling the force
    /// field at active faces.
    pub(crate) fn add_force_rhs(&self, f: &VectorField, scale: f64, rhs: &mut [f64]) {
        let vol = self.grid.cell_volume();
        for d in 0..self.grid.dim() {
            let fdims = self.grid.face_dims(d);
            let fstrides = ix::strides(&ix::pad_dims(&fdims));
            for (u, &(dd, idx)) in self.unknown_face.iter().enumerate() {
                if dd == d {
                    rhs[u] += scale * vol * f.get(d, ix::lin(&fstrides, &idx));
                }
            }
        }
    }

    /// Adds the boundary-pressure contribution
    /// `∫ p^b ∇·v − ∮_{top ∪ bottom} p^b v·ν`
    /// to the right-hand side, so the solver works with the shifted
    /// pressure. `pb_cells` carries `p^b` at (fluid) cell centers;
    /// `pb_bottom`/`pb_top` carry boundary-face-center samples in
    /// horizontal linear order. Requires a `Free` vertical axis.
    pub(crate) fn add_boundary_pressure_rhs(
        &self,
        pb_cells: &ScalarField,
        pb_bottom: &[f64],
        pb_top: &[f64],
        rhs: &mut [f64],
    ) {
        let n = self.grid.dim();
        let v = n - 1;
        assert_eq!(self.bc[v], AxisBc::Free);
        // Volume part: −Bᵀ p^b over pressure rows.
        let pb_rows: Vec<f64> = self
            .row_cell
            .iter()
            .map(|idx| pb_cells.get(self.grid.cell_lin(&idx[..n])))
            .collect();
        let mut vol_part = vec![0.0; self.n_velocity()];
        self.b.matvec_transpose(&pb_rows, &mut vol_part);
        for (r, vp) in rhs.iter_mut().zip(&vol_part) {
            *r -= *vp;
        }
        // Surface part on the top and bottom boundary faces.
        let fdims = self.grid.face_dims(v);
        let hdims = &fdims[..v];
        let area = self.grid.cell_volume() / self.grid.spacing()[v];
        let fstrides = ix::strides(&ix::pad_dims(&fdims));
        let top = fdims[v] - 1;
        for (hl, hidx) in ix::iter(hdims) {
            let mut idx = hidx;
            idx[v] = 0;
            if let Some(u) = self.active[v][ix::lin(&fstrides, &idx)] {
                rhs[u] += area * pb_bottom[hl];
            }
            idx[v] = top;
            if let Some(u) = self.active[v][ix::lin(&fstrides, &idx)] {
                rhs[u] -= area * pb_top[hl];
            }
        }
    }

    /// Expands a velocity unknown vector into a face field (inactive faces
    /// zero, masks reflect activity).
    pub(crate) fn velocity_field(&self, u: &[f64]) -> VectorField {
        let masks: Vec<Vec<bool>> = self
            .active
            .iter()
            .map(|comp| comp.iter().map(Option::is_some).collect())
            .collect();
        let mut out = VectorField::zeros_masked(&self.grid, masks)
            .expect("activity masks match the grid by construction");
        for d in 0..self.grid.dim() {
            let vals: Vec<f64> = self.active[d]
                .iter()
                .map(|slot| slot.map_or(0.0, |k| u[k]))
                .collect();
            out.assign_comp(d, &vals)
                .expect("face counts match the grid by construction");
        }
        out
    }

    /// Collapses a face field onto the velocity unknown vector.
    pub(crate) fn field_to_vector(&self, f: &VectorField) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity()];
        for d in 0..self.grid.dim() {
            for (face, slot) in self.active[d].iter().enumerate() {
                if let Some(k) = slot {
                    out[*k] = f.get(d, face);
                }
            }
        }
        out
    }

    /// Expands a pressure row vector into a cell field masked by fluid.
    pub(crate) fn pressure_field(&self, p: &[f64]) -> ScalarField {
        let mask: Vec<bool> = self.pressure_row.iter().map(Option::is_some).collect();
        let mut out = ScalarField::zeros_masked(&self.grid, mask)
            .expect("mask length matches the cell count by construction");
        for (c, slot) in self.pressure_row.iter().enumerate() {
            if let Some(row) = slot {
                out.set(c, p[*row]);
            }
        }
        out
    }

    /// `∫ e_axis · u` over the fluid cells: the flux functional used by the
    /// dual permeability formula.
    pub(crate) fn flux_dot(&self, axis: usize, u: &[f64]) -> f64 {
        let vol = self.grid.cell_volume();
        let mut acc = 0.0;
        for (k, &(d, _)) in self.unknown_face.iter().enumerate() {
            if d == axis {
                acc += u[k];
            }
        }
        acc * vol
    }

    /// Energy product `uᵀ A v` (the discrete `∫ ∇u : ∇v`).
    pub(crate) fn energy_dot(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut au = vec![0.0; u.len()];
        self.a.matvec(u, &mut au);
        let mut acc = 0.0;
        for i in 0..v.len() {
            acc += au[i] * v[i];
        }
        acc
    }

    /// Maximum cell divergence `max_cells |div u|`. Rows of `B` carry
    /// `−h^n · div`, so the row magnitudes are rescaled by the cell volume.
    pub(crate) fn divergence_linf(&self, u: &[f64]) -> f64 {
        let mut bu = vec![0.0; self.n_pressure()];
        self.b.matvec(u, &mut bu);
        bu.iter().fold(0.0f64, |m, &v| m.max(v.abs())) / self.grid.cell_volume()
    }
}
