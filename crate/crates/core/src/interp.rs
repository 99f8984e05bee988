//! Multilinear sampling of masked grid fields: periodic wrap on periodic
//! axes, clamped (constant) extension past the ends of non-periodic axes.
//! Cell-centered lattices sit at `origin + (i + 1/2)h`; the face lattice of
//! component `d` sits at `origin + i·h` along axis `d` and at cell centers
//! transversally.

// Needed for the arithmetic methods under no_std builds; test and example
// builds unify num-traits with its std feature, where the inherent f64
// methods shadow the trait and the import goes quiet.
#[allow(unused_imports)]
use num_traits::Float;

use crate::discrete::{ScalarField, StructuredGrid, VectorField};
use crate::indexutil as ix;

/// Finds the lower lattice index and interpolation weight along one axis.
/// `offset` is the lattice offset in cell units (0.5 for centers, 0.0 for
/// faces); `count` is the number of lattice nodes on the axis.
fn axis_locate(
    grid: &StructuredGrid,
    axis: usize,
    count: usize,
    offset: f64,
    x: f64,
) -> (usize, usize, f64) {
    let o = crate::frac_to_f64(grid.origin()[axis]);
    let h = grid.spacing()[axis];
    let t = (x - o) / h - offset;
    if grid.periodic()[axis] {
        let c = count as f64;
        let wrapped = t - (t / c).floor() * c;
        let i0 = (wrapped.floor() as usize) % count;
        (i0, (i0 + 1) % count, wrapped - wrapped.floor())
    } else if t <= 0.0 {
        (0, 0, 0.0)
    } else if t >= (count - 1) as f64 {
        (count - 1, count - 1, 0.0)
    } else {
        let i0 = t.floor() as usize;
        (i0, i0 + 1, t - t.floor())
    }
}

fn multilinear(
    grid: &StructuredGrid,
    dims: &[usize],
    offsets: &[f64],
    vals: &[f64],
    x: &[f64],
) -> f64 {
    let n = dims.len();
    let strides = ix::strides(&ix::pad_dims(dims));
    let mut lo = [0usize; ix::MAX_DIM];
    let mut hi = [0usize; ix::MAX_DIM];
    let mut w = [0.0f64; ix::MAX_DIM];
    for e in 0..n {
        let (l, h_, t) = axis_locate(grid, e, dims[e], offsets[e], x[e]);
        lo[e] = l;
        hi[e] = h_;
        w[e] = t;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << n) {
        let mut idx = [0usize; ix::MAX_DIM];
        let mut weight = 1.0;
        for e in 0..n {
            if corner & (1 << e) != 0 {
                idx[e] = hi[e];
                weight *= w[e];
            } else {
                idx[e] = lo[e];
                weight *= 1.0 - w[e];
            }
        }
        if weight != 0.0 {
            acc += weight * vals[ix::lin(&strides, &idx)];
        }
    }
    acc
}

/// Multilinear sample of a cell-centered field at a physical point.
/// Inactive cells contribute their stored zero.
pub(crate) fn sample_cell_field(f: &ScalarField, x: &[f64]) -> f64 {
    let grid = f.grid();
    let offsets = [0.5; ix::MAX_DIM];
    multilinear(grid, grid.cells(), &offsets[..grid.dim()], f.values(), x)
}

/// Multilinear sample of one component of a face field at a physical point.
pub(crate) fn sample_face_component(v: &VectorField, comp: usize, x: &[f64]) -> f64 {
    let grid = v.grid();
    let dims = grid.face_dims(comp);
    let mut offsets = [0.5; ix::MAX_DIM];
    offsets[comp] = 0.0;
    multilinear(grid, &dims, &offsets[..grid.dim()], v.comp(comp), x)
}

/// Multilinear sample over the horizontal axes only: `vals` is indexed by
/// the horizontal cell lattice of `grid` (cell-centered, periodic per the
/// grid's horizontal axes); `xh` holds the horizontal coordinates.
pub(crate) fn sample_horizontal(grid: &StructuredGrid, vals: &[f64], xh: &[f64]) -> f64 {
    let nh = grid.dim() - 1;
    let offsets = [0.5; ix::MAX_DIM];
    multilinear(grid, &grid.cells()[..nh], &offsets[..nh], vals, xh)
}
