//! Row-major (axis 0 fastest) multi-index arithmetic for up to three axes.

pub(crate) const MAX_DIM: usize = 3;

/// Fixed-size multi-index; entries beyond the active dimension are zero
/// (or one, for dimension arrays).
pub(crate) type Idx = [usize; MAX_DIM];

/// Pads a dimension slice to `MAX_DIM`, filling unused axes with 1.
pub(crate) fn pad_dims(dims: &[usize]) -> Idx {
    let mut d = [1usize; MAX_DIM];
    d[..dims.len()].copy_from_slice(dims);
    d
}

/// Pads a multi-index to `MAX_DIM`, filling unused axes with 0 (the only
/// valid position on a padded axis of extent 1).
pub(crate) fn pad_idx(idx: &[usize]) -> Idx {
    let mut d = [0usize; MAX_DIM];
    d[..idx.len()].copy_from_slice(idx);
    d
}

/// Strides for a padded dimension array: axis 0 is the fastest.
pub(crate) fn strides(dims: &Idx) -> Idx {
    [1, dims[0], dims[0] * dims[1]]
}

/// Linear index of a padded multi-index.
pub(crate) fn lin(strides: &Idx, idx: &Idx) -> usize {
    idx[0] * strides[0] + idx[1] * strides[1] + idx[2] * strides[2]
}

/// Total entry count of a dimension slice.
pub(crate) fn total(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Iterator over all multi-indices of a dimension slice in linear order.
pub(crate) struct IdxIter {
    dims: Idx,
    cur: Idx,
    i: usize,
    len: usize,
}

pub(crate) fn iter(dims: &[usize]) -> IdxIter {
    let padded = pad_dims(dims);
    IdxIter {
        dims: padded,
        cur: [0; MAX_DIM],
        i: 0,
        len: total(dims),
    }
}

impl Iterator for IdxIter {
    type Item = (usize, Idx);

    fn next(&mut self) -> Option<(usize, Idx)> {
        if self.i == self.len {
            return None;
        }
        let out = (self.i, self.cur);
        self.i += 1;
        for d in 0..MAX_DIM {
            self.cur[d] += 1;
            if self.cur[d] < self.dims[d] {
                break;
            }
            self.cur[d] = 0;
        }
        Some(out)
    }
}
