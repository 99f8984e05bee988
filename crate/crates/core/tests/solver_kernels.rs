//! Sparse linear algebra: CG, BiCGStab, and the tridiagonal solve.

use permlayer_core::linsolve::{
    solve_bicgstab, solve_spd, solve_tridiagonal, MeanProjection, SparseMatrix, SpdOptions,
};
use proptest::prelude::*;

fn opts(tol: f64) -> SpdOptions {
    SpdOptions {
        tol,
        max_iter: 10_000,
        projection: MeanProjection::None,
    }
}

/// 1-D Dirichlet Laplacian (tridiagonal, SPD).
fn laplacian_1d(n: usize) -> SparseMatrix {
    let mut trips = Vec::new();
    for i in 0..n {
        trips.push((i, i, 2.0));
        if i + 1 < n {
            trips.push((i, i + 1, -1.0));
            trips.push((i + 1, i, -1.0));
        }
    }
    SparseMatrix::from_triplets(n, n, &trips, true).unwrap()
}

#[test]
fn cg_solves_laplacian() {
    let n = 50;
    let a = laplacian_1d(n);
    // Manufactured solution x_i = sin(i).
    let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
    let mut b = vec![0.0; n];
    for i in 0..n {
        b[i] = 2.0 * x_true[i]
            - if i > 0 { x_true[i - 1] } else { 0.0 }
            - if i + 1 < n { x_true[i + 1] } else { 0.0 };
    }
    let (x, report) = solve_spd(&a, &b, &opts(1e-12)).unwrap();
    assert!(report.converged);
    for i in 0..n {
        assert!((x[i] - x_true[i]).abs() < 1e-9);
    }
}

#[test]
fn cg_with_global_projection() {
    // Periodic Laplacian: singular with constant nullspace; projected CG
    // returns the mean-zero solution.
    let n = 32;
    let mut trips = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        trips.push((i, i, 2.0));
        trips.push((i, j, -1.0));
        trips.push((j, i, -1.0));
    }
    let a = SparseMatrix::from_triplets(n, n, &trips, true).unwrap();
    // Mean-zero right-hand side.
    let b: Vec<f64> = (0..n)
        .map(|i| (2.0 * core::f64::consts::PI * i as f64 / n as f64).sin())
        .collect();
    let o = SpdOptions {
        tol: 1e-12,
        max_iter: 10_000,
        projection: MeanProjection::Global,
    };
    let (x, report) = solve_spd(&a, &b, &o).unwrap();
    assert!(report.converged);
    let mean: f64 = x.iter().sum::<f64>() / n as f64;
    assert!(mean.abs() < 1e-10);
    // Residual check.
    let mut r = 0.0f64;
    for i in 0..n {
        let j = (i + 1) % n;
        let jm = (i + n - 1) % n;
        let ax = 2.0 * x[i] - x[j] - x[jm];
        r = r.max((ax - b[i]).abs());
    }
    assert!(r < 1e-9);
}

#[test]
fn tridiagonal_matches_cg() {
    let n = 40;
    let lower: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = (0..n).map(|i| if i + 1 == n { 0.0 } else { -1.0 }).collect();
    let diag = vec![2.5; n];
    let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
    let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
    // Compare against CG on the same operator.
    let mut trips = Vec::new();
    for i in 0..n {
        trips.push((i, i, 2.5));
        if i > 0 {
            trips.push((i, i - 1, -1.0));
        }
        if i + 1 < n {
            trips.push((i, i + 1, -1.0));
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &trips, true).unwrap();
    let (y, _) = solve_spd(&a, &rhs, &opts(1e-13)).unwrap();
    for i in 0..n {
        assert!((x[i] - y[i]).abs() < 1e-9);
    }
}

#[test]
fn tridiagonal_rejects_bad_shapes() {
    assert!(solve_tridiagonal(&[0.0], &[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]).is_err());
    assert!(solve_tridiagonal(&[0.0], &[0.0], &[0.0], &[1.0]).is_err());
}

#[test]
fn bicgstab_solves_upwind_operator() {
    // Nonsymmetric convection–diffusion operator in 1-D (upwind).
    let n = 60;
    let (d, v, h) = (1.0, 2.5, 1.0 / n as f64);
    let mut trips = Vec::new();
    for i in 0..n {
        let dd = 2.0 * d / (h * h) + v / h;
        trips.push((i, i, dd));
        if i > 0 {
            trips.push((i, i - 1, -d / (h * h) - v / h));
        }
        if i + 1 < n {
            trips.push((i, i + 1, -d / (h * h)));
        }
    }
    let a = SparseMatrix::from_triplets(n, n, &trips, false).unwrap();
    let b = vec![1.0; n];
    let (x, report) = solve_bicgstab(&a, &b, &opts(1e-11)).unwrap();
    assert!(report.converged);
    // Verify the residual directly.
    let mut rmax = 0.0f64;
    for i in 0..n {
        let dd = 2.0 * d / (h * h) + v / h;
        let mut ax = dd * x[i];
        if i > 0 {
            ax += (-d / (h * h) - v / h) * x[i - 1];
        }
        if i + 1 < n {
            ax += (-d / (h * h)) * x[i + 1];
        }
        rmax = rmax.max((ax - b[i]).abs());
    }
    assert!(rmax < 1e-6 * (2.0 * d / (h * h)));
}

#[test]
fn triplet_duplicates_accumulate() {
    let trips = vec![(0, 0, 1.0), (0, 0, 1.5), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 3.0)];
    let a = SparseMatrix::from_triplets(2, 2, &trips, true).unwrap();
    let (x, _) = solve_spd(&a, &[1.0, 0.0], &opts(1e-14)).unwrap();
    // A = [[2.5, -1], [-1, 3]]; A⁻¹·e₁ = (3, 1)/6.5.
    assert!((x[0] - 3.0 / 6.5).abs() < 1e-10);
    assert!((x[1] - 1.0 / 6.5).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// CG solves random diagonally dominant SPD systems to tolerance.
    #[test]
    fn cg_random_spd(seed in 0u64..10_000) {
        let n = 24usize;
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        let mut trips = Vec::new();
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if j > i && next().abs() < 0.3 {
                    let v = next();
                    trips.push((i, j, v));
                    trips.push((j, i, v));
                }
            }
            for &(r, _, v) in trips.iter() {
                if r == i {
                    row_sum += v.abs();
                }
            }
            trips.push((i, i, row_sum + 1.0 + next().abs()));
        }
        // Row sums computed above missed the symmetric (j,i) entries with
        // j < i; recompute dominance directly and fix the diagonal.
        let mut abs_sum = vec![0.0f64; n];
        for &(r, c, v) in &trips {
            if r != c {
                abs_sum[r] += v.abs();
            }
        }
        let mut full = Vec::new();
        for &(r, c, v) in &trips {
            if r != c {
                full.push((r, c, v));
            }
        }
        for i in 0..n {
            full.push((i, i, abs_sum[i] + 1.0));
        }
        let a = SparseMatrix::from_triplets(n, n, &full, true).unwrap();
        let b: Vec<f64> = (0..n).map(|_| next()).collect();
        let (x, report) = solve_spd(&a, &b, &opts(1e-11)).unwrap();
        prop_assert!(report.converged);
        // Residual bounded by tolerance relative to ‖b‖.
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut ax = vec![0.0f64; n];
        for &(r, c, v) in &full {
            ax[r] += v * x[c];
        }
        let rn = ax.iter().zip(&b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(rn <= 1e-8 * (1.0 + bn));
    }
}
