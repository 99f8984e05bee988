//! Stokes cell problems and the permeability tensor.
//!
//! The stripe and cylinder cases admit exact discrete oracles: their
//! geometry is invariant along the driving axis, so the staggered Stokes
//! system reduces to a lower-dimensional Poisson problem that the tests
//! rebuild independently and solve with the scalar kernels.

use permlayer_core::cell_stokes::{
    permeability, solve_stokes_cell, CellStokesError, CellStokesOptions, PermeabilityTensor,
};
use permlayer_core::geometry::{build_unit_cell, InclusionSpec};
use permlayer_core::linsolve::{
    solve_spd, solve_tridiagonal, MeanProjection, SparseMatrix, SpdOptions,
};

fn disk() -> InclusionSpec {
    InclusionSpec::Ball {
        center: vec![0.5, 0.5],
        radius: 0.25,
    }
}

fn stripe() -> InclusionSpec {
    // Solid band over y₂ ∈ [0.25, 0.75], spanning the full width.
    InclusionSpec::Box {
        center: vec![0.5, 0.5],
        half_widths: vec![0.5, 0.25],
    }
}

/// The stripe channel reduces exactly to a 1-D tridiagonal system: fluid
/// rows carry one unknown each, walls contribute a zero partner at unit
/// stencil weight, and the unit force integrates to h² per face.
#[test]
fn stripe_channel_matches_tridiagonal_reduction() {
    let m = 32usize;
    let cell = build_unit_cell(&stripe(), 2, m).unwrap();
    let opts = CellStokesOptions {
        tol: 1e-12,
        ..CellStokesOptions::default()
    };
    let sols: Vec<_> = (0..2)
        .map(|axis| solve_stokes_cell(&cell, axis, &opts).unwrap())
        .collect();
    let k = permeability(&sols).unwrap();

    // Fluid rows are 0..m/4 and 3m/4..m — a contiguous band of m/2 rows
    // through the periodic wrap. The reduced system is tridiag(−1, 2, −1)
    // u = h² with zero ends.
    let nrows = m / 2;
    let h = 1.0 / m as f64;
    let lower: Vec<f64> = (0..nrows).map(|i| if i == 0 { 0.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = (0..nrows)
        .map(|i| if i + 1 == nrows { 0.0 } else { -1.0 })
        .collect();
    let diag = vec![2.0; nrows];
    let rhs = vec![h * h; nrows];
    let u = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
    let k11_oracle: f64 = u.iter().sum::<f64>() / m as f64;

    assert!(
        (k.entry(0, 0) - k11_oracle).abs() < 1e-11,
        "channel permeability {} vs reduction {}",
        k.entry(0, 0),
        k11_oracle
    );
    // Continuum Poiseuille value H³/12 with the half-cell wall offset:
    // effective width 0.5 + h.  The deviation from the nominal-width value
    // 1/96 is the wall-offset term ((H+h)³ − H³)/12 up to quadrature error.
    let heff = 0.5 + h;
    let heff_k = heff * heff * heff / 12.0;
    assert!((k.entry(0, 0) - heff_k).abs() < 1e-4);
    assert!((k.entry(0, 0) - 1.0 / 96.0).abs() < (heff_k - 1.0 / 96.0) + 1e-4);

    // The blocked axis carries no flow at all.
    assert!(k.entry(1, 1).abs() < 1e-10);
    assert!(k.entry(0, 1).abs() < 1e-10);
    assert!(k.entry(1, 0).abs() < 1e-10);
    // Blocked-axis velocity vanishes identically (force balanced by a
    // single-valued pressure gradient).
    let v = sols[1].velocity();
    for d in 0..2 {
        let max = v
            .comp(d)
            .iter()
            .fold(0.0f64, |acc, &x| acc.max(x.abs()));
        assert!(max < 1e-10, "axis-2 drive leaks velocity {max}");
    }
}

#[test]
fn disk_permeability_regression() {
    // Reference values computed by a three-resolution Richardson study
    // (m = 64/128/256, observed order ≈ 1.2) before these tests were
    // frozen: K₁₁(m=64) = 2.025091200997e−2, extrapolated grid limit
    // 1.9921e−2 with |K(64) − limit| ≈ 3.3e−4.
    let cell = build_unit_cell(&disk(), 2, 64).unwrap();
    let opts = CellStokesOptions::default();
    let sols: Vec<_> = (0..2)
        .map(|axis| solve_stokes_cell(&cell, axis, &opts).unwrap())
        .collect();
    let k = permeability(&sols).unwrap();
    assert!((k.entry(0, 0) - 2.025091200997e-2).abs() < 1e-9);
    assert!((k.entry(0, 0) - 1.9921e-2).abs() < 5e-4);
    // Quarter-turn symmetry of the rasterized disk: the two diagonal
    // entries solve mirror-image problems.
    assert!((k.entry(0, 0) - k.entry(1, 1)).abs() < 1e-10 * k.entry(0, 0));
    assert!(k.entry(0, 1).abs() < 1e-12);
    assert!(k.entry(1, 0).abs() < 1e-12);
    // Dual-formula agreement and positivity come out of assembly.
    assert!(k.formula_discrepancy() < 1e-8);
    assert!(k.min_eigenvalue() > 0.0);
    // Divergence-free to solver precision.
    for s in &sols {
        assert!(s.divergence_linf() < 1e-9);
    }
}

/// The vertical cylinder is invariant along the driving axis: the Stokes
/// problem becomes a 2-D Poisson problem on the perforated cross-section
/// (pressure constant), rebuilt here on cell centers and solved with CG.
#[test]
fn cylinder_vertical_flow_matches_section_poisson() {
    let m = 16usize;
    let spec = InclusionSpec::CylinderBall {
        center: vec![0.5, 0.5],
        radius: 0.25,
    };
    let cell = build_unit_cell(&spec, 3, m).unwrap();
    let opts = CellStokesOptions {
        tol: 1e-12,
        ..CellStokesOptions::default()
    };
    let sols: Vec<_> = (0..3)
        .map(|axis| solve_stokes_cell(&cell, axis, &opts).unwrap())
        .collect();
    let k = permeability(&sols).unwrap();

    // Section mask: fluid where the (y₁, y₂) cell center clears the disk.
    let h = 1.0 / m as f64;
    let fluid: Vec<bool> = (0..m * m)
        .map(|c| {
            let (i, j) = (c % m, c / m);
            let dx = (i as f64 + 0.5) * h - 0.5;
            let dy = (j as f64 + 0.5) * h - 0.5;
            dx * dx + dy * dy > 0.0625
        })
        .collect();
    let slot: Vec<Option<usize>> = {
        let mut s = vec![None; m * m];
        let mut k = 0;
        for c in 0..m * m {
            if fluid[c] {
                s[c] = Some(k);
                k += 1;
            }
        }
        s
    };
    let nunk = slot.iter().flatten().count();
    let mut trips = Vec::new();
    let rhs = vec![h * h; nunk];
    for c in 0..m * m {
        let Some(i) = slot[c] else { continue };
        let (ci, cj) = (c % m, c / m);
        for (ni, nj) in [
            ((ci + 1) % m, cj),
            ((ci + m - 1) % m, cj),
            (ci, (cj + 1) % m),
            (ci, (cj + m - 1) % m),
        ] {
            let nb = nj * m + ni;
            trips.push((i, i, 1.0));
            if let Some(j) = slot[nb] {
                trips.push((i, j, -1.0));
            }
        }
    }
    let a = SparseMatrix::from_triplets(nunk, nunk, &trips, true).unwrap();
    let o = SpdOptions {
        tol: 1e-13,
        max_iter: 100_000,
        projection: MeanProjection::None,
    };
    let (u, _) = solve_spd(&a, &rhs, &o).unwrap();
    let k33_oracle: f64 = u.iter().sum::<f64>() * h * h;

    assert!(
        (k.entry(2, 2) - k33_oracle).abs() < 1e-10,
        "cylinder vertical permeability {} vs section reduction {}",
        k.entry(2, 2),
        k33_oracle
    );
    // Horizontal–vertical coupling vanishes structurally.
    assert!(k.entry(0, 2).abs() <= 1e-6 * k.entry(2, 2));
    assert!(k.entry(1, 2).abs() <= 1e-6 * k.entry(2, 2));
    assert!(k.entry(2, 0).abs() <= 1e-6 * k.entry(2, 2));
    assert!(k.entry(2, 1).abs() <= 1e-6 * k.entry(2, 2));
    // Horizontal flow fights the obstacle; vertical flow slides past it.
    assert!(k.entry(0, 0) < k.entry(2, 2));
    assert!((k.entry(0, 0) - k.entry(1, 1)).abs() < 1e-10 * k.entry(0, 0));
}

#[test]
fn full_fluid_cell_is_rejected() {
    let cell = build_unit_cell(&InclusionSpec::None, 2, 8).unwrap();
    let err = solve_stokes_cell(&cell, 0, &CellStokesOptions::default()).unwrap_err();
    assert!(matches!(err, CellStokesError::EmptyInclusion));
}

#[test]
fn invalid_axis_is_rejected() {
    let cell = build_unit_cell(&disk(), 2, 8).unwrap();
    let err = solve_stokes_cell(&cell, 2, &CellStokesOptions::default()).unwrap_err();
    assert!(matches!(err, CellStokesError::InvalidAxis { axis: 2, dim: 2 }));
}

#[test]
fn stored_entries_roundtrip_to_an_equal_tensor() {
    let cell = build_unit_cell(&disk(), 2, 16).unwrap();
    let opts = CellStokesOptions::default();
    let sols: Vec<_> = (0..2)
        .map(|axis| solve_stokes_cell(&cell, axis, &opts).unwrap())
        .collect();
    let k = permeability(&sols).unwrap();

    let rebuilt =
        PermeabilityTensor::from_entries(2, k.entries(), k.formula_discrepancy()).unwrap();
    assert_eq!(rebuilt.dim(), 2);
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(rebuilt.entry(i, j), k.entry(i, j));
        }
    }
    assert_eq!(rebuilt.formula_discrepancy(), k.formula_discrepancy());
    assert_eq!(rebuilt.min_eigenvalue(), k.min_eigenvalue());

    // Asymmetric or padded-nonzero entries are rejected.
    let mut bad = *k.entries();
    bad[0][1] += 1.0;
    let err = PermeabilityTensor::from_entries(2, &bad, 0.0).unwrap_err();
    assert!(matches!(err, CellStokesError::AsymmetricTensor { .. }));
    let mut padded = *k.entries();
    padded[2][2] = 1.0;
    let err = PermeabilityTensor::from_entries(2, &padded, 0.0).unwrap_err();
    assert!(matches!(err, CellStokesError::InconsistentBasis));
    let negative = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]];
    let err = PermeabilityTensor::from_entries(2, &negative, 0.0).unwrap_err();
    assert!(matches!(err, CellStokesError::NotPositiveDefinite { .. }));
}
