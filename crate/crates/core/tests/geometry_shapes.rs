//! Scale admissibility, unit-cell rasterization, and thin-layer tiling.

use num_rational::Ratio;
use permlayer_core::geometry::{
    area_profile, build_layer, build_unit_cell, check_admissible_scales, FaceTag, GeometryError,
    InclusionSpec,
};
use permlayer_core::Frac;
use proptest::prelude::*;

fn fr(num: i64, den: i64) -> Frac {
    Ratio::new(num, den)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn disk() -> InclusionSpec {
    InclusionSpec::Ball {
        center: vec![0.5, 0.5],
        radius: 0.25,
    }
}

#[test]
fn admissible_sweep_scales() {
    // The sweep ε ∈ {1/4, 1/16, 1/64} at α = 1/2: 1/ε must be a perfect
    // square d², with d² cells per unit length and d cells across the half
    // thickness.
    for (den, base) in [(4i64, 2i64), (16, 4), (64, 8)] {
        let s = check_admissible_scales(fr(1, den), fr(1, 2)).unwrap();
        assert_eq!(s.base, base);
        assert_eq!(s.cells_per_unit, den);
        assert_eq!(s.vertical_ratio, base);
        assert_eq!(s.half_thickness, fr(1, base));
        assert!((s.eps_f64() - 1.0 / den as f64).abs() < 1e-15);
        assert!((s.alpha_f64() - 0.5).abs() < 1e-15);
    }
}

#[test]
fn admissibility_rejections() {
    // 1/3 is not a perfect square.
    assert!(matches!(
        check_admissible_scales(fr(1, 3), fr(1, 2)),
        Err(GeometryError::NonRepresentable(_))
    ));
    // 1/8 is not a perfect square either (8 = 2³).
    assert!(check_admissible_scales(fr(1, 8), fr(1, 2)).is_err());
    // α outside (0, 1).
    assert!(check_admissible_scales(fr(1, 4), fr(3, 2)).is_err());
    assert!(check_admissible_scales(fr(1, 4), fr(0, 1)).is_err());
    // ε must be a unit fraction smaller than 1.
    assert!(check_admissible_scales(fr(2, 3), fr(1, 2)).is_err());
    assert!(check_admissible_scales(fr(1, 1), fr(1, 2)).is_err());
}

#[test]
fn admissible_cube_root_scales() {
    // α = 1/3 with ε = 1/8: 1/ε = 2³.
    let s = check_admissible_scales(fr(1, 8), fr(1, 3)).unwrap();
    assert_eq!(s.base, 2);
    assert_eq!(s.vertical_ratio, 4); // ε^{α−1} = 8^{2/3} = 4
    assert_eq!(s.half_thickness, fr(1, 2)); // 8^{-1/3}
    // α = 2/3 with ε = 1/8: thickness 8^{-2/3} = 1/4.
    let s = check_admissible_scales(fr(1, 8), fr(2, 3)).unwrap();
    assert_eq!(s.half_thickness, fr(1, 4));
    assert_eq!(s.vertical_ratio, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// For any admissible pair, the derived quantities satisfy their
    /// defining identities exactly in rational arithmetic.
    #[test]
    fn admissible_identities(d in 2i64..6, q in 2i64..5, p_raw in 0i64..8) {
        let p = 1 + p_raw % (q - 1);
        prop_assume!(gcd(p, q) == 1);
        let den = (0..q).try_fold(1i64, |acc, _| acc.checked_mul(d));
        prop_assume!(den.is_some());
        let den = den.unwrap();
        let s = check_admissible_scales(fr(1, den), fr(p, q)).unwrap();
        // cells_per_unit = 1/ε and base^q = 1/ε.
        prop_assert_eq!(s.cells_per_unit, den);
        prop_assert_eq!(s.base, d);
        // half_thickness = ε^α: (1/d^q)^{p/q} = 1/d^p.
        let dp = (0..p).fold(1i64, |acc, _| acc * d);
        prop_assert_eq!(s.half_thickness, fr(1, dp));
        // vertical_ratio · ε = half_thickness.
        prop_assert_eq!(Ratio::from_integer(s.vertical_ratio) * s.eps, s.half_thickness);
    }
}

#[test]
fn disk_cell_rasterization() {
    let cell = build_unit_cell(&disk(), 2, 64).unwrap();
    assert_eq!(cell.dim(), 2);
    assert_eq!(cell.resolution(), 64);
    assert!(cell.has_solid());
    // Midpoint rasterization of the disk: porosity within O(h) of 1 − πr².
    let exact = 1.0 - core::f64::consts::PI / 16.0;
    assert!((cell.porosity() - exact).abs() < 2.0 / 64.0);
    // Mask symmetric under the two axis mirrors.
    let m = 64;
    for i in 0..m {
        for j in 0..m {
            let a = cell.is_fluid(&[i, j]);
            assert_eq!(a, cell.is_fluid(&[m - 1 - i, j]));
            assert_eq!(a, cell.is_fluid(&[i, m - 1 - j]));
            assert_eq!(a, cell.is_fluid(&[j, i]));
        }
    }
}

#[test]
fn full_fluid_cell() {
    let cell = build_unit_cell(&InclusionSpec::None, 2, 8).unwrap();
    assert!(!cell.has_solid());
    assert_eq!(cell.porosity(), 1.0);
    assert_eq!(cell.fluid_cells(), 64);
}

#[test]
fn oversized_inclusion_rejected() {
    // A ball that reaches the cell boundary is invalid (must be strictly
    // interior).
    let bad = InclusionSpec::Ball {
        center: vec![0.5, 0.5],
        radius: 0.55,
    };
    assert!(build_unit_cell(&bad, 2, 16).is_err());
    // A box spanning the whole cell leaves no fluid.
    let solid = InclusionSpec::Box {
        center: vec![0.5, 0.5],
        half_widths: vec![0.5, 0.5],
    };
    assert!(matches!(
        build_unit_cell(&solid, 2, 16),
        Err(GeometryError::EmptyFluid)
    ));
    // A box sticking out of the closed cell is rejected outright.
    let outside = InclusionSpec::Box {
        center: vec![0.5, 0.5],
        half_widths: vec![0.6, 0.2],
    };
    assert!(matches!(
        build_unit_cell(&outside, 2, 16),
        Err(GeometryError::OutOfRange(_))
    ));
}

#[test]
fn area_profile_of_stripe() {
    // Solid band over y ∈ [0.25, 0.75]: half the slabs are fully blocked,
    // half fully open.
    let stripe = InclusionSpec::Box {
        center: vec![0.5, 0.5],
        half_widths: vec![0.5, 0.25],
    };
    let cell = build_unit_cell(&stripe, 2, 32).unwrap();
    let profile = area_profile(&cell);
    let samples = profile.samples();
    assert_eq!(samples.len(), 32);
    let open: Vec<usize> = (0..32).filter(|&k| samples[k] == 1.0).collect();
    let closed: Vec<usize> = (0..32).filter(|&k| samples[k] == 0.0).collect();
    assert_eq!(open.len(), 16);
    assert_eq!(closed.len(), 16);
    assert_eq!(profile.min_value(), 0.0);
    // Blocked slabs are exactly rows 8..24 (centers in (0.25, 0.75)).
    assert_eq!(closed, (8..24).collect::<Vec<_>>());
}

#[test]
fn layer_tiling_counts() {
    // ε = 1/4, α = 1/2 over Σ = (0,1): 4 tiles of an m=8 cell laterally,
    // vertical ratio 2 → 2·2·8 = 32 cells across the full thickness.
    let cell = build_unit_cell(&disk(), 2, 8).unwrap();
    let layer = build_layer(&cell, fr(1, 4), fr(1, 2), &[(0, 1)]).unwrap();
    let grid = layer.grid();
    assert_eq!(grid.cells(), &[32, 32]);
    // Fluid fraction of the layer equals the cell porosity (whole tiles).
    let fluid = layer.fluid_mask().iter().filter(|&&b| b).count();
    let total = grid.cell_count();
    assert!((fluid as f64 / total as f64 - cell.porosity()).abs() < 1e-14);
    // Vertical extent is (−ε^α, ε^α) = (−1/2, 1/2).
    let (origin, extent) = (grid.origin(), grid.extent());
    assert_eq!(permlayer_core::frac_to_f64(origin[1]), -0.5);
    assert_eq!(permlayer_core::frac_to_f64(extent[1]), 1.0);
}

#[test]
fn layer_face_tags() {
    let cell = build_unit_cell(&disk(), 2, 8).unwrap();
    let layer = build_layer(&cell, fr(1, 4), fr(1, 2), &[(0, 1)]).unwrap();
    let grid = layer.grid();
    let dims1 = grid.face_dims(1);
    // Vertical faces at the extreme levels are plates.
    let mut top = 0;
    let mut bottom = 0;
    for i in 0..dims1[0] {
        if layer.face_tag(1, &[i, 0]) == FaceTag::Bottom {
            bottom += 1;
        }
        if layer.face_tag(1, &[i, dims1[1] - 1]) == FaceTag::Top {
            top += 1;
        }
    }
    assert_eq!(bottom, 32);
    assert_eq!(top, 32);
    // Lateral faces on axis 0 at the wrap boundary are tagged lateral.
    let mut lateral = 0;
    let dims0 = grid.face_dims(0);
    for l in 0..dims0[1] {
        if layer.face_tag(0, &[0, l]) == FaceTag::Lateral {
            lateral += 1;
        }
    }
    assert!(lateral > 0);
}

#[test]
fn layer_admissibility_enforced() {
    let cell = build_unit_cell(&disk(), 2, 8).unwrap();
    assert!(build_layer(&cell, fr(1, 3), fr(1, 2), &[(0, 1)]).is_err());
    // Σ interval must be nonempty.
    assert!(build_layer(&cell, fr(1, 4), fr(1, 2), &[(1, 1)]).is_err());
}
