//! Direct microscopic reference solves on the perforated layer.
//!
//! The shifted-pressure formulation makes hydrostatic equilibrium exact:
//! zero force with a constant plate pressure must return the zero velocity
//! and the constant pressure bit-for-bit. A genuine pressure drop then has
//! to push equal volume fluxes through every horizontal cut, and the
//! transport solver must honor its zero-data and extremum guarantees.

use permlayer_core::cell_diffusion::DiffusionCase;
use permlayer_core::discrete::{ScalarField, VectorField};
use permlayer_core::geometry::{
    build_layer, build_unit_cell, check_admissible_scales, InclusionSpec, LayerGeometry,
};
use permlayer_core::linsolve::SpdOptions;
use permlayer_core::macro_transport::{AdvectionScheme, TimeScheme};
use permlayer_core::micro_reference::{
    solve_micro_stokes, solve_micro_transport, LateralBc, MicroError, MicroStokesOptions,
    MicroTransportParams, MicroTransportProblem,
};
use permlayer_core::Frac;

fn disk_layer(m: usize, eps_den: i64) -> LayerGeometry {
    let spec = InclusionSpec::Ball {
        center: vec![0.5, 0.5],
        radius: 0.25,
    };
    let cell = build_unit_cell(&spec, 2, m).unwrap();
    build_layer(&cell, Frac::new(1, eps_den), Frac::new(1, 2), &[(0, 1)]).unwrap()
}

#[test]
fn equilibrium_is_reproduced_exactly() {
    for eps_den in [4i64, 16] {
        let layer = disk_layer(8, eps_den);
        let grid = layer.grid();
        let pb = 0.7;
        let f = VectorField::zeros(grid);
        let pb_cells = ScalarField::from_fn(grid, |_| pb);
        let hcount: usize = grid.cells()[..grid.dim() - 1].iter().product();
        let sol = solve_micro_stokes(
            &layer,
            &f,
            &pb_cells,
            &vec![pb; hcount],
            &vec![pb; hcount],
            &MicroStokesOptions::default(),
        )
        .unwrap();

        // Zero data for the shifted unknowns: the solver must not move.
        for d in 0..2 {
            assert!(
                sol.velocity().comp(d).iter().all(|&v| v.abs() <= 1e-13),
                "equilibrium velocity leak at ε = 1/{eps_den}"
            );
        }
        for (c, &fluid) in layer.fluid_mask().iter().enumerate() {
            if fluid {
                assert!((sol.pressure().get(c) - pb).abs() <= 1e-13);
            }
        }
        assert!(sol.divergence_linf() <= 1e-13);
        assert!(sol.cut_fluxes().iter().all(|&q| q.abs() <= 1e-13));
    }
}

#[test]
fn pressure_drop_drives_uniform_cut_flux() {
    let layer = disk_layer(8, 4);
    let grid = layer.grid();
    let ea = layer.scales().half_thickness_f64();
    let f = VectorField::zeros(grid);
    // Linear extension of the plate data: 1 at the bottom, 0 at the top.
    let pb_cells = ScalarField::from_fn(grid, |x| (ea - x[1]) / (2.0 * ea));
    let hcount: usize = grid.cells()[..grid.dim() - 1].iter().product();
    let sol = solve_micro_stokes(
        &layer,
        &f,
        &pb_cells,
        &vec![1.0; hcount],
        &vec![0.0; hcount],
        &MicroStokesOptions::default(),
    )
    .unwrap();

    // The flow must actually move, upward (toward the low-pressure plate).
    let fluxes = sol.cut_fluxes();
    assert!(!fluxes.is_empty());
    let q0 = fluxes[0];
    assert!(q0 > 0.0, "flux should point from high to low pressure, got {q0}");
    // Divergence-free velocity with impermeable lateral walls: the same
    // volume crosses every horizontal cut.
    for &q in fluxes {
        assert!(
            (q - q0).abs() <= 1e-8 * q0.abs().max(1e-30),
            "cut flux varies: {q} vs {q0}"
        );
    }
    assert!(sol.divergence_linf() <= 1e-8);
    assert!(sol.momentum_residual() <= 1e-6);
    assert!(sol.outer_iterations() > 0);
    assert!(sol.inner_iterations() > 0);
}

#[test]
fn scaled_transport_parameters() {
    let scales = check_admissible_scales(Frac::new(1, 4), Frac::new(1, 2)).unwrap();
    let d = 1.3;
    let ea = scales.half_thickness_f64();
    assert_eq!(ea, 0.5);

    let slow = MicroTransportParams::scaled(DiffusionCase::SlowHorizontal, d, &scales);
    assert_eq!(slow.advect_coeff, ea / (0.25 * 0.25));
    assert_eq!(slow.diff_horizontal, ea * ea * d);
    assert_eq!(slow.diff_vertical, ea * ea * d);
    assert_eq!(slow.lateral, LateralBc::NoFlux);

    let fast = MicroTransportParams::scaled(DiffusionCase::FastHorizontal, d, &scales);
    assert_eq!(fast.diff_horizontal, d);
    assert_eq!(fast.diff_vertical, ea * ea * d);
    assert_eq!(fast.lateral, LateralBc::Periodic);
}

fn zero_problem(layer: &LayerGeometry, case: DiffusionCase) -> MicroTransportProblem {
    let grid = layer.grid();
    let hcount: usize = grid.cells()[..grid.dim() - 1].iter().product();
    MicroTransportProblem {
        params: MicroTransportParams::scaled(case, 1.0, layer.scales()),
        source: ScalarField::zeros(grid),
        c_bottom: vec![0.0; hcount],
        c_top: vec![0.0; hcount],
        initial: ScalarField::zeros(grid),
        dt: 0.01,
        steps: 10,
        time_scheme: TimeScheme::ImplicitEuler,
        advection: AdvectionScheme::Upwind,
        solver: SpdOptions {
            tol: 1e-10,
            max_iter: 200_000,
            ..SpdOptions::default()
        },
    }
}

#[test]
fn transport_zero_data_stays_zero() {
    let layer = disk_layer(8, 4);
    let velocity = VectorField::zeros(layer.grid());
    for case in [DiffusionCase::SlowHorizontal, DiffusionCase::FastHorizontal] {
        let problem = zero_problem(&layer, case);
        let sol = solve_micro_transport(&layer, &velocity, &problem).unwrap();
        assert!(sol.final_state().values().iter().all(|&v| v == 0.0));
        assert_eq!(sol.diagnostics().bound_excess, 0.0);
        assert_eq!(sol.diagnostics().linear_iterations, 0);
    }
}

#[test]
fn transport_respects_data_bounds() {
    let layer = disk_layer(8, 4);
    let grid = layer.grid();
    let ea = layer.scales().half_thickness_f64();
    let hcount: usize = grid.cells()[..grid.dim() - 1].iter().product();

    // Drive a real flow, then feed solute in from the bottom plate.
    let f = VectorField::zeros(grid);
    let pb_cells = ScalarField::from_fn(grid, |x| (ea - x[1]) / (2.0 * ea));
    let stokes = solve_micro_stokes(
        &layer,
        &f,
        &pb_cells,
        &vec![1.0; hcount],
        &vec![0.0; hcount],
        &MicroStokesOptions::default(),
    )
    .unwrap();

    let mut problem = zero_problem(&layer, DiffusionCase::SlowHorizontal);
    problem.c_bottom = vec![1.0; hcount];
    problem.steps = 20;
    let sol = solve_micro_transport(&layer, stokes.velocity(), &problem).unwrap();
    let d = sol.diagnostics();
    assert!(d.bound_excess <= 1e-12, "bound excess {}", d.bound_excess);
    assert!(d.min_value >= -1e-12);
    assert!(d.max_value <= 1.0 + 1e-12);
    assert!(d.max_value > 0.01, "solute should have entered the layer");
    assert!(d.mass_residual <= 1e-6, "mass residual {}", d.mass_residual);
}

#[test]
fn transport_parameter_validation() {
    let layer = disk_layer(8, 4);
    let velocity = VectorField::zeros(layer.grid());

    let mut p = zero_problem(&layer, DiffusionCase::SlowHorizontal);
    p.dt = 0.0;
    assert!(matches!(
        solve_micro_transport(&layer, &velocity, &p),
        Err(MicroError::InvalidParameters(_))
    ));

    let mut p = zero_problem(&layer, DiffusionCase::SlowHorizontal);
    p.c_bottom = vec![0.0; 3];
    assert!(matches!(
        solve_micro_transport(&layer, &velocity, &p),
        Err(MicroError::ShapeMismatch { .. })
    ));

    let mut p = zero_problem(&layer, DiffusionCase::SlowHorizontal);
    p.params.diff_vertical = 0.0;
    assert!(matches!(
        solve_micro_transport(&layer, &velocity, &p),
        Err(MicroError::InvalidParameters(_))
    ));
}
