//! Effective filtration and transport models on the rescaled layer.
//!
//! Constant boundary pressures with no forcing admit a fully explicit
//! solution (linear pressure, constant vertical flux); general vertical
//! forcing reduces per column to a cumulative-sum identity that is rebuilt
//! here directly. The transport model is checked against a steady
//! advection–diffusion profile, a decaying diffusion mode, and its
//! built-in extremum and mass monitors.

use core::f64::consts::PI;

use permlayer_core::cell_diffusion::{
    default_corrector_options, effective_diffusion, solve_diffusion_cell, DiffusionCase,
};
use permlayer_core::cell_stokes::{
    permeability, solve_stokes_cell, CellStokesOptions, PermeabilityTensor,
};
use permlayer_core::discrete::{ScalarField, StructuredGrid};
use permlayer_core::geometry::{build_unit_cell, InclusionSpec, UnitCellGeometry};
use permlayer_core::linsolve::SpdOptions;
use permlayer_core::macro_darcy::{macro_grid, solve_darcy, verify_darcy, MacroDarcyError};
use permlayer_core::macro_transport::{
    solve_macro_transport, AdvectionScheme, MacroTransportError, MacroTransportProblem,
    MacroTransportSolution, TimeScheme, TransportCoefficients,
};

fn disk_cell(m: usize) -> UnitCellGeometry {
    let spec = InclusionSpec::Ball {
        center: vec![0.5, 0.5],
        radius: 0.25,
    };
    build_unit_cell(&spec, 2, m).unwrap()
}

fn disk_permeability() -> PermeabilityTensor {
    let cell = disk_cell(16);
    let opts = CellStokesOptions::default();
    let sols: Vec<_> = (0..2)
        .map(|axis| solve_stokes_cell(&cell, axis, &opts).unwrap())
        .collect();
    permeability(&sols).unwrap()
}

#[test]
fn constant_pressure_drop_gives_linear_profile() {
    let k = disk_permeability();
    let grid = macro_grid(&[6], 8).unwrap();
    let f0 = vec![ScalarField::zeros(&grid), ScalarField::zeros(&grid)];
    let p_bottom = vec![2.0; 6];
    let p_top = vec![0.5; 6];
    let sol = solve_darcy(&grid, &k, &f0, &p_bottom, &p_top).unwrap();

    // p(ζ) = (P⁺ + P⁻)/2 + (P⁺ − P⁻)·ζ/2, exact at the pressure nodes.
    let exact = |zeta: f64| 1.25 - 0.75 * zeta;
    let h = grid.spacing()[1];
    for col in 0..6 {
        for level in 0..=8 {
            let zeta = -1.0 + level as f64 * h;
            assert!(
                (sol.node_pressure(col, level) - exact(zeta)).abs() < 1e-12,
                "node pressure at level {level}"
            );
        }
    }

    // Constant vertical velocity −K_vv·(P⁺ − P⁻)/2 in every cell of every
    // column; the horizontal component only sees the (numerically zero)
    // off-diagonal permeability entry.
    let expected_flux = -k.entry(1, 1) * (0.5 - 2.0) / 2.0;
    for &q in sol.column_flux() {
        assert!(
            (q - expected_flux).abs() < 1e-10,
            "column flux {q} vs {expected_flux}"
        );
    }
    for c in 0..grid.cell_count() {
        assert!((sol.velocity(1).get(c) - expected_flux).abs() < 1e-10);
        assert!(sol.velocity(0).get(c).abs() < 1e-12);
        assert!((sol.vertical_gradient().get(c) + 0.75).abs() < 1e-12);
    }

    // Cell-centered pressure is the same linear profile at the centers.
    for (c, x) in field_centers(&grid) {
        assert!((sol.pressure().get(c) - exact(x[1])).abs() < 1e-12);
    }

    // Continuous sampling reproduces the profile (and the plate data
    // exactly at the plates).
    assert!((sol.sample_pressure(&[0.37, 0.3]) - exact(0.3)).abs() < 1e-12);
    assert!((sol.sample_pressure(&[0.91, -1.0]) - 2.0).abs() < 1e-12);
    assert!((sol.sample_pressure(&[0.08, 1.0]) - 0.5).abs() < 1e-12);

    let diag = verify_darcy(&sol, &k, &f0, &p_bottom, &p_top).unwrap();
    assert!(diag.column_variation < 1e-10, "column variation {}", diag.column_variation);
    assert!(diag.law_residual < 1e-12);
    assert_eq!(diag.boundary_mismatch, 0.0);
}

/// Cell centers of a grid paired with their linear index.
fn field_centers(grid: &StructuredGrid) -> Vec<(usize, Vec<f64>)> {
    let dims = grid.cells().to_vec();
    let mut out = Vec::with_capacity(grid.cell_count());
    let mut idx = vec![0usize; dims.len()];
    for c in 0..grid.cell_count() {
        out.push((c, grid.cell_center(&idx)));
        for d in 0..dims.len() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

#[test]
fn forced_columns_reduce_to_cumulative_sums() {
    let k = disk_permeability();
    let mv = 16usize;
    let mh = 4usize;
    let grid = macro_grid(&[mh], mv).unwrap();
    let h = grid.spacing()[1];
    let fh = |x: &[f64]| 0.3 * (2.0 * PI * x[0]).cos();
    let fv = |x: &[f64]| 1.0 + x[1] * x[1] + 0.5 * (2.0 * PI * x[0]).sin();
    let f0 = vec![
        ScalarField::from_fn(&grid, |x| fh(x)),
        ScalarField::from_fn(&grid, |x| fv(x)),
    ];
    let p_bottom = vec![0.8, 1.0, 0.6, 0.9];
    let p_top = vec![-0.4, 0.0, 0.2, -0.1];
    let sol = solve_darcy(&grid, &k, &f0, &p_bottom, &p_top).unwrap();

    let knn = k.entry(1, 1);
    for col in 0..mh {
        // Vertical component of K·f0 at this column's cell centers.
        let xh = (col as f64 + 0.5) / mh as f64;
        let g: Vec<f64> = (0..mv)
            .map(|l| {
                let x = [xh, -1.0 + (l as f64 + 0.5) * h];
                k.entry(1, 0) * fh(&x) + knn * fv(&x)
            })
            .collect();
        // Column-constant flux: summing the per-cell Darcy law over the
        // column telescopes the pressure increments into the plate data.
        let g_mean: f64 = g.iter().sum::<f64>() / mv as f64;
        let q = g_mean - knn * (p_top[col] - p_bottom[col]) / 2.0;
        assert!(
            (sol.column_flux()[col] - q).abs() < 1e-12,
            "column {col}: flux {} vs reduction {q}",
            sol.column_flux()[col]
        );
        // Node pressures follow by accumulating p_{l+1} = p_l + h·(g_l − q)/K_vv.
        let mut p = p_bottom[col];
        assert!((sol.node_pressure(col, 0) - p).abs() < 1e-11);
        for l in 0..mv {
            p += h * (g[l] - q) / knn;
            assert!(
                (sol.node_pressure(col, l + 1) - p).abs() < 1e-11,
                "column {col} level {}",
                l + 1
            );
        }
        // The accumulation must land on the top plate value.
        assert!((p - p_top[col]).abs() < 1e-11);
    }

    let diag = verify_darcy(&sol, &k, &f0, &p_bottom, &p_top).unwrap();
    assert!(diag.column_variation < 1e-11);
    assert!(diag.law_residual < 1e-12);
    assert_eq!(diag.boundary_mismatch, 0.0);
}

#[test]
fn darcy_rejects_bad_inputs() {
    let k = disk_permeability();

    // Tensor dimension must match the grid dimension.
    let grid3 = macro_grid(&[4, 4], 4).unwrap();
    let f3: Vec<ScalarField> = (0..3).map(|_| ScalarField::zeros(&grid3)).collect();
    let err = solve_darcy(&grid3, &k, &f3, &vec![0.0; 16], &vec![0.0; 16]).unwrap_err();
    assert!(matches!(
        err,
        MacroDarcyError::DimensionMismatch { expected: 3, got: 2 }
    ));

    // Boundary data must hold one value per horizontal cell.
    let grid = macro_grid(&[4], 8).unwrap();
    let f0 = vec![ScalarField::zeros(&grid), ScalarField::zeros(&grid)];
    let err = solve_darcy(&grid, &k, &f0, &[0.0; 3], &[0.0; 4]).unwrap_err();
    assert!(matches!(err, MacroDarcyError::ShapeMismatch { .. }));

    // The vertical axis must be bounded.
    let wrapped = StructuredGrid::new(
        &[4, 4],
        &[permlayer_core::Frac::new(0, 1), permlayer_core::Frac::new(-1, 1)],
        &[permlayer_core::Frac::new(1, 1), permlayer_core::Frac::new(2, 1)],
        &[true, true],
    )
    .unwrap();
    let fw = vec![ScalarField::zeros(&wrapped), ScalarField::zeros(&wrapped)];
    let err = solve_darcy(&wrapped, &k, &fw, &[0.0; 4], &[0.0; 4]).unwrap_err();
    assert!(matches!(err, MacroDarcyError::InvalidGrid(_)));
}

#[test]
fn blocked_vertical_axis_makes_columns_singular() {
    // A solid band across the cell blocks vertical through-flow: the
    // permeability assembles (positive semi-definite, one zero eigenvalue)
    // but the column problems are singular and must be rejected.
    let spec = InclusionSpec::Box {
        center: vec![0.5, 0.5],
        half_widths: vec![0.5, 0.25],
    };
    let cell = build_unit_cell(&spec, 2, 16).unwrap();
    let opts = CellStokesOptions::default();
    let sols: Vec<_> = (0..2)
        .map(|axis| solve_stokes_cell(&cell, axis, &opts).unwrap())
        .collect();
    let k = permeability(&sols).unwrap();
    assert!(k.entry(1, 1).abs() < 1e-10);
    assert!(k.min_eigenvalue().abs() < 1e-10);

    let grid = macro_grid(&[4], 8).unwrap();
    let f0 = vec![ScalarField::zeros(&grid), ScalarField::zeros(&grid)];
    let err = solve_darcy(&grid, &k, &f0, &[1.0; 4], &[0.0; 4]).unwrap_err();
    assert!(matches!(err, MacroDarcyError::SingularTensor { .. }));
}

fn slow_coefficients(porosity: f64, vertical: f64) -> TransportCoefficients {
    TransportCoefficients::from_parts(DiffusionCase::SlowHorizontal, porosity, vertical, Vec::new())
        .unwrap()
}

fn base_problem(grid: &StructuredGrid, coefficients: TransportCoefficients) -> MacroTransportProblem {
    let hcount: usize = grid.cells()[..grid.dim() - 1].iter().product();
    MacroTransportProblem {
        grid: grid.clone(),
        coefficients,
        column_velocity: vec![0.0; hcount],
        source: ScalarField::zeros(grid),
        c_bottom: vec![0.0; hcount],
        c_top: vec![0.0; hcount],
        initial: ScalarField::zeros(grid),
        dt: 0.05,
        steps: 20,
        time_scheme: TimeScheme::ImplicitEuler,
        advection: AdvectionScheme::Upwind,
        snapshot_steps: Vec::new(),
        solver: SpdOptions::default(),
    }
}

#[test]
fn zero_data_stays_exactly_zero() {
    let grid = macro_grid(&[4], 12).unwrap();

    // Slow case: direct column solves of homogeneous systems.
    let mut p = base_problem(&grid, slow_coefficients(0.8, 0.75));
    p.column_velocity = vec![0.3, -0.2, 0.0, 0.5];
    let sol = solve_macro_transport(&p).unwrap();
    assert!(sol.final_state().values().iter().all(|&v| v == 0.0));
    assert_eq!(sol.diagnostics().hull_excess, 0.0);
    assert_eq!(sol.diagnostics().min_value, 0.0);
    assert_eq!(sol.diagnostics().max_value, 0.0);

    // Fast case: the iterative solve sees a zero right-hand side.
    let coeffs = TransportCoefficients::from_parts(
        DiffusionCase::FastHorizontal,
        1.0,
        0.5,
        vec![0.4],
    )
    .unwrap();
    let mut p = base_problem(&grid, coeffs);
    p.column_velocity = vec![0.1, 0.1, -0.1, -0.1];
    let sol = solve_macro_transport(&p).unwrap();
    assert!(sol.final_state().values().iter().all(|&v| v == 0.0));
    assert_eq!(sol.diagnostics().linear_iterations, 0);
}

#[test]
fn monitors_track_hull_mass_and_snapshots() {
    let mh = 8usize;
    let mv = 24usize;
    let grid = macro_grid(&[mh], mv).unwrap();
    let h = grid.spacing()[1];
    let phi = 0.85;
    let dv = 0.5;
    let mut p = base_problem(&grid, slow_coefficients(phi, dv));
    for hc in 0..mh {
        let xh = (hc as f64 + 0.5) / mh as f64;
        p.column_velocity[hc] = 0.6 * (2.0 * PI * xh).sin();
        p.c_bottom[hc] = 0.3 + 0.2 * (2.0 * PI * xh).sin();
        p.c_top[hc] = 1.0;
    }
    p.initial = ScalarField::from_fn(&grid, |x| {
        0.7 + 0.3 * (0.5 * PI * x[1]).cos() * (2.0 * PI * x[0]).sin()
    });
    p.dt = 0.02;
    p.steps = 60;
    p.snapshot_steps = vec![15, 40];
    let sol = solve_macro_transport(&p).unwrap();
    let d = sol.diagnostics();

    // Data hull [0.1, 1.0] bounds every computed value (monotone scheme,
    // no source), and interior fluxes cancel from the mass ledger.
    assert!(d.hull_excess <= 1e-12, "hull excess {}", d.hull_excess);
    assert!(d.min_value >= 0.1 - 1e-12);
    assert!(d.max_value <= 1.0 + 1e-12);
    assert!(d.mass_residual < 1e-10, "mass residual {}", d.mass_residual);
    assert!(!d.oscillation_risk);

    let vmax = 0.6 * (2.0 * PI * 1.5 / 8.0).sin();
    assert!((d.advective_cfl - vmax * p.dt / (h * phi)).abs() < 1e-12);
    assert!((d.cell_peclet - vmax * h / (2.0 * dv)).abs() < 1e-12);

    // Snapshots arrive in step order, with the final state always last.
    let steps: Vec<usize> = sol.snapshots().iter().map(|(s, _)| *s).collect();
    assert_eq!(steps, vec![15, 40, 60]);
    let last = &sol.snapshots().last().unwrap().1;
    assert_eq!(last.values(), sol.final_state().values());
}

fn steady_profile_l2(advection: AdvectionScheme) -> (MacroTransportSolution, f64) {
    let mv = 256usize;
    let grid = macro_grid(&[1], mv).unwrap();
    let v = 0.4;
    let dv = 2.0 / 3.0;
    let mut p = base_problem(&grid, slow_coefficients(1.0, dv));
    p.column_velocity = vec![v];
    p.c_top = vec![1.0];
    p.dt = 0.5;
    p.steps = 80;
    p.advection = advection;
    let sol = solve_macro_transport(&p).unwrap();

    // Steady balance v·c′ = D·c″ on (−1, 1) with c(−1) = 0, c(+1) = 1.
    let pe = v / dv;
    let exact = |zeta: f64| ((pe * zeta).exp() - (-pe).exp()) / (pe.exp() - (-pe).exp());
    let h = grid.spacing()[1];
    let mut err2 = 0.0;
    for (l, &c) in sol.final_state().values().iter().enumerate() {
        let zeta = -1.0 + (l as f64 + 0.5) * h;
        err2 += (c - exact(zeta)).powi(2) * h;
    }
    (sol, err2.sqrt())
}

#[test]
fn steady_advection_diffusion_profile() {
    let (sol, upwind_err) = steady_profile_l2(AdvectionScheme::Upwind);
    assert!(upwind_err < 1e-3, "upwind steady error {upwind_err}");
    // Monotone run: the profile never leaves the boundary-data hull [0, 1].
    assert_eq!(sol.diagnostics().hull_excess, 0.0);

    // The centered flux is second order here (cell Péclet ≪ 1), so it must
    // land far closer to the closed form.
    let (_, central_err) = steady_profile_l2(AdvectionScheme::Central);
    assert!(central_err < 2e-4, "central steady error {central_err}");
    assert!(central_err < upwind_err);
}

fn decay_linf(scheme: TimeScheme) -> f64 {
    let mv = 128usize;
    let grid = macro_grid(&[1], mv).unwrap();
    let mut p = base_problem(&grid, slow_coefficients(1.0, 1.0));
    p.initial = ScalarField::from_fn(&grid, |x| (0.5 * PI * (x[1] + 1.0)).sin());
    p.dt = 1e-3;
    p.steps = 250;
    p.time_scheme = scheme;
    let sol = solve_macro_transport(&p).unwrap();

    // The lowest diffusion mode decays as exp(−(π/2)²·t).
    let lambda = (0.5 * PI) * (0.5 * PI);
    let t = p.dt * p.steps as f64;
    let h = grid.spacing()[1];
    let mut linf = 0.0f64;
    for (l, &c) in sol.final_state().values().iter().enumerate() {
        let zeta = -1.0 + (l as f64 + 0.5) * h;
        let exact = (-lambda * t).exp() * (0.5 * PI * (zeta + 1.0)).sin();
        linf = linf.max((c - exact).abs());
    }
    linf
}

#[test]
fn diffusive_mode_decay_rate() {
    let ie = decay_linf(TimeScheme::ImplicitEuler);
    assert!(ie < 1e-3, "implicit Euler decay error {ie}");
    let cn = decay_linf(TimeScheme::CrankNicolson);
    assert!(cn < 1e-4, "Crank–Nicolson decay error {cn}");
    assert!(cn < ie);
}

#[test]
fn transport_parameter_validation() {
    // Coefficient construction.
    assert!(matches!(
        TransportCoefficients::from_parts(DiffusionCase::SlowHorizontal, 0.0, 1.0, Vec::new()),
        Err(MacroTransportError::NonpositiveCoefficient { .. })
    ));
    assert!(matches!(
        TransportCoefficients::from_parts(DiffusionCase::SlowHorizontal, 1.0, -0.5, Vec::new()),
        Err(MacroTransportError::NonpositiveCoefficient { .. })
    ));
    assert!(matches!(
        TransportCoefficients::from_parts(DiffusionCase::SlowHorizontal, 1.0, 1.0, vec![0.5]),
        Err(MacroTransportError::InvalidParameters(_))
    ));

    // Problem validation.
    let grid = macro_grid(&[4], 8).unwrap();
    let mut p = base_problem(&grid, slow_coefficients(1.0, 1.0));
    p.dt = 0.0;
    assert!(matches!(
        solve_macro_transport(&p),
        Err(MacroTransportError::InvalidParameters(_))
    ));
    let mut p = base_problem(&grid, slow_coefficients(1.0, 1.0));
    p.steps = 0;
    assert!(matches!(
        solve_macro_transport(&p),
        Err(MacroTransportError::InvalidParameters(_))
    ));
    let mut p = base_problem(&grid, slow_coefficients(1.0, 1.0));
    p.column_velocity = vec![0.0; 3];
    assert!(matches!(
        solve_macro_transport(&p),
        Err(MacroTransportError::ShapeMismatch { .. })
    ));

    // Fast case on a three-dimensional layer needs one horizontal entry
    // per horizontal axis.
    let grid3 = macro_grid(&[4, 4], 6).unwrap();
    let coeffs = TransportCoefficients::from_parts(
        DiffusionCase::FastHorizontal,
        1.0,
        1.0,
        vec![0.5],
    )
    .unwrap();
    let p = base_problem(&grid3, coeffs);
    assert!(matches!(
        solve_macro_transport(&p),
        Err(MacroTransportError::ShapeMismatch { .. })
    ));
}

#[test]
fn effective_coefficients_roundtrip() {
    let cell = disk_cell(16);
    let d = 1.3;

    let sols = solve_diffusion_cell(
        &cell,
        DiffusionCase::SlowHorizontal,
        d,
        &default_corrector_options(),
    )
    .unwrap();
    let eff = effective_diffusion(&cell, &sols, d).unwrap();
    let coeffs = TransportCoefficients::from_effective(&eff).unwrap();
    assert_eq!(coeffs.case(), DiffusionCase::SlowHorizontal);
    assert_eq!(coeffs.porosity(), eff.porosity());
    assert_eq!(coeffs.vertical(), eff.vertical());
    assert!(coeffs.horizontal().is_empty());

    let sols = solve_diffusion_cell(
        &cell,
        DiffusionCase::FastHorizontal,
        d,
        &default_corrector_options(),
    )
    .unwrap();
    let eff = effective_diffusion(&cell, &sols, d).unwrap();
    let coeffs = TransportCoefficients::from_effective(&eff).unwrap();
    assert_eq!(coeffs.case(), DiffusionCase::FastHorizontal);
    assert_eq!(coeffs.horizontal(), &[eff.entry(0, 0)]);
}
