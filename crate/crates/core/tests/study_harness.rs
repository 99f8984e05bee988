//! The convergence-study harness: power-law fitting, plan validation, the
//! manufactured data recipes, and a miniature end-to-end sweep against the
//! microscopic reference solver.

use permlayer_core::cell_diffusion::DiffusionCase;
use permlayer_core::convergence::{
    boundary_pressure, expected_slopes, fit_slope, force_component, scaling_study, validate_sweep,
    volume_source, ConvergenceError, SweepPlan, TransportPlan,
};
use permlayer_core::geometry::InclusionSpec;
use permlayer_core::Frac;

#[test]
fn power_law_fit_recovers_exponents() {
    let eps = [0.25f64, 0.0625, 0.015625];

    let squares: Vec<f64> = eps.iter().map(|e| e * e).collect();
    let fit = fit_slope(&eps, &squares).unwrap();
    assert!((fit.slope - 2.0).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);

    let c = 3.7;
    let frac_pow: Vec<f64> = eps.iter().map(|e| c * e.powf(0.75)).collect();
    let fit = fit_slope(&eps, &frac_pow).unwrap();
    assert!((fit.slope - 0.75).abs() < 1e-12);
    assert!((fit.intercept - c.ln()).abs() < 1e-12);

    // Scaling every value shifts the intercept, never the slope.
    let scaled: Vec<f64> = frac_pow.iter().map(|v| 10.0 * v).collect();
    let refit = fit_slope(&eps, &scaled).unwrap();
    assert!((refit.slope - fit.slope).abs() < 1e-12);
    assert!((refit.intercept - fit.intercept - 10.0f64.ln()).abs() < 1e-12);
}

#[test]
fn fit_rejects_bad_data() {
    assert!(matches!(
        fit_slope(&[0.25], &[1.0]),
        Err(ConvergenceError::InsufficientPoints { got: 1 })
    ));
    assert!(matches!(
        fit_slope(&[0.25, 0.125], &[1.0]),
        Err(ConvergenceError::InsufficientPoints { .. })
    ));
    assert!(matches!(
        fit_slope(&[0.25, 0.125], &[1.0, 0.0]),
        Err(ConvergenceError::NonpositiveValue { .. })
    ));
    assert!(matches!(
        fit_slope(&[0.25, -0.125], &[1.0, 1.0]),
        Err(ConvergenceError::NonpositiveValue { .. })
    ));
    // Identical abscissae leave the slope undefined.
    assert!(matches!(
        fit_slope(&[0.25, 0.25], &[1.0, 2.0]),
        Err(ConvergenceError::NotDecreasing)
    ));
}

#[test]
fn expected_exponents_follow_the_scalings() {
    let s = expected_slopes(Frac::new(1, 2));
    assert!((s.velocity - 2.25).abs() < 1e-15);
    assert!((s.velocity_gradient - 1.25).abs() < 1e-15);
    assert!((s.pressure - 0.75).abs() < 1e-15);

    let s = expected_slopes(Frac::new(2, 3));
    assert!((s.velocity - (2.0 + 1.0 / 3.0)).abs() < 1e-15);
    assert!((s.velocity_gradient - (1.0 + 1.0 / 3.0)).abs() < 1e-15);
    assert!((s.pressure - 1.0).abs() < 1e-15);
}

fn base_plan() -> SweepPlan {
    SweepPlan {
        dim: 2,
        resolution: 8,
        inclusion: InclusionSpec::Ball {
            center: vec![0.5, 0.5],
            radius: 0.25,
        },
        alpha: Frac::new(1, 2),
        epsilons: vec![Frac::new(1, 4), Frac::new(1, 16)],
        sigma: vec![(0, 1)],
        diffusivity: 1.0,
        transport: Some(TransportPlan {
            case: DiffusionCase::SlowHorizontal,
            dt: 0.0625,
            t_end: 0.125,
        }),
    }
}

#[test]
fn plan_validation() {
    let scales = validate_sweep(&base_plan()).unwrap();
    assert_eq!(scales.len(), 2);
    assert!((scales[0].eps_f64() - 0.25).abs() < 1e-15);
    assert!((scales[1].eps_f64() - 0.0625).abs() < 1e-15);

    let mut p = base_plan();
    p.epsilons = vec![Frac::new(1, 4)];
    assert!(matches!(
        validate_sweep(&p),
        Err(ConvergenceError::InsufficientPoints { got: 1 })
    ));

    let mut p = base_plan();
    p.epsilons = vec![Frac::new(1, 16), Frac::new(1, 4)];
    assert!(matches!(
        validate_sweep(&p),
        Err(ConvergenceError::NotDecreasing)
    ));

    // Each entry must be admissible before ordering is even considered.
    let mut p = base_plan();
    p.epsilons = vec![Frac::new(1, 4), Frac::new(1, 3)];
    assert!(matches!(validate_sweep(&p), Err(ConvergenceError::Geometry(_))));

    // ε = 1/8 has no admissible layer at α = 1/2 (ε^α is not a unit
    // fraction there).
    let mut p = base_plan();
    p.epsilons = vec![Frac::new(1, 4), Frac::new(1, 8)];
    assert!(matches!(validate_sweep(&p), Err(ConvergenceError::Geometry(_))));

    let mut p = base_plan();
    p.sigma = vec![(0, 1), (0, 1)];
    assert!(matches!(validate_sweep(&p), Err(ConvergenceError::InvalidPlan(_))));

    let mut p = base_plan();
    p.transport.as_mut().unwrap().dt = 0.0;
    assert!(matches!(validate_sweep(&p), Err(ConvergenceError::InvalidPlan(_))));

    // The horizon must be an integer number of steps.
    let mut p = base_plan();
    p.transport.as_mut().unwrap().t_end = 0.1;
    assert!(matches!(validate_sweep(&p), Err(ConvergenceError::InvalidPlan(_))));

    let mut p = base_plan();
    p.diffusivity = 0.0;
    assert!(matches!(validate_sweep(&p), Err(ConvergenceError::InvalidPlan(_))));
}

#[test]
fn manufactured_data_spot_values() {
    // Horizontal force component: 0.4 + 0.3·sin(2πx₁).
    assert!((force_component(0, 2, &[0.25, 0.3]) - 0.7).abs() < 1e-15);
    // Vertical component at ζ = 0, x₁ = 0: the profile's peak.
    assert!((force_component(1, 2, &[0.0, 0.0]) - 0.5).abs() < 1e-15);
    // Middle components in three dimensions carry no force.
    assert_eq!(force_component(1, 3, &[0.25, 0.4, 0.2]), 0.0);

    // Plate pressures are the ζ = ±1 traces of the linear-in-ζ extension.
    assert!((boundary_pressure(2, &[0.25, -1.0]) + 0.95).abs() < 1e-15);
    assert!((boundary_pressure(2, &[0.25, 1.0]) - 0.95).abs() < 1e-15);
    assert_eq!(boundary_pressure(2, &[0.37, 0.0]), 0.0);

    assert!((volume_source(2, &[0.0, 0.0]) - 0.9).abs() < 1e-15);
    // At the plates the profile factor cos(πζ/2) vanishes.
    assert!((volume_source(2, &[0.1, 1.0]) - 0.5).abs() < 1e-12);
}

#[test]
fn miniature_sweep_converges_toward_the_limit_model() {
    let study = scaling_study(&base_plan()).unwrap();

    assert_eq!(study.records.len(), 2);
    assert!((study.records[0].scales.eps_f64() - 0.25).abs() < 1e-15);

    // Raw norms and two-scale errors must shrink with ε.
    let [a, b] = [&study.records[0], &study.records[1]];
    assert!(b.velocity_l2 < a.velocity_l2);
    assert!(b.pressure_l2 < a.pressure_l2);
    assert!(b.two_scale.velocity < a.two_scale.velocity);
    assert!(b.two_scale.pressure < a.two_scale.pressure);
    let ca = a.two_scale.concentration.unwrap();
    let cb = b.two_scale.concentration.unwrap();
    assert!(cb < ca, "concentration error should shrink: {ca} -> {cb}");

    // Two points make the fit exact; the exponents should already sit in
    // the right neighborhood at this coarse resolution.
    assert!(study.velocity_fit.r_squared > 0.99);
    assert!(
        study.velocity_fit.slope > 1.5,
        "velocity slope {}",
        study.velocity_fit.slope
    );
    assert!(
        study.gradient_fit.slope > 0.6,
        "gradient slope {}",
        study.gradient_fit.slope
    );
    assert!(
        study.pressure_fit.slope > 0.3,
        "pressure slope {}",
        study.pressure_fit.slope
    );

    // The effective law should already predict the bulk flux to tens of
    // percent at these scales.
    for r in &study.records {
        assert!(
            r.flux_ratio > 0.5 && r.flux_ratio < 1.5,
            "flux ratio {}",
            r.flux_ratio
        );
        assert!(r.micro_divergence_linf < 1e-6);
        assert!(r.stokes_outer > 0);
        assert!(r.stokes_inner > 0);
        assert!(r.micro_mass_residual.unwrap() < 1e-5);
        assert!(r.micro_bound_excess.unwrap() < 1e-8);
        assert!(r.macro_mass_residual.unwrap() < 1e-8);
    }

    assert!(study.permeability.min_eigenvalue() > 0.0);
    let eff = study.effective_diffusion.as_ref().unwrap();
    assert!(eff.vertical() > 0.0);
    assert_eq!(eff.case(), DiffusionCase::SlowHorizontal);
}
