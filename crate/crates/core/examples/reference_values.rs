//! Computes the reference values frozen into the regression tests:
//! disk-cell permeability and effective diffusion entries at several
//! resolutions, with Richardson extrapolation to estimate the
//! grid-converged value and the discretization distance of the pinned
//! resolution.
//!
//! Run with `cargo run --release -p permlayer-core --example reference_values`.

use permlayer_core::cell_diffusion::{
    effective_diffusion, solve_diffusion_cell, DiffusionCase,
};
use permlayer_core::cell_stokes::{permeability, solve_stokes_cell, CellStokesOptions};
use permlayer_core::geometry::{build_unit_cell, InclusionSpec};
use permlayer_core::linsolve::{MeanProjection, SpdOptions};

fn disk() -> InclusionSpec {
    InclusionSpec::Ball {
        center: vec![0.5, 0.5],
        radius: 0.25,
    }
}

fn richardson(label: &str, values: &[(usize, f64)]) {
    for &(m, v) in values {
        println!("  {label} m={m:4}: {v:.12e}");
    }
    if values.len() >= 3 {
        let (c, f, ff) = (values[0].1, values[1].1, values[2].1);
        let num = c - f;
        let den = f - ff;
        if den != 0.0 && num / den > 0.0 {
            let order = (num / den).ln() / 2.0f64.ln();
            let limit = ff + (ff - f) / (2.0f64.powf(order) - 1.0);
            println!("  {label} observed order {order:.3}, extrapolated {limit:.12e}");
            println!(
                "  {label} |m={} - limit| = {:.3e}",
                values[1].0,
                (f - limit).abs()
            );
            println!(
                "  {label} |m={} - limit| = {:.3e}",
                values[2].0,
                (ff - limit).abs()
            );
        }
    }
}

fn main() {
    let spec = disk();
    let sopts = CellStokesOptions {
        tol: 1e-12,
        ..CellStokesOptions::default()
    };
    let dopts = SpdOptions {
        tol: 1e-12,
        max_iter: 400_000,
        projection: MeanProjection::None,
    };

    let mut k11 = Vec::new();
    let mut k_offdiag = Vec::new();
    for m in [64usize, 128, 256] {
        let cell = build_unit_cell(&spec, 2, m).unwrap();
        let sols: Vec<_> = (0..2)
            .map(|axis| solve_stokes_cell(&cell, axis, &sopts).unwrap())
            .collect();
        let k = permeability(&sols).unwrap();
        k11.push((m, k.entry(0, 0)));
        k_offdiag.push((m, k.entry(0, 1).abs().max(k.entry(1, 0).abs())));
        println!(
            "disk m={m}: K00={:.12e} K11={:.12e} offdiag={:.3e} dual_gap={:.3e} iters={}",
            k.entry(0, 0),
            k.entry(1, 1),
            k.entry(0, 1).abs().max(k.entry(1, 0).abs()),
            k.formula_discrepancy(),
            sols.iter().map(|s| s.inner_iterations()).sum::<usize>(),
        );
    }
    richardson("K11", &k11);

    let mut slow_v = Vec::new();
    let mut fast_h = Vec::new();
    for m in [64usize, 128, 256] {
        let cell = build_unit_cell(&spec, 2, m).unwrap();
        let sols = solve_diffusion_cell(&cell, DiffusionCase::SlowHorizontal, 1.0, &dopts).unwrap();
        let eff = effective_diffusion(&cell, &sols, 1.0).unwrap();
        slow_v.push((m, eff.vertical()));
        let fsols = solve_diffusion_cell(&cell, DiffusionCase::FastHorizontal, 1.0, &dopts).unwrap();
        let feff = effective_diffusion(&cell, &fsols, 1.0).unwrap();
        fast_h.push((m, feff.entry(0, 0)));
        println!(
            "disk m={m}: slow D*vv={:.12e} fast D*hh={:.12e} fast D*vv(profile)={:.12e} porosity={:.12e}",
            eff.vertical(),
            feff.entry(0, 0),
            feff.vertical(),
            eff.porosity(),
        );
    }
    richardson("slowDvv", &slow_v);
    richardson("fastDhh", &fast_h);
}
