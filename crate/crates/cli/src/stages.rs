//! Stage computations.
//!
//! Each stage turns the resolved configuration — plus the artifact
//! documents of the stages it depends on — into its own document and
//! optional field dumps. Stages communicate exclusively through those
//! documents, so a cached artifact and a freshly computed one are fully
//! interchangeable, and every reduction (means, extrema) runs in storage
//! order for cross-run determinism.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use permlayer_core::cell_diffusion::{
    self, DiffusionCase, EffectiveDiffusion, VerticalCorrector,
};
use permlayer_core::cell_stokes::{self, CellStokesOptions, PermeabilityTensor};
use permlayer_core::convergence::{
    self, validate_sweep, ScalingStudy, SweepPlan, SweepRecord, TransportPlan,
};
use permlayer_core::discrete::{self, NormWeights, ScalarField, StructuredGrid, VectorField};
use permlayer_core::geometry::{self, LayerGeometry, UnitCellGeometry};
use permlayer_core::linsolve::{MeanProjection, SpdOptions};
use permlayer_core::macro_darcy;
use permlayer_core::macro_transport::{
    self, MacroTransportProblem, TransportCoefficients,
};
use permlayer_core::micro_reference::{
    self, MicroStokesOptions, MicroTransportParams, MicroTransportProblem,
};

use crate::artifacts::*;
use crate::config::{
    advection_label, case_label, lateral_label, scheme_label, FieldFormat, ResolvedConfig,
};

/// A stage computation failure (solver breakdown, incompatible artifact,
/// nonphysical result). Recorded in the manifest; dependents are skipped.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct StageError(pub String);

fn fail(e: impl std::fmt::Display) -> StageError {
    StageError(e.to_string())
}

/// One auxiliary output file (field dump) emitted next to a stage document.
pub struct FieldDump {
    pub rel_path: String,
    pub bytes: Vec<u8>,
}

pub const SCHEMA_PERMEABILITY: &str = "permlayer/permeability/1";
pub const SCHEMA_EFFECTIVE: &str = "permlayer/effective-diffusion/1";
pub const SCHEMA_DARCY: &str = "permlayer/darcy/1";
pub const SCHEMA_TRANSPORT: &str = "permlayer/transport/1";
pub const SCHEMA_MICRO: &str = "permlayer/micro/1";
pub const SCHEMA_CONVERGE: &str = "permlayer/converge/1";
pub const SCHEMA_REPORT: &str = "permlayer/report/1";
pub const SCHEMA_MANIFEST: &str = "permlayer/manifest/1";

// ---------------------------------------------------------------------
// Shared helpers.
// ---------------------------------------------------------------------

fn build_cell(cfg: &ResolvedConfig, resolution: usize) -> Result<UnitCellGeometry, StageError> {
    geometry::build_unit_cell(&cfg.inclusion, cfg.dim, resolution).map_err(fail)
}

/// The layer every demonstration stage runs on: the largest sweep period
/// at the layer resolution.
fn build_first_layer(cfg: &ResolvedConfig) -> Result<LayerGeometry, StageError> {
    let cell = build_cell(cfg, cfg.layer_resolution)?;
    geometry::build_layer(&cell, cfg.epsilons[0], cfg.alpha, &cfg.sigma).map_err(fail)
}

fn trim_entries(entries: &[[f64; 3]; 3], dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|i| (0..dim).map(|j| entries[i][j]).collect())
        .collect()
}

fn pad_entries(rows: &[Vec<f64>], dim: usize) -> Result<[[f64; 3]; 3], StageError> {
    let mut out = [[0.0f64; 3]; 3];
    if rows.len() != dim {
        return Err(StageError(format!(
            "stored tensor has {} rows, expected {dim}",
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(StageError(format!(
                "stored tensor row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            out[i][j] = v;
        }
    }
    Ok(out)
}

fn case_from_label(label: &str) -> Result<DiffusionCase, StageError> {
    match label {
        "slow" => Ok(DiffusionCase::SlowHorizontal),
        "fast" => Ok(DiffusionCase::FastHorizontal),
        other => Err(StageError(format!("unknown case label {other:?} in artifact"))),
    }
}

/// Decodes a linear cell index in storage order (axis 0 fastest).
fn decode_index(mut c: usize, dims: &[usize], out: &mut [usize]) {
    for (d, &len) in dims.iter().enumerate() {
        out[d] = c % len;
        c /= len;
    }
}

/// Iterates the horizontal multi-indices of a grid in storage order and
/// returns its cell centers extended by `ζ`, for building plate data.
fn plate_values(
    grid: &StructuredGrid,
    dim: usize,
    mut f: impl FnMut(&[f64]) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let hdims = &grid.cells()[..dim - 1];
    let hcount: usize = hdims.iter().product();
    let mut bottom = vec![0.0f64; hcount];
    let mut top = vec![0.0f64; hcount];
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0f64; dim];
    for c in 0..hcount {
        decode_index(c, hdims, &mut idx[..dim - 1]);
        idx[dim - 1] = 0;
        let center = grid.cell_center(&idx);
        x[..dim - 1].copy_from_slice(&center[..dim - 1]);
        x[dim - 1] = -1.0;
        bottom[c] = f(&x);
        x[dim - 1] = 1.0;
        top[c] = f(&x);
    }
    (bottom, top)
}

/// Min/max/mean over the active cells of a field, in storage order.
fn summarize_scalar(field: &ScalarField) -> FieldSummaryDoc {
    let mask = field.mask();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (c, &v) in field.values().iter().enumerate() {
        if !mask[c] {
            continue;
        }
        min = min.min(v);
        max = max.max(v);
        sum += v;
        count += 1;
    }
    if count == 0 {
        FieldSummaryDoc {
            min: 0.0,
            max: 0.0,
            mean: 0.0,
        }
    } else {
        FieldSummaryDoc {
            min,
            max,
            mean: sum / count as f64,
        }
    }
}

fn snapshot_docs(
    snapshots: &[(usize, ScalarField)],
    dt: f64,
) -> Vec<SnapshotDoc> {
    snapshots
        .iter()
        .map(|(step, field)| {
            let s = summarize_scalar(field);
            SnapshotDoc {
                step: *step,
                time: *step as f64 * dt,
                min: s.min,
                max: s.max,
                mean: s.mean,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------
// Field dumps.
// ---------------------------------------------------------------------

/// Writes a grid-shaped value table. Rows follow the linear storage order
/// (axis 0 fastest); masked entries are left empty in CSV and stored as
/// NaN in binary.
fn dump_values(
    rel_base: &str,
    dims: &[usize],
    values: &[f64],
    mask: &[bool],
    format: FieldFormat,
) -> Vec<FieldDump> {
    match format {
        FieldFormat::Csv => {
            let mut text = String::new();
            for d in 0..dims.len() {
                text.push_str(&format!("i{d},"));
            }
            text.push_str("value\n");
            let mut idx = vec![0usize; dims.len()];
            for (c, &v) in values.iter().enumerate() {
                decode_index(c, dims, &mut idx);
                for i in &idx {
                    text.push_str(&format!("{i},"));
                }
                if mask[c] {
                    text.push_str(&format!("{v}"));
                }
                text.push('\n');
            }
            vec![FieldDump {
                rel_path: format!("{rel_base}.csv"),
                bytes: text.into_bytes(),
            }]
        }
        FieldFormat::Binary => {
            let mut payload = Vec::with_capacity(values.len() * 8);
            for (c, &v) in values.iter().enumerate() {
                let x = if mask[c] { v } else { f64::NAN };
                payload.extend_from_slice(&x.to_le_bytes());
            }
            let meta = serde_json::json!({
                "dims": dims,
                "order": "axis0-fastest",
                "dtype": "f64le",
                "masked": "nan",
                "count": values.len(),
            });
            vec![
                FieldDump {
                    rel_path: format!("{rel_base}.bin"),
                    bytes: payload,
                },
                FieldDump {
                    rel_path: format!("{rel_base}.meta.json"),
                    bytes: format!("{:#}\n", meta).into_bytes(),
                },
            ]
        }
    }
}

fn dump_scalar(rel_base: &str, field: &ScalarField, format: FieldFormat) -> Vec<FieldDump> {
    dump_values(
        rel_base,
        field.grid().cells(),
        field.values(),
        field.mask(),
        format,
    )
}

fn dump_vector(rel_base: &str, field: &VectorField, format: FieldFormat) -> Vec<FieldDump> {
    let grid = field.grid();
    let mut out = Vec::new();
    for d in 0..grid.dim() {
        out.extend(dump_values(
            &format!("{rel_base}_{d}"),
            &grid.face_dims(d),
            field.comp(d),
            field.mask(d),
            format,
        ));
    }
    out
}

// ---------------------------------------------------------------------
// cell
// ---------------------------------------------------------------------

pub fn run_cell(cfg: &ResolvedConfig) -> Result<PermeabilityDoc, StageError> {
    let cell = build_cell(cfg, cfg.cell_resolution)?;
    let opts = CellStokesOptions {
        tol: cfg.solver.cell_tolerance,
        max_outer: cfg.solver.max_outer,
        max_inner: cfg.solver.max_inner,
    };
    let mut solutions = Vec::with_capacity(cfg.dim);
    for axis in 0..cfg.dim {
        solutions.push(cell_stokes::solve_stokes_cell(&cell, axis, &opts).map_err(fail)?);
    }
    let k = cell_stokes::permeability(&solutions).map_err(fail)?;
    let axes = solutions
        .iter()
        .map(|s| CellAxisDoc {
            axis: s.axis(),
            outer_iterations: s.outer_report().iterations,
            inner_iterations: s.inner_iterations(),
            divergence_linf: s.divergence_linf(),
            momentum_residual: s.momentum_residual(),
        })
        .collect();
    Ok(PermeabilityDoc {
        schema: SCHEMA_PERMEABILITY.to_string(),
        dim: cfg.dim,
        inclusion: cfg.inclusion_label.clone(),
        resolution: cfg.cell_resolution,
        porosity: cell.porosity(),
        entries: trim_entries(k.entries(), cfg.dim),
        formula_discrepancy: k.formula_discrepancy(),
        min_eigenvalue: k.min_eigenvalue(),
        axes,
    })
}

// ---------------------------------------------------------------------
// effective
// ---------------------------------------------------------------------

pub fn run_effective(cfg: &ResolvedConfig) -> Result<EffectiveDoc, StageError> {
    let cell = build_cell(cfg, cfg.cell_resolution)?;
    let opts = SpdOptions {
        tol: cfg.solver.cell_tolerance,
        max_iter: cfg.solver.max_linear,
        projection: MeanProjection::None,
    };
    let sols =
        cell_diffusion::solve_diffusion_cell(&cell, cfg.case, cfg.diffusivity, &opts).map_err(fail)?;
    let eff = cell_diffusion::effective_diffusion(&cell, &sols, cfg.diffusivity).map_err(fail)?;
    let horizontal_iterations = sols.horizontal().iter().map(|h| h.iterations()).collect();
    let (vertical_iterations, profile_discrepancy) = match sols.vertical() {
        VerticalCorrector::FullCell(v) => (Some(v.iterations()), None),
        VerticalCorrector::Profile(p) => (None, Some(p.fd_discrepancy())),
    };
    Ok(EffectiveDoc {
        schema: SCHEMA_EFFECTIVE.to_string(),
        dim: cfg.dim,
        case: case_label(cfg.case).to_string(),
        inclusion: cfg.inclusion_label.clone(),
        resolution: cfg.cell_resolution,
        diffusivity: cfg.diffusivity,
        porosity: eff.porosity(),
        entries: trim_entries(eff.entries(), cfg.dim),
        vertical: eff.vertical(),
        formula_discrepancy: eff.formula_discrepancy(),
        horizontal_iterations,
        vertical_iterations,
        profile_discrepancy,
    })
}

// ---------------------------------------------------------------------
// darcy
// ---------------------------------------------------------------------

fn darcy_data(
    cfg: &ResolvedConfig,
    mgrid: &StructuredGrid,
) -> (Vec<ScalarField>, Vec<f64>, Vec<f64>) {
    let dim = cfg.dim;
    let f0: Vec<ScalarField> = (0..dim)
        .map(|d| ScalarField::from_fn(mgrid, |x| cfg.data.force.eval(d, dim, x)))
        .collect();
    let (p_bottom, p_top) = plate_values(mgrid, dim, |x| cfg.data.pressure.eval(dim, x));
    (f0, p_bottom, p_top)
}

pub fn run_darcy(
    cfg: &ResolvedConfig,
    perm: &PermeabilityDoc,
) -> Result<(DarcyDoc, Vec<FieldDump>), StageError> {
    let entries = pad_entries(&perm.entries, perm.dim)?;
    let k = PermeabilityTensor::from_entries(perm.dim, &entries, perm.formula_discrepancy)
        .map_err(fail)?;
    let layer = build_first_layer(cfg)?;
    let mgrid = convergence::matched_macro_grid(&layer).map_err(fail)?;
    let (f0, p_bottom, p_top) = darcy_data(cfg, &mgrid);
    let sol = macro_darcy::solve_darcy(&mgrid, &k, &f0, &p_bottom, &p_top).map_err(fail)?;
    let diag = macro_darcy::verify_darcy(&sol, &k, &f0, &p_bottom, &p_top).map_err(fail)?;
    let flux = sol.column_flux();
    let flux_mean = flux.iter().sum::<f64>() / flux.len() as f64;
    let psum = summarize_scalar(sol.pressure());
    let doc = DarcyDoc {
        schema: SCHEMA_DARCY.to_string(),
        dim: cfg.dim,
        grid_cells: mgrid.cells().to_vec(),
        eps: cfg.epsilons[0].to_string(),
        vertical_permeability: k.entry(cfg.dim - 1, cfg.dim - 1),
        column_flux: flux.to_vec(),
        flux_mean,
        pressure_min: psum.min,
        pressure_max: psum.max,
        diagnostics: DarcyDiagnosticsDoc {
            column_variation: diag.column_variation,
            law_residual: diag.law_residual,
            boundary_mismatch: diag.boundary_mismatch,
        },
    };
    let mut dumps = Vec::new();
    if cfg.output.fields {
        dumps.extend(dump_scalar(
            "fields/darcy_pressure",
            sol.pressure(),
            cfg.output.field_format,
        ));
    }
    Ok((doc, dumps))
}

// ---------------------------------------------------------------------
// transport
// ---------------------------------------------------------------------

pub fn run_transport(
    cfg: &ResolvedConfig,
    eff: &EffectiveDoc,
    darcy: &DarcyDoc,
) -> Result<(TransportDoc, Vec<FieldDump>), StageError> {
    let ts = cfg
        .transport
        .ok_or_else(|| StageError("transport stage needs physics.dt and physics.t_end".into()))?;
    let case = case_from_label(&eff.case)?;
    if case != cfg.case {
        return Err(StageError(format!(
            "effective-diffusion artifact was computed for the {:?} case, configuration asks for {:?}",
            eff.case,
            case_label(cfg.case)
        )));
    }
    let dim = cfg.dim;
    let horizontal: Vec<f64> = match case {
        DiffusionCase::SlowHorizontal => Vec::new(),
        DiffusionCase::FastHorizontal => (0..dim - 1).map(|d| eff.entries[d][d]).collect(),
    };
    let coefficients =
        TransportCoefficients::from_parts(case, eff.porosity, eff.vertical, horizontal.clone())
            .map_err(fail)?;
    let layer = build_first_layer(cfg)?;
    let mgrid = convergence::matched_macro_grid(&layer).map_err(fail)?;
    if darcy.column_flux.len() != mgrid.cells()[..dim - 1].iter().product::<usize>() {
        return Err(StageError(format!(
            "filtration artifact has {} columns but the grid has {}",
            darcy.column_flux.len(),
            mgrid.cells()[..dim - 1].iter().product::<usize>()
        )));
    }
    let porosity = eff.porosity;
    let source = ScalarField::from_fn(&mgrid, |x| porosity * cfg.data.source.eval(dim, x));
    let hcount = darcy.column_flux.len();
    let problem = MacroTransportProblem {
        grid: mgrid.clone(),
        coefficients,
        column_velocity: darcy.column_flux.clone(),
        source,
        c_bottom: vec![0.0; hcount],
        c_top: vec![0.0; hcount],
        initial: ScalarField::zeros(&mgrid),
        dt: ts.dt,
        steps: ts.steps,
        time_scheme: cfg.solver.time_scheme,
        advection: cfg.solver.advection,
        snapshot_steps: cfg.output.snapshot_steps.clone(),
        solver: SpdOptions {
            tol: cfg.solver.transport_tolerance,
            max_iter: cfg.solver.max_linear,
            projection: MeanProjection::None,
        },
    };
    let sol = macro_transport::solve_macro_transport(&problem).map_err(fail)?;
    let d = sol.diagnostics();
    let doc = TransportDoc {
        schema: SCHEMA_TRANSPORT.to_string(),
        dim,
        case: case_label(case).to_string(),
        grid_cells: mgrid.cells().to_vec(),
        porosity,
        vertical_diffusion: eff.vertical,
        horizontal_diffusion: horizontal,
        dt: ts.dt,
        steps: ts.steps,
        time_scheme: scheme_label(cfg.solver.time_scheme).to_string(),
        advection: advection_label(cfg.solver.advection).to_string(),
        final_state: summarize_scalar(sol.final_state()),
        snapshots: snapshot_docs(sol.snapshots(), ts.dt),
        diagnostics: TransportDiagnosticsDoc {
            mass_residual: finite(d.mass_residual),
            hull_excess: d.hull_excess,
            min_value: d.min_value,
            max_value: d.max_value,
            advective_cfl: finite(d.advective_cfl),
            cell_peclet: finite(d.cell_peclet),
            oscillation_risk: d.oscillation_risk,
            linear_iterations: d.linear_iterations,
        },
    };
    let mut dumps = Vec::new();
    if cfg.output.fields {
        dumps.extend(dump_scalar(
            "fields/concentration",
            sol.final_state(),
            cfg.output.field_format,
        ));
    }
    Ok((doc, dumps))
}

// ---------------------------------------------------------------------
// micro
// ---------------------------------------------------------------------

pub fn run_micro(cfg: &ResolvedConfig) -> Result<(MicroDoc, Vec<FieldDump>), StageError> {
    let dim = cfg.dim;
    let layer = build_first_layer(cfg)?;
    let grid = layer.grid().clone();
    let scales = layer.scales().clone();
    let ea = scales.half_thickness_f64();

    // Data in microscopic coordinates: recipes take macroscopic `(x̄, ζ)`,
    // and the plate pressures carry the thickness factor so the rescaled
    // pressure is order one.
    let to_macro = |x: &[f64]| -> Vec<f64> {
        let mut xm = x.to_vec();
        xm[dim - 1] = x[dim - 1] / ea;
        xm
    };
    let force = VectorField::from_fn(&grid, |comp, x| cfg.data.force.eval(comp, dim, &to_macro(x)));
    let pb_cells = ScalarField::from_fn(&grid, |x| ea * cfg.data.pressure.eval(dim, &to_macro(x)));
    let (pb_bottom, pb_top) = plate_values(&grid, dim, |x| ea * cfg.data.pressure.eval(dim, x));

    let opts = MicroStokesOptions {
        tol: cfg.solver.micro_tolerance,
        max_outer: cfg.solver.max_outer,
        max_inner: cfg.solver.max_inner,
    };
    let micro =
        micro_reference::solve_micro_stokes(&layer, &force, &pb_cells, &pb_bottom, &pb_top, &opts)
            .map_err(fail)?;
    let w = NormWeights::default();
    let nu = discrete::weighted_norms_vector(micro.velocity(), &w);
    let np = discrete::weighted_norms(micro.pressure(), &w);
    let cuts = micro.cut_fluxes();
    let cut_mean = cuts.iter().sum::<f64>() / cuts.len() as f64;
    let cut_var = cuts
        .iter()
        .map(|&q| (q - cut_mean).abs())
        .fold(0.0f64, f64::max);

    let transport = if let Some(ts) = cfg.transport {
        let mut params = MicroTransportParams::scaled(cfg.case, cfg.diffusivity, &scales);
        params.lateral = cfg.lateral;
        let source = ScalarField::from_fn(&grid, |x| cfg.data.source.eval(dim, &to_macro(x)));
        let hcount: usize = grid.cells()[..dim - 1].iter().product();
        let problem = MicroTransportProblem {
            params,
            source,
            c_bottom: vec![0.0; hcount],
            c_top: vec![0.0; hcount],
            initial: ScalarField::zeros(&grid),
            dt: ts.dt,
            steps: ts.steps,
            time_scheme: cfg.solver.time_scheme,
            advection: cfg.solver.advection,
            solver: SpdOptions {
                tol: cfg.solver.transport_tolerance,
                max_iter: cfg.solver.max_linear,
                projection: MeanProjection::None,
            },
        };
        let csol =
            micro_reference::solve_micro_transport(&layer, micro.velocity(), &problem).map_err(fail)?;
        let d = csol.diagnostics();
        Some((
            MicroTransportDoc {
                dt: ts.dt,
                steps: ts.steps,
                time_scheme: scheme_label(cfg.solver.time_scheme).to_string(),
                advection: advection_label(cfg.solver.advection).to_string(),
                lateral: lateral_label(params.lateral).to_string(),
                advect_coeff: params.advect_coeff,
                diff_horizontal: params.diff_horizontal,
                diff_vertical: params.diff_vertical,
                final_state: summarize_scalar(csol.final_state()),
                mass_residual: finite(d.mass_residual),
                bound_excess: d.bound_excess,
                linear_iterations: d.linear_iterations,
            },
            csol,
        ))
    } else {
        None
    };

    let (transport_doc, concentration) = match transport {
        Some((doc, csol)) => (Some(doc), Some(csol)),
        None => (None, None),
    };

    let doc = MicroDoc {
        schema: SCHEMA_MICRO.to_string(),
        dim,
        eps: scales.eps.to_string(),
        alpha: scales.alpha.to_string(),
        layer_resolution: cfg.layer_resolution,
        grid_cells: grid.cells().to_vec(),
        fluid_cells: layer.fluid_cells(),
        stokes: MicroStokesDoc {
            outer_iterations: micro.outer_iterations(),
            inner_iterations: micro.inner_iterations(),
            divergence_linf: micro.divergence_linf(),
            momentum_residual: micro.momentum_residual(),
            velocity_l2: nu.l2,
            pressure_l2: np.l2,
            cut_flux_mean: cut_mean,
            cut_flux_variation: cut_var,
        },
        transport: transport_doc,
    };
    let mut dumps = Vec::new();
    if cfg.output.fields {
        dumps.extend(dump_scalar(
            "fields/micro_pressure",
            micro.pressure(),
            cfg.output.field_format,
        ));
        dumps.extend(dump_vector(
            "fields/micro_velocity",
            micro.velocity(),
            cfg.output.field_format,
        ));
        if let Some(csol) = &concentration {
            dumps.extend(dump_scalar(
                "fields/micro_concentration",
                csol.final_state(),
                cfg.output.field_format,
            ));
        }
    }
    Ok((doc, dumps))
}

// ---------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------

/// The study plan a configuration describes. The study always runs the
/// fixed repository data recipes, so its reports are comparable across
/// configurations and bit-reproducible.
pub fn sweep_plan(cfg: &ResolvedConfig) -> SweepPlan {
    SweepPlan {
        dim: cfg.dim,
        resolution: cfg.layer_resolution,
        inclusion: cfg.inclusion.clone(),
        alpha: cfg.alpha,
        epsilons: cfg.epsilons.clone(),
        sigma: cfg.sigma.clone(),
        diffusivity: cfg.diffusivity,
        transport: cfg.transport.map(|t| TransportPlan {
            case: cfg.case,
            dt: t.dt,
            t_end: t.t_end,
        }),
    }
}

/// Runs the sweep members, distributing them over `threads` workers.
/// Records are reduced in sweep order regardless of completion order, so
/// the result is independent of the thread count.
pub fn run_converge(cfg: &ResolvedConfig, threads: usize) -> Result<ConvergeDoc, StageError> {
    let plan = sweep_plan(cfg);
    let scales_list = validate_sweep(&plan).map_err(fail)?;
    let prep = convergence::prepare_study(&plan).map_err(fail)?;

    let n = scales_list.len();
    let workers = threads.clamp(1, n);
    let mut slots: Vec<Option<Result<SweepRecord, String>>> = (0..n).map(|_| None).collect();
    if workers <= 1 {
        for (i, scales) in scales_list.iter().enumerate() {
            slots[i] = Some(
                convergence::study_scale(&plan, &prep, scales).map_err(|e| e.to_string()),
            );
        }
    } else {
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<(usize, Result<SweepRecord, String>)>> =
            Mutex::new(Vec::with_capacity(n));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = convergence::study_scale(&plan, &prep, &scales_list[i])
                        .map_err(|e| e.to_string());
                    results.lock().unwrap().push((i, r));
                });
            }
        });
        for (i, r) in results.into_inner().unwrap() {
            slots[i] = Some(r);
        }
    }
    let mut records = Vec::with_capacity(n);
    for (i, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(Ok(r)) => records.push(r),
            Some(Err(e)) => {
                return Err(StageError(format!(
                    "sweep member ε = {} failed: {e}",
                    scales_list[i].eps
                )))
            }
            None => return Err(StageError("sweep scheduling dropped a member".into())),
        }
    }
    let study = convergence::assemble_study(&plan, prep, records).map_err(fail)?;
    Ok(converge_doc(cfg, &study))
}

fn fit_doc(f: &convergence::SlopeFit) -> FitDoc {
    FitDoc {
        slope: f.slope,
        intercept: f.intercept,
        r_squared: f.r_squared,
    }
}

fn effective_summary(eff: &EffectiveDiffusion) -> EffectiveSummaryDoc {
    EffectiveSummaryDoc {
        case: case_label(eff.case()).to_string(),
        porosity: eff.porosity(),
        vertical: eff.vertical(),
        entries: trim_entries(eff.entries(), eff.dim()),
    }
}

fn converge_doc(cfg: &ResolvedConfig, study: &ScalingStudy) -> ConvergeDoc {
    let records = study
        .records
        .iter()
        .map(|r| SweepRecordDoc {
            eps: r.scales.eps.to_string(),
            eps_value: r.scales.eps_f64(),
            velocity_l2: r.velocity_l2,
            velocity_grad_l2: r.velocity_grad_l2,
            pressure_l2: r.pressure_l2,
            two_scale_velocity: r.two_scale.velocity,
            two_scale_pressure: r.two_scale.pressure,
            two_scale_concentration: r.two_scale.concentration,
            flux_ratio: finite(r.flux_ratio),
            stokes_outer: r.stokes_outer,
            stokes_inner: r.stokes_inner,
            micro_divergence_linf: r.micro_divergence_linf,
            micro_mass_residual: r.micro_mass_residual.and_then(finite),
            micro_bound_excess: r.micro_bound_excess,
            macro_mass_residual: r.macro_mass_residual.and_then(finite),
        })
        .collect();
    ConvergeDoc {
        schema: SCHEMA_CONVERGE.to_string(),
        dim: cfg.dim,
        inclusion: cfg.inclusion_label.clone(),
        resolution: cfg.layer_resolution,
        alpha: cfg.alpha.to_string(),
        case: cfg.transport.map(|_| case_label(cfg.case).to_string()),
        dt: cfg.transport.map(|t| t.dt),
        t_end: cfg.transport.map(|t| t.t_end),
        diffusivity: cfg.diffusivity,
        expected: ExpectedSlopesDoc {
            velocity: study.expected.velocity,
            velocity_gradient: study.expected.velocity_gradient,
            pressure: study.expected.pressure,
        },
        velocity_fit: fit_doc(&study.velocity_fit),
        gradient_fit: fit_doc(&study.gradient_fit),
        pressure_fit: fit_doc(&study.pressure_fit),
        records,
        permeability: TensorDoc {
            dim: study.permeability.dim(),
            entries: trim_entries(study.permeability.entries(), study.permeability.dim()),
            formula_discrepancy: study.permeability.formula_discrepancy(),
            min_eigenvalue: study.permeability.min_eigenvalue(),
        },
        effective_diffusion: study.effective_diffusion.as_ref().map(effective_summary),
    }
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

fn decrease_check(name: &str, values: &[f64]) -> CheckDoc {
    // Worst consecutive ratio: strictly below one iff the sequence is
    // strictly decreasing.
    let mut worst = f64::NEG_INFINITY;
    for w in values.windows(2) {
        let ratio = if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY };
        worst = worst.max(ratio);
    }
    CheckDoc {
        name: name.to_string(),
        value: finite(worst),
        threshold: Some(1.0),
        passed: values.len() >= 2 && worst < 1.0,
    }
}

pub fn run_report(
    cfg: &ResolvedConfig,
    conv: &ConvergeDoc,
) -> Result<(ReportDocOut, Vec<u8>), StageError> {
    let t = cfg.report;
    let mut checks = Vec::new();
    for (name, fit, expected) in [
        ("velocity_slope", &conv.velocity_fit, conv.expected.velocity),
        (
            "gradient_slope",
            &conv.gradient_fit,
            conv.expected.velocity_gradient,
        ),
        ("pressure_slope", &conv.pressure_fit, conv.expected.pressure),
    ] {
        let threshold = expected - t.slope_margin;
        checks.push(CheckDoc {
            name: name.to_string(),
            value: Some(fit.slope),
            threshold: Some(threshold),
            passed: fit.slope >= threshold,
        });
        checks.push(CheckDoc {
            name: format!("{name}_r_squared"),
            value: Some(fit.r_squared),
            threshold: Some(t.min_r_squared),
            passed: fit.r_squared >= t.min_r_squared,
        });
    }
    let ts_velocity: Vec<f64> = conv.records.iter().map(|r| r.two_scale_velocity).collect();
    let ts_pressure: Vec<f64> = conv.records.iter().map(|r| r.two_scale_pressure).collect();
    checks.push(decrease_check("two_scale_velocity_decreasing", &ts_velocity));
    checks.push(decrease_check("two_scale_pressure_decreasing", &ts_pressure));
    let ts_conc: Option<Vec<f64>> = conv
        .records
        .iter()
        .map(|r| r.two_scale_concentration)
        .collect();
    if let Some(conc) = &ts_conc {
        checks.push(decrease_check("two_scale_concentration_decreasing", conc));
    }
    if let Some(last) = ts_pressure.last() {
        checks.push(CheckDoc {
            name: "final_pressure_error".to_string(),
            value: Some(*last),
            threshold: Some(t.max_final_error),
            passed: *last <= t.max_final_error,
        });
    }
    if let Some(conc) = &ts_conc {
        if let Some(last) = conc.last() {
            checks.push(CheckDoc {
                name: "final_concentration_error".to_string(),
                value: Some(*last),
                threshold: Some(t.max_final_error),
                passed: *last <= t.max_final_error,
            });
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    let doc = ReportDocOut {
        schema: SCHEMA_REPORT.to_string(),
        epsilons: conv.records.iter().map(|r| r.eps.clone()).collect(),
        expected: ExpectedSlopesDoc {
            velocity: conv.expected.velocity,
            velocity_gradient: conv.expected.velocity_gradient,
            pressure: conv.expected.pressure,
        },
        velocity_fit: clone_fit(&conv.velocity_fit),
        gradient_fit: clone_fit(&conv.gradient_fit),
        pressure_fit: clone_fit(&conv.pressure_fit),
        checks,
        passed,
    };
    let csv = sweep_csv(conv);
    Ok((doc, csv))
}

fn clone_fit(f: &FitDoc) -> FitDoc {
    FitDoc {
        slope: f.slope,
        intercept: f.intercept,
        r_squared: f.r_squared,
    }
}

/// Plot-ready table: each norm next to the power law `value(ε₀)·(ε/ε₀)^s`
/// with the expected slope `s`, anchored at the largest period.
fn sweep_csv(conv: &ConvergeDoc) -> Vec<u8> {
    let mut text = String::from(
        "eps,velocity_l2,velocity_ref,gradient_l2,gradient_ref,pressure_l2,pressure_ref,\
         two_scale_velocity,two_scale_pressure,two_scale_concentration\n",
    );
    let first = match conv.records.first() {
        Some(f) => f,
        None => return text.into_bytes(),
    };
    let eps0 = first.eps_value;
    let reference = |v0: f64, eps: f64, slope: f64| v0 * (eps / eps0).powf(slope);
    for r in &conv.records {
        let vref = reference(first.velocity_l2, r.eps_value, conv.expected.velocity);
        let gref = reference(
            first.velocity_grad_l2,
            r.eps_value,
            conv.expected.velocity_gradient,
        );
        let pref = reference(first.pressure_l2, r.eps_value, conv.expected.pressure);
        let conc = r
            .two_scale_concentration
            .map(|c| c.to_string())
            .unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.eps_value,
            r.velocity_l2,
            vref,
            r.velocity_grad_l2,
            gref,
            r.pressure_l2,
            pref,
            r.two_scale_velocity,
            r.two_scale_pressure,
            conc,
        ));
    }
    text.into_bytes()
}

