//! Serializable stage artifacts.
//!
//! Every stage writes one JSON document (plus optional field dumps); later
//! stages rebuild what they need from these documents rather than from
//! in-process state, so cached and freshly computed artifacts are fully
//! interchangeable. Field order is fixed by the struct declarations and all
//! floats are finite (non-finite diagnostics are mapped to `null`), which
//! keeps reruns byte-identical.

use serde::{Deserialize, Serialize};

/// Maps a possibly non-finite diagnostic to a JSON-safe value.
pub fn finite(v: f64) -> Option<f64> {
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}

// ---------------------------------------------------------------------
// cell → permeability.json
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct PermeabilityDoc {
    pub schema: String,
    pub dim: usize,
    pub inclusion: String,
    pub resolution: usize,
    pub porosity: f64,
    /// Row-major `dim × dim` entries of the permeability tensor.
    pub entries: Vec<Vec<f64>>,
    pub formula_discrepancy: f64,
    pub min_eigenvalue: f64,
    pub axes: Vec<CellAxisDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CellAxisDoc {
    pub axis: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub divergence_linf: f64,
    pub momentum_residual: f64,
}

// ---------------------------------------------------------------------
// effective → effective_diffusion.json
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct EffectiveDoc {
    pub schema: String,
    pub dim: usize,
    pub case: String,
    pub inclusion: String,
    pub resolution: usize,
    pub diffusivity: f64,
    pub porosity: f64,
    /// Row-major `dim × dim` entries of the effective diffusion tensor.
    pub entries: Vec<Vec<f64>>,
    /// The vertical entry (the only one the slow-case limit model uses).
    pub vertical: f64,
    pub formula_discrepancy: f64,
    /// Iterations of each horizontal corrector solve (fast case only).
    pub horizontal_iterations: Vec<usize>,
    /// Iterations of the full-cell vertical corrector (slow case).
    pub vertical_iterations: Option<usize>,
    /// Finite-difference discrepancy of the one-dimensional vertical
    /// profile (fast case).
    pub profile_discrepancy: Option<f64>,
}

// ---------------------------------------------------------------------
// darcy → darcy.json
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct DarcyDoc {
    pub schema: String,
    pub dim: usize,
    /// Cell counts of the macroscopic grid (horizontal axes then
    /// vertical).
    pub grid_cells: Vec<usize>,
    /// Period the grid is matched to (the largest sweep member).
    pub eps: String,
    /// Vertical permeability entry driving the columns.
    pub vertical_permeability: f64,
    /// Effective vertical flux of every column, in storage order.
    pub column_flux: Vec<f64>,
    /// Fixed-order mean of `column_flux`.
    pub flux_mean: f64,
    pub pressure_min: f64,
    pub pressure_max: f64,
    pub diagnostics: DarcyDiagnosticsDoc,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DarcyDiagnosticsDoc {
    pub column_variation: f64,
    pub law_residual: f64,
    pub boundary_mismatch: f64,
}

// ---------------------------------------------------------------------
// transport → transport.json
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct TransportDoc {
    pub schema: String,
    pub dim: usize,
    pub case: String,
    pub grid_cells: Vec<usize>,
    pub porosity: f64,
    pub vertical_diffusion: f64,
    pub horizontal_diffusion: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub time_scheme: String,
    pub advection: String,
    pub final_state: FieldSummaryDoc,
    pub snapshots: Vec<SnapshotDoc>,
    pub diagnostics: TransportDiagnosticsDoc,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SnapshotDoc {
    pub step: usize,
    pub time: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FieldSummaryDoc {
    pub min: f64,
    pub max: f64,
    /// Fixed-order arithmetic mean over stored (fluid) cells.
    pub mean: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TransportDiagnosticsDoc {
    pub mass_residual: Option<f64>,
    pub hull_excess: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub advective_cfl: Option<f64>,
    pub cell_peclet: Option<f64>,
    pub oscillation_risk: bool,
    pub linear_iterations: usize,
}

// ---------------------------------------------------------------------
// micro → micro.json
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct MicroDoc {
    pub schema: String,
    pub dim: usize,
    pub eps: String,
    pub alpha: String,
    pub layer_resolution: usize,
    pub grid_cells: Vec<usize>,
    pub fluid_cells: usize,
    pub stokes: MicroStokesDoc,
    pub transport: Option<MicroTransportDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MicroStokesDoc {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub divergence_linf: f64,
    pub momentum_residual: f64,
    pub velocity_l2: f64,
    pub pressure_l2: f64,
    /// Fixed-order mean of the vertical cut fluxes.
    pub cut_flux_mean: f64,
    /// Largest absolute deviation of a cut flux from the mean.
    pub cut_flux_variation: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MicroTransportDoc {
    pub dt: f64,
    pub steps: usize,
    pub time_scheme: String,
    pub advection: String,
    pub lateral: String,
    pub advect_coeff: f64,
    pub diff_horizontal: f64,
    pub diff_vertical: f64,
    pub final_state: FieldSummaryDoc,
    pub mass_residual: Option<f64>,
    pub bound_excess: f64,
    pub linear_iterations: usize,
}

// ---------------------------------------------------------------------
// converge → converge.json
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct ConvergeDoc {
    pub schema: String,
    pub dim: usize,
    pub inclusion: String,
    pub resolution: usize,
    pub alpha: String,
    pub case: Option<String>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub diffusivity: f64,
    pub expected: ExpectedSlopesDoc,
    pub velocity_fit: FitDoc,
    pub gradient_fit: FitDoc,
    pub pressure_fit: FitDoc,
    pub records: Vec<SweepRecordDoc>,
    pub permeability: TensorDoc,
    pub effective_diffusion: Option<EffectiveSummaryDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExpectedSlopesDoc {
    pub velocity: f64,
    pub velocity_gradient: f64,
    pub pressure: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitDoc {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepRecordDoc {
    pub eps: String,
    pub eps_value: f64,
    pub velocity_l2: f64,
    pub velocity_grad_l2: f64,
    pub pressure_l2: f64,
    pub two_scale_velocity: f64,
    pub two_scale_pressure: f64,
    pub two_scale_concentration: Option<f64>,
    pub flux_ratio: Option<f64>,
    pub stokes_outer: usize,
    pub stokes_inner: usize,
    pub micro_divergence_linf: f64,
    pub micro_mass_residual: Option<f64>,
    pub micro_bound_excess: Option<f64>,
    pub macro_mass_residual: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorDoc {
    pub dim: usize,
    pub entries: Vec<Vec<f64>>,
    pub formula_discrepancy: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EffectiveSummaryDoc {
    pub case: String,
    pub porosity: f64,
    pub vertical: f64,
    pub entries: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------
// report → report.json
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportDocOut {
    pub schema: String,
    pub epsilons: Vec<String>,
    pub expected: ExpectedSlopesDoc,
    pub velocity_fit: FitDoc,
    pub gradient_fit: FitDoc,
    pub pressure_fit: FitDoc,
    pub checks: Vec<CheckDoc>,
    pub passed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckDoc {
    pub name: String,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub passed: bool,
}

// ---------------------------------------------------------------------
// manifest.json
// ---------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub schema: String,
    pub tool: ToolDoc,
    pub threads: usize,
    /// The resolved configuration as JSON (the `ConfigDoc` mirror).
    pub config: serde_json::Value,
    pub stages: Vec<StageRecordDoc>,
    /// Every emitted file with its checksum, sorted by path.
    pub files: Vec<FileRecordDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ToolDoc {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecordDoc {
    pub name: String,
    /// `"ok"`, `"failed"`, or `"skipped"`.
    pub status: String,
    /// Whether the artifacts were reused from the cache.
    pub cached: bool,
    /// Wall-clock stage duration. Timings live only here, never in stage
    /// artifacts, so reports stay byte-identical across reruns.
    pub duration_ms: u64,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FileRecordDoc {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}
