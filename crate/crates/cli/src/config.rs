//! Run configuration: the TOML schema, documented defaults, and aggregated
//! validation.
//!
//! A configuration file describes one run of the pipeline. Scale parameters
//! (`alpha`, `epsilons`) are written as exact rational strings (`"1/2"`,
//! `"1/16"`) so admissibility is decided without floating-point ambiguity;
//! geometry coordinates and physical coefficients are plain floats.
//!
//! Validation never stops at the first problem: every violation in the file
//! is collected and reported together.

use std::fs;
use std::path::Path;

use permlayer_core::cell_diffusion::DiffusionCase;
use permlayer_core::convergence;
use permlayer_core::geometry::{self, InclusionSpec};
use permlayer_core::macro_transport::{AdvectionScheme, TimeScheme};
use permlayer_core::micro_reference::LateralBc;
use permlayer_core::{frac_to_f64, Frac};
use serde::{Deserialize, Serialize};

/// Everything that can go wrong before the pipeline starts.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    /// Every semantic violation found in the file, not just the first.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

// ---------------------------------------------------------------------
// Raw TOML schema. Every field has a documented default, so the empty
// file is a valid (flow-only) configuration.
// ---------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfig {
    pub geometry: RawGeometry,
    pub scales: RawScales,
    pub physics: RawPhysics,
    pub solver: RawSolver,
    pub output: RawOutput,
    pub report: RawReport,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawGeometry {
    /// Spatial dimension `n` (2 or 3).
    pub dim: usize,
    /// `"ball"`, `"box"`, `"cylinder-ball"`, `"cylinder-box"`, or `"none"`.
    pub inclusion: String,
    /// Inclusion center; length `n` (`n − 1` for cylinders). Default: cell
    /// center.
    pub center: Option<Vec<f64>>,
    /// Ball/cylinder-ball radius. Default `0.25`.
    pub radius: Option<f64>,
    /// Box/cylinder-box half-widths; length `n` (`n − 1` for cylinders).
    /// Default `0.25` per axis.
    pub half_widths: Option<Vec<f64>>,
    /// Unit-cell resolution for the `cell` and `effective` stages.
    pub cell_resolution: usize,
    /// Cells per unit length for the layer stages (`darcy`, `transport`,
    /// `micro`, `converge`).
    pub layer_resolution: usize,
}

impl Default for RawGeometry {
    fn default() -> Self {
        RawGeometry {
            dim: 2,
            inclusion: "ball".to_string(),
            center: None,
            radius: None,
            half_widths: None,
            cell_resolution: 32,
            layer_resolution: 8,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawScales {
    /// Thickness exponent `α ∈ (0, 1)` as a rational string.
    pub alpha: String,
    /// Strictly decreasing admissible period list, rational strings.
    pub epsilons: Vec<String>,
    /// Horizontal extent: one `[lo, hi]` integer interval per horizontal
    /// axis.
    pub sigma: Vec<[i64; 2]>,
}

impl Default for RawScales {
    fn default() -> Self {
        RawScales {
            alpha: "1/2".to_string(),
            epsilons: vec!["1/4".to_string(), "1/16".to_string()],
            sigma: vec![[0, 1]],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawPhysics {
    /// Molecular diffusivity `D > 0`.
    pub diffusivity: f64,
    /// Transport scaling regime: `"slow"` (horizontal diffusion damped
    /// with the thickness) or `"fast"` (horizontal diffusion amplified).
    pub case: String,
    /// Transport time step; together with `t_end` it enables the
    /// transport stages.
    pub dt: Option<f64>,
    /// Transport final time; must be an integer number of steps.
    pub t_end: Option<f64>,
    pub data: RawData,
}

impl Default for RawPhysics {
    fn default() -> Self {
        RawPhysics {
            diffusivity: 1.0,
            case: "slow".to_string(),
            dt: None,
            t_end: None,
            data: RawData::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawData {
    pub force: RawRecipe,
    pub boundary_pressure: RawRecipe,
    pub volume_source: RawRecipe,
}

/// One data-recipe selector: an identifier plus its parameters. Which
/// parameters apply depends on the slot the recipe sits in.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawRecipe {
    /// `"standard"` (the fixed closed forms the convergence study also
    /// uses), `"zero"`, or `"constant"`.
    pub recipe: String,
    /// Constant volume-source value.
    pub value: Option<f64>,
    /// Constant vertical force component.
    pub vertical: Option<f64>,
    /// Constant bottom-plate pressure.
    pub bottom: Option<f64>,
    /// Constant top-plate pressure.
    pub top: Option<f64>,
}

impl Default for RawRecipe {
    fn default() -> Self {
        RawRecipe {
            recipe: "standard".to_string(),
            value: None,
            vertical: None,
            bottom: None,
            top: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSolver {
    /// Cell-problem solver tolerance (Stokes outer loop and diffusion
    /// correctors).
    pub cell_tolerance: f64,
    /// Microscopic Stokes solver tolerance.
    pub micro_tolerance: f64,
    /// Transport linear-solver tolerance.
    pub transport_tolerance: f64,
    /// Outer (pressure-Schur) iteration cap for Stokes solves.
    pub max_outer: usize,
    /// Inner (velocity) iteration cap for Stokes solves.
    pub max_inner: usize,
    /// Iteration cap for symmetric positive-definite solves.
    pub max_linear: usize,
    /// `"implicit-euler"` or `"crank-nicolson"`.
    pub time_scheme: String,
    /// `"upwind"` or `"central"`.
    pub advection: String,
    /// Lateral transport boundary treatment: `"periodic"` or `"no-flux"`.
    /// Default follows the case: periodic for `fast`, no-flux for `slow`.
    pub lateral: Option<String>,
}

impl Default for RawSolver {
    fn default() -> Self {
        RawSolver {
            cell_tolerance: 1e-10,
            micro_tolerance: 1e-8,
            transport_tolerance: 1e-10,
            max_outer: 2000,
            max_inner: 400_000,
            max_linear: 200_000,
            time_scheme: "implicit-euler".to_string(),
            advection: "upwind".to_string(),
            lateral: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawOutput {
    /// Dump final fields next to the stage artifacts.
    pub fields: bool,
    /// `"csv"` or `"binary"` (flat little-endian f64 with a JSON sidecar).
    pub field_format: String,
    /// Macroscopic transport snapshot times; each must be a whole number
    /// of steps in `(0, t_end]`.
    pub snapshot_times: Vec<f64>,
}

impl Default for RawOutput {
    fn default() -> Self {
        RawOutput {
            fields: false,
            field_format: "csv".to_string(),
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawReport {
    /// Slack subtracted from each expected slope before comparing.
    pub slope_margin: f64,
    /// Minimum coefficient of determination for each log–log fit.
    pub min_r_squared: f64,
    /// Cap on the final two-scale pressure and concentration errors.
    pub max_final_error: f64,
    /// Whether failed report checks drive a nonzero exit code.
    pub enforce: bool,
}

impl Default for RawReport {
    fn default() -> Self {
        RawReport {
            slope_margin: 0.3,
            min_r_squared: 0.95,
            max_final_error: 0.25,
            enforce: true,
        }
    }
}

// ---------------------------------------------------------------------
// Resolved configuration.
// ---------------------------------------------------------------------

/// A validated run configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub dim: usize,
    pub inclusion: InclusionSpec,
    pub inclusion_label: String,
    pub cell_resolution: usize,
    pub layer_resolution: usize,
    pub alpha: Frac,
    pub epsilons: Vec<Frac>,
    pub sigma: Vec<(i64, i64)>,
    pub diffusivity: f64,
    pub case: DiffusionCase,
    pub transport: Option<TransportSettings>,
    pub lateral: LateralBc,
    pub data: DataRecipes,
    pub solver: SolverSettings,
    pub output: OutputSettings,
    pub report: ReportThresholds,
}

#[derive(Debug, Clone, Copy)]
pub struct TransportSettings {
    pub dt: f64,
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct DataRecipes {
    pub force: ForceRecipe,
    pub pressure: PressureRecipe,
    pub source: SourceRecipe,
}

/// Volume force recipe, evaluated in macroscopic coordinates
/// `(x̄, ζ)` with `ζ ∈ [−1, 1]`.
#[derive(Debug, Clone, Copy)]
pub enum ForceRecipe {
    /// The fixed closed forms shared with the convergence study.
    Standard,
    Zero,
    /// Constant vertical component, zero horizontal components.
    Constant { vertical: f64 },
}

impl ForceRecipe {
    pub fn eval(&self, comp: usize, dim: usize, x: &[f64]) -> f64 {
        match self {
            ForceRecipe::Standard => convergence::force_component(comp, dim, x),
            ForceRecipe::Zero => 0.0,
            ForceRecipe::Constant { vertical } => {
                if comp == dim - 1 {
                    *vertical
                } else {
                    0.0
                }
            }
        }
    }
}

/// Plate boundary-pressure recipe, evaluated in macroscopic coordinates;
/// the plates sit at `ζ = ∓1`.
#[derive(Debug, Clone, Copy)]
pub enum PressureRecipe {
    Standard,
    Zero,
    /// Fixed plate values, interpolated linearly across the layer.
    Constant { bottom: f64, top: f64 },
}

impl PressureRecipe {
    pub fn eval(&self, dim: usize, x: &[f64]) -> f64 {
        match self {
            PressureRecipe::Standard => convergence::boundary_pressure(dim, x),
            PressureRecipe::Zero => 0.0,
            PressureRecipe::Constant { bottom, top } => {
                let zeta = x[dim - 1];
                0.5 * (top + bottom) + 0.5 * (top - bottom) * zeta
            }
        }
    }
}

/// Volume-source recipe for the transport stages, macroscopic coordinates.
#[derive(Debug, Clone, Copy)]
pub enum SourceRecipe {
    Standard,
    Zero,
    Constant { value: f64 },
}

impl SourceRecipe {
    pub fn eval(&self, dim: usize, x: &[f64]) -> f64 {
        match self {
            SourceRecipe::Standard => convergence::volume_source(dim, x),
            SourceRecipe::Zero => 0.0,
            SourceRecipe::Constant { value } => *value,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub cell_tolerance: f64,
    pub micro_tolerance: f64,
    pub transport_tolerance: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_linear: usize,
    pub time_scheme: TimeScheme,
    pub advection: AdvectionScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldFormat {
    Csv,
    Binary,
}

#[derive(Debug, Clone)]
pub struct OutputSettings {
    pub fields: bool,
    pub field_format: FieldFormat,
    pub snapshot_times: Vec<f64>,
    /// `snapshot_times` resolved to step indices, ascending.
    pub snapshot_steps: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct ReportThresholds {
    pub slope_margin: f64,
    pub min_r_squared: f64,
    pub max_final_error: f64,
    pub enforce: bool,
}

// ---------------------------------------------------------------------
// Loading and validation.
// ---------------------------------------------------------------------

/// Reads, parses, and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ResolvedConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<ResolvedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text)?;
    resolve(&raw).map_err(ConfigError::Validation)
}

fn parse_frac(field: &str, text: &str, bad: &mut Vec<String>) -> Option<Frac> {
    match text.parse::<Frac>() {
        Ok(f) => Some(f),
        Err(_) => {
            bad.push(format!(
                "{field}: cannot parse {text:?} as a rational number (write e.g. \"1/2\")"
            ));
            None
        }
    }
}

fn resolve_recipe_force(raw: &RawRecipe, bad: &mut Vec<String>) -> ForceRecipe {
    let field = "physics.data.force";
    for (name, set) in [("value", raw.value.is_some()), ("bottom", raw.bottom.is_some()), ("top", raw.top.is_some())] {
        if set {
            bad.push(format!("{field}.{name}: not a force parameter"));
        }
    }
    match raw.recipe.as_str() {
        "standard" => {
            if raw.vertical.is_some() {
                bad.push(format!("{field}.vertical: only the \"constant\" recipe takes it"));
            }
            ForceRecipe::Standard
        }
        "zero" => ForceRecipe::Zero,
        "constant" => ForceRecipe::Constant {
            vertical: raw.vertical.unwrap_or(1.0),
        },
        other => {
            bad.push(format!(
                "{field}.recipe: unknown recipe {other:?} (expected \"standard\", \"zero\", or \"constant\")"
            ));
            ForceRecipe::Zero
        }
    }
}

fn resolve_recipe_pressure(raw: &RawRecipe, bad: &mut Vec<String>) -> PressureRecipe {
    let field = "physics.data.boundary_pressure";
    for (name, set) in [("value", raw.value.is_some()), ("vertical", raw.vertical.is_some())] {
        if set {
            bad.push(format!("{field}.{name}: not a boundary-pressure parameter"));
        }
    }
    match raw.recipe.as_str() {
        "standard" => {
            if raw.bottom.is_some() || raw.top.is_some() {
                bad.push(format!("{field}: only the \"constant\" recipe takes plate values"));
            }
            PressureRecipe::Standard
        }
        "zero" => PressureRecipe::Zero,
        "constant" => PressureRecipe::Constant {
            bottom: raw.bottom.unwrap_or(1.0),
            top: raw.top.unwrap_or(0.0),
        },
        other => {
            bad.push(format!(
                "{field}.recipe: unknown recipe {other:?} (expected \"standard\", \"zero\", or \"constant\")"
            ));
            PressureRecipe::Zero
        }
    }
}

fn resolve_recipe_source(raw: &RawRecipe, bad: &mut Vec<String>) -> SourceRecipe {
    let field = "physics.data.volume_source";
    for (name, set) in [
        ("vertical", raw.vertical.is_some()),
        ("bottom", raw.bottom.is_some()),
        ("top", raw.top.is_some()),
    ] {
        if set {
            bad.push(format!("{field}.{name}: not a volume-source parameter"));
        }
    }
    match raw.recipe.as_str() {
        "standard" => {
            if raw.value.is_some() {
                bad.push(format!("{field}.value: only the \"constant\" recipe takes it"));
            }
            SourceRecipe::Standard
        }
        "zero" => SourceRecipe::Zero,
        "constant" => SourceRecipe::Constant {
            value: raw.value.unwrap_or(1.0),
        },
        other => {
            bad.push(format!(
                "{field}.recipe: unknown recipe {other:?} (expected \"standard\", \"zero\", or \"constant\")"
            ));
            SourceRecipe::Zero
        }
    }
}

/// Validates a parsed configuration, collecting every violation.
pub fn resolve(raw: &RawConfig) -> Result<ResolvedConfig, Vec<String>> {
    let mut bad: Vec<String> = Vec::new();

    // Geometry.
    let dim = raw.geometry.dim;
    if !(2..=3).contains(&dim) {
        bad.push(format!(
            "geometry.dim: {dim} is unsupported (the pipeline runs in dimension 2 or 3)"
        ));
    }
    let dim_ok = (2..=3).contains(&dim);
    if raw.geometry.cell_resolution < 2 {
        bad.push(format!(
            "geometry.cell_resolution: {} is too coarse (need at least 2 cells per axis)",
            raw.geometry.cell_resolution
        ));
    }
    if raw.geometry.layer_resolution < 1 {
        bad.push("geometry.layer_resolution: must be at least 1".to_string());
    }

    let inclusion_label = raw.geometry.inclusion.clone();
    let horizontal_len = dim.saturating_sub(1);
    let center_of = |len: usize| -> Vec<f64> { vec![0.5; len] };
    let (inclusion, expects_radius, expects_half_widths, center_len) =
        match raw.geometry.inclusion.as_str() {
            "none" => (InclusionSpec::None, false, false, 0),
            "ball" => (
                InclusionSpec::Ball {
                    center: raw.geometry.center.clone().unwrap_or_else(|| center_of(dim)),
                    radius: raw.geometry.radius.unwrap_or(0.25),
                },
                true,
                false,
                dim,
            ),
            "box" => (
                InclusionSpec::Box {
                    center: raw.geometry.center.clone().unwrap_or_else(|| center_of(dim)),
                    half_widths: raw
                        .geometry
                        .half_widths
                        .clone()
                        .unwrap_or_else(|| vec![0.25; dim]),
                },
                false,
                true,
                dim,
            ),
            "cylinder-ball" => (
                InclusionSpec::CylinderBall {
                    center: raw
                        .geometry
                        .center
                        .clone()
                        .unwrap_or_else(|| center_of(horizontal_len)),
                    radius: raw.geometry.radius.unwrap_or(0.25),
                },
                true,
                false,
                horizontal_len,
            ),
            "cylinder-box" => (
                InclusionSpec::CylinderBox {
                    center: raw
                        .geometry
                        .center
                        .clone()
                        .unwrap_or_else(|| center_of(horizontal_len)),
                    half_widths: raw
                        .geometry
                        .half_widths
                        .clone()
                        .unwrap_or_else(|| vec![0.25; horizontal_len]),
                },
                false,
                true,
                horizontal_len,
            ),
            other => {
                bad.push(format!(
                    "geometry.inclusion: unknown shape {other:?} (expected \"none\", \"ball\", \"box\", \"cylinder-ball\", or \"cylinder-box\")"
                ));
                (InclusionSpec::None, false, false, 0)
            }
        };
    if !expects_radius && raw.geometry.radius.is_some() {
        bad.push(format!(
            "geometry.radius: {inclusion_label:?} inclusions take no radius"
        ));
    }
    if !expects_half_widths && raw.geometry.half_widths.is_some() {
        bad.push(format!(
            "geometry.half_widths: {inclusion_label:?} inclusions take no half-widths"
        ));
    }
    if center_len == 0 && raw.geometry.center.is_some() {
        bad.push(format!(
            "geometry.center: {inclusion_label:?} inclusions take no center"
        ));
    }
    if let Some(c) = &raw.geometry.center {
        if center_len > 0 && c.len() != center_len {
            bad.push(format!(
                "geometry.center: expected {center_len} coordinates for a {inclusion_label:?} inclusion in dimension {dim}, got {}",
                c.len()
            ));
        }
    }
    // Probe the rasterizer at both resolutions actually used, so shape
    // problems (outside the cell, disconnected fluid) surface here as
    // validation errors rather than later as stage failures.
    if dim_ok && bad.is_empty() {
        for m in [raw.geometry.cell_resolution, raw.geometry.layer_resolution] {
            if let Err(e) = geometry::build_unit_cell(&inclusion, dim, m) {
                bad.push(format!("geometry: invalid at resolution {m}: {e}"));
                break;
            }
        }
    }

    // Scales.
    let alpha = parse_frac("scales.alpha", &raw.scales.alpha, &mut bad).unwrap_or_else(|| Frac::new(1, 2));
    if raw.scales.epsilons.is_empty() {
        bad.push("scales.epsilons: at least one period is required".to_string());
    }
    let mut epsilons: Vec<Frac> = Vec::with_capacity(raw.scales.epsilons.len());
    for (i, text) in raw.scales.epsilons.iter().enumerate() {
        let field = format!("scales.epsilons[{i}]");
        if let Some(eps) = parse_frac(&field, text, &mut bad) {
            match geometry::check_admissible_scales(eps, alpha) {
                Ok(_) => epsilons.push(eps),
                Err(e) => bad.push(format!("{field}: {text:?} is not admissible: {e}")),
            }
        }
    }
    for w in epsilons.windows(2) {
        if frac_to_f64(w[1]) >= frac_to_f64(w[0]) {
            bad.push("scales.epsilons: the list must be strictly decreasing".to_string());
            break;
        }
    }
    if dim_ok && raw.scales.sigma.len() != dim - 1 {
        bad.push(format!(
            "scales.sigma: expected {} horizontal interval(s) for dimension {dim}, got {}",
            dim - 1,
            raw.scales.sigma.len()
        ));
    }
    let mut sigma: Vec<(i64, i64)> = Vec::with_capacity(raw.scales.sigma.len());
    for (i, iv) in raw.scales.sigma.iter().enumerate() {
        if iv[0] >= iv[1] {
            bad.push(format!(
                "scales.sigma[{i}]: [{}, {}] is empty (need lo < hi)",
                iv[0], iv[1]
            ));
        }
        sigma.push((iv[0], iv[1]));
    }

    // Physics.
    if !(raw.physics.diffusivity > 0.0) {
        bad.push(format!(
            "physics.diffusivity: {} must be positive",
            raw.physics.diffusivity
        ));
    }
    let case = match raw.physics.case.as_str() {
        "slow" => DiffusionCase::SlowHorizontal,
        "fast" => DiffusionCase::FastHorizontal,
        other => {
            bad.push(format!(
                "physics.case: unknown case {other:?} (expected \"slow\" or \"fast\")"
            ));
            DiffusionCase::SlowHorizontal
        }
    };
    let transport = match (raw.physics.dt, raw.physics.t_end) {
        (None, None) => None,
        (Some(_), None) => {
            bad.push("physics.t_end: required when dt is set".to_string());
            None
        }
        (None, Some(_)) => {
            bad.push("physics.dt: required when t_end is set".to_string());
            None
        }
        (Some(dt), Some(t_end)) => {
            let mut ok = true;
            if !(dt > 0.0) {
                bad.push(format!("physics.dt: {dt} must be positive"));
                ok = false;
            }
            if !(t_end > 0.0) {
                bad.push(format!("physics.t_end: {t_end} must be positive"));
                ok = false;
            }
            if ok {
                let steps = (t_end / dt).round();
                if steps < 1.0 || ((steps * dt - t_end) / t_end).abs() > 1e-9 {
                    bad.push(format!(
                        "physics.t_end: {t_end} is not a whole number of steps of dt = {dt}"
                    ));
                    None
                } else {
                    Some(TransportSettings {
                        dt,
                        t_end,
                        steps: steps as usize,
                    })
                }
            } else {
                None
            }
        }
    };
    if transport.is_some() && dim > 4 {
        bad.push(format!(
            "physics: the transport model is defined for dimension ≤ 4, got {dim}"
        ));
    }
    let data = DataRecipes {
        force: resolve_recipe_force(&raw.physics.data.force, &mut bad),
        pressure: resolve_recipe_pressure(&raw.physics.data.boundary_pressure, &mut bad),
        source: resolve_recipe_source(&raw.physics.data.volume_source, &mut bad),
    };

    // Solver.
    for (name, v) in [
        ("solver.cell_tolerance", raw.solver.cell_tolerance),
        ("solver.micro_tolerance", raw.solver.micro_tolerance),
        ("solver.transport_tolerance", raw.solver.transport_tolerance),
    ] {
        if !(v > 0.0) {
            bad.push(format!("{name}: {v} must be positive"));
        }
    }
    for (name, v) in [
        ("solver.max_outer", raw.solver.max_outer),
        ("solver.max_inner", raw.solver.max_inner),
        ("solver.max_linear", raw.solver.max_linear),
    ] {
        if v == 0 {
            bad.push(format!("{name}: must be at least 1"));
        }
    }
    let time_scheme = match raw.solver.time_scheme.as_str() {
        "implicit-euler" => TimeScheme::ImplicitEuler,
        "crank-nicolson" => TimeScheme::CrankNicolson,
        other => {
            bad.push(format!(
                "solver.time_scheme: unknown scheme {other:?} (expected \"implicit-euler\" or \"crank-nicolson\")"
            ));
            TimeScheme::ImplicitEuler
        }
    };
    let advection = match raw.solver.advection.as_str() {
        "upwind" => AdvectionScheme::Upwind,
        "central" => AdvectionScheme::Central,
        other => {
            bad.push(format!(
                "solver.advection: unknown scheme {other:?} (expected \"upwind\" or \"central\")"
            ));
            AdvectionScheme::Upwind
        }
    };
    let lateral = match raw.solver.lateral.as_deref() {
        None => match case {
            DiffusionCase::FastHorizontal => LateralBc::Periodic,
            DiffusionCase::SlowHorizontal => LateralBc::NoFlux,
        },
        Some("periodic") => LateralBc::Periodic,
        Some("no-flux") => {
            if case == DiffusionCase::FastHorizontal {
                bad.push(
                    "solver.lateral: the fast-horizontal case needs laterally periodic \
                     boundaries (its limit model diffuses horizontally across the whole \
                     extent); \"no-flux\" is only available for the slow case"
                        .to_string(),
                );
            }
            LateralBc::NoFlux
        }
        Some(other) => {
            bad.push(format!(
                "solver.lateral: unknown treatment {other:?} (expected \"periodic\" or \"no-flux\")"
            ));
            LateralBc::Periodic
        }
    };

    // Output.
    let field_format = match raw.output.field_format.as_str() {
        "csv" => FieldFormat::Csv,
        "binary" => FieldFormat::Binary,
        other => {
            bad.push(format!(
                "output.field_format: unknown format {other:?} (expected \"csv\" or \"binary\")"
            ));
            FieldFormat::Csv
        }
    };
    let mut snapshot_steps: Vec<usize> = Vec::new();
    if !raw.output.snapshot_times.is_empty() {
        match &transport {
            None => bad.push(
                "output.snapshot_times: set, but transport is disabled (physics.dt and physics.t_end are unset)"
                    .to_string(),
            ),
            Some(ts) => {
                for (i, &t) in raw.output.snapshot_times.iter().enumerate() {
                    let field = format!("output.snapshot_times[{i}]");
                    if !(t > 0.0) || t > ts.t_end * (1.0 + 1e-12) {
                        bad.push(format!("{field}: {t} is outside (0, t_end]"));
                        continue;
                    }
                    let step = (t / ts.dt).round();
                    if ((step * ts.dt - t) / ts.t_end).abs() > 1e-9 {
                        bad.push(format!(
                            "{field}: {t} is not a whole number of steps of dt = {}",
                            ts.dt
                        ));
                    } else {
                        snapshot_steps.push(step as usize);
                    }
                }
                snapshot_steps.sort_unstable();
                snapshot_steps.dedup();
            }
        }
    }

    // Report thresholds.
    if !(raw.report.slope_margin >= 0.0) {
        bad.push(format!(
            "report.slope_margin: {} must be nonnegative",
            raw.report.slope_margin
        ));
    }
    if !(0.0..=1.0).contains(&raw.report.min_r_squared) {
        bad.push(format!(
            "report.min_r_squared: {} must lie in [0, 1]",
            raw.report.min_r_squared
        ));
    }
    if !(raw.report.max_final_error > 0.0) {
        bad.push(format!(
            "report.max_final_error: {} must be positive",
            raw.report.max_final_error
        ));
    }

    if !bad.is_empty() {
        return Err(bad);
    }
    Ok(ResolvedConfig {
        dim,
        inclusion,
        inclusion_label,
        cell_resolution: raw.geometry.cell_resolution,
        layer_resolution: raw.geometry.layer_resolution,
        alpha,
        epsilons,
        sigma,
        diffusivity: raw.physics.diffusivity,
        case,
        transport,
        lateral,
        data,
        solver: SolverSettings {
            cell_tolerance: raw.solver.cell_tolerance,
            micro_tolerance: raw.solver.micro_tolerance,
            transport_tolerance: raw.solver.transport_tolerance,
            max_outer: raw.solver.max_outer,
            max_inner: raw.solver.max_inner,
            max_linear: raw.solver.max_linear,
            time_scheme,
            advection,
        },
        output: OutputSettings {
            fields: raw.output.fields,
            field_format,
            snapshot_times: raw.output.snapshot_times.clone(),
            snapshot_steps,
        },
        report: ReportThresholds {
            slope_margin: raw.report.slope_margin,
            min_r_squared: raw.report.min_r_squared,
            max_final_error: raw.report.max_final_error,
            enforce: raw.report.enforce,
        },
    })
}

// ---------------------------------------------------------------------
// Serializable mirror (manifest `config` block and cache keys).
// ---------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct ConfigDoc {
    pub geometry: GeometryDoc,
    pub scales: ScalesDoc,
    pub physics: PhysicsDoc,
    pub solver: SolverDoc,
    pub output: OutputDoc,
    pub report: ReportDoc,
}

#[derive(Debug, Serialize)]
pub struct GeometryDoc {
    pub dim: usize,
    pub inclusion: String,
    pub center: Vec<f64>,
    pub radius: Option<f64>,
    pub half_widths: Option<Vec<f64>>,
    pub cell_resolution: usize,
    pub layer_resolution: usize,
}

#[derive(Debug, Serialize)]
pub struct ScalesDoc {
    pub alpha: String,
    pub epsilons: Vec<String>,
    pub sigma: Vec<[i64; 2]>,
}

#[derive(Debug, Serialize)]
pub struct PhysicsDoc {
    pub diffusivity: f64,
    pub case: String,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub steps: Option<usize>,
    pub force: String,
    pub boundary_pressure: String,
    pub volume_source: String,
}

#[derive(Debug, Serialize)]
pub struct SolverDoc {
    pub cell_tolerance: f64,
    pub micro_tolerance: f64,
    pub transport_tolerance: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_linear: usize,
    pub time_scheme: String,
    pub advection: String,
    pub lateral: String,
}

#[derive(Debug, Serialize)]
pub struct OutputDoc {
    pub fields: bool,
    pub field_format: String,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ReportDoc {
    pub slope_margin: f64,
    pub min_r_squared: f64,
    pub max_final_error: f64,
    pub enforce: bool,
}

/// Human- and machine-readable labels for the resolved pieces.
pub fn case_label(case: DiffusionCase) -> &'static str {
    match case {
        DiffusionCase::SlowHorizontal => "slow",
        DiffusionCase::FastHorizontal => "fast",
    }
}

pub fn scheme_label(s: TimeScheme) -> &'static str {
    match s {
        TimeScheme::ImplicitEuler => "implicit-euler",
        TimeScheme::CrankNicolson => "crank-nicolson",
    }
}

pub fn advection_label(a: AdvectionScheme) -> &'static str {
    match a {
        AdvectionScheme::Upwind => "upwind",
        AdvectionScheme::Central => "central",
    }
}

pub fn lateral_label(l: LateralBc) -> &'static str {
    match l {
        LateralBc::Periodic => "periodic",
        LateralBc::NoFlux => "no-flux",
    }
}

fn recipe_label_force(r: ForceRecipe) -> String {
    match r {
        ForceRecipe::Standard => "standard".to_string(),
        ForceRecipe::Zero => "zero".to_string(),
        ForceRecipe::Constant { vertical } => format!("constant(vertical={vertical})"),
    }
}

fn recipe_label_pressure(r: PressureRecipe) -> String {
    match r {
        PressureRecipe::Standard => "standard".to_string(),
        PressureRecipe::Zero => "zero".to_string(),
        PressureRecipe::Constant { bottom, top } => format!("constant(bottom={bottom}, top={top})"),
    }
}

fn recipe_label_source(r: SourceRecipe) -> String {
    match r {
        SourceRecipe::Standard => "standard".to_string(),
        SourceRecipe::Zero => "zero".to_string(),
        SourceRecipe::Constant { value } => format!("constant(value={value})"),
    }
}

impl ResolvedConfig {
    /// The serializable mirror recorded in the manifest and hashed into
    /// cache keys.
    pub fn document(&self) -> ConfigDoc {
        let (center, radius, half_widths) = match &self.inclusion {
            InclusionSpec::None => (Vec::new(), None, None),
            InclusionSpec::Ball { center, radius } => (center.clone(), Some(*radius), None),
            InclusionSpec::Box {
                center,
                half_widths,
            } => (center.clone(), None, Some(half_widths.clone())),
            InclusionSpec::CylinderBall { center, radius } => {
                (center.clone(), Some(*radius), None)
            }
            InclusionSpec::CylinderBox {
                center,
                half_widths,
            } => (center.clone(), None, Some(half_widths.clone())),
        };
        ConfigDoc {
            geometry: GeometryDoc {
                dim: self.dim,
                inclusion: self.inclusion_label.clone(),
                center,
                radius,
                half_widths,
                cell_resolution: self.cell_resolution,
                layer_resolution: self.layer_resolution,
            },
            scales: ScalesDoc {
                alpha: self.alpha.to_string(),
                epsilons: self.epsilons.iter().map(|e| e.to_string()).collect(),
                sigma: self.sigma.iter().map(|&(a, b)| [a, b]).collect(),
            },
            physics: PhysicsDoc {
                diffusivity: self.diffusivity,
                case: case_label(self.case).to_string(),
                dt: self.transport.map(|t| t.dt),
                t_end: self.transport.map(|t| t.t_end),
                steps: self.transport.map(|t| t.steps),
                force: recipe_label_force(self.data.force),
                boundary_pressure: recipe_label_pressure(self.data.pressure),
                volume_source: recipe_label_source(self.data.source),
            },
            solver: SolverDoc {
                cell_tolerance: self.solver.cell_tolerance,
                micro_tolerance: self.solver.micro_tolerance,
                transport_tolerance: self.solver.transport_tolerance,
                max_outer: self.solver.max_outer,
                max_inner: self.solver.max_inner,
                max_linear: self.solver.max_linear,
                time_scheme: scheme_label(self.solver.time_scheme).to_string(),
                advection: advection_label(self.solver.advection).to_string(),
                lateral: lateral_label(self.lateral).to_string(),
            },
            output: OutputDoc {
                fields: self.output.fields,
                field_format: match self.output.field_format {
                    FieldFormat::Csv => "csv".to_string(),
                    FieldFormat::Binary => "binary".to_string(),
                },
                snapshot_times: self.output.snapshot_times.clone(),
            },
            report: ReportDoc {
                slope_margin: self.report.slope_margin,
                min_r_squared: self.report.min_r_squared,
                max_final_error: self.report.max_final_error,
                enforce: self.report.enforce,
            },
        }
    }
}
