//! Named scenarios that turn model parameters into result tables.
//!
//! Every runner takes a plain serializable spec, evaluates independent
//! points on the current rayon pool and returns an [`ExperimentResult`]. A
//! point that fails to integrate leaves an empty cell and a
//! [`PointFailure`]; the rest of the sweep still runs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::dynamics::{evolve, evolve_piecewise, CavityRecorder, IntegrationConfig, IntegrationError, Recorder, Sample, Trajectory};
use crate::fitting::{
    classify_decay, decay_model_curve, fit_decay_rate, fit_linear, fit_power_law, interpolate_linear,
    DecayFitOptions, FitError,
};
use crate::hilbert::{basis_state, build_operators, LayoutError, OperatorSet, QubitLevel, SystemLayout};
use crate::linalg::ComplexMatrix;
use crate::measures::{dnm, loop_metrics, positive_increment_count, positive_increment_mass, MeasureError, MemristorRecorder};
use crate::model::{CavityDrive, LindbladEquation, MasterEquation, ModelError, ModelParams, QubitDrive};

/// Top-level population above which a Fock truncation warning is raised.
pub const TRUNCATION_WARNING: f64 = 1e-4;

/// Increments of `D_S` larger than this count as backflow events.
pub const INCREMENT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("unknown parameter {0:?}; expected one of {PARAMETER_NAMES:?}")]
    UnknownParameter(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Sweepable [`ModelParams`] fields.
pub const PARAMETER_NAMES: [&str; 9] = [
    "omega_r",
    "omega_q",
    "g",
    "gamma_r",
    "gamma_q",
    "qubit_drive.amplitude",
    "qubit_drive.frequency",
    "cavity_drive.amplitude",
    "cavity_drive.frequency",
];

/// Sets one named parameter, creating a drive with zero amplitude or
/// frequency when it is absent.
pub fn set_parameter(params: &mut ModelParams, name: &str, value: f64) -> Result<(), ExperimentError> {
    fn qubit(p: &mut ModelParams) -> &mut QubitDrive {
        p.qubit_drive.get_or_insert(QubitDrive {
            amplitude: 0.0,
            frequency: 0.0,
        })
    }
    fn cavity(p: &mut ModelParams) -> &mut CavityDrive {
        p.cavity_drive.get_or_insert(CavityDrive {
            amplitude: 0.0,
            frequency: 0.0,
            waveform: Default::default(),
        })
    }
    match name {
        "omega_r" => params.omega_r = value,
        "omega_q" => params.omega_q = value,
        "g" => params.g = value,
        "gamma_r" => params.gamma_r = value,
        "gamma_q" => params.gamma_q = value,
        "qubit_drive.amplitude" => qubit(params).amplitude = value,
        "qubit_drive.frequency" => qubit(params).frequency = value,
        "cavity_drive.amplitude" => cavity(params).amplitude = value,
        "cavity_drive.frequency" => cavity(params).frequency = value,
        other => return Err(ExperimentError::UnknownParameter(other.to_string())),
    }
    Ok(())
}

/// Sweep axis with `steps` evenly spaced values from `min` to `max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub parameter: String,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(parameter: &str, min: f64, max: f64, steps: usize) -> Self {
        Self {
            parameter: parameter.to_string(),
            min,
            max,
            steps,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !PARAMETER_NAMES.contains(&self.parameter.as_str()) {
            return Err(ExperimentError::UnknownParameter(self.parameter.clone()));
        }
        if self.steps < 2 {
            return Err(ExperimentError::InvalidSpec(format!(
                "axis {} needs at least 2 steps, got {}",
                self.parameter, self.steps
            )));
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(ExperimentError::InvalidSpec(format!(
                "axis {} has non-finite bounds",
                self.parameter
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / last
                }
            })
            .collect()
    }
}

/// Unit label of a parameter or column.
pub fn unit_of(parameter: &str) -> &'static str {
    match parameter {
        "t" | "t_end" => "1/omega_r",
        "omega_r" | "omega_q" | "g" | "gamma_r" | "gamma_q" | "qubit_drive.amplitude"
        | "qubit_drive.frequency" | "cavity_drive.amplitude" | "cavity_drive.frequency" | "A" | "B"
        | "mean_rate" | "min_rate" | "max_rate" | "mu_q" | "argmin_mu_q" | "argmax_mu_q"
        | "argmin_omega_q_drive" | "argmax_omega_q_drive" | "O" | "F" | "G" | "dN_dt" | "residual" => "omega_r",
        _ => "1",
    }
}

/// Cavity and qubits plus the initial product state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSpec {
    pub n_qubits: usize,
    pub fock_dim: usize,
    /// Restrict the basis to states reachable from the initial one when no
    /// cavity drive is present. Exact, since the remaining terms conserve
    /// or lower the excitation number.
    pub conserve_excitations: bool,
    pub initial_photons: usize,
    /// Qubit levels as a string of `e`/`g`; all ground when absent.
    pub initial_qubits: Option<String>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            n_qubits: 1,
            fock_dim: 2,
            conserve_excitations: true,
            initial_photons: 1,
            initial_qubits: None,
        }
    }
}

/// Operators and initial state for one parameter point.
pub struct Prepared {
    pub layout: SystemLayout,
    pub ops: OperatorSet,
    pub rho0: ComplexMatrix,
}

impl SystemSpec {
    fn levels(&self) -> Result<Vec<QubitLevel>, ExperimentError> {
        let levels = match &self.initial_qubits {
            Some(s) => QubitLevel::parse_levels(s)?,
            None => QubitLevel::all_ground(self.n_qubits),
        };
        if levels.len() != self.n_qubits {
            return Err(ExperimentError::InvalidSpec(format!(
                "initial_qubits lists {} levels for {} qubits",
                levels.len(),
                self.n_qubits
            )));
        }
        Ok(levels)
    }

    pub fn prepare(&self, params: &ModelParams) -> Result<Prepared, ExperimentError> {
        let levels = self.levels()?;
        let mut layout = SystemLayout::new(self.n_qubits, self.fock_dim)?;
        if self.conserve_excitations && params.cavity_drive.is_none() {
            let excited = levels.iter().filter(|l| **l == QubitLevel::Excited).count();
            layout = layout.with_excitation_cap(self.initial_photons + excited);
        }
        let ops = build_operators(&layout)?;
        let rho0 = basis_state(&layout, self.initial_photons, &levels)?;
        Ok(Prepared { layout, ops, rho0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            unit: unit_of(name).to_string(),
        }
    }
}

/// Rectangular table; `NaN` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| Column::new(c)).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// A grid point that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub coordinates: BTreeMap<String, f64>,
    pub message: String,
}

/// Plot suggested for a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlotSpec {
    Heatmap {
        name: String,
        table: String,
        x: String,
        y: String,
        z: String,
    },
    /// One polyline per `y` column, split into series by `group_by`.
    Lines {
        name: String,
        table: String,
        x: String,
        ys: Vec<String>,
        group_by: Option<String>,
        log_log: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub code_version: String,
    pub spec: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisValues {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub tag: String,
    pub axes: Vec<AxisValues>,
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub plots: Vec<PlotSpec>,
    pub failures: Vec<PointFailure>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentResult {
    fn new(tag: &str, spec: &impl Serialize) -> Self {
        Self {
            tag: tag.to_string(),
            axes: Vec::new(),
            tables: Vec::new(),
            summary: Map::new(),
            plots: Vec::new(),
            failures: Vec::new(),
            warnings: Vec::new(),
            provenance: Provenance {
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                spec: serde_json::to_value(spec).expect("specs serialize"),
            },
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// Collects validity warnings. Invalid points are reported later as
    /// point failures.
    fn warn_params(&mut self, params: &ModelParams) -> Result<(), ExperimentError> {
        for w in params.validate().unwrap_or_default() {
            if !self.warnings.contains(&w) {
                self.warnings.push(w);
            }
        }
        Ok(())
    }

    fn fail(&mut self, coordinates: &[(&str, f64)], error: &ExperimentError) {
        log::debug!("point {coordinates:?} failed: {error}");
        self.failures.push(PointFailure {
            coordinates: coordinates.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            message: error.to_string(),
        });
    }
}

/// Outcome of one DnM evolution.
#[derive(Debug, Clone)]
pub struct DnmRun {
    pub n_d: f64,
    pub final_distance: f64,
    pub t_end: f64,
    pub reached_steady: bool,
    pub trajectory: Trajectory,
}

/// Evolves `system` under `params` and computes the DnM of its cavity.
pub fn dnm_run(params: &ModelParams, system: &SystemSpec, config: &IntegrationConfig) -> Result<DnmRun, ExperimentError> {
    params.validate()?;
    let prep = system.prepare(params)?;
    let eq = LindbladEquation::new(params, &prep.ops);
    let mut recorder = CavityRecorder::new(&prep.ops);
    let trajectory = evolve(&prep.rho0, &eq, config, &mut recorder)?;
    let d = trajectory.series("D_S").expect("cavity recorder column");
    let r = dnm(&trajectory.times, d)?;
    Ok(DnmRun {
        n_d: r.n_d,
        final_distance: *d.last().expect("non-empty"),
        t_end: *trajectory.times.last().expect("non-empty"),
        reached_steady: r.reached_steady,
        trajectory,
    })
}

/// Sweep over one or two [`Axis`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub tag: String,
    pub axes: Vec<Axis>,
    pub params: ModelParams,
    pub system: SystemSpec,
    pub integration: IntegrationConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            tag: "dnm-map".into(),
            axes: vec![Axis::new("g", 0.0, 0.1, 21), Axis::new("omega_q", 0.5, 1.5, 21)],
            params: ModelParams::default(),
            system: SystemSpec::default(),
            integration: IntegrationConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(ExperimentError::InvalidSpec(format!(
                "a sweep takes 1 or 2 axes, got {}",
                self.axes.len()
            )));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if self.axes.len() == 2 && self.axes[0].parameter == self.axes[1].parameter {
            return Err(ExperimentError::InvalidSpec("both axes sweep the same parameter".into()));
        }
        self.integration.validate()?;
        Ok(())
    }

    /// All grid points, first axis slowest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut points: Vec<Vec<f64>> = vec![vec![]];
        for axis in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.values().into_iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    fn params_at(&self, point: &[f64]) -> Result<ModelParams, ExperimentError> {
        let mut p = self.params;
        for (axis, &v) in self.axes.iter().zip(point) {
            set_parameter(&mut p, &axis.parameter, v)?;
        }
        Ok(p)
    }
}

/// `N_D` on a grid of parameter values, one evolution per point.
pub fn run_dnm_map(spec: &SweepSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.validate()?;
    let mut result = ExperimentResult::new(&spec.tag, spec);
    let names: Vec<&str> = spec.axes.iter().map(|a| a.parameter.as_str()).collect();
    let points = spec.points();
    for p in &points {
        result.warn_params(&spec.params_at(p)?)?;
    }
    let outcomes: Vec<Result<DnmRun, ExperimentError>> = points
        .par_iter()
        .map(|p| dnm_run(&spec.params_at(p)?, &spec.system, &spec.integration))
        .collect();

    let mut columns = names.clone();
    columns.extend(["N_D", "final_D_S", "t_end"]);
    let mut table = Table::new("grid", &columns);
    let mut best: Option<(f64, usize)> = None;
    let mut unsteady = 0;
    for (i, (point, outcome)) in points.iter().zip(outcomes).enumerate() {
        let mut row = point.clone();
        match outcome {
            Ok(run) => {
                row.extend([run.n_d, run.final_distance, run.t_end]);
                if best.is_none_or(|(v, _)| run.n_d > v) {
                    best = Some((run.n_d, i));
                }
                unsteady += usize::from(!run.reached_steady);
            }
            Err(e) => {
                let coords: Vec<(&str, f64)> = names.iter().copied().zip(point.iter().copied()).collect();
                result.fail(&coords, &e);
                row.extend([f64::NAN; 3]);
            }
        }
        table.push(row);
    }
    if unsteady > 0 {
        result.warnings.push(format!(
            "{unsteady} grid points ended above the steady-state threshold; raise t_max"
        ));
    }
    if let Some((v, i)) = best {
        result.summary.insert("max_n_d".into(), json!(v));
        let at: Map<String, Value> = names.iter().zip(&points[i]).map(|(n, x)| (n.to_string(), json!(x))).collect();
        result.summary.insert("argmax".into(), Value::Object(at));
    }
    result.summary.insert("points".into(), json!(points.len()));
    result.summary.insert("failed_points".into(), json!(result.failures.len()));
    result.axes = spec
        .axes
        .iter()
        .map(|a| AxisValues {
            parameter: a.parameter.clone(),
            values: a.values(),
        })
        .collect();
    result.plots.push(if names.len() == 2 {
        PlotSpec::Heatmap {
            name: "n_d_map".into(),
            table: "grid".into(),
            x: names[1].into(),
            y: names[0].into(),
            z: "N_D".into(),
        }
    } else {
        PlotSpec::Lines {
            name: "n_d_curve".into(),
            table: "grid".into(),
            x: names[0].into(),
            ys: vec!["N_D".into()],
            group_by: None,
            log_log: false,
        }
    });
    result.tables.push(table);
    Ok(result)
}

/// `N_D` against the number of qubits, with a power-law fit per coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSpec {
    pub n_values: Vec<usize>,
    pub g_values: Vec<f64>,
    pub params: ModelParams,
    pub system: SystemSpec,
    pub integration: IntegrationConfig,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            n_values: (1..=5).collect(),
            g_values: vec![0.01, 0.05, 0.1],
            params: ModelParams::default(),
            system: SystemSpec::default(),
            integration: IntegrationConfig::default(),
        }
    }
}

pub fn run_scaling(spec: &ScalingSpec) -> Result<ExperimentResult, ExperimentError> {
    if spec.n_values.is_empty() || spec.g_values.is_empty() {
        return Err(ExperimentError::InvalidSpec("n_values and g_values must be non-empty".into()));
    }
    spec.integration.validate()?;
    let mut result = ExperimentResult::new("scaling", spec);
    let jobs: Vec<(f64, usize)> = spec
        .g_values
        .iter()
        .flat_map(|&g| spec.n_values.iter().map(move |&n| (g, n)))
        .collect();
    for &(g, _) in &jobs {
        result.warn_params(&ModelParams { g, ..spec.params })?;
    }
    let outcomes: Vec<Result<DnmRun, ExperimentError>> = jobs
        .par_iter()
        .map(|&(g, n)| {
            let system = SystemSpec {
                n_qubits: n,
                ..spec.system.clone()
            };
            dnm_run(&ModelParams { g, ..spec.params }, &system, &spec.integration)
        })
        .collect();

    let mut table = Table::new("scaling", &["g", "n", "N_D"]);
    let mut per_g: BTreeMap<usize, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for (gi, ((g, n), outcome)) in jobs.iter().zip(outcomes).enumerate().map(|(i, x)| (i / spec.n_values.len(), x)) {
        match outcome {
            Ok(run) => {
                table.push(vec![*g, *n as f64, run.n_d]);
                let e = per_g.entry(gi).or_default();
                e.0.push(*n);
                e.1.push(run.n_d);
            }
            Err(e) => {
                result.fail(&[("g", *g), ("n", *n as f64)], &e);
                table.push(vec![*g, *n as f64, f64::NAN]);
            }
        }
    }

    let mut fits = Table::new("fits", &["g", "k", "log_prefactor", "r_squared", "increasing"]);
    let mut fit_summaries = Vec::new();
    for (gi, &g) in spec.g_values.iter().enumerate() {
        let Some((ns, nds)) = per_g.get(&gi) else { continue };
        let increasing = nds.windows(2).all(|w| w[1] > w[0]);
        match fit_power_law(ns, nds) {
            Ok(fit) => {
                fits.push(vec![g, fit.k, fit.log_prefactor, fit.r_squared, f64::from(u8::from(increasing))]);
                fit_summaries.push(json!({
                    "g": g, "k": fit.k, "log_prefactor": fit.log_prefactor,
                    "r_squared": fit.r_squared, "degenerate": fit.degenerate,
                    "strictly_increasing": increasing,
                }));
            }
            Err(e) => {
                result.warnings.push(format!("power-law fit at g={g}: {e}"));
                fit_summaries.push(json!({ "g": g, "error": e.to_string(), "strictly_increasing": increasing }));
            }
        }
    }
    result.summary.insert("fits".into(), Value::Array(fit_summaries));
    result.summary.insert("failed_points".into(), json!(result.failures.len()));
    result.axes = vec![
        AxisValues {
            parameter: "g".into(),
            values: spec.g_values.clone(),
        },
        AxisValues {
            parameter: "n".into(),
            values: spec.n_values.iter().map(|&n| n as f64).collect(),
        },
    ];
    result.plots.push(PlotSpec::Lines {
        name: "n_d_vs_n".into(),
        table: "scaling".into(),
        x: "n".into(),
        ys: vec!["N_D".into()],
        group_by: Some("g".into()),
        log_log: false,
    });
    result.plots.push(PlotSpec::Lines {
        name: "n_d_vs_n_loglog".into(),
        table: "scaling".into(),
        x: "n".into(),
        ys: vec!["N_D".into()],
        group_by: Some("g".into()),
        log_log: true,
    });
    result.tables.push(table);
    result.tables.push(fits);
    Ok(result)
}

/// Minimum and maximum `N_D` over a qubit-driving grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtremalSpec {
    pub g_values: Vec<f64>,
    pub n_values: Vec<usize>,
    /// Drive frequency axis; its parameter is `qubit_drive.frequency`.
    pub frequency: Axis,
    /// Drive amplitude axis; its parameter is `qubit_drive.amplitude`.
    pub amplitude: Axis,
    pub params: ModelParams,
    pub system: SystemSpec,
    pub integration: IntegrationConfig,
    /// Lower end of the coupling range used for the linear fit of the maxima.
    pub linear_fit_from: f64,
}

impl Default for ExtremalSpec {
    fn default() -> Self {
        Self {
            g_values: (1..=10).map(|k| k as f64 * 0.01).collect(),
            n_values: vec![1],
            frequency: Axis::new("qubit_drive.frequency", 0.0, 1.0, 11),
            amplitude: Axis::new("qubit_drive.amplitude", 0.0, 1.0, 11),
            params: ModelParams::default(),
            system: SystemSpec::default(),
            integration: IntegrationConfig::default(),
            linear_fit_from: 0.03,
        }
    }
}

pub fn run_extremal_dnm(spec: &ExtremalSpec) -> Result<ExperimentResult, ExperimentError> {
    spec.frequency.validate()?;
    spec.amplitude.validate()?;
    if spec.frequency.parameter != "qubit_drive.frequency" || spec.amplitude.parameter != "qubit_drive.amplitude" {
        return Err(ExperimentError::InvalidSpec(
            "extremal axes must sweep qubit_drive.frequency and qubit_drive.amplitude".into(),
        ));
    }
    if spec.g_values.is_empty() || spec.n_values.is_empty() {
        return Err(ExperimentError::InvalidSpec("g_values and n_values must be non-empty".into()));
    }
    spec.integration.validate()?;
    let mut result = ExperimentResult::new("extremal", spec);
    let mus = spec.frequency.values();
    let omegas = spec.amplitude.values();
    // (g, n, (frequency, amplitude)); index 0 of each block is the undriven
    // reference.
    type Job = (f64, usize, Option<(f64, f64)>);
    let mut jobs: Vec<Job> = Vec::new();
    for &g in &spec.g_values {
        for &n in &spec.n_values {
            jobs.push((g, n, None));
            for &mu in &mus {
                for &om in &omegas {
                    jobs.push((g, n, Some((mu, om))));
                }
            }
        }
    }
    let block = 1 + mus.len() * omegas.len();
    let params_for = |g: f64, drive: Option<(f64, f64)>| ModelParams {
        g,
        qubit_drive: drive.map(|(mu, om)| QubitDrive {
            amplitude: om,
            frequency: mu,
        }),
        ..spec.params
    };
    for &g in &spec.g_values {
        result.warn_params(&params_for(g, None))?;
    }
    let outcomes: Vec<Result<f64, ExperimentError>> = jobs
        .par_iter()
        .map(|&(g, n, drive)| {
            let system = SystemSpec {
                n_qubits: n,
                ..spec.system.clone()
            };
            Ok(dnm_run(&params_for(g, drive), &system, &spec.integration)?.n_d)
        })
        .collect();

    let mut table = Table::new(
        "extremal",
        &["g", "n", "undriven_N_D", "min_N_D", "argmin_mu_q", "argmin_omega_q_drive", "max_N_D", "argmax_mu_q", "argmax_omega_q_drive"],
    );
    let mut grid = Table::new("grid", &["g", "n", "qubit_drive.frequency", "qubit_drive.amplitude", "N_D"]);
    let mut records = Vec::new();
    for (chunk_jobs, chunk) in jobs.chunks(block).zip(outcomes.chunks(block)) {
        let (g, n, _) = chunk_jobs[0];
        let mut min: Option<(f64, f64, f64)> = None;
        let mut max: Option<(f64, f64, f64)> = None;
        let undriven = match &chunk[0] {
            Ok(v) => *v,
            Err(e) => {
                result.fail(&[("g", g), ("n", n as f64)], e);
                f64::NAN
            }
        };
        for (&(_, _, drive), outcome) in chunk_jobs[1..].iter().zip(&chunk[1..]) {
            let (mu, om) = drive.expect("driven point");
            match outcome {
                Ok(v) => {
                    grid.push(vec![g, n as f64, mu, om, *v]);
                    if min.is_none_or(|m| *v < m.0) {
                        min = Some((*v, mu, om));
                    }
                    if max.is_none_or(|m| *v > m.0) {
                        max = Some((*v, mu, om));
                    }
                }
                Err(e) => {
                    grid.push(vec![g, n as f64, mu, om, f64::NAN]);
                    result.fail(&[("g", g), ("n", n as f64), ("mu_q", mu), ("omega_q_drive", om)], e);
                }
            }
        }
        let nan3 = (f64::NAN, f64::NAN, f64::NAN);
        let (mn, mx) = (min.unwrap_or(nan3), max.unwrap_or(nan3));
        table.push(vec![g, n as f64, undriven, mn.0, mn.1, mn.2, mx.0, mx.1, mx.2]);
        records.push((g, n, undriven, mn.0, mx.0));
    }

    let mut linear = Vec::new();
    for &n in &spec.n_values {
        let (gs, maxima): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter(|r| r.1 == n && r.0 >= spec.linear_fit_from && r.4.is_finite())
            .map(|r| (r.0, r.4))
            .unzip();
        if gs.len() >= 2 {
            match fit_linear(&gs, &maxima) {
                Ok(f) => linear.push(json!({ "n": n, "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared })),
                Err(e) => result.warnings.push(format!("linear fit of maxima for n={n}: {e}")),
            }
        }
    }
    let suppression: Vec<Value> = records
        .iter()
        .map(|&(g, n, u, mn, _)| json!({ "g": g, "n": n, "min_over_undriven": mn / u }))
        .collect();
    result.summary.insert("max_vs_g_linear_fit".into(), Value::Array(linear));
    result.summary.insert("suppression".into(), Value::Array(suppression));
    result.summary.insert("failed_points".into(), json!(result.failures.len()));
    result.axes = vec![
        AxisValues {
            parameter: "g".into(),
            values: spec.g_values.clone(),
        },
        AxisValues {
            parameter: "qubit_drive.frequency".into(),
            values: mus,
        },
        AxisValues {
            parameter: "qubit_drive.amplitude".into(),
            values: omegas,
        },
    ];
    result.plots.push(PlotSpec::Lines {
        name: "extremal_vs_g".into(),
        table: "extremal".into(),
        x: "g".into(),
        ys: vec!["min_N_D".into(), "max_N_D".into(), "undriven_N_D".into()],
        group_by: Some("n".into()),
        log_log: false,
    });
    result.tables.push(table);
    result.tables.push(grid);
    Ok(result)
}

/// One stretch of a piecewise schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration: f64,
    /// Parameter overrides applied on top of the base parameters.
    #[serde(default)]
    pub set: BTreeMap<String, f64>,
}

/// Drive parameters switched at fixed instants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchSpec {
    pub params: ModelParams,
    pub system: SystemSpec,
    pub integration: IntegrationConfig,
    pub segments: Vec<Segment>,
}

impl Default for SwitchSpec {
    fn default() -> Self {
        let seg = |duration, mu| Segment {
            duration,
            set: BTreeMap::from([("qubit_drive.frequency".to_string(), mu)]),
        };
        Self {
            params: ModelParams {
                qubit_drive: Some(QubitDrive {
                    amplitude: 0.5,
                    frequency: 1.0,
                }),
                ..ModelParams::default()
            },
            system: SystemSpec::default(),
            integration: IntegrationConfig {
                early_stop: false,
                ..IntegrationConfig::default()
            },
            segments: vec![seg(350.0, 1.0), seg(2650.0, 0.75)],
        }
    }
}

/// Backflow statistics of one segment of a switching run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub start: f64,
    pub end: f64,
    pub positive_increments: usize,
    pub positive_mass: f64,
}

pub fn run_switching(spec: &SwitchSpec) -> Result<ExperimentResult, ExperimentError> {
    if spec.segments.is_empty() {
        return Err(ExperimentError::InvalidSpec("a schedule needs at least one segment".into()));
    }
    let mut result = ExperimentResult::new("switch", spec);
    let mut seg_params = Vec::with_capacity(spec.segments.len());
    for s in &spec.segments {
        let mut p = spec.params;
        for (k, v) in &s.set {
            set_parameter(&mut p, k, *v)?;
        }
        p.validate()?;
        result.warn_params(&p)?;
        seg_params.push(p);
    }
    if seg_params.iter().any(|p| p.cavity_drive.is_some()) != seg_params[0].cavity_drive.is_some() {
        return Err(ExperimentError::InvalidSpec(
            "segments must agree on whether the cavity is driven".into(),
        ));
    }
    let prep = spec.system.prepare(&seg_params[0])?;
    let equations: Vec<LindbladEquation> = seg_params.iter().map(|p| LindbladEquation::new(p, &prep.ops)).collect();
    let schedule: Vec<(&dyn MasterEquation, f64)> = equations
        .iter()
        .zip(&spec.segments)
        .map(|(e, s)| (e as &dyn MasterEquation, s.duration))
        .collect();
    let mut recorder = CavityRecorder::new(&prep.ops);
    let traj = evolve_piecewise(&prep.rho0, &schedule, &spec.integration, &mut recorder)?;
    let d = traj.series("D_S").expect("cavity recorder column");
    let n = traj.series("N").expect("cavity recorder column");

    // `segment_starts[k]` is the first sample recorded inside segment k; the
    // sample just before it sits on the boundary and belongs to both sides.
    let starts = &traj.segment_starts;
    let last = traj.times.len() - 1;
    let mut segments = Vec::new();
    let mut table = Table::new("trajectory", &["t", "D_S", "N", "segment"]);
    for k in 0..starts.len() {
        let lo = if k == 0 { 0 } else { starts[k] - 1 };
        let hi = if k + 1 < starts.len() { starts[k + 1] - 1 } else { last }.max(lo);
        let slice = &d[lo..=hi];
        segments.push(SegmentSummary {
            start: traj.times[lo],
            end: traj.times[hi],
            positive_increments: positive_increment_count(slice, INCREMENT_THRESHOLD),
            positive_mass: positive_increment_mass(slice),
        });
        let first_row = if k == 0 { 0 } else { starts[k] };
        for i in first_row..=hi {
            table.push(vec![traj.times[i], d[i], n[i], k as f64]);
        }
    }
    let total = dnm(&traj.times, d)?;
    result.summary.insert("n_d".into(), json!(total.n_d));
    result.summary.insert("segments".into(), serde_json::to_value(&segments).expect("serializable"));
    if segments.len() >= 2 && segments[0].positive_mass > 0.0 {
        let later: f64 = segments[1..].iter().map(|s| s.positive_mass).sum();
        result.summary.insert("mass_ratio_after_first".into(), json!(later / segments[0].positive_mass));
    }
    result.summary.insert("renormalizations".into(), json!(traj.renormalizations));
    result.plots.push(PlotSpec::Lines {
        name: "trace_distance".into(),
        table: "trajectory".into(),
        x: "t".into(),
        ys: vec!["D_S".into()],
        group_by: None,
        log_log: false,
    });
    result.tables.push(table);
    Ok(result)
}

/// Driven cavity and its input/output loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemristorSpec {
    pub params: ModelParams,
    pub system: SystemSpec,
    pub integration: IntegrationConfig,
    /// Drive periods analysed after the transient.
    pub cycles: usize,
    /// Drive periods discarded before analysis.
    pub transient_periods: f64,
    /// Weight of `<N>` in the output; the cavity decay rate when absent.
    pub alpha: Option<f64>,
}

impl Default for MemristorSpec {
    fn default() -> Self {
        Self {
            params: ModelParams {
                omega_q: 0.5,
                cavity_drive: Some(CavityDrive {
                    amplitude: 0.2,
                    frequency: 0.5,
                    waveform: crate::model::Waveform::Memristor,
                }),
                ..ModelParams::default()
            },
            system: SystemSpec {
                fock_dim: 8,
                initial_photons: 0,
                ..SystemSpec::default()
            },
            integration: IntegrationConfig {
                early_stop: false,
                ..IntegrationConfig::default()
            },
            cycles: 3,
            transient_periods: 2.0,
            alpha: None,
        }
    }
}

pub fn run_memristor(spec: &MemristorSpec) -> Result<ExperimentResult, ExperimentError> {
    let drive = spec
        .params
        .cavity_drive
        .ok_or_else(|| ExperimentError::InvalidSpec("the memristor experiment needs a cavity drive".into()))?;
    if !(drive.frequency > 0.0) {
        return Err(ExperimentError::InvalidSpec("cavity drive frequency must be positive".into()));
    }
    if spec.cycles == 0 || !(spec.transient_periods >= 0.0) {
        return Err(ExperimentError::InvalidSpec("cycles must be positive and transient non-negative".into()));
    }
    let mut result = ExperimentResult::new("memristor", spec);
    spec.params.validate()?;
    result.warn_params(&spec.params)?;
    let period = 2.0 * std::f64::consts::PI / drive.frequency;
    let transient = spec.transient_periods * period;
    let config = IntegrationConfig {
        t_max: transient + spec.cycles as f64 * period,
        ..spec.integration
    };
    let alpha = spec.alpha.unwrap_or(spec.params.gamma_r);
    let prep = spec.system.prepare(&spec.params)?;
    let eq = LindbladEquation::new(&spec.params, &prep.ops);
    let mut recorder = MemristorRecorder::new(&spec.params, &prep.ops, alpha);
    let traj = evolve(&prep.rho0, &eq, &config, &mut recorder)?;
    let s = |k: &str| traj.series(k).expect("memristor recorder column");
    let metrics = loop_metrics(&traj.times, s("I"), s("O"), s("G"), period, transient)?;
    let max_residual = s("residual").iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let top = s("top_level").iter().fold(0.0f64, |m, v| m.max(*v));
    if top > TRUNCATION_WARNING {
        result.warnings.push(format!(
            "top Fock level reaches population {top:.3e}; increase fock_dim"
        ));
    }
    let mut table = Table::new("trajectory", &["t", "I", "O", "F", "G", "N", "residual"]);
    for i in 0..traj.times.len() {
        table.push(vec![
            traj.times[i],
            s("I")[i],
            s("O")[i],
            s("F")[i],
            s("G")[i],
            s("N")[i],
            s("residual")[i],
        ]);
    }
    result.summary.insert("period".into(), json!(period));
    result.summary.insert("alpha".into(), json!(alpha));
    result.summary.insert("loop".into(), serde_json::to_value(&metrics).expect("serializable"));
    result.summary.insert("max_identity_residual".into(), json!(max_residual));
    result.summary.insert("max_top_level_population".into(), json!(top));
    result.plots.push(PlotSpec::Lines {
        name: "input_output_loop".into(),
        table: "trajectory".into(),
        x: "I".into(),
        ys: vec!["O".into()],
        group_by: None,
        log_log: false,
    });
    result.tables.push(table);
    Ok(result)
}

/// Effective decay-rate fits for several qubit-drive frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayFitSpec {
    pub mu_values: Vec<f64>,
    pub params: ModelParams,
    pub system: SystemSpec,
    pub integration: IntegrationConfig,
    pub fit: DecayFitOptions,
    /// Step of the bare-cavity model inside the objective; its sample
    /// interval must divide the target's.
    pub fit_dt: f64,
}

impl Default for DecayFitSpec {
    fn default() -> Self {
        Self {
            mu_values: vec![0.419, 0.2, 1.0],
            params: ModelParams {
                qubit_drive: Some(QubitDrive {
                    amplitude: 0.5,
                    frequency: 1.0,
                }),
                ..ModelParams::default()
            },
            system: SystemSpec::default(),
            integration: IntegrationConfig::default(),
            fit: DecayFitOptions::default(),
            fit_dt: 0.05,
        }
    }
}

impl DecayFitSpec {
    fn fit_config(&self) -> Result<IntegrationConfig, ExperimentError> {
        let interval = self.integration.sample_interval();
        let ratio = interval / self.fit_dt;
        let every = ratio.round();
        if !(self.fit_dt > 0.0) || every < 1.0 || (ratio - every).abs() > 1e-9 * ratio {
            return Err(ExperimentError::InvalidSpec(format!(
                "fit_dt {} must divide the sample interval {interval}",
                self.fit_dt
            )));
        }
        Ok(IntegrationConfig {
            dt: self.fit_dt,
            record_every: every as usize,
            ..self.integration
        })
    }
}

pub fn run_decay_fit(spec: &DecayFitSpec) -> Result<ExperimentResult, ExperimentError> {
    if spec.mu_values.is_empty() {
        return Err(ExperimentError::InvalidSpec("mu_values must be non-empty".into()));
    }
    let fit_config = spec.fit_config()?;
    let mut result = ExperimentResult::new("fit-decay", spec);
    let params_for = |mu: f64| -> Result<ModelParams, ExperimentError> {
        let mut p = spec.params;
        set_parameter(&mut p, "qubit_drive.frequency", mu)?;
        Ok(p)
    };
    for &mu in &spec.mu_values {
        result.warn_params(&params_for(mu)?)?;
    }
    type Point = (DnmRun, crate::fitting::DecayFit, Vec<f64>);
    let outcomes: Vec<Result<Point, ExperimentError>> = spec
        .mu_values
        .par_iter()
        .map(|&mu| {
            let params = params_for(mu)?;
            let run = dnm_run(&params, &spec.system, &spec.integration)?;
            let prep = spec.system.prepare(&params)?;
            let rho0_cavity = prep.ops.partial_trace_qubits(&prep.rho0)?;
            let times = &run.trajectory.times;
            let d = run.trajectory.series("D_S").expect("cavity recorder column");
            let fit = fit_decay_rate(times, d, &rho0_cavity, &fit_config, &spec.fit)?;
            let model_config = IntegrationConfig {
                t_max: run.t_end,
                early_stop: false,
                ..fit_config
            };
            let (mt, md) = decay_model_curve(&fit.decay, &rho0_cavity, &model_config)?;
            let model: Vec<f64> = times.iter().map(|&t| interpolate_linear(&mt, &md, t)).collect();
            Ok((run, fit, model))
        })
        .collect();

    let mut series = Table::new("series", &["mu_q", "t", "D_S", "D_model"]);
    let mut fits = Table::new(
        "fits",
        &["mu_q", "N_D", "A", "B", "C", "residual", "evaluations", "mean_rate", "min_rate", "effectively_constant", "negative_excursion"],
    );
    let mut summaries = Vec::new();
    for (&mu, outcome) in spec.mu_values.iter().zip(outcomes) {
        match outcome {
            Ok((run, fit, model)) => {
                let d = run.trajectory.series("D_S").expect("cavity recorder column");
                for (i, &t) in run.trajectory.times.iter().enumerate() {
                    series.push(vec![mu, t, d[i], model[i]]);
                }
                let class = classify_decay(&fit.decay, run.t_end);
                fits.push(vec![
                    mu,
                    run.n_d,
                    fit.decay.a,
                    fit.decay.b,
                    fit.decay.c,
                    fit.residual,
                    fit.evaluations as f64,
                    class.mean_rate,
                    class.min_rate,
                    f64::from(u8::from(class.effectively_constant)),
                    f64::from(u8::from(class.negative_excursion)),
                ]);
                summaries.push(json!({
                    "mu_q": mu,
                    "n_d": run.n_d,
                    "fit": fit,
                    "classification": class,
                }));
            }
            Err(e) => {
                result.fail(&[("mu_q", mu)], &e);
                let mut row = vec![f64::NAN; 11];
                row[0] = mu;
                fits.push(row);
            }
        }
    }
    result.summary.insert("fits".into(), Value::Array(summaries));
    result.summary.insert("failed_points".into(), json!(result.failures.len()));
    result.axes = vec![AxisValues {
        parameter: "qubit_drive.frequency".into(),
        values: spec.mu_values.clone(),
    }];
    result.plots.push(PlotSpec::Lines {
        name: "trace_distance_fits".into(),
        table: "series".into(),
        x: "t".into(),
        ys: vec!["D_S".into(), "D_model".into()],
        group_by: Some("mu_q".into()),
        log_log: false,
    });
    result.tables.push(series);
    result.tables.push(fits);
    Ok(result)
}

/// A single evolution with all cavity observables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSpec {
    pub params: ModelParams,
    pub system: SystemSpec,
    pub integration: IntegrationConfig,
    /// Weight of `<N>` in the memristor output; the cavity decay rate when
    /// absent. Used only with a cavity drive.
    pub alpha: Option<f64>,
}


/// Cavity columns followed by the memristor columns.
struct CombinedRecorder {
    cavity: CavityRecorder,
    memristor: Option<MemristorRecorder>,
}

impl Recorder for CombinedRecorder {
    fn columns(&self) -> Vec<String> {
        let mut c = self.cavity.columns();
        if let Some(m) = &self.memristor {
            c.extend(m.columns());
        }
        c
    }

    fn sample(&mut self, t: f64, rho: &ComplexMatrix, equation: &dyn MasterEquation) -> Result<Sample, String> {
        let mut s = self.cavity.sample(t, rho, equation)?;
        if let Some(m) = &mut self.memristor {
            s.values.extend(m.sample(t, rho, equation)?.values);
        }
        Ok(s)
    }

    fn steady_column(&self) -> Option<usize> {
        self.cavity.steady_column()
    }
}

pub fn run_simulate(spec: &SimulateSpec) -> Result<ExperimentResult, ExperimentError> {
    let mut result = ExperimentResult::new("simulate", spec);
    spec.params.validate()?;
    result.warn_params(&spec.params)?;
    let prep = spec.system.prepare(&spec.params)?;
    let eq = LindbladEquation::new(&spec.params, &prep.ops);
    let mut recorder = CombinedRecorder {
        cavity: CavityRecorder::new(&prep.ops),
        memristor: spec.params.cavity_drive.map(|_| {
            MemristorRecorder::new(&spec.params, &prep.ops, spec.alpha.unwrap_or(spec.params.gamma_r))
        }),
    };
    let traj = evolve(&prep.rho0, &eq, &spec.integration, &mut recorder)?;
    let mut names: Vec<&str> = vec!["t"];
    names.extend(traj.columns.iter().map(String::as_str));
    let mut table = Table::new("trajectory", &names);
    for i in 0..traj.times.len() {
        let mut row = vec![traj.times[i]];
        row.extend(traj.series.iter().map(|s| s[i]));
        table.push(row);
    }
    let d = traj.series("D_S").expect("cavity recorder column");
    let r = dnm(&traj.times, d)?;
    result.summary.insert("n_d".into(), json!(r.n_d));
    result.summary.insert("reached_steady".into(), json!(r.reached_steady));
    result.summary.insert("t_end".into(), json!(traj.times.last()));
    result.summary.insert("stopped_early".into(), json!(traj.stopped_early));
    result.summary.insert("renormalizations".into(), json!(traj.renormalizations));
    result.summary.insert("dim".into(), json!(prep.layout.dim()));
    if let Some(top) = traj.series("top_level") {
        let top = top.iter().fold(0.0f64, |m, v| m.max(*v));
        if top > TRUNCATION_WARNING {
            result.warnings.push(format!("top Fock level reaches population {top:.3e}; increase fock_dim"));
        }
    }
    result.plots.push(PlotSpec::Lines {
        name: "cavity".into(),
        table: "trajectory".into(),
        x: "t".into(),
        ys: vec!["D_S".into(), "N".into()],
        group_by: None,
        log_log: false,
    });
    result.tables.push(table);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> IntegrationConfig {
        IntegrationConfig {
            dt: 0.05,
            t_max: 400.0,
            record_every: 4,
            ..IntegrationConfig::default()
        }
    }

    #[test]
    fn set_parameter_covers_every_name() {
        for (i, name) in PARAMETER_NAMES.iter().enumerate() {
            let mut p = ModelParams::default();
            set_parameter(&mut p, name, 0.125 + i as f64).unwrap();
            let v = serde_json::to_value(p).unwrap();
            let path: Vec<&str> = name.split('.').collect();
            let got = path.iter().fold(&v, |v, k| &v[*k]);
            assert_eq!(got.as_f64(), Some(0.125 + i as f64), "{name}");
        }
        assert!(matches!(
            set_parameter(&mut ModelParams::default(), "omega", 1.0),
            Err(ExperimentError::UnknownParameter(_))
        ));
    }

    #[test]
    fn axis_values_hit_both_ends() {
        let a = Axis::new("g", 0.0, 0.1, 11);
        let v = a.values();
        assert_eq!(v.len(), 11);
        assert_eq!((v[0], v[10]), (0.0, 0.1));
        assert!((v[3] - 0.03).abs() < 1e-15);
        assert!(Axis::new("g", 0.0, 1.0, 1).validate().is_err());
        assert!(Axis::new("x", 0.0, 1.0, 3).validate().is_err());
    }

    #[test]
    fn excitation_conservation_is_used_only_without_cavity_drive() {
        let s = SystemSpec {
            n_qubits: 3,
            ..SystemSpec::default()
        };
        let p = s.prepare(&ModelParams::default()).unwrap();
        assert_eq!(p.layout.dim(), 5);
        let driven = ModelParams {
            cavity_drive: Some(CavityDrive {
                amplitude: 0.1,
                frequency: 0.5,
                waveform: Default::default(),
            }),
            ..ModelParams::default()
        };
        assert_eq!(s.prepare(&driven).unwrap().layout.dim(), 16);
        let bad = SystemSpec {
            initial_qubits: Some("ge".into()),
            ..SystemSpec::default()
        };
        assert!(bad.prepare(&ModelParams::default()).is_err());
    }

    #[test]
    fn decoupled_column_is_markovian() {
        let spec = SweepSpec {
            axes: vec![Axis::new("omega_q", 0.8, 1.2, 3)],
            params: ModelParams {
                g: 0.0,
                ..ModelParams::default()
            },
            integration: short(),
            ..SweepSpec::default()
        };
        let r = run_dnm_map(&spec).unwrap();
        for v in r.table("grid").unwrap().column("N_D").unwrap() {
            assert!(v.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn map_is_deterministic_and_echoes_spec() {
        let spec = SweepSpec {
            axes: vec![Axis::new("g", 0.02, 0.06, 3), Axis::new("omega_q", 0.9, 1.1, 2)],
            integration: short(),
            ..SweepSpec::default()
        };
        let a = run_dnm_map(&spec).unwrap();
        let b = run_dnm_map(&spec).unwrap();
        assert_eq!(a.tables, b.tables);
        let grid = a.table("grid").unwrap();
        assert_eq!(grid.rows.len(), 6);
        assert_eq!(&grid.rows[1][..2], &[0.02, 1.1]);
        let echoed: SweepSpec = serde_json::from_value(a.provenance.spec.clone()).unwrap();
        assert_eq!(echoed, spec);
    }

    #[test]
    fn failed_points_become_missing_cells() {
        let spec = SweepSpec {
            axes: vec![Axis::new("gamma_r", -0.01, 0.01, 3)],
            integration: short(),
            ..SweepSpec::default()
        };
        let r = run_dnm_map(&spec).unwrap();
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].coordinates["gamma_r"], -0.01);
        let nd = r.table("grid").unwrap().column("N_D").unwrap();
        assert!(nd[0].is_nan() && nd[1].is_finite() && nd[2].is_finite());
    }

    #[test]
    fn extremal_brackets_undriven_value() {
        let spec = ExtremalSpec {
            g_values: vec![0.05],
            frequency: Axis::new("qubit_drive.frequency", 0.5, 1.0, 2),
            amplitude: Axis::new("qubit_drive.amplitude", 0.0, 0.5, 2),
            integration: short(),
            ..ExtremalSpec::default()
        };
        let r = run_extremal_dnm(&spec).unwrap();
        let t = r.table("extremal").unwrap();
        let row = &t.rows[0];
        let (u, mn, mx) = (row[2], row[3], row[6]);
        assert!(mn <= u + 1e-15 && u <= mx + 1e-15, "{row:?}");
    }

    #[test]
    fn degenerate_schedule_matches_single_run() {
        let base = SwitchSpec {
            integration: IntegrationConfig {
                t_max: 300.0,
                ..short()
            },
            ..SwitchSpec::default()
        };
        let one = SwitchSpec {
            segments: vec![Segment {
                duration: 300.0,
                set: BTreeMap::new(),
            }],
            ..base.clone()
        };
        let two = SwitchSpec {
            segments: vec![
                Segment {
                    duration: 100.0,
                    set: BTreeMap::new(),
                },
                Segment {
                    duration: 200.0,
                    set: BTreeMap::new(),
                },
            ],
            ..base
        };
        let a = run_switching(&one).unwrap();
        let b = run_switching(&two).unwrap();
        let (da, db) = (
            a.table("trajectory").unwrap().column("D_S").unwrap(),
            b.table("trajectory").unwrap().column("D_S").unwrap(),
        );
        assert_eq!(da.len(), db.len());
        let diff = da.iter().zip(&db).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
        let segs: Vec<SegmentSummary> = serde_json::from_value(b.summary["segments"].clone()).unwrap();
        let count = positive_increment_count(&da, INCREMENT_THRESHOLD);
        assert_eq!(segs[0].positive_increments + segs[1].positive_increments, count);
        assert_eq!((segs[0].end, segs[1].start), (100.0, 100.0));
        let mass = positive_increment_mass(&da);
        assert!((segs[0].positive_mass + segs[1].positive_mass - mass).abs() < 1e-12);
    }

    #[test]
    fn undriven_lossless_memristor_is_silent() {
        let spec = MemristorSpec {
            params: ModelParams {
                g: 0.0,
                gamma_r: 0.0,
                gamma_q: 0.0,
                cavity_drive: Some(CavityDrive {
                    amplitude: 0.0,
                    frequency: 0.5,
                    waveform: Default::default(),
                }),
                ..ModelParams::default()
            },
            cycles: 1,
            transient_periods: 0.0,
            ..MemristorSpec::default()
        };
        let r = run_memristor(&spec).unwrap();
        let t = r.table("trajectory").unwrap();
        for name in ["I", "O", "G"] {
            assert!(t.column(name).unwrap().iter().all(|v| *v == 0.0), "{name}");
        }
    }

    #[test]
    fn memristor_requires_a_cavity_drive() {
        let spec = MemristorSpec {
            params: ModelParams::default(),
            ..MemristorSpec::default()
        };
        assert!(matches!(run_memristor(&spec), Err(ExperimentError::InvalidSpec(_))));
    }

    #[test]
    fn fit_dt_must_divide_the_sample_interval() {
        let spec = DecayFitSpec {
            fit_dt: 0.03,
            ..DecayFitSpec::default()
        };
        assert!(spec.fit_config().is_err());
        let cfg = DecayFitSpec::default().fit_config().unwrap();
        assert_eq!(cfg.record_every, 2);
    }

    #[test]
    fn simulate_adds_memristor_columns_with_cavity_drive() {
        let spec = SimulateSpec {
            params: MemristorSpec::default().params,
            system: SystemSpec {
                fock_dim: 4,
                initial_photons: 0,
                ..SystemSpec::default()
            },
            integration: IntegrationConfig {
                t_max: 5.0,
                ..IntegrationConfig::default()
            },
            alpha: None,
        };
        let r = run_simulate(&spec).unwrap();
        let t = r.table("trajectory").unwrap();
        assert!(t.column_index("I").is_some() && t.column_index("D_S").is_some());
        let plain = run_simulate(&SimulateSpec {
            integration: IntegrationConfig {
                t_max: 5.0,
                ..IntegrationConfig::default()
            },
            ..SimulateSpec::default()
        })
        .unwrap();
        assert!(plain.table("trajectory").unwrap().column_index("I").is_none());
    }
}
