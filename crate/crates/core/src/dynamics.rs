//! Fixed-step fourth-order Runge-Kutta integration of master equations.
//!
//! Coefficients are evaluated at the RK substep times. After every step the
//! state is re-Hermitized; for completely positive generators the trace is
//! renormalized when it drifts by more than [`RENORMALIZE_ABOVE`], and the run
//! aborts when it drifts by more than [`ABORT_ABOVE`]. Generators with
//! possibly negative rates are integrated as written, without any correction.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{Basis, OperatorSet};
use crate::linalg::{hermitian_eigenvalues, ComplexMatrix, LinalgError, SparseMatrix};
use crate::measures::trace_distance_to_vacuum;
use crate::model::MasterEquation;

pub const RENORMALIZE_ABOVE: f64 = 1e-9;
pub const ABORT_ABOVE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("invalid integration config: {0}")]
    InvalidConfig(String),
    #[error("initial state is not a density matrix: {0}")]
    InvalidInitialState(String),
    #[error("trace drifted to {trace} at t = {t}; the step size is too large")]
    TraceDrift { t: f64, trace: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("segment {segment} has dimension {got}, expected {expected}")]
    LayoutMismatch {
        segment: usize,
        expected: usize,
        got: usize,
    },
    #[error("segment {segment} has non-positive duration {duration}")]
    BadSegment { segment: usize, duration: f64 },
    #[error("recorder failed at t = {t}: {message}")]
    Recorder { t: f64, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegrationConfig {
    /// Step size in `1/omega_r`.
    pub dt: f64,
    /// Horizon in `1/omega_r`.
    pub t_max: f64,
    /// Record a sample every this many steps.
    pub record_every: usize,
    /// Stop once `D_S < steady_eps` has held for `steady_window`.
    pub early_stop: bool,
    pub steady_eps: f64,
    pub steady_window: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 3000.0,
            record_every: 10,
            early_stop: true,
            steady_eps: 1e-3,
            steady_window: 50.0,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<(), IntegrationError> {
        let bad = |msg: String| Err(IntegrationError::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be positive, got {}", self.t_max));
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if !(self.steady_eps > 0.0) {
            return bad(format!("steady_eps must be positive, got {}", self.steady_eps));
        }
        if !(self.steady_window >= 0.0) {
            return bad(format!(
                "steady_window must be non-negative, got {}",
                self.steady_window
            ));
        }
        Ok(())
    }

    /// Spacing between recorded samples.
    pub fn sample_interval(&self) -> f64 {
        self.dt * self.record_every as f64
    }
}

/// Samples taken by a [`Recorder`].
#[derive(Debug, Clone, Default)]
pub struct Sample {
    pub values: Vec<f64>,
    pub snapshot: Option<ComplexMatrix>,
}

/// Observes the state at sample instants.
pub trait Recorder {
    fn columns(&self) -> Vec<String>;

    fn sample(
        &mut self,
        t: f64,
        rho: &ComplexMatrix,
        equation: &dyn MasterEquation,
    ) -> Result<Sample, String>;

    /// Column holding the trace distance to the steady state, used for early
    /// stopping.
    fn steady_column(&self) -> Option<usize> {
        None
    }
}

/// Recorded time series of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub columns: Vec<String>,
    /// One series per column, each as long as `times`.
    pub series: Vec<Vec<f64>>,
    pub snapshots: Vec<ComplexMatrix>,
    pub final_state: ComplexMatrix,
    /// Number of steps after which the trace was renormalized.
    pub renormalizations: usize,
    pub stopped_early: bool,
    /// Sample indices at which each segment starts (always contains 0).
    pub segment_starts: Vec<usize>,
}

impl Trajectory {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.series[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(t, value)` pairs of a named series.
    pub fn pairs(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        self.series(name)
            .map(|s| self.times.iter().copied().zip(s.iter().copied()).collect())
    }
}

struct Rk4Workspace {
    k: [ComplexMatrix; 4],
    stage: ComplexMatrix,
}

impl Rk4Workspace {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| ComplexMatrix::zeros(dim)),
            stage: ComplexMatrix::zeros(dim),
        }
    }

    fn step(&mut self, eq: &dyn MasterEquation, t: f64, h: f64, rho: &mut ComplexMatrix) {
        let [k1, k2, k3, k4] = &mut self.k;
        eq.rhs_into(t, rho, k1);
        set_axpy(&mut self.stage, rho, 0.5 * h, k1);
        eq.rhs_into(t + 0.5 * h, &self.stage, k2);
        set_axpy(&mut self.stage, rho, 0.5 * h, k2);
        eq.rhs_into(t + 0.5 * h, &self.stage, k3);
        set_axpy(&mut self.stage, rho, h, k3);
        eq.rhs_into(t + h, &self.stage, k4);
        let w = h / 6.0;
        for (((r, a), (b, c)), d) in rho
            .entries_mut()
            .iter_mut()
            .zip(k1.entries())
            .zip(k2.entries().iter().zip(k3.entries()))
            .zip(k4.entries())
        {
            *r += w * (a + 2.0 * (b + c) + d);
        }
    }
}

/// `out = x + h * y`
fn set_axpy(out: &mut ComplexMatrix, x: &ComplexMatrix, h: f64, y: &ComplexMatrix) {
    for ((o, &a), &b) in out.entries_mut().iter_mut().zip(x.entries()).zip(y.entries()) {
        *o = a + h * b;
    }
}

fn check_initial_state(rho: &ComplexMatrix) -> Result<(), IntegrationError> {
    let asym = rho.max_asymmetry();
    if asym > 1e-10 {
        return Err(IntegrationError::InvalidInitialState(format!(
            "max |rho - rho^dagger| = {asym:e}"
        )));
    }
    let tr = rho.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(IntegrationError::InvalidInitialState(format!(
            "trace = {tr}"
        )));
    }
    Ok(())
}

/// Integrates `rho0` under `equation` up to `config.t_max`.
pub fn evolve(
    rho0: &ComplexMatrix,
    equation: &dyn MasterEquation,
    config: &IntegrationConfig,
    recorder: &mut dyn Recorder,
) -> Result<Trajectory, IntegrationError> {
    evolve_piecewise(rho0, &[(equation, config.t_max)], config, recorder)
}

/// Integrates through consecutive segments, each with its own generator and
/// duration; time runs continuously across boundaries and every boundary is
/// a sample point. `config.t_max` is ignored.
pub fn evolve_piecewise(
    rho0: &ComplexMatrix,
    segments: &[(&dyn MasterEquation, f64)],
    config: &IntegrationConfig,
    recorder: &mut dyn Recorder,
) -> Result<Trajectory, IntegrationError> {
    config.validate()?;
    check_initial_state(rho0)?;
    let dim = rho0.dim();
    for (i, (eq, duration)) in segments.iter().enumerate() {
        if eq.dim() != dim {
            return Err(IntegrationError::LayoutMismatch {
                segment: i,
                expected: dim,
                got: eq.dim(),
            });
        }
        if !(*duration > 0.0 && duration.is_finite()) {
            return Err(IntegrationError::BadSegment {
                segment: i,
                duration: *duration,
            });
        }
    }
    let Some(&(first_eq, _)) = segments.first() else {
        return Err(IntegrationError::InvalidConfig("empty schedule".into()));
    };

    let columns = recorder.columns();
    let steady_col = if config.early_stop {
        recorder.steady_column()
    } else {
        None
    };
    let mut traj = Trajectory {
        times: Vec::new(),
        series: vec![Vec::new(); columns.len()],
        columns,
        snapshots: Vec::new(),
        final_state: rho0.clone(),
        renormalizations: 0,
        stopped_early: false,
        segment_starts: Vec::new(),
    };

    let mut rho = rho0.clone();
    let mut ws = Rk4Workspace::new(dim);
    let mut below_since: Option<f64> = None;
    let mut push = |traj: &mut Trajectory,
                    t: f64,
                    rho: &ComplexMatrix,
                    eq: &dyn MasterEquation,
                    recorder: &mut dyn Recorder|
     -> Result<bool, IntegrationError> {
        let sample = recorder
            .sample(t, rho, eq)
            .map_err(|message| IntegrationError::Recorder { t, message })?;
        traj.times.push(t);
        for (s, v) in traj.series.iter_mut().zip(&sample.values) {
            s.push(*v);
        }
        if let Some(snap) = sample.snapshot {
            traj.snapshots.push(snap);
        }
        if let Some(col) = steady_col {
            if sample.values[col] < config.steady_eps {
                let since = *below_since.get_or_insert(t);
                return Ok(t - since >= config.steady_window);
            }
            below_since = None;
        }
        Ok(false)
    };

    traj.segment_starts.push(0);
    push(&mut traj, 0.0, &rho, first_eq, recorder)?;
    let completely_positive = segments.iter().all(|(eq, _)| eq.is_completely_positive());

    let mut t_start = 0.0;
    'segments: for (seg_index, &(eq, duration)) in segments.iter().enumerate() {
        if seg_index > 0 {
            traj.segment_starts.push(traj.times.len());
        }
        let n_steps = (duration / config.dt - 1e-9).ceil().max(1.0) as usize;
        let h = duration / n_steps as f64;
        for step in 1..=n_steps {
            let t_prev = t_start + (step - 1) as f64 * h;
            ws.step(eq, t_prev, h, &mut rho);
            let t = if step == n_steps {
                t_start + duration
            } else {
                t_start + step as f64 * h
            };
            rho.hermitize();
            if rho.has_non_finite() {
                return Err(IntegrationError::NonFinite { t });
            }
            let trace = rho.trace().re;
            let drift = (trace - 1.0).abs();
            if drift > ABORT_ABOVE {
                return Err(IntegrationError::TraceDrift { t, trace });
            }
            if completely_positive && drift > RENORMALIZE_ABOVE {
                let inv = C64::new(1.0 / trace, 0.0);
                rho.entries_mut().iter_mut().for_each(|z| *z *= inv);
                traj.renormalizations += 1;
            }
            if step % config.record_every == 0 || step == n_steps {
                let done = push(&mut traj, t, &rho, eq, recorder)?;
                if done {
                    traj.stopped_early = true;
                    break 'segments;
                }
            }
        }
        t_start += duration;
    }
    if traj.renormalizations > 0 {
        log::debug!("trace renormalized after {} steps", traj.renormalizations);
    }
    traj.final_state = rho;
    Ok(traj)
}

/// Records cavity observables: `N`, `trace`, `D_S`, `min_eig` (smallest
/// eigenvalue of the reduced cavity state) and optionally snapshots of the
/// reduced cavity state.
pub struct CavityRecorder {
    basis: Basis,
    number: SparseMatrix,
    keep_snapshots: bool,
}

impl CavityRecorder {
    pub const COLUMNS: [&'static str; 4] = ["N", "trace", "D_S", "min_eig"];

    pub fn new(ops: &OperatorSet) -> Self {
        Self {
            basis: ops.basis.clone(),
            number: SparseMatrix::from_dense(&ops.number_op),
            keep_snapshots: false,
        }
    }

    pub fn with_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }

    /// Reduced cavity state, `D_S` and the smallest eigenvalue of the reduced
    /// state.
    pub fn reduce(&self, rho: &ComplexMatrix) -> Result<(ComplexMatrix, f64, f64), String> {
        let reduced = self
            .basis
            .partial_trace_qubits(rho)
            .map_err(|e| e.to_string())?;
        let d_s = trace_distance_to_vacuum(&reduced).map_err(|e| e.to_string())?;
        let min_eig = hermitian_eigenvalues(&reduced)
            .map_err(|e: LinalgError| e.to_string())?[0];
        Ok((reduced, d_s, min_eig))
    }
}

impl Recorder for CavityRecorder {
    fn columns(&self) -> Vec<String> {
        Self::COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn sample(
        &mut self,
        _t: f64,
        rho: &ComplexMatrix,
        _equation: &dyn MasterEquation,
    ) -> Result<Sample, String> {
        let (reduced, d_s, min_eig) = self.reduce(rho)?;
        let n = self.number.expectation(rho).re;
        Ok(Sample {
            values: vec![n, rho.trace().re, d_s, min_eig],
            snapshot: self.keep_snapshots.then_some(reduced),
        })
    }

    fn steady_column(&self) -> Option<usize> {
        Some(2)
    }
}
