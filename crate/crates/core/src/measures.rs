//! Trace distance to the vacuum, the dynamical non-Markovianity (DnM) of a
//! trace-distance curve, and the input/output observables of the driven
//! cavity.
//!
//! # Memristor observables
//!
//! With `H(t)` containing `F(t)(a + a^dagger)` and the cavity decaying at
//! `Gamma_R`, Ehrenfest's theorem gives
//!
//! ```text
//! d<N>/dt = F(t) <i(a - a^dagger)> + g sum_j <i(sigma_j^+ a - sigma_j^- a^dagger)> - Gamma_R <N>
//! ```
//!
//! The qubit decay channels and the sigma_z drive commute with `N` and drop
//! out, and the identity survives Fock truncation exactly. Defining
//!
//! * input `I = <i(a - a^dagger)>`,
//! * output `O = d<N>/dt + alpha <N>` with `alpha = Gamma_R`,
//! * residual `G = g sum_j <i(sigma_j^+ a - sigma_j^- a^dagger)>`,
//!
//! yields `O = F(t) I + G(t)`; the memristive relation `O = F I` holds when
//! the qubits exchange no energy with the cavity.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Recorder, Sample};
use crate::hilbert::OperatorSet;
use crate::linalg::{hermitian_eigenvalues, matmul, ComplexMatrix, LinalgError, SparseMatrix};
use crate::model::{MasterEquation, ModelParams};

/// Threshold on the final `D_S` below which a run counts as having reached
/// the vacuum.
pub const STEADY_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("DnM needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("sample times must be strictly increasing (index {0})")]
    NonIncreasingTimes(usize),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `D(rho, sigma) = (1/2) sum |eigenvalues of (rho - sigma)|`.
pub fn trace_distance(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64, MeasureError> {
    if rho.dim() != sigma.dim() {
        return Err(LinalgError::DimensionMismatch {
            op: "trace_distance",
            left: rho.dim(),
            right: sigma.dim(),
        }
        .into());
    }
    let ev = hermitian_eigenvalues(&(rho - sigma))?;
    Ok(0.5 * ev.iter().map(|l| l.abs()).sum::<f64>())
}

/// Trace distance between a reduced cavity state and the vacuum `|0><0|`,
/// which is the steady state of the zero-temperature evolution.
pub fn trace_distance_to_vacuum(rho_r: &ComplexMatrix) -> Result<f64, MeasureError> {
    let mut diff = rho_r.clone();
    let z = diff.get(0, 0) - C64::new(1.0, 0.0);
    diff.set(0, 0, z);
    let ev = hermitian_eigenvalues(&diff)?;
    Ok(0.5 * ev.iter().map(|l| l.abs()).sum::<f64>())
}

/// Outcome of [`dnm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnmResult {
    /// Total positive variation of `D_S`.
    pub n_d: f64,
    pub d_series: Vec<(f64, f64)>,
    /// Integral of the positive part of `dD_S/dt`; equals `n_d` for sampled
    /// curves.
    pub zeta_positive_mass: f64,
    /// Number of sample intervals over which `D_S` increased.
    pub positive_intervals: usize,
    /// Whether the last sample is below [`STEADY_EPS`].
    pub reached_steady: bool,
}

/// Sum of the positive increments of a sampled trace-distance curve.
pub fn positive_increment_mass(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| (w[1] - w[0]).max(0.0))
        .sum()
}

/// Number of increments larger than `threshold`.
pub fn positive_increment_count(values: &[f64], threshold: f64) -> usize {
    values.windows(2).filter(|w| w[1] - w[0] > threshold).count()
}

/// DnM of a sampled `D_S` curve: `N_D = sum_k max(0, D_{k+1} - D_k)`, the
/// discrete form of integrating `dD_S/dt` over the intervals where it is
/// positive.
pub fn dnm(times: &[f64], values: &[f64]) -> Result<DnmResult, MeasureError> {
    if times.len() != values.len() {
        return Err(MeasureError::LengthMismatch(times.len(), values.len()));
    }
    if values.len() < 2 {
        return Err(MeasureError::TooShort(values.len()));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(MeasureError::NonIncreasingTimes(i + 1));
    }
    let n_d = positive_increment_mass(values);
    Ok(DnmResult {
        n_d,
        d_series: times.iter().copied().zip(values.iter().copied()).collect(),
        zeta_positive_mass: n_d,
        positive_intervals: positive_increment_count(values, 0.0),
        reached_steady: *values.last().expect("non-empty") < STEADY_EPS,
    })
}

/// Input/output observables at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorRecord {
    pub t: f64,
    pub input: f64,
    pub output: f64,
    pub f_value: f64,
    pub g_value: f64,
    pub photon_number: f64,
    pub photon_number_rate: f64,
    pub alpha: f64,
}

impl MemristorRecord {
    /// `O - F I - G`, zero up to integration round-off.
    pub fn identity_residual(&self) -> f64 {
        self.output - self.f_value * self.input - self.g_value
    }
}

/// Precompiled operators for [`MemristorRecord`]s.
#[derive(Debug, Clone)]
pub struct MemristorProbe {
    params: ModelParams,
    alpha: f64,
    a: SparseMatrix,
    number: SparseMatrix,
    /// `sigma_j^+ a` for every qubit.
    exchange: Vec<SparseMatrix>,
    top_level: SparseMatrix,
}

impl MemristorProbe {
    pub fn new(params: &ModelParams, ops: &OperatorSet, alpha: f64) -> Self {
        let exchange = ops
            .sigma_plus
            .iter()
            .map(|sp| SparseMatrix::from_dense(&matmul(sp, &ops.a).expect("same dim")))
            .collect();
        let top = ops.layout().fock_dim() - 1;
        let diag: Vec<f64> = ops
            .basis
            .states()
            .iter()
            .map(|&(m, _)| if m == top { 1.0 } else { 0.0 })
            .collect();
        Self {
            params: *params,
            alpha,
            a: SparseMatrix::from_dense(&ops.a),
            number: SparseMatrix::from_dense(&ops.number_op),
            exchange,
            top_level: SparseMatrix::from_dense(&ComplexMatrix::from_real_diagonal(&diag)),
        }
    }

    /// `rhs_value` must be the master-equation right-hand side at `(t, rho)`.
    pub fn observe(&self, t: f64, rho: &ComplexMatrix, rhs_value: &ComplexMatrix) -> MemristorRecord {
        // <i(X - X^dagger)> = -2 Im <X>
        let input = -2.0 * self.a.expectation(rho).im;
        let g_value = self
            .exchange
            .iter()
            .map(|x| -2.0 * self.params.g * x.expectation(rho).im)
            .sum();
        let photon_number = self.number.expectation(rho).re;
        let photon_number_rate = self.number.expectation(rhs_value).re;
        MemristorRecord {
            t,
            input,
            output: photon_number_rate + self.alpha * photon_number,
            f_value: self.params.cavity_drive_value(t),
            g_value,
            photon_number,
            photon_number_rate,
            alpha: self.alpha,
        }
    }

    /// Population of the highest retained Fock level.
    pub fn top_level_population(&self, rho: &ComplexMatrix) -> f64 {
        self.top_level.expectation(rho).re
    }
}

/// Memristor observables for a full state and its time derivative.
pub fn memristor_observables(
    rho: &ComplexMatrix,
    rhs_value: &ComplexMatrix,
    params: &ModelParams,
    ops: &OperatorSet,
    t: f64,
    alpha: f64,
) -> Result<MemristorRecord, MeasureError> {
    for (m, name) in [(rho, "rho"), (rhs_value, "rhs_value")] {
        if m.dim() != ops.dim() {
            return Err(LinalgError::DimensionMismatch {
                op: if name == "rho" {
                    "memristor_observables(rho)"
                } else {
                    "memristor_observables(rhs)"
                },
                left: m.dim(),
                right: ops.dim(),
            }
            .into());
        }
    }
    Ok(MemristorProbe::new(params, ops, alpha).observe(t, rho, rhs_value))
}

/// Records `I`, `O`, `F`, `G`, `N`, `dN/dt`, the identity residual and the
/// top Fock-level population.
pub struct MemristorRecorder {
    probe: MemristorProbe,
    rhs: ComplexMatrix,
}

impl MemristorRecorder {
    pub const COLUMNS: [&'static str; 8] = ["I", "O", "F", "G", "N", "dN_dt", "residual", "top_level"];

    pub fn new(params: &ModelParams, ops: &OperatorSet, alpha: f64) -> Self {
        Self {
            probe: MemristorProbe::new(params, ops, alpha),
            rhs: ComplexMatrix::zeros(ops.dim()),
        }
    }
}

impl Recorder for MemristorRecorder {
    fn columns(&self) -> Vec<String> {
        Self::COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn sample(
        &mut self,
        t: f64,
        rho: &ComplexMatrix,
        equation: &dyn MasterEquation,
    ) -> Result<Sample, String> {
        equation.rhs_into(t, rho, &mut self.rhs);
        let r = self.probe.observe(t, rho, &self.rhs);
        Ok(Sample {
            values: vec![
                r.input,
                r.output,
                r.f_value,
                r.g_value,
                r.photon_number,
                r.photon_number_rate,
                r.identity_residual(),
                self.probe.top_level_population(rho),
            ],
            snapshot: None,
        })
    }
}

/// Shape of the input/output loop over whole drive periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopMetrics {
    /// `min_k (I_k / max|I|)^2 + (O_k / max|O|)^2`; small when the loop passes
    /// through the origin.
    pub pinch: f64,
    /// Sum of the lobe areas of each cycle, lobes being delimited by the sign
    /// changes of `I` and closed with a chord.
    pub lobe_area_per_cycle: Vec<f64>,
    /// `max|G| / max|O|` over the analysed window.
    pub residual_ratio: f64,
    pub max_input: f64,
    pub max_output: f64,
    pub cycles: usize,
}

fn shoelace(points: &[(f64, f64)]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let n = points.len();
    let twice: f64 = (0..n)
        .map(|k| {
            let (x0, y0) = points[k];
            let (x1, y1) = points[(k + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    0.5 * twice.abs()
}

/// Loop metrics of `(I, O)` sampled at `times`, skipping `t < transient` and
/// analysing `floor((t_end - transient) / period)` whole cycles.
pub fn loop_metrics(
    times: &[f64],
    input: &[f64],
    output: &[f64],
    residual: &[f64],
    period: f64,
    transient: f64,
) -> Result<LoopMetrics, MeasureError> {
    for len in [input.len(), output.len(), residual.len()] {
        if len != times.len() {
            return Err(MeasureError::LengthMismatch(times.len(), len));
        }
    }
    let t_end = times.last().copied().unwrap_or(0.0);
    let cycles = if period > 0.0 {
        ((t_end - transient) / period + 1e-9).floor().max(0.0) as usize
    } else {
        0
    };
    let window_end = transient + cycles as f64 * period;
    let window: Vec<usize> = (0..times.len())
        .filter(|&k| times[k] >= transient - 1e-9 && times[k] <= window_end + 1e-9)
        .collect();
    if window.len() < 2 {
        return Err(MeasureError::TooShort(window.len()));
    }
    let max_abs = |s: &[f64]| window.iter().map(|&k| s[k].abs()).fold(0.0, f64::max);
    let (max_i, max_o, max_g) = (max_abs(input), max_abs(output), max_abs(residual));
    let safe = |m: f64| if m > 0.0 { m } else { 1.0 };
    let pinch = window
        .iter()
        .map(|&k| (input[k] / safe(max_i)).powi(2) + (output[k] / safe(max_o)).powi(2))
        .fold(f64::INFINITY, f64::min);

    let mut lobe_area_per_cycle = Vec::with_capacity(cycles);
    for c in 0..cycles {
        let lo = transient + c as f64 * period;
        let hi = lo + period;
        let idx: Vec<usize> = window
            .iter()
            .copied()
            .filter(|&k| times[k] >= lo - 1e-9 && times[k] <= hi + 1e-9)
            .collect();
        let mut area = 0.0;
        let mut lobe: Vec<(f64, f64)> = Vec::new();
        for (pos, &k) in idx.iter().enumerate() {
            lobe.push((input[k], output[k]));
            let sign_change = idx
                .get(pos + 1)
                .is_some_and(|&next| input[k].signum() != input[next].signum());
            if sign_change {
                area += shoelace(&lobe);
                lobe.clear();
                lobe.push((input[k], output[k]));
            }
        }
        area += shoelace(&lobe);
        lobe_area_per_cycle.push(area);
    }

    Ok(LoopMetrics {
        pinch,
        lobe_area_per_cycle,
        residual_ratio: if max_o > 0.0 { max_g / max_o } else { 0.0 },
        max_input: max_i,
        max_output: max_o,
        cycles,
    })
}
