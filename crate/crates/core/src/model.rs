//! Hamiltonians and master-equation generators.
//!
//! Units: `hbar = 1` and `omega_r = 1`; times are in `1/omega_r`, rates and
//! frequencies in `omega_r`.
//!
//! Two forms are provided for each generator. The free functions
//! ([`hamiltonian_at`], [`lindblad_rhs`], [`lindblad_rhs_tdecay`]) build dense
//! matrices straight from the defining formulas and serve as references. The
//! [`MasterEquation`] implementations precompile the operators into sparse form
//! and are what the integrator calls.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::OperatorSet;
use crate::linalg::{anticommutator, commutator, matmul, ComplexMatrix, LinalgError, SparseMatrix};

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown cavity-drive waveform {0:?}; expected \"sinusoid\" or \"memristor\"")]
    UnknownWaveform(String),
    #[error("parameter {name} must be non-negative and finite, got {value}")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("parameter {name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("the time-dependent decay equation describes the bare cavity only, but the layout has {0} qubits")]
    QubitsPresent(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Cavity-drive waveform `F(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    /// `F(t) = amplitude * sin(frequency * t)`
    Sinusoid,
    /// `F(t) = amplitude * (1 - sin(cos(frequency * t)))`
    #[default]
    Memristor,
}

impl FromStr for Waveform {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sinusoid" => Ok(Waveform::Sinusoid),
            "memristor" => Ok(Waveform::Memristor),
            other => Err(ModelError::UnknownWaveform(other.to_string())),
        }
    }
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Waveform::Sinusoid => "sinusoid",
            Waveform::Memristor => "memristor",
        })
    }
}

/// `Omega_Q sin(mu_Q t) sum_j sigma_z,j`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitDrive {
    pub amplitude: f64,
    pub frequency: f64,
}

impl QubitDrive {
    pub fn coefficient(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t).sin()
    }
}

/// `F(t) (a + a^dagger)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityDrive {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub waveform: Waveform,
}

impl CavityDrive {
    pub fn value(&self, t: f64) -> f64 {
        match self.waveform {
            Waveform::Sinusoid => self.amplitude * (self.frequency * t).sin(),
            Waveform::Memristor => self.amplitude * (1.0 - (self.frequency * t).cos().sin()),
        }
    }
}

/// Physical parameters in units of the cavity frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub omega_r: f64,
    pub omega_q: f64,
    pub g: f64,
    /// Cavity decay rate (jump operator `a`).
    pub gamma_r: f64,
    /// Decay rate shared by every qubit (jump operators `sigma_j^-`).
    pub gamma_q: f64,
    pub qubit_drive: Option<QubitDrive>,
    pub cavity_drive: Option<CavityDrive>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            omega_r: 1.0,
            omega_q: 1.0,
            g: 0.05,
            gamma_r: 0.005,
            gamma_q: 0.005,
            qubit_drive: None,
            cavity_drive: None,
        }
    }
}

impl ModelParams {
    /// Checks hard constraints and returns soft warnings for parameters outside
    /// the regime where the rotating-wave model is trustworthy
    /// (`g/omega_r < 0.1`, `omega_q/omega_r` near 1).
    pub fn validate(&self) -> Result<Vec<String>, ModelError> {
        for (name, value) in [("gamma_r", self.gamma_r), ("gamma_q", self.gamma_q)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidRate { name, value });
            }
        }
        let mut finite = vec![
            ("omega_r", self.omega_r),
            ("omega_q", self.omega_q),
            ("g", self.g),
        ];
        if let Some(d) = self.qubit_drive {
            finite.push(("qubit_drive.amplitude", d.amplitude));
            finite.push(("qubit_drive.frequency", d.frequency));
        }
        if let Some(d) = self.cavity_drive {
            finite.push(("cavity_drive.amplitude", d.amplitude));
            finite.push(("cavity_drive.frequency", d.frequency));
        }
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { name, value });
            }
        }

        let mut warnings = Vec::new();
        let ratio = self.g.abs() / self.omega_r;
        if ratio >= 0.1 {
            warnings.push(format!(
                "g/omega_r = {ratio} is outside the rotating-wave regime g/omega_r < 0.1"
            ));
        }
        let detuning = (self.omega_q / self.omega_r - 1.0).abs();
        if detuning > 0.5 {
            warnings.push(format!(
                "omega_q/omega_r = {} is far from resonance; the rotating-wave model assumes omega_q ~ omega_r",
                self.omega_q / self.omega_r
            ));
        }
        Ok(warnings)
    }

    pub fn qubit_drive_coefficient(&self, t: f64) -> f64 {
        self.qubit_drive.map_or(0.0, |d| d.coefficient(t))
    }

    pub fn cavity_drive_value(&self, t: f64) -> f64 {
        self.cavity_drive.map_or(0.0, |d| d.value(t))
    }
}

/// Effective cavity decay rate `Gamma(t) = A (sin(B t) + C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRateModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl DecayRateModel {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// A time-independent rate.
    pub fn constant(rate: f64) -> Self {
        Self {
            a: rate,
            b: 0.0,
            c: 1.0,
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.a * ((self.b * t).sin() + self.c)
    }

    /// `int_0^t Gamma(s) ds`
    pub fn integrated(&self, t: f64) -> f64 {
        let oscillating = if self.b == 0.0 {
            0.0
        } else {
            (1.0 - (self.b * t).cos()) / self.b
        };
        self.a * (self.c * t + oscillating)
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `H_TC = omega_r a^dagger a + (omega_q / 2) sum_j sigma_z,j + g sum_j (sigma_j^- a^dagger + sigma_j^+ a)`
pub fn hamiltonian_tc(params: &ModelParams, ops: &OperatorSet) -> ComplexMatrix {
    let mut h = ops.number_op.scale(c(params.omega_r));
    for j in 0..ops.sigma_z.len() {
        h.add_scaled(c(0.5 * params.omega_q), &ops.sigma_z[j])
            .expect("operators share a layout");
        // sigma^- a^dagger = (sigma^+ a)^dagger; the product is formed in this
        // order so that a capped basis never routes through a dropped state.
        let raise_lower = matmul(&ops.sigma_plus[j], &ops.a).expect("same dim");
        let hop = &raise_lower + &raise_lower.dagger();
        h.add_scaled(c(params.g), &hop).expect("same dim");
    }
    h
}

/// `H(t) = H_TC + Omega_Q sin(mu_Q t) sum_j sigma_z,j + F(t) (a + a^dagger)`
pub fn hamiltonian_at(t: f64, params: &ModelParams, ops: &OperatorSet) -> ComplexMatrix {
    let mut h = hamiltonian_tc(params, ops);
    let s = params.qubit_drive_coefficient(t);
    if s != 0.0 {
        h.add_scaled(c(s), &ops.total_sigma_z()).expect("same dim");
    }
    let f = params.cavity_drive_value(t);
    if f != 0.0 {
        h.add_scaled(c(f), &ops.position()).expect("same dim");
    }
    h
}

/// `D[O] rho = O rho O^dagger - {O^dagger O, rho} / 2`
pub fn dissipator(o: &ComplexMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let od = o.dagger();
    let jump = matmul(&matmul(o, rho)?, &od)?;
    let anti = anticommutator(&matmul(&od, o)?, rho)?;
    Ok(&jump - &(&anti * 0.5))
}

/// Dense reference for the full master equation,
/// `-i[H(t), rho] + Gamma_R D[a] rho + Gamma_Q sum_j D[sigma_j^-] rho`.
pub fn lindblad_rhs(
    t: f64,
    rho: &ComplexMatrix,
    params: &ModelParams,
    ops: &OperatorSet,
) -> Result<ComplexMatrix, ModelError> {
    if rho.dim() != ops.dim() {
        return Err(LinalgError::DimensionMismatch {
            op: "lindblad_rhs",
            left: rho.dim(),
            right: ops.dim(),
        }
        .into());
    }
    let h = hamiltonian_at(t, params, ops);
    let mut out = commutator(&h, rho)?.scale(-I);
    out.add_scaled(c(params.gamma_r), &dissipator(&ops.a, rho)?)?;
    for sm in &ops.sigma_minus {
        out.add_scaled(c(params.gamma_q), &dissipator(sm, rho)?)?;
    }
    Ok(out)
}

/// Dense reference for the bare-cavity equation with a time-dependent rate,
/// `-i[omega_r a^dagger a, rho] + Gamma(t) D[a] rho`. `Gamma(t)` may be negative.
pub fn lindblad_rhs_tdecay(
    t: f64,
    rho: &ComplexMatrix,
    decay: &DecayRateModel,
    params: &ModelParams,
    ops: &OperatorSet,
) -> Result<ComplexMatrix, ModelError> {
    let n = ops.layout().n_qubits();
    if n > 0 {
        return Err(ModelError::QubitsPresent(n));
    }
    if rho.dim() != ops.dim() {
        return Err(LinalgError::DimensionMismatch {
            op: "lindblad_rhs_tdecay",
            left: rho.dim(),
            right: ops.dim(),
        }
        .into());
    }
    let h = ops.number_op.scale(c(params.omega_r));
    let mut out = commutator(&h, rho)?.scale(-I);
    out.add_scaled(c(decay.rate(t)), &dissipator(&ops.a, rho)?)?;
    Ok(out)
}

/// A linear generator `rho -> d rho / dt` on Hermitian matrices.
pub trait MasterEquation: Sync {
    fn dim(&self) -> usize;

    /// Writes `d rho / dt` at time `t` into `out`. `rho` must be Hermitian.
    fn rhs_into(&self, t: f64, rho: &ComplexMatrix, out: &mut ComplexMatrix);

    /// Whether the generator is of Lindblad form with non-negative rates, so
    /// the integrator may correct trace drift.
    fn is_completely_positive(&self) -> bool {
        true
    }

    fn rhs(&self, t: f64, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim());
        self.rhs_into(t, rho, &mut out);
        out
    }
}

/// Adds `M + M^dagger` with `M = -i K rho`, i.e. `-i (K rho - rho K^dagger)`
/// for Hermitian `rho`. `K` is the non-Hermitian effective Hamiltonian.
#[inline]
fn add_coherent_part(
    rho: &ComplexMatrix,
    out: &mut ComplexMatrix,
    scratch: &mut [C64],
    row_k: impl Fn(usize, &ComplexMatrix, &mut [C64]),
) {
    let d = rho.dim();
    for i in 0..d {
        scratch.fill(C64::new(0.0, 0.0));
        row_k(i, rho, scratch);
        for (j, &m) in scratch.iter().enumerate() {
            let z = out.get(i, j) + m;
            out.set(i, j, z);
            let w = out.get(j, i) + m.conj();
            out.set(j, i, w);
        }
    }
}

/// Adds `factor * L rho L^dagger`.
#[inline]
fn add_jump(
    l: &SparseMatrix,
    factor: f64,
    rho: &ComplexMatrix,
    out: &mut ComplexMatrix,
    scratch: &mut [C64],
) {
    let d = rho.dim();
    for i in 0..d {
        if l.row(i).next().is_none() {
            continue;
        }
        scratch.fill(C64::new(0.0, 0.0));
        l.row_times_dense(i, c(factor), rho, scratch);
        for j in 0..d {
            let mut acc = C64::new(0.0, 0.0);
            for (k, v) in l.row(j) {
                acc += scratch[k] * v.conj();
            }
            if acc != C64::new(0.0, 0.0) {
                let z = out.get(i, j) + acc;
                out.set(i, j, z);
            }
        }
    }
}

/// Compiled full model: cavity, qubits, both drives and all decay channels.
#[derive(Debug, Clone)]
pub struct LindbladEquation {
    params: ModelParams,
    dim: usize,
    /// `H_TC - (i/2) (Gamma_R a^dagger a + Gamma_Q sum_j sigma_j^+ sigma_j^-)`
    static_k: SparseMatrix,
    /// Diagonal of `sum_j sigma_z,j`.
    sigma_z_total: Vec<f64>,
    position: SparseMatrix,
    /// Jump operators paired with their rates.
    jumps: Vec<(SparseMatrix, f64)>,
}

impl LindbladEquation {
    pub fn new(params: &ModelParams, ops: &OperatorSet) -> Self {
        let mut k = hamiltonian_tc(params, ops);
        let mut decay = ops.number_op.scale(c(params.gamma_r));
        for (sp, sm) in ops.sigma_plus.iter().zip(&ops.sigma_minus) {
            decay.add_scaled(c(params.gamma_q), &matmul(sp, sm).expect("same dim"))
                .expect("same dim");
        }
        k.add_scaled(C64::new(0.0, -0.5), &decay).expect("same dim");

        let mut jumps = Vec::new();
        if params.gamma_r > 0.0 {
            jumps.push((SparseMatrix::from_dense(&ops.a), params.gamma_r));
        }
        if params.gamma_q > 0.0 {
            for sm in &ops.sigma_minus {
                jumps.push((SparseMatrix::from_dense(sm), params.gamma_q));
            }
        }
        Self {
            params: *params,
            dim: ops.dim(),
            static_k: SparseMatrix::from_dense(&k),
            sigma_z_total: ops.total_sigma_z().diagonal().iter().map(|z| z.re).collect(),
            position: SparseMatrix::from_dense(&ops.position()),
            jumps,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }
}

impl MasterEquation for LindbladEquation {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs_into(&self, t: f64, rho: &ComplexMatrix, out: &mut ComplexMatrix) {
        out.fill_zero();
        let mut scratch = vec![C64::new(0.0, 0.0); self.dim];
        let s = self.params.qubit_drive_coefficient(t);
        let f = self.params.cavity_drive_value(t);
        add_coherent_part(rho, out, &mut scratch, |i, rho, row| {
            self.static_k.row_times_dense(i, -I, rho, row);
            if s != 0.0 {
                let factor = -I * (s * self.sigma_z_total[i]);
                for (o, &r) in row.iter_mut().zip(rho.row(i)) {
                    *o += factor * r;
                }
            }
            if f != 0.0 {
                self.position.row_times_dense(i, -I * f, rho, row);
            }
        });
        for (l, rate) in &self.jumps {
            add_jump(l, *rate, rho, out, &mut scratch);
        }
    }
}

/// Compiled bare-cavity model with rate `Gamma(t) = A (sin(B t) + C)`.
#[derive(Debug, Clone)]
pub struct DecayingCavityEquation {
    omega_r: f64,
    decay: DecayRateModel,
    number: Vec<f64>,
    a: SparseMatrix,
}

impl DecayingCavityEquation {
    pub fn new(decay: DecayRateModel, params: &ModelParams, ops: &OperatorSet) -> Result<Self, ModelError> {
        let n = ops.layout().n_qubits();
        if n > 0 {
            return Err(ModelError::QubitsPresent(n));
        }
        Ok(Self {
            omega_r: params.omega_r,
            decay,
            number: ops.number_op.diagonal().iter().map(|z| z.re).collect(),
            a: SparseMatrix::from_dense(&ops.a),
        })
    }

    pub fn decay(&self) -> &DecayRateModel {
        &self.decay
    }
}

impl MasterEquation for DecayingCavityEquation {
    fn dim(&self) -> usize {
        self.number.len()
    }

    fn rhs_into(&self, t: f64, rho: &ComplexMatrix, out: &mut ComplexMatrix) {
        out.fill_zero();
        let d = self.dim();
        let mut scratch = vec![C64::new(0.0, 0.0); d];
        let gamma = self.decay.rate(t);
        // K = omega_r N - (i/2) Gamma(t) N is diagonal.
        add_coherent_part(rho, out, &mut scratch, |i, rho, row| {
            let k = C64::new(self.omega_r * self.number[i], -0.5 * gamma * self.number[i]);
            let factor = -I * k;
            for (o, &r) in row.iter_mut().zip(rho.row(i)) {
                *o += factor * r;
            }
        });
        if gamma != 0.0 {
            add_jump(&self.a, gamma, rho, out, &mut scratch);
        }
    }

    fn is_completely_positive(&self) -> bool {
        false
    }
}
