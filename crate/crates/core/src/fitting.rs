//! Least-squares power laws and the effective decay-rate fit.
//!
//! The decay-rate fit searches `Gamma(t) = A (sin(B t) + C)` so that the bare
//! cavity driven by `Gamma(t)` reproduces a target trace-distance curve. It
//! seeds from a coarse grid over the bounds and polishes the best seed with a
//! bounded Nelder-Mead simplex.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{evolve, CavityRecorder, IntegrationConfig, IntegrationError};
use crate::hilbert::{build_operators, LayoutError, SystemLayout};
use crate::linalg::ComplexMatrix;
use crate::measures::STEADY_EPS;
use crate::model::{DecayRateModel, DecayingCavityEquation, ModelParams};

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("entry {index} is {value}; the logarithm needs positive values")]
    NonPositive { index: usize, value: f64 },
    #[error("non-finite input at index {0}")]
    NonFinite(usize),
    #[error("bounds for {name} are empty or inverted: [{lower}, {upper}]")]
    BadBounds { name: &'static str, lower: f64, upper: f64 },
    #[error("invalid fit input: {0}")]
    BadInput(String),
    #[error("target trace distance ends at {0:e}, above the steady-state threshold")]
    TargetNotSteady(f64),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("integrating the decay model at A={a}, B={b}, C={c}: {source}")]
    Integration {
        a: f64,
        b: f64,
        c: f64,
        #[source]
        source: IntegrationError,
    },
}

/// Ordinary least-squares line `y = slope x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// The responses have zero variance, so `r_squared` is set to 1 by
    /// convention.
    pub degenerate: bool,
}

/// `N_D ~ exp(log_prefactor) n^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub k: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    pub degenerate: bool,
}

pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit, FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(FitError::TooFewPoints {
            needed: 2,
            got: xs.len(),
        });
    }
    if let Some(i) = (0..xs.len()).find(|&i| !xs[i].is_finite() || !ys[i].is_finite()) {
        return Err(FitError::NonFinite(i));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(FitError::BadInput("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    // Relative to the data scale, a spread this small is round-off.
    let scale = ys.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    let degenerate = ss_tot <= 1e-28 * scale;
    let r_squared = if degenerate {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(LinearFit {
        slope: if degenerate { 0.0 } else { slope },
        intercept: if degenerate { my } else { intercept },
        r_squared,
        degenerate,
    })
}

/// Least squares on `(ln n, ln N_D)`.
pub fn fit_power_law(ns: &[usize], nds: &[f64]) -> Result<PowerLawFit, FitError> {
    if ns.len() != nds.len() {
        return Err(FitError::LengthMismatch(ns.len(), nds.len()));
    }
    if ns.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            got: ns.len(),
        });
    }
    if let Some(i) = ns.iter().position(|&n| n == 0) {
        return Err(FitError::NonPositive { index: i, value: 0.0 });
    }
    if let Some(i) = nds.iter().position(|v| !(*v > 0.0)) {
        return Err(FitError::NonPositive {
            index: i,
            value: nds[i],
        });
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = nds.iter().map(|v| v.ln()).collect();
    let line = fit_linear(&xs, &ys)?;
    Ok(PowerLawFit {
        k: line.slope,
        log_prefactor: line.intercept,
        r_squared: line.r_squared,
        degenerate: line.degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadOptions {
    /// Stop when every vertex lies within this distance of the best one, in
    /// coordinates scaled to the unit box.
    pub diameter_tol: f64,
    pub max_evaluations: usize,
    /// Initial simplex edge in scaled coordinates.
    pub initial_step: f64,
    /// Fresh simplices built around the best point after convergence; a
    /// clamped simplex can collapse onto a face of the box.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            diameter_tol: 1e-6,
            max_evaluations: 2000,
            initial_step: 0.05,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    SimplexConverged,
    MaxEvaluations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub termination: Termination,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

struct Budget<'a, E> {
    f: &'a mut dyn FnMut(&[f64]) -> Result<f64, E>,
    lower: &'a [f64],
    width: Vec<f64>,
    used: usize,
    max: usize,
}

impl<E> Budget<'_, E> {
    /// `Ok(None)` once the budget is spent.
    fn eval(&mut self, u: &[f64]) -> Result<Option<f64>, E> {
        if self.used >= self.max {
            return Ok(None);
        }
        self.used += 1;
        let x: Vec<f64> = u
            .iter()
            .zip(self.lower)
            .zip(&self.width)
            .map(|((u, lo), w)| lo + u * w)
            .collect();
        let v = (self.f)(&x)?;
        Ok(Some(if v.is_nan() { f64::INFINITY } else { v }))
    }
}

fn clamp_unit(u: &mut [f64]) {
    for v in u {
        *v = v.clamp(0.0, 1.0);
    }
}

fn affine(base: &[f64], toward: &[f64], coef: f64) -> Vec<f64> {
    let mut out: Vec<f64> = base
        .iter()
        .zip(toward)
        .map(|(b, t)| b + coef * (t - b))
        .collect();
    clamp_unit(&mut out);
    out
}

/// Bounded Nelder-Mead: points are clamped into `[lower, upper]` and the
/// simplex works in coordinates scaled to the unit box. The evaluation
/// budget covers all restarts.
pub fn nelder_mead<E>(
    mut objective: impl FnMut(&[f64]) -> Result<f64, E>,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    options: &NelderMeadOptions,
) -> Result<NelderMeadOutcome, E> {
    let dim = start.len();
    assert!(dim > 0 && lower.len() == dim && upper.len() == dim);
    let width: Vec<f64> = lower
        .iter()
        .zip(upper)
        .map(|(lo, hi)| if hi > lo { hi - lo } else { 0.0 })
        .collect();
    let mut budget = Budget {
        f: &mut objective,
        lower,
        width,
        used: 0,
        max: options.max_evaluations.max(1),
    };
    let mut best = simplex_run(&mut budget, start, lower, options, None)?;
    for _ in 0..options.restarts {
        if best.termination == Termination::MaxEvaluations {
            break;
        }
        let again = simplex_run(&mut budget, &best.x, lower, options, Some(best.value))?;
        let improved = again.value < best.value - 1e-12 * best.value.abs();
        let termination = again.termination;
        if again.value <= best.value {
            best = again;
        }
        best.termination = termination;
        if !improved {
            break;
        }
    }
    best.evaluations = budget.used;
    Ok(best)
}

fn simplex_run<E>(
    budget: &mut Budget<'_, E>,
    start: &[f64],
    lower: &[f64],
    options: &NelderMeadOptions,
    start_value: Option<f64>,
) -> Result<NelderMeadOutcome, E> {
    let dim = start.len();
    let width = budget.width.clone();
    let to_unit = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(lower)
            .zip(&width)
            .map(|((x, lo), w)| if *w > 0.0 { ((x - lo) / w).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    };
    let finish = |simplex: &[(Vec<f64>, f64)], used, termination| {
        let (u, value) = &simplex[0];
        NelderMeadOutcome {
            x: u.iter()
                .zip(lower)
                .zip(&width)
                .map(|((u, lo), w)| lo + u * w)
                .collect(),
            value: *value,
            evaluations: used,
            termination,
        }
    };

    let u0 = to_unit(start);
    let f0 = match start_value {
        Some(f) => f,
        None => budget.eval(&u0)?.expect("budget is at least one"),
    };
    let mut simplex = vec![(u0.clone(), f0)];
    for i in 0..dim {
        let mut u = u0.clone();
        u[i] += if u[i] + options.initial_step <= 1.0 {
            options.initial_step
        } else {
            -options.initial_step
        };
        match budget.eval(&u)? {
            Some(f) => simplex.push((u, f)),
            None => {
                sort(&mut simplex);
                return Ok(finish(&simplex, budget.used, Termination::MaxEvaluations));
            }
        }
    }

    loop {
        sort(&mut simplex);
        let best = simplex[0].0.clone();
        let diameter = simplex[1..]
            .iter()
            .map(|(u, _)| {
                u.iter()
                    .zip(&best)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        if diameter < options.diameter_tol {
            return Ok(finish(&simplex, budget.used, Termination::SimplexConverged));
        }
        let mut centroid = vec![0.0; dim];
        for (u, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(u) {
                *c += v / dim as f64;
            }
        }
        let (worst, f_worst) = simplex[dim].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[dim - 1].1;

        macro_rules! eval_or_stop {
            ($u:expr) => {
                match budget.eval(&$u)? {
                    Some(f) => f,
                    None => return Ok(finish(&simplex, budget.used, Termination::MaxEvaluations)),
                }
            };
        }

        let reflected = affine(&centroid, &worst, -REFLECT);
        let f_r = eval_or_stop!(reflected);
        if f_r < f_best {
            let expanded = affine(&centroid, &reflected, EXPAND);
            let f_e = eval_or_stop!(expanded);
            simplex[dim] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < f_second {
            simplex[dim] = (reflected, f_r);
            continue;
        }
        let (contracted, accept_below) = if f_r < f_worst {
            (affine(&centroid, &reflected, CONTRACT), f_r)
        } else {
            (affine(&centroid, &worst, CONTRACT), f_worst)
        };
        let f_c = eval_or_stop!(contracted);
        if f_c < accept_below || (f_r < f_worst && f_c <= f_r) {
            simplex[dim] = (contracted, f_c);
            continue;
        }
        for i in 1..=dim {
            let u = affine(&best, &simplex[i].0, SHRINK);
            let f = eval_or_stop!(u);
            simplex[i] = (u, f);
        }
    }
}

fn sort(simplex: &mut [(Vec<f64>, f64)]) {
    // Stable, so ties keep their insertion order and runs are reproducible.
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
}

/// Box constraints on `(A, B, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayBounds {
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub c: (f64, f64),
}

impl Default for DecayBounds {
    fn default() -> Self {
        Self {
            a: (0.0, 0.5),
            b: (0.001, 0.2),
            c: (0.0, 2.0),
        }
    }
}

impl DecayBounds {
    pub fn validate(&self) -> Result<(), FitError> {
        for (name, (lower, upper)) in [("A", self.a), ("B", self.b), ("C", self.c)] {
            if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
                return Err(FitError::BadBounds { name, lower, upper });
            }
        }
        Ok(())
    }

    fn lower(&self) -> [f64; 3] {
        [self.a.0, self.b.0, self.c.0]
    }

    fn upper(&self) -> [f64; 3] {
        [self.a.1, self.b.1, self.c.1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayFitOptions {
    pub bounds: DecayBounds,
    /// Seed grid points per parameter, each at least 5.
    pub grid: [usize; 3],
    /// Number of best seeds polished by the simplex.
    pub starts: usize,
    pub simplex: NelderMeadOptions,
}

impl Default for DecayFitOptions {
    fn default() -> Self {
        Self {
            bounds: DecayBounds::default(),
            grid: [6, 9, 9],
            starts: 4,
            simplex: NelderMeadOptions::default(),
        }
    }
}

/// Outcome of [`fit_decay_rate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub decay: DecayRateModel,
    /// Sum of squared trace-distance differences at the returned point.
    pub residual: f64,
    /// Objective evaluations including the seed grid.
    pub evaluations: usize,
    /// Grid point the winning simplex started from.
    pub seed: DecayRateModel,
    pub seed_residual: f64,
    pub termination: Termination,
}

/// Qualitative reading of a fitted rate over the window `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayClassification {
    /// `A C`, the rate averaged over whole periods.
    pub mean_rate: f64,
    pub min_rate: f64,
    pub max_rate: f64,
    /// The oscillating part of `int Gamma`, `A (1 - cos(B t)) / B`, stays
    /// below a fifth of the drift `A C t_end` throughout the window.
    pub effectively_constant: bool,
    /// `Gamma(t) < 0` somewhere in the window.
    pub negative_excursion: bool,
}

pub fn classify_decay(decay: &DecayRateModel, t_end: f64) -> DecayClassification {
    let samples = 10_000;
    let (mut min_rate, mut max_rate, mut swing) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for k in 0..=samples {
        let t = t_end * k as f64 / samples as f64;
        let r = decay.rate(t);
        min_rate = min_rate.min(r);
        max_rate = max_rate.max(r);
        swing = swing.max((decay.integrated(t) - decay.a * decay.c * t).abs());
    }
    DecayClassification {
        mean_rate: decay.a * decay.c,
        min_rate,
        max_rate,
        effectively_constant: swing < 0.2 * decay.a * decay.c * t_end,
        negative_excursion: min_rate < 0.0,
    }
}

/// Trace distance to the vacuum of the bare cavity evolving from `rho0`
/// under `decay`, sampled on the grid of `config`.
pub fn decay_model_curve(
    decay: &DecayRateModel,
    rho0_cavity: &ComplexMatrix,
    config: &IntegrationConfig,
) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    let layout = SystemLayout::new(0, rho0_cavity.dim())?;
    let ops = build_operators(&layout)?;
    let eq = DecayingCavityEquation::new(*decay, &ModelParams::default(), &ops)
        .map_err(|e| FitError::BadInput(e.to_string()))?;
    let mut recorder = CavityRecorder::new(&ops);
    let traj = evolve(rho0_cavity, &eq, config, &mut recorder).map_err(|source| {
        FitError::Integration {
            a: decay.a,
            b: decay.b,
            c: decay.c,
            source,
        }
    })?;
    let d = traj.series("D_S").expect("cavity recorder column").to_vec();
    Ok((traj.times, d))
}

/// Linear interpolation on sorted `times`, clamped to the end values.
pub fn interpolate_linear(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => values[i],
        Err(0) => values[0],
        Err(i) if i >= times.len() => values[times.len() - 1],
        Err(i) => {
            let (t0, t1) = (times[i - 1], times[i]);
            let w = (t - t0) / (t1 - t0);
            values[i - 1] * (1.0 - w) + values[i] * w
        }
    }
}

/// Fit objective: `sum_k (D_target(t_k) - D_model(t_k))^2`.
pub struct DecayObjective<'a> {
    times: &'a [f64],
    target: &'a [f64],
    rho0: &'a ComplexMatrix,
    config: IntegrationConfig,
}

impl<'a> DecayObjective<'a> {
    pub fn new(
        times: &'a [f64],
        target: &'a [f64],
        rho0_cavity: &'a ComplexMatrix,
        config: &IntegrationConfig,
    ) -> Result<Self, FitError> {
        if times.len() != target.len() {
            return Err(FitError::LengthMismatch(times.len(), target.len()));
        }
        if times.len() < 2 {
            return Err(FitError::TooFewPoints {
                needed: 2,
                got: times.len(),
            });
        }
        if let Some(i) = (0..times.len()).find(|&i| !times[i].is_finite() || !target[i].is_finite()) {
            return Err(FitError::NonFinite(i));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
            return Err(FitError::BadInput(
                "target times must be non-negative and strictly increasing".into(),
            ));
        }
        let t_end = *times.last().expect("non-empty");
        Ok(Self {
            times,
            target,
            rho0: rho0_cavity,
            config: IntegrationConfig {
                t_max: t_end,
                early_stop: false,
                ..*config
            },
        })
    }

    pub fn evaluate(&self, decay: &DecayRateModel) -> Result<f64, FitError> {
        let (mt, md) = decay_model_curve(decay, self.rho0, &self.config)?;
        Ok(self
            .times
            .iter()
            .zip(self.target)
            .map(|(&t, &d)| (d - interpolate_linear(&mt, &md, t)).powi(2))
            .sum())
    }
}

/// `steps` points from `lo` to `hi`; `power > 1` packs them toward `lo`.
fn grid_axis(bounds: (f64, f64), steps: usize, power: i32) -> Vec<f64> {
    if steps == 1 || bounds.0 == bounds.1 {
        return vec![bounds.0; steps.max(1)];
    }
    (0..steps)
        .map(|i| {
            let s = (i as f64 / (steps - 1) as f64).powi(power);
            bounds.0 + (bounds.1 - bounds.0) * s
        })
        .collect()
}

/// Fits `Gamma(t) = A (sin(B t) + C)` to a target trace-distance curve.
pub fn fit_decay_rate(
    times: &[f64],
    target: &[f64],
    rho0_cavity: &ComplexMatrix,
    config: &IntegrationConfig,
    options: &DecayFitOptions,
) -> Result<DecayFit, FitError> {
    options.bounds.validate()?;
    if let Some(&steps) = options.grid.iter().find(|&&s| s < 5) {
        return Err(FitError::BadInput(format!(
            "seed grid needs at least 5 points per parameter, got {steps}"
        )));
    }
    let objective = DecayObjective::new(times, target, rho0_cavity, config)?;
    let last = *target.last().expect("checked by objective");
    if last >= STEADY_EPS {
        return Err(FitError::TargetNotSteady(last));
    }

    let b = &options.bounds;
    // Fitted rates are small compared with the bounds, so the grid is packed
    // toward the lower ends.
    let seeds: Vec<DecayRateModel> = grid_axis(b.a, options.grid[0], 2)
        .into_iter()
        .flat_map(|a| {
            grid_axis(b.b, options.grid[1], 2).into_iter().flat_map(move |bb| {
                grid_axis(b.c, options.grid[2], 2)
                    .into_iter()
                    .map(move |c| DecayRateModel::new(a, bb, c))
            })
        })
        .collect();
    let values: Vec<f64> = seeds
        .par_iter()
        .map(|s| objective.evaluate(s))
        .collect::<Result<_, _>>()?;
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut evaluations = seeds.len();
    let mut best: Option<DecayFit> = None;
    for &i in order.iter().take(options.starts.max(1)) {
        let seed = seeds[i];
        let outcome = nelder_mead(
            |x| objective.evaluate(&DecayRateModel::new(x[0], x[1], x[2])),
            &[seed.a, seed.b, seed.c],
            &b.lower(),
            &b.upper(),
            &options.simplex,
        )?;
        evaluations += outcome.evaluations;
        let (decay, residual) = if outcome.value <= values[i] {
            (
                DecayRateModel::new(outcome.x[0], outcome.x[1], outcome.x[2]),
                outcome.value,
            )
        } else {
            (seed, values[i])
        };
        if best.as_ref().is_none_or(|f| residual < f.residual) {
            best = Some(DecayFit {
                decay,
                residual,
                evaluations: 0,
                seed,
                seed_residual: values[i],
                termination: outcome.termination,
            });
        }
    }
    let mut fit = best.expect("at least one start");
    fit.evaluations = evaluations;
    Ok(fit)
}
