//! Finite-horizon estimates of the long-run functionals and ensemble
//! aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, AuxTrajectory, MartingaleSample, SimConfig, SimError, Trajectory};
use crate::model::{ModelParams, NoiseParams};
use crate::rng;
use crate::scenario::Scenario;
use crate::thresholds;

/// Environment variable capping the number of ensemble workers.
pub const WORKERS_ENV: &str = "LEVYEPI_WORKERS";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("trajectory is empty or has zero duration")]
    Empty,
    #[error("{0} recorded points on the fitting window, need at least 2")]
    EmptyWindow(usize),
    #[error("infection reached zero at t = {0}; path is extinct by floor")]
    ExtinctByFloor(f64),
    #[error("n_paths must be >= 1")]
    NoPaths,
    #[error("every path failed; first error: {0}")]
    AllFailed(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Component of a four-compartment trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    S,
    I,
    SM,
    IM,
    /// `I + I_m`
    Infected,
}

impl Component {
    pub fn extract(self, traj: &Trajectory) -> Vec<f64> {
        traj.states
            .iter()
            .map(|x| match self {
                Component::S => x.s,
                Component::I => x.i,
                Component::SM => x.s_m,
                Component::IM => x.i_m,
                Component::Infected => x.infected(),
            })
            .collect()
    }
}

/// Trapezoidal `(1/T) ∫₀ᵀ x(s)^power ds` over the recorded points.
pub fn time_average(times: &[f64], values: &[f64], power: i32) -> Result<f64, EstimatorError> {
    if times.len() < 2 || times.len() != values.len() {
        return Err(EstimatorError::Empty);
    }
    let span = times[times.len() - 1] - times[0];
    if span <= 0.0 {
        return Err(EstimatorError::Empty);
    }
    // accumulated relative to the first value so constant paths are exact
    let base = values[0].powi(power);
    let mut acc = 0.0;
    for k in 1..times.len() {
        let (a, b) = (values[k - 1].powi(power) - base, values[k].powi(power) - base);
        acc += 0.5 * (a + b) * (times[k] - times[k - 1]);
    }
    Ok(base + acc / span)
}

pub fn trajectory_average(traj: &Trajectory, component: Component, power: i32) -> Result<f64, EstimatorError> {
    time_average(&traj.times, &component.extract(traj), power)
}

pub fn aux_average(traj: &AuxTrajectory, power: i32) -> Result<f64, EstimatorError> {
    time_average(&traj.times, &traj.values, power)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub std_err: f64,
    pub n_points: usize,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit, EstimatorError> {
    let n = x.len();
    if n < 2 {
        return Err(EstimatorError::EmptyWindow(n));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 {
        return Err(EstimatorError::EmptyWindow(n));
    }
    let slope = sxy / sxx;
    let std_err = if n > 2 {
        let sse: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - my - slope * (a - mx);
                r * r
            })
            .sum();
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit { slope, std_err, n_points: n })
}

/// Least-squares slope of `ln(λ₁I + λ₂I_m)` over the trailing half of the
/// horizon.
pub fn extinction_rate(traj: &Trajectory, params: &ModelParams) -> Result<LinearFit, EstimatorError> {
    let t_end = traj.t_end();
    if traj.times.len() < 2 || t_end <= 0.0 {
        return Err(EstimatorError::Empty);
    }
    let (l1, l2) = thresholds::extinction_weights(params);
    let start = 0.5 * t_end;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (t, x) in traj.times.iter().zip(&traj.states) {
        if *t < start {
            continue;
        }
        if x.i <= 0.0 || x.i_m <= 0.0 {
            return Err(EstimatorError::ExtinctByFloor(*t));
        }
        xs.push(*t);
        ys.push((l1 * x.i + l2 * x.i_m).ln());
    }
    linear_fit(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub n_paths: usize,
    pub bound: f64,
    pub fraction_positive: f64,
    pub fraction_above_bound: f64,
    pub mean_time_average: f64,
}

/// Fractions of paths whose time-averaged infection is positive and above
/// `bound`.
pub fn persistence_check(time_averages: &[f64], bound: f64) -> PersistenceReport {
    let n = time_averages.len();
    let frac = |pred: &dyn Fn(f64) -> bool| {
        if n == 0 {
            0.0
        } else {
            time_averages.iter().filter(|&&v| pred(v)).count() as f64 / n as f64
        }
    };
    PersistenceReport {
        n_paths: n,
        bound,
        fraction_positive: frac(&|v| v > 0.0),
        fraction_above_bound: frac(&|v| v > bound),
        mean_time_average: if n == 0 { 0.0 } else { time_averages.iter().sum::<f64>() / n as f64 },
    }
}

/// Normalized martingale `|M(t)/t|` for each monitored term at each
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SllnDiagnostics {
    pub checkpoints: Vec<f64>,
    pub terms: Vec<String>,
    /// `values[c][k]` is term `k` at checkpoint `c`.
    pub values: Vec<Vec<f64>>,
}

impl SllnDiagnostics {
    /// Largest term at each checkpoint.
    pub fn max_by_checkpoint(&self) -> Vec<f64> {
        self.values.iter().map(|row| row.iter().fold(0.0, |a: f64, &b| a.max(b))).collect()
    }

    pub fn final_max(&self) -> f64 {
        self.max_by_checkpoint().last().copied().unwrap_or(0.0)
    }
}

/// Monitors `σ₁∫S dB₁, σ₂∫I dB₂, σ₃∫S_m dB₃, σ₄∫I_m dB₄`, the compensated jump
/// integrals of `S, I, S_m, I_m`, and when the dominating processes are given
/// the jump integrals `∫ξ₁Ψ dÑ, ∫((1+ξ₁)²−1)Ψ² dÑ` and their `Ψ_m` analogues.
pub fn slln_diagnostics(
    traj: &Trajectory,
    noise: &NoiseParams,
    aux: Option<(&AuxTrajectory, &AuxTrajectory)>,
) -> SllnDiagnostics {
    let mut terms: Vec<String> = [
        "sigma1 S dB1",
        "sigma2 I dB2",
        "sigma3 S_m dB3",
        "sigma4 I_m dB4",
        "xi1 S dN",
        "xi2 I dN",
        "xi3 S_m dN",
        "xi4 I_m dN",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if aux.is_some() {
        for s in ["xi1 Psi dN", "xi1sq Psi^2 dN", "xi3 Psi_m dN", "xi3sq Psi_m^2 dN"] {
            terms.push(s.to_string());
        }
    }
    let mut checkpoints = Vec::new();
    let mut values = Vec::new();
    for (c, m) in traj.martingales.iter().enumerate() {
        if m.t <= 0.0 {
            continue;
        }
        let mut row: Vec<f64> = m
            .brownian
            .iter()
            .zip(noise.sigma)
            .map(|(v, s)| (s * v / m.t).abs())
            .chain(m.jump.iter().map(|v| (v / m.t).abs()))
            .collect();
        if let Some((psi, psi_m)) = aux {
            let add = |row: &mut Vec<f64>, s: &MartingaleSample| {
                row.push((s.jump[0] / s.t).abs());
                row.push((s.jump_sq[0] / s.t).abs());
            };
            add(&mut row, &psi.martingales[c]);
            add(&mut row, &psi_m.martingales[c]);
        }
        checkpoints.push(m.t);
        values.push(row);
    }
    SllnDiagnostics { checkpoints, terms, values }
}

/// Linear-interpolated quantile of sorted data, `q ∈ [0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub std_err: f64,
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl Distribution {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = if n == 0 { f64::NAN } else { sorted.iter().sum::<f64>() / n as f64 };
        let std_err = if n > 1 {
            let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Distribution {
            n,
            mean,
            std_err,
            min: quantile(&sorted, 0.0),
            q05: quantile(&sorted, 0.05),
            q25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
            q95: quantile(&sorted, 0.95),
            max: quantile(&sorted, 1.0),
        }
    }
}

/// Statistics of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub path: usize,
    pub seed: u64,
    pub terminal_i: f64,
    pub terminal_im: f64,
    pub time_avg_infection: f64,
    /// `None` when the path is extinct by floor.
    pub lyapunov_rate: Option<f64>,
    pub clamped: usize,
    pub steps: usize,
    pub jumps: usize,
    /// Time averages of `Ψ, Ψ², Ψ_m, Ψ_m²`.
    pub aux_avgs: [f64; 4],
    pub slln: SllnDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub path: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub n_failed: usize,
    pub failures: Vec<PathFailure>,
    /// Distribution of `I(T) + I_m(T)`.
    pub terminal_infection: Distribution,
    pub mean_time_avg_infection: f64,
    pub time_avg_infection_std_err: f64,
    /// Mean fitted slope over paths not extinct by floor.
    pub lyapunov_rate: f64,
    pub lyapunov_rate_std_err: f64,
    pub extinct_by_floor: usize,
    /// Ensemble means of the time averages of `Ψ, Ψ², Ψ_m, Ψ_m²`.
    pub aux_avgs: [f64; 4],
    /// Distribution over paths of the largest `|M(T)/T|`.
    pub slln_residuals: Distribution,
    pub clamp_rate: f64,
    pub mean_jump_count: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub summary: EnsembleSummary,
    pub paths: Vec<PathMetrics>,
}

fn run_path(scenario: &Scenario, path: usize, seed: u64) -> Result<PathMetrics, EstimatorError> {
    let config = SimConfig { seed, ..scenario.sim };
    let (traj, psi, psi_m) =
        engine::simulate_coupled(&scenario.model, &scenario.noise, &scenario.jumps, &config, &scenario.init)?;
    let last = traj.terminal().ok_or(EstimatorError::Empty)?;
    let lyapunov_rate = match extinction_rate(&traj, &scenario.model) {
        Ok(fit) => Some(fit.slope),
        Err(EstimatorError::ExtinctByFloor(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(PathMetrics {
        path,
        seed,
        terminal_i: last.i,
        terminal_im: last.i_m,
        time_avg_infection: trajectory_average(&traj, Component::Infected, 1)?,
        lyapunov_rate,
        clamped: traj.clamp_count + psi.clamp_count + psi_m.clamp_count,
        steps: traj.steps,
        jumps: traj.jump_events.len(),
        aux_avgs: [aux_average(&psi, 1)?, aux_average(&psi, 2)?, aux_average(&psi_m, 1)?, aux_average(&psi_m, 2)?],
        slln: slln_diagnostics(&traj, &scenario.noise, Some((&psi, &psi_m))),
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let d = Distribution::from_values(values);
    (d.mean, d.std_err)
}

/// Aggregates per-path metrics in path order.
pub fn summarize(paths: &[PathMetrics], failures: Vec<PathFailure>) -> EnsembleSummary {
    let terminal: Vec<f64> = paths.iter().map(|p| p.terminal_i + p.terminal_im).collect();
    let averages: Vec<f64> = paths.iter().map(|p| p.time_avg_infection).collect();
    let rates: Vec<f64> = paths.iter().filter_map(|p| p.lyapunov_rate).collect();
    let residuals: Vec<f64> = paths.iter().map(|p| p.slln.final_max()).collect();
    let (mean_avg, se_avg) = mean_se(&averages);
    let (mean_rate, se_rate) = mean_se(&rates);
    let n = paths.len().max(1) as f64;
    let mut aux = [0.0; 4];
    for p in paths {
        for (a, v) in aux.iter_mut().zip(p.aux_avgs) {
            *a += v;
        }
    }
    let steps: usize = paths.iter().map(|p| p.steps).sum();
    let clamped: usize = paths.iter().map(|p| p.clamped).sum();
    EnsembleSummary {
        n_paths: paths.len() + failures.len(),
        n_failed: failures.len(),
        failures,
        terminal_infection: Distribution::from_values(&terminal),
        mean_time_avg_infection: mean_avg,
        time_avg_infection_std_err: se_avg,
        lyapunov_rate: mean_rate,
        lyapunov_rate_std_err: se_rate,
        extinct_by_floor: paths.len() - rates.len(),
        aux_avgs: aux.map(|v| v / n),
        slln_residuals: Distribution::from_values(&residuals),
        clamp_rate: if steps == 0 { 0.0 } else { clamped as f64 / steps as f64 },
        mean_jump_count: paths.iter().map(|p| p.jumps as f64).sum::<f64>() / n,
    }
}

/// Worker count from `LEVYEPI_WORKERS`, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs `n_paths` coupled paths with seeds derived from `base_seed`.
/// Worker count comes from `LEVYEPI_WORKERS`.
pub fn ensemble_run(scenario: &Scenario, n_paths: usize, base_seed: u64) -> Result<Ensemble, EstimatorError> {
    ensemble_run_with_workers(scenario, n_paths, base_seed, workers_from_env())
}

pub fn ensemble_run_with_workers(
    scenario: &Scenario,
    n_paths: usize,
    base_seed: u64,
    workers: Option<usize>,
) -> Result<Ensemble, EstimatorError> {
    if n_paths == 0 {
        return Err(EstimatorError::NoPaths);
    }
    scenario.sim.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| EstimatorError::Pool(e.to_string()))?;
    let results: Vec<(usize, u64, Result<PathMetrics, EstimatorError>)> = pool.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|k| {
                let seed = rng::path_seed(base_seed, k as u64);
                (k, seed, run_path(scenario, k, seed))
            })
            .collect()
    });
    let mut paths = Vec::with_capacity(n_paths);
    let mut failures = Vec::new();
    for (path, seed, r) in results {
        match r {
            Ok(m) => paths.push(m),
            Err(e) => failures.push(PathFailure { path, seed, error: e.to_string() }),
        }
    }
    if paths.is_empty() {
        return Err(EstimatorError::AllFailed(failures[0].error.clone()));
    }
    let summary = summarize(&paths, failures);
    Ok(Ensemble { summary, paths })
}
