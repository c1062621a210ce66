//! Verification suites run from the command line.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, AuxParams, SimConfig, SimError};
use crate::estimators::{self, EstimatorError, SllnDiagnostics};
use crate::reference::{self, ReferenceCheck};
use crate::rng;
use crate::scenario::Scenario;
use crate::thresholds::{self, ThresholdError, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Lemma2,
    Comparison,
    Slln,
    Tables,
}

impl Target {
    pub fn as_str(self) -> &'static str {
        match self {
            Target::Lemma2 => "lemma2",
            Target::Comparison => "comparison",
            Target::Slln => "slln",
            Target::Tables => "tables",
        }
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("the tables target needs the parameters of a preset column")]
    NoReferenceColumn,
    #[error("n_paths must be >= 1")]
    NoPaths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn relative(name: &str, value: f64, expected: f64, tol: f64) -> Self {
        let rel = (value - expected).abs() / expected.abs();
        Check {
            name: name.into(),
            passed: rel <= tol,
            value,
            expected,
            tolerance: tol,
            detail: format!("relative error {rel:.3e}, tolerance {tol}"),
        }
    }

    fn flag(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.into(), passed, value: f64::from(u8::from(passed)), expected: 1.0, tolerance: 0.0, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub target: Target,
    pub n_paths: usize,
    pub base_seed: u64,
    pub checks: Vec<Check>,
    /// Formula against printed values, for the `tables` target.
    pub discrepancies: Vec<ReferenceCheck>,
    pub passed: bool,
}

fn finish(
    target: Target,
    n_paths: usize,
    base_seed: u64,
    checks: Vec<Check>,
    discrepancies: Vec<ReferenceCheck>,
) -> VerifyReport {
    let passed = checks.iter().all(|c| c.passed);
    VerifyReport { target, n_paths, base_seed, checks, discrepancies, passed }
}

pub fn run(scenario: &Scenario, target: Target, n_paths: usize, base_seed: u64) -> Result<VerifyReport, VerifyError> {
    if n_paths == 0 && target != Target::Tables {
        return Err(VerifyError::NoPaths);
    }
    match target {
        Target::Lemma2 => auxiliary_check(scenario, n_paths, base_seed),
        Target::Comparison => comparison(scenario, n_paths, base_seed),
        Target::Slln => slln(scenario, n_paths, base_seed),
        Target::Tables => tables(scenario),
    }
}

fn path_config(scenario: &Scenario, base_seed: u64, k: usize) -> SimConfig {
    SimConfig { seed: rng::path_seed(base_seed, k as u64), ..scenario.sim }
}

/// Ensemble means of the time averages of `Ψ, Ψ²` and `Ψ_m, Ψ_m²`.
pub fn auxiliary_averages(scenario: &Scenario, n_paths: usize, base_seed: u64) -> Result<[f64; 4], VerifyError> {
    let (m, n, j) = (&scenario.model, &scenario.noise, &scenario.jumps);
    let human = AuxParams::human(m, n, j);
    let mosquito = AuxParams::mosquito(m, n, j);
    let per_path: Vec<Result<[f64; 4], VerifyError>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let c = path_config(scenario, base_seed, k);
            let psi = engine::simulate_aux(&human, &c, scenario.init.s)?;
            let psi_m = engine::simulate_aux(&mosquito, &c, scenario.init.s_m)?;
            Ok([
                estimators::aux_average(&psi, 1)?,
                estimators::aux_average(&psi, 2)?,
                estimators::aux_average(&psi_m, 1)?,
                estimators::aux_average(&psi_m, 2)?,
            ])
        })
        .collect();
    let mut acc = [0.0; 4];
    for r in per_path {
        let v = r?;
        for k in 0..4 {
            acc[k] += v[k];
        }
    }
    Ok(acc.map(|v| v / n_paths as f64))
}

/// Closed-form limits of the time averages of `Ψ, Ψ², Ψ_m, Ψ_m²`.
pub fn auxiliary_limits(scenario: &Scenario) -> [f64; 4] {
    let m = &scenario.model;
    let (ups, ups_hat) = thresholds::upsilons(m, &scenario.noise, &scenario.jumps);
    [
        m.lambda_h / m.mu_h,
        2.0 * m.lambda_h * m.lambda_h / (m.mu_h * ups),
        m.lambda_m / m.mu_m,
        2.0 * m.lambda_m * m.lambda_m / (m.mu_m * ups_hat),
    ]
}

fn auxiliary_check(scenario: &Scenario, n_paths: usize, base_seed: u64) -> Result<VerifyReport, VerifyError> {
    let avg = auxiliary_averages(scenario, n_paths, base_seed)?;
    let lim = auxiliary_limits(scenario);
    let checks = vec![
        Check::relative("mean Psi", avg[0], lim[0], 0.05),
        Check::relative("mean Psi^2", avg[1], lim[1], 0.10),
        Check::relative("mean Psi_m", avg[2], lim[2], 0.05),
        Check::relative("mean Psi_m^2", avg[3], lim[3], 0.10),
    ];
    Ok(finish(Target::Lemma2, n_paths, base_seed, checks, vec![]))
}

/// Count of recorded points with `S − Ψ > slack` or `S_m − Ψ_m > slack`,
/// and the largest such excess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonStats {
    pub points: usize,
    pub violations: usize,
    pub max_excess: f64,
}

pub const COMPARISON_SLACK: f64 = 1e-9;

pub fn comparison_stats(scenario: &Scenario, n_paths: usize, base_seed: u64) -> Result<ComparisonStats, VerifyError> {
    let per_path: Vec<Result<ComparisonStats, VerifyError>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let c = path_config(scenario, base_seed, k);
            let (tr, psi, psi_m) =
                engine::simulate_coupled(&scenario.model, &scenario.noise, &scenario.jumps, &c, &scenario.init)?;
            let mut s = ComparisonStats { points: 0, violations: 0, max_excess: f64::NEG_INFINITY };
            for (x, (p, pm)) in tr.states.iter().zip(psi.values.iter().zip(&psi_m.values)) {
                let excess = (x.s - p).max(x.s_m - pm);
                s.points += 1;
                s.max_excess = s.max_excess.max(excess);
                if excess > COMPARISON_SLACK {
                    s.violations += 1;
                }
            }
            Ok(s)
        })
        .collect();
    let mut total = ComparisonStats { points: 0, violations: 0, max_excess: f64::NEG_INFINITY };
    for r in per_path {
        let s = r?;
        total.points += s.points;
        total.violations += s.violations;
        total.max_excess = total.max_excess.max(s.max_excess);
    }
    Ok(total)
}

fn comparison(scenario: &Scenario, n_paths: usize, base_seed: u64) -> Result<VerifyReport, VerifyError> {
    let s = comparison_stats(scenario, n_paths, base_seed)?;
    let checks = vec![Check::flag(
        "S <= Psi and S_m <= Psi_m",
        s.violations == 0,
        format!(
            "{} violations beyond {COMPARISON_SLACK} over {} points; max S - Psi excess {:e}",
            s.violations, s.points, s.max_excess
        ),
    )];
    Ok(finish(Target::Comparison, n_paths, base_seed, checks, vec![]))
}

/// Per-path martingale diagnostics from coupled runs.
pub fn slln_paths(scenario: &Scenario, n_paths: usize, base_seed: u64) -> Result<Vec<SllnDiagnostics>, VerifyError> {
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let c = path_config(scenario, base_seed, k);
            let (tr, psi, psi_m) =
                engine::simulate_coupled(&scenario.model, &scenario.noise, &scenario.jumps, &c, &scenario.init)?;
            Ok(estimators::slln_diagnostics(&tr, &scenario.noise, Some((&psi, &psi_m))))
        })
        .collect()
}

pub const SLLN_THRESHOLD: f64 = 0.05;
pub const SLLN_FRACTION: f64 = 0.95;

/// Per-term fraction of paths with `|M(T)/T| < SLLN_THRESHOLD`, and
/// per-term medians at each checkpoint.
pub fn slln_checks(diags: &[SllnDiagnostics]) -> Vec<Check> {
    let mut checks = Vec::new();
    let Some(first) = diags.first() else {
        return checks;
    };
    let n_cp = first.checkpoints.len();
    let quarter = first.checkpoints.iter().position(|&t| t >= 0.25 * first.checkpoints[n_cp - 1] - 1e-9);
    for (k, term) in first.terms.iter().enumerate() {
        let finals: Vec<f64> = diags.iter().map(|d| d.values[n_cp - 1][k]).collect();
        let frac = finals.iter().filter(|&&v| v < SLLN_THRESHOLD).count() as f64 / finals.len() as f64;
        checks.push(Check {
            name: format!("|M(T)/T| < {SLLN_THRESHOLD}: {term}"),
            passed: frac >= SLLN_FRACTION,
            value: frac,
            expected: SLLN_FRACTION,
            tolerance: 0.0,
            detail: format!("fraction of paths {frac:.3}, required >= {SLLN_FRACTION}"),
        });
        if let Some(q) = quarter {
            let median_at = |c: usize| {
                let mut v: Vec<f64> = diags.iter().map(|d| d.values[c][k]).collect();
                v.sort_by(f64::total_cmp);
                estimators::quantile(&v, 0.5)
            };
            let (early, late) = (median_at(q), median_at(n_cp - 1));
            checks.push(Check {
                name: format!("median decreases T/4 -> T: {term}"),
                passed: late < early,
                value: late,
                expected: early,
                tolerance: 0.0,
                detail: format!("median |M/t| {early:.4e} at T/4, {late:.4e} at T"),
            });
        }
    }
    checks
}

fn slln(scenario: &Scenario, n_paths: usize, base_seed: u64) -> Result<VerifyReport, VerifyError> {
    let diags = slln_paths(scenario, n_paths, base_seed)?;
    Ok(finish(Target::Slln, n_paths, base_seed, slln_checks(&diags), vec![]))
}

fn tables(scenario: &Scenario) -> Result<VerifyReport, VerifyError> {
    let column = reference::Column::of(scenario).ok_or(VerifyError::NoReferenceColumn)?;
    let refs = reference::table_for(scenario).ok_or(VerifyError::NoReferenceColumn)??;
    let mut checks: Vec<Check> = refs
        .iter()
        .map(|r| Check {
            name: r.quantity.clone(),
            passed: r.acceptable(),
            value: r.computed,
            expected: r.published,
            tolerance: r.tolerance,
            detail: match &r.known_discrepancy {
                Some(why) if r.status == reference::Status::Discrepancy => format!("known discrepancy: {why}"),
                _ => format!("{:?}", r.status),
            },
        })
        .collect();
    let report = thresholds::classify(&scenario.model, &scenario.noise, &scenario.jumps, scenario.p)?;
    let expected = match column {
        reference::Column::Extinction => Verdict::ExtinctionCertified,
        reference::Column::Persistence => Verdict::PersistenceCertified,
    };
    checks.push(Check::flag(
        "verdict",
        report.verdict == expected,
        format!("{} (expected {})", report.verdict.as_str(), expected.as_str()),
    ));
    let discrepancies = refs.into_iter().filter(|r| r.status == reference::Status::Discrepancy).collect();
    Ok(finish(Target::Tables, 0, 0, checks, discrepancies))
}
