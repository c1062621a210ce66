//! Closed-form extinction and persistence thresholds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, AssumptionReport, JumpMeasure, ModelError, ModelParams, NoiseParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("extinction threshold undefined: {name} = {value} is not positive")]
    Undefined { name: &'static str, value: f64 },
    #[error("thresholds are only defined for mass-action incidence (a = 0), got a = {0}")]
    Saturated(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    ExtinctionCertified,
    PersistenceCertified,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::ExtinctionCertified => "ExtinctionCertified",
            Verdict::PersistenceCertified => "PersistenceCertified",
            Verdict::Indeterminate => "Indeterminate",
        }
    }
}

/// The three constants entering `κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrakConstants {
    /// Jump contribution through the ramp indicators.
    pub b: f64,
    /// Cauchy-Schwarz bound of the Brownian contribution.
    pub c: f64,
    /// Ramp-function split of the deterministic growth.
    pub d: f64,
}

/// The five additive terms of `κ`, kept separate for inspection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaTerms {
    pub frak_d: f64,
    pub frak_c: f64,
    pub frak_b: f64,
    pub human_aux: f64,
    pub mosquito_aux: f64,
}

impl KappaTerms {
    pub fn kappa(&self) -> f64 {
        self.frak_d - self.frak_c - self.frak_b + self.human_aux + self.mosquito_aux
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistenceWeights {
    pub theta1: f64,
    pub theta3: f64,
    pub theta4: f64,
    /// Lower bound for the long-run time average of `I + I_m`.
    pub bound: f64,
}

/// Every closed-form quantity for a scenario, flattened for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub r0: f64,
    pub upsilon: f64,
    pub upsilon_hat: f64,
    pub frak_b: f64,
    pub frak_c: f64,
    pub frak_d: f64,
    pub kappa: f64,
    /// Coarser threshold obtained with absolute values instead of ramps.
    pub k_coarse: f64,
    pub m_values: [f64; 4],
    pub r0_tilde: f64,
    pub theta1: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub persistence_bound: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
    pub a4: bool,
    pub a5: bool,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

fn ensure_mass_action(params: &ModelParams) -> Result<(), ThresholdError> {
    if params.a != 0.0 {
        return Err(ThresholdError::Saturated(params.a));
    }
    Ok(())
}

/// Second-moment decay constants of the two auxiliary processes.
pub fn upsilons(params: &ModelParams, noise: &NoiseParams, jumps: &JumpMeasure) -> (f64, f64) {
    let s = &noise.sigma;
    let upsilon = 2.0 * params.mu_h - s[0] * s[0] - jumps.integrate(|a| a.xi[0] * a.xi[0]);
    let upsilon_hat = 2.0 * params.mu_m - s[2] * s[2] - jumps.integrate(|a| a.xi[2] * a.xi[2]);
    (upsilon, upsilon_hat)
}

fn log_excess(x: f64) -> f64 {
    x - x.ln_1p()
}

/// Per-atom ramp contributions: the lower branch fires when both infected
/// jumps are positive, the upper branch when both are non-positive.
fn frak_b_atom(xi2: f64, xi4: f64) -> f64 {
    let lo = xi2.min(xi4);
    let hi = xi2.max(xi4);
    let under = if lo > 0.0 { log_excess(lo) } else { 0.0 };
    let over = if hi <= 0.0 { log_excess(hi) } else { 0.0 };
    under + over
}

pub fn frak_constants(params: &ModelParams, noise: &NoiseParams, jumps: &JumpMeasure) -> FrakConstants {
    let b = jumps.integrate(|a| frak_b_atom(a.xi[1], a.xi[3]));

    let (s2, s4) = (noise.sigma[1], noise.sigma[3]);
    let denom = s2 * s2 + s4 * s4;
    // 0/0 when both intensities vanish; the bound degenerates to zero
    let c = if denom > 0.0 { (s2 * s4).powi(2) / (2.0 * denom) } else { 0.0 };

    let sqrt_r0 = model::deterministic_r0(params).sqrt();
    let removal = params.mu_h + params.rho();
    let d = removal.max(params.mu_m) * (sqrt_r0 - 1.0).max(0.0) - removal.min(params.mu_m) * (1.0 - sqrt_r0).max(0.0);

    FrakConstants { b, c, d }
}

pub fn kappa_terms(
    params: &ModelParams,
    noise: &NoiseParams,
    jumps: &JumpMeasure,
) -> Result<KappaTerms, ThresholdError> {
    let (upsilon, upsilon_hat) = upsilons(params, noise, jumps);
    if upsilon <= 0.0 {
        return Err(ThresholdError::Undefined { name: "upsilon", value: upsilon });
    }
    if upsilon_hat <= 0.0 {
        return Err(ThresholdError::Undefined { name: "upsilon_hat", value: upsilon_hat });
    }
    let frak = frak_constants(params, noise, jumps);
    let sqrt_r0 = model::deterministic_r0(params).sqrt();
    // Υ ≤ 2μ always; the max guards against rounding just below zero
    let rad_h = (2.0 * params.mu_h / upsilon - 1.0).max(0.0);
    let rad_m = (2.0 * params.mu_m / upsilon_hat - 1.0).max(0.0);
    Ok(KappaTerms {
        frak_d: frak.d,
        frak_c: frak.c,
        frak_b: frak.b,
        human_aux: 0.5 * params.mu_m * sqrt_r0 * rad_h.sqrt(),
        mosquito_aux: 0.5 * (params.mu_h + params.rho()) * sqrt_r0 * rad_m.sqrt(),
    })
}

/// Extinction threshold; `κ < 0` certifies exponential extinction.
pub fn kappa(params: &ModelParams, noise: &NoiseParams, jumps: &JumpMeasure) -> Result<f64, ThresholdError> {
    ensure_mass_action(params)?;
    Ok(kappa_terms(params, noise, jumps)?.kappa())
}

/// Threshold of the same shape as `κ` but with absolute-value bounds in
/// place of the ramp function; always at least `κ`.
pub fn coarse_threshold(params: &ModelParams, noise: &NoiseParams, jumps: &JumpMeasure) -> Result<f64, ThresholdError> {
    let t = kappa_terms(params, noise, jumps)?;
    let (upsilon, upsilon_hat) = upsilons(params, noise, jumps);
    let r0 = model::deterministic_r0(params);
    let rad_h = (2.0 * params.mu_h / upsilon - 1.0).max(0.0);
    let rad_m = (2.0 * params.mu_m / upsilon_hat - 1.0).max(0.0);
    Ok(t.frak_d - t.frak_c - t.frak_b
        + params.mu_m * (r0 * rad_h).sqrt()
        + (params.mu_h + params.rho()) * (r0 * rad_m).sqrt())
}

/// Effective per-compartment decay rates `M₁..M₄` under noise and jumps.
pub fn m_values(params: &ModelParams, noise: &NoiseParams, jumps: &JumpMeasure) -> [f64; 4] {
    let base = [params.mu_h, params.mu_h + params.rho(), params.mu_m, params.mu_m];
    std::array::from_fn(|k| base[k] + 0.5 * noise.sigma[k] * noise.sigma[k] + jumps.integrate(|a| log_excess(a.xi[k])))
}

fn transmission_product(params: &ModelParams) -> f64 {
    params.b * params.b * params.beta * params.beta_m * params.lambda_h * params.lambda_m
}

/// `b²ββ̂ΛΛ̂ / (M₁M₂M₃M₄)` for given decay rates.
pub fn r0_tilde_from(params: &ModelParams, m: &[f64; 4]) -> f64 {
    transmission_product(params) / m.iter().product::<f64>()
}

/// Persistence threshold; `R̃₀ > 1` certifies persistence in the mean.
pub fn r0_tilde(params: &ModelParams, noise: &NoiseParams, jumps: &JumpMeasure) -> f64 {
    r0_tilde_from(params, &m_values(params, noise, jumps))
}

pub fn persistence_weights_from(params: &ModelParams, m: &[f64; 4]) -> PersistenceWeights {
    let num = transmission_product(params);
    let [m1, m2, m3, m4] = *m;
    let theta1 = num / (m1 * m1 * m3 * m4);
    let theta3 = num / (m1 * m3 * m3 * m4);
    let theta4 = num / (m1 * m3 * m4 * m4);
    let r0t = r0_tilde_from(params, m);
    let bound = m2 * (r0t - 1.0) / (params.b * (theta1 * params.beta).max(theta3 * params.beta_m));
    PersistenceWeights { theta1, theta3, theta4, bound }
}

pub fn persistence_weights_and_bound(
    params: &ModelParams,
    noise: &NoiseParams,
    jumps: &JumpMeasure,
) -> PersistenceWeights {
    persistence_weights_from(params, &m_values(params, noise, jumps))
}

/// Weights `(λ₁, λ₂)` of the log-Lyapunov functional `ln(λ₁I + λ₂I_m)`.
pub fn extinction_weights(params: &ModelParams) -> (f64, f64) {
    let r0 = model::deterministic_r0(params);
    let lambda1 =
        params.b * params.beta_m * params.lambda_m / (params.mu_m * params.mu_m * (params.mu_h + params.rho()));
    (lambda1, r0.sqrt() / params.mu_m)
}

pub fn classify(
    params: &ModelParams,
    noise: &NoiseParams,
    jumps: &JumpMeasure,
    p: f64,
) -> Result<ThresholdReport, ThresholdError> {
    ensure_mass_action(params)?;
    let assumptions: AssumptionReport = model::validate(params, noise, jumps, p)?;
    let terms = kappa_terms(params, noise, jumps)?;
    let kappa = terms.kappa();
    let k_coarse = coarse_threshold(params, noise, jumps)?;
    let (upsilon, upsilon_hat) = upsilons(params, noise, jumps);
    let m = m_values(params, noise, jumps);
    let r0_tilde = r0_tilde_from(params, &m);
    let weights = persistence_weights_from(params, &m);
    let (lambda1, lambda2) = extinction_weights(params);

    let mut warnings = Vec::new();
    let all = assumptions.all_hold();
    if !all {
        let failed: Vec<String> = assumptions
            .verdicts
            .iter()
            .enumerate()
            .filter(|(_, &ok)| !ok)
            .map(|(k, _)| format!("A{}", k + 1))
            .collect();
        warnings.push(format!("assumptions not satisfied: {}", failed.join(", ")));
    }
    let extinct = kappa < 0.0;
    let persistent = r0_tilde > 1.0;
    let verdict = match (all, extinct, persistent) {
        (true, true, false) => Verdict::ExtinctionCertified,
        (true, false, true) => Verdict::PersistenceCertified,
        (_, true, true) => {
            warnings.push(format!("inconsistent certificates: kappa = {kappa} < 0 and r0_tilde = {r0_tilde} > 1"));
            Verdict::Indeterminate
        }
        _ => Verdict::Indeterminate,
    };

    let v = assumptions.verdicts;
    Ok(ThresholdReport {
        r0: model::deterministic_r0(params),
        upsilon,
        upsilon_hat,
        frak_b: terms.frak_b,
        frak_c: terms.frak_c,
        frak_d: terms.frak_d,
        kappa,
        k_coarse,
        m_values: m,
        r0_tilde,
        theta1: weights.theta1,
        theta3: weights.theta3,
        theta4: weights.theta4,
        persistence_bound: weights.bound,
        lambda1,
        lambda2,
        a1: v[0],
        a2: v[1],
        a3: v[2],
        a4: v[3],
        a5: v[4],
        verdict,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn col3() -> Scenario {
        Scenario::preset("table1-extinction").unwrap()
    }

    fn col4() -> Scenario {
        Scenario::preset("table1-persistence").unwrap()
    }

    #[test]
    fn upsilon_values() {
        let s = col3();
        let (u, uh) = upsilons(&s.model, &s.noise, &s.jumps);
        assert!((u - 0.9651).abs() < 1e-4);
        assert!((uh - 0.9275).abs() < 1e-4);

        let s4 = col4();
        let (_, uh4) = upsilons(&s4.model, &s4.noise, &s4.jumps);
        assert!((uh4 - (2.0 * 0.88 - 0.245 * 0.245 - 0.81)).abs() < 1e-12);

        let mut quiet = s.noise;
        quiet.sigma[0] = 0.0;
        let (u0, _) = upsilons(&s.model, &quiet, &JumpMeasure::empty());
        assert_eq!(u0, 2.0 * s.model.mu_h);
    }

    #[test]
    fn frak_values() {
        let s = col3();
        let f = frak_constants(&s.model, &s.noise, &s.jumps);
        assert!((f.b - 0.2122).abs() < 1e-3);
        assert!((f.d + 0.4854).abs() < 1e-3);
        let c_by_hand = (0.25_f64 * 0.13).powi(2) / (2.0 * (0.0625 + 0.0169));
        assert!((f.c - c_by_hand).abs() < 1e-15);
        assert!((f.c - 0.00665).abs() < 1e-5);

        let z = JumpMeasure::single([-0.5, 0.0, 0.3, 0.0]).unwrap();
        assert_eq!(frak_constants(&s.model, &s.noise, &z).b, 0.0);
        assert_eq!(frak_constants(&s.model, &NoiseParams::zero(), &z).c, 0.0);
    }

    #[test]
    fn frak_b_mixed_signs_contribute_nothing() {
        assert_eq!(frak_b_atom(0.5, -0.2), 0.0);
        assert!(frak_b_atom(-0.2, -0.5) > 0.0);
        assert!((frak_b_atom(0.8, 0.85) - (0.8 - 0.8_f64.ln_1p())).abs() < 1e-15);
    }

    #[test]
    fn kappa_term_by_term() {
        let s = col3();
        let (m, n, j) = (&s.model, &s.noise, &s.jumps);
        let r0: f64 = 9.0 * 0.15 * 0.5 * 0.55 * 0.6 / (0.8 * 1.62 * 0.81);
        let ups: f64 = 1.6 - 0.269 * 0.269 - 0.5625;
        let ups_h: f64 = 1.8 - 0.0625 - 0.81;
        let d = -(0.9_f64.min(1.62)) * (1.0 - r0.sqrt());
        let c = (0.25_f64 * 0.13).powi(2) / (2.0 * (0.0625 + 0.0169));
        let b = 0.8 - 1.8_f64.ln();
        let t4 = 0.9 * r0.sqrt() / 2.0 * (1.6 / ups - 1.0).sqrt();
        let t5 = 1.62 * r0.sqrt() / 2.0 * (1.8 / ups_h - 1.0).sqrt();
        let terms = kappa_terms(m, n, j).unwrap();
        assert!((terms.frak_d - d).abs() < 1e-12);
        assert!((terms.frak_c - c).abs() < 1e-12);
        assert!((terms.frak_b - b).abs() < 1e-12);
        assert!((terms.human_aux - t4).abs() < 1e-12);
        assert!((terms.mosquito_aux - t5).abs() < 1e-12);
        let k = kappa(m, n, j).unwrap();
        assert!((k - (d - c - b + t4 + t5)).abs() < 1e-12);
        assert!((k + 0.174_277_786_438_793).abs() < 1e-9);
        // substituting the printed 0.026 for the Cauchy-Schwarz term
        let k_printed_c = k + terms.frak_c - 0.026;
        assert!((k_printed_c + 0.2044).abs() < 2e-2);
    }

    #[test]
    fn kappa_zero_when_everything_vanishes() {
        let s = col3();
        let mut m = s.model;
        m.beta *= 1.0 / model::deterministic_r0(&m);
        let k = kappa(&m, &NoiseParams::zero(), &JumpMeasure::empty()).unwrap();
        assert!(k.abs() < 1e-12, "{k}");
    }

    #[test]
    fn kappa_undefined_for_nonpositive_upsilon() {
        let s = col3();
        let n = NoiseParams::new([1.5, 0.1, 0.1, 0.1]);
        assert!(matches!(
            kappa(&s.model, &n, &JumpMeasure::empty()),
            Err(ThresholdError::Undefined { name: "upsilon", .. })
        ));
    }

    #[test]
    fn m_values_column4() {
        let s = col4();
        let m = m_values(&s.model, &s.noise, &s.jumps);
        assert!((m[0] - 1.4725).abs() < 1e-3);
        let want = [1.472_474_861_119_890_6, 2.084_636_635_696_006, 2.312_597_592_994_046, 1.124_614_360_909_766_5];
        for k in 0..4 {
            assert!((m[k] - want[k]).abs() < 1e-12);
        }
        // the printed M₄ = 1.1433 follows from μ̂ = 0.9, σ₄ = 0.13
        let col3_m = m_values(&col3().model, &col3().noise, &col3().jumps);
        assert!((col3_m[3] - 1.1433).abs() < 1e-4);
        assert!((col3_m[2] - 2.3338).abs() < 1e-4);
    }

    #[test]
    fn m_values_without_noise_are_rates() {
        let s = col3();
        let m = m_values(&s.model, &NoiseParams::zero(), &JumpMeasure::empty());
        assert_eq!(m, [0.8, 0.8 + 0.82, 0.9, 0.9]);
        let r = r0_tilde(&s.model, &NoiseParams::zero(), &JumpMeasure::empty());
        assert!((r - model::deterministic_r0(&s.model)).abs() < 1e-15);
    }

    #[test]
    fn r0_tilde_values() {
        let s = col4();
        let printed = [1.4725, 2.0935, 2.3338, 1.1433];
        assert!((r0_tilde_from(&s.model, &printed) - 1.0862).abs() < 1e-3);
        let own = r0_tilde(&s.model, &s.noise, &s.jumps);
        assert!((own - 1.119_077_987_417_066_9).abs() < 1e-12);
    }

    #[test]
    fn persistence_bound() {
        let s = col4();
        let w = persistence_weights_and_bound(&s.model, &s.noise, &s.jumps);
        assert!((w.bound - 0.034_435_597_671_053_81).abs() < 1e-12);
        let m = m_values(&s.model, &s.noise, &s.jumps);
        assert!((w.theta1 / w.theta3 - m[2] / m[0]).abs() < 1e-12);

        // R̃₀ tuned to one
        let mut p = s.model;
        p.beta /= r0_tilde(&s.model, &s.noise, &s.jumps);
        let w1 = persistence_weights_and_bound(&p, &s.noise, &s.jumps);
        assert!(w1.bound.abs() < 1e-12);
    }

    #[test]
    fn verdicts() {
        let s = col3();
        let r = classify(&s.model, &s.noise, &s.jumps, 2.5).unwrap();
        assert_eq!(r.verdict, Verdict::ExtinctionCertified);
        assert!(r.k_coarse > 0.0);
        assert!((r.k_coarse - 0.355_731_111_788_590_4).abs() < 1e-9);
        let s = col4();
        let r = classify(&s.model, &s.noise, &s.jumps, 2.5).unwrap();
        assert_eq!(r.verdict, Verdict::PersistenceCertified);
        assert!(r.r0_tilde > 1.0);
    }

    #[test]
    fn negligible_transmission_is_extinction() {
        let s = col3();
        let mut m = s.model;
        m.beta = 1e-12;
        m.beta_m = 1e-12;
        let n = NoiseParams::new([0.05, 0.05, 0.05, 0.05]);
        let r = classify(&m, &n, &JumpMeasure::empty(), 2.5).unwrap();
        assert!(r.kappa < 0.0);
        assert_eq!(r.verdict, Verdict::ExtinctionCertified);
    }

    #[test]
    fn saturated_model_rejected() {
        let mut s = col3();
        s.model.a = 0.5;
        assert!(matches!(classify(&s.model, &s.noise, &s.jumps, 2.5), Err(ThresholdError::Saturated(_))));
    }

    #[test]
    fn report_serializes_flat() {
        let s = col3();
        let r = classify(&s.model, &s.noise, &s.jumps, 2.5).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["verdict"], "ExtinctionCertified");
        for key in [
            "r0",
            "upsilon",
            "upsilon_hat",
            "frak_b",
            "frak_c",
            "frak_d",
            "kappa",
            "r0_tilde",
            "theta1",
            "theta3",
            "theta4",
            "persistence_bound",
            "lambda1",
            "lambda2",
        ] {
            assert!(v[key].is_number(), "{key}");
        }
        assert_eq!(v["m_values"].as_array().unwrap().len(), 4);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn params(beta: f64) -> ModelParams {
        ModelParams {
            lambda_h: 0.5,
            b: 3.0,
            beta,
            a: 0.0,
            mu_h: 0.8,
            rho0: 0.8,
            rho1: 0.02,
            lambda_m: 0.6,
            beta_m: 0.55,
            mu_m: 0.9,
        }
    }

    proptest! {
        #[test]
        fn noiseless_r0_tilde_matches_r0(beta in 0.001..5.0f64) {
            let p = params(beta);
            let r = r0_tilde(&p, &NoiseParams::zero(), &JumpMeasure::empty());
            let r0 = model::deterministic_r0(&p);
            prop_assert!((r - r0).abs() <= 1e-14 * r0.max(1.0));
            let f = frak_constants(&p, &NoiseParams::zero(), &JumpMeasure::empty());
            prop_assert_eq!(f.b, 0.0);
            prop_assert_eq!(f.c, 0.0);
        }

        #[test]
        fn frak_d_sign_tracks_r0(beta in 0.001..5.0f64) {
            let p = params(beta);
            let f = frak_constants(&p, &NoiseParams::zero(), &JumpMeasure::empty());
            let r0 = model::deterministic_r0(&p);
            prop_assert_eq!(f.d <= 0.0, r0 <= 1.0);
        }

        #[test]
        fn upsilon_bounded_by_twice_death_rate(
            sigma in prop::array::uniform4(0.0..1.0f64),
            xi in prop::array::uniform4(-0.99..3.0f64),
        ) {
            let p = params(0.15);
            let (u, uh) = upsilons(&p, &NoiseParams::new(sigma), &JumpMeasure::single(xi).unwrap());
            prop_assert!(u <= 2.0 * p.mu_h);
            prop_assert!(uh <= 2.0 * p.mu_m);
        }

        #[test]
        fn kappa_decreases_with_noise_on_infected(
            s2 in 0.01..0.5f64,
            s4 in 0.01..0.5f64,
            bump in 0.0..0.5f64,
        ) {
            let p = params(0.15);
            let j = JumpMeasure::single([-0.2, 0.3, -0.1, 0.4]).unwrap();
            let k = |a: f64, b: f64| kappa(&p, &NoiseParams::new([0.1, a, 0.1, b]), &j).unwrap();
            prop_assert!(k(s2 + bump, s4) <= k(s2, s4) + 1e-15);
            prop_assert!(k(s2, s4 + bump) <= k(s2, s4) + 1e-15);
        }
    }

    #[test]
    fn frak_d_continuous_at_threshold() {
        let base = params(0.15);
        let crit = base.beta / model::deterministic_r0(&base);
        let below = frak_constants(&params(crit * (1.0 - 1e-9)), &NoiseParams::zero(), &JumpMeasure::empty()).d;
        let above = frak_constants(&params(crit * (1.0 + 1e-9)), &NoiseParams::zero(), &JumpMeasure::empty()).d;
        assert!(below <= 0.0 && above >= 0.0);
        assert!((above - below).abs() < 1e-8);
    }
}
