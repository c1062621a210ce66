//! Model parameters, state, the finite jump measure and the coefficient
//! functions of the host-vector jump-diffusion system.
//!
//! Humans are split into susceptible `S` and infected `I`; mosquitoes into
//! susceptible `S_m` and infected `I_m`. Every compartment carries a
//! proportional white-noise term and a proportional jump term driven by a
//! compensated Poisson random measure with a finite intensity measure.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default moment exponent used when checking the moment condition.
pub const DEFAULT_MOMENT_EXPONENT: f64 = 2.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{field}` must be {requirement}, got {value}")]
    InvalidParameter { field: &'static str, requirement: &'static str, value: f64 },
    #[error("assumption A2 violated: jump intensity xi{component} of atom {atom} is {value}, must be > -1")]
    JumpBelowMinusOne { atom: usize, component: usize, value: f64 },
    #[error("atom {atom} has invalid mass {value}; masses must be finite and > 0")]
    InvalidAtomMass { atom: usize, value: f64 },
    #[error("moment exponent p must be > 2, got {0}")]
    MomentExponent(f64),
    #[error("state component `{field}` must be finite and >= 0, got {value}")]
    InvalidState { field: &'static str, value: f64 },
}

/// Deterministic rates of the model, per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Recruitment rate of susceptible humans.
    pub lambda_h: f64,
    /// Mosquito biting rate.
    pub b: f64,
    /// Mosquito to human transmission probability.
    pub beta: f64,
    /// Inhibition coefficient of the saturated incidence; zero gives mass action.
    pub a: f64,
    /// Human natural death rate.
    pub mu_h: f64,
    /// Disease-induced human death rate.
    pub rho0: f64,
    /// Recovery plus treatment rate.
    pub rho1: f64,
    /// Mosquito recruitment rate.
    pub lambda_m: f64,
    /// Human to mosquito transmission probability.
    pub beta_m: f64,
    /// Mosquito natural death rate.
    pub mu_m: f64,
}

impl ModelParams {
    /// Total removal rate of infected humans besides natural death.
    pub fn rho(&self) -> f64 {
        self.rho0 + self.rho1
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("lambda_h", self.lambda_h),
            ("b", self.b),
            ("beta", self.beta),
            ("mu_h", self.mu_h),
            ("rho0", self.rho0),
            ("rho1", self.rho1),
            ("lambda_m", self.lambda_m),
            ("beta_m", self.beta_m),
            ("mu_m", self.mu_m),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidParameter { field, requirement: "finite and > 0", value });
            }
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(ModelError::InvalidParameter { field: "a", requirement: "finite and >= 0", value: self.a });
        }
        Ok(())
    }

    /// Disease-free equilibrium `(Λ/μ, 0, Λ̂/μ̂, 0)`.
    pub fn disease_free(&self) -> State {
        State::new(self.lambda_h / self.mu_h, 0.0, self.lambda_m / self.mu_m, 0.0)
    }
}

/// Brownian intensities of the four compartments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma: [f64; 4],
}

impl NoiseParams {
    pub fn new(sigma: [f64; 4]) -> Self {
        Self { sigma }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        const NAMES: [&str; 4] = ["sigma1", "sigma2", "sigma3", "sigma4"];
        for (field, &value) in NAMES.iter().zip(&self.sigma) {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidParameter { field, requirement: "finite and >= 0", value });
            }
        }
        Ok(())
    }
}

/// One atom of the jump intensity measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    /// Weight of the atom, i.e. the jump rate it contributes (1/day).
    pub mass: f64,
    /// Relative jump sizes applied to `S, I, S_m, I_m` when the atom fires.
    pub xi: [f64; 4],
}

/// Finite jump intensity measure given as weighted atoms.
///
/// Every integral against the measure reduces to a weighted sum over atoms,
/// so all closed-form thresholds are evaluated exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpMeasure {
    pub atoms: Vec<Atom>,
}

impl JumpMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, ModelError> {
        let measure = Self { atoms };
        measure.validate()?;
        Ok(measure)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// One atom of mass one with constant jump sizes.
    pub fn single(xi: [f64; 4]) -> Result<Self, ModelError> {
        Self::new(vec![Atom { mass: 1.0, xi }])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (idx, atom) in self.atoms.iter().enumerate() {
            if !(atom.mass.is_finite() && atom.mass > 0.0) {
                return Err(ModelError::InvalidAtomMass { atom: idx, value: atom.mass });
            }
            for (c, &x) in atom.xi.iter().enumerate() {
                if !(x.is_finite() && x > -1.0) {
                    return Err(ModelError::JumpBelowMinusOne { atom: idx, component: c + 1, value: x });
                }
            }
        }
        Ok(())
    }

    /// Total mass `ν(U)`, the overall jump rate.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// `∫ f(u) ν(du)` for a function of the atom.
    pub fn integrate<F: Fn(&Atom) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|a| a.mass * f(a)).sum()
    }

    /// `∫ ξᵢ(u) ν(du)` for every component; the compensator rates.
    pub fn compensator(&self) -> [f64; 4] {
        let mut c = [0.0; 4];
        for atom in &self.atoms {
            for (ci, xi) in c.iter_mut().zip(&atom.xi) {
                *ci += atom.mass * xi;
            }
        }
        c
    }

    /// `maxᵢ ∫ f(ξᵢ(u)) ν(du)`, the shape shared by the moment constants.
    fn max_component_integral<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        (0..4).map(|i| self.integrate(|a| f(a.xi[i]))).fold(0.0, f64::max)
    }
}

/// Compartment sizes in millions of individuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub i: f64,
    pub s_m: f64,
    pub i_m: f64,
}

impl State {
    pub const fn new(s: f64, i: f64, s_m: f64, i_m: f64) -> Self {
        Self { s, i, s_m, i_m }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s, self.i, self.s_m, self.i_m]
    }

    pub fn from_array(x: [f64; 4]) -> Self {
        Self::new(x[0], x[1], x[2], x[3])
    }

    /// Total infected, humans plus mosquitoes.
    pub fn infected(&self) -> f64 {
        self.i + self.i_m
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [("s", self.s), ("i", self.i), ("s_m", self.s_m), ("i_m", self.i_m)];
        for (field, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::InvalidState { field, value });
            }
        }
        Ok(())
    }
}

/// Moment constants and the verdicts of assumptions A1 to A5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub p: f64,
    /// `maxᵢ ∫ ξᵢ² dν`
    pub m1: f64,
    /// `maxᵢ ∫ (ξᵢ − ln(1+ξᵢ)) dν`
    pub m2: f64,
    /// `maxᵢ ∫ ((1+ξᵢ)² − 1)² dν`
    pub m3: f64,
    /// `maxᵢ ∫ ln²(1+ξᵢ) dν`
    pub m4: f64,
    /// Largest squared Brownian intensity.
    pub sigma_max: f64,
    /// Largest jump size over all atoms and components.
    pub xi_max: f64,
    /// Smallest jump size over all atoms and components.
    pub xi_min: f64,
    /// `θ` evaluated at the largest jump size.
    pub theta_tilde: f64,
    /// `θ` evaluated at the smallest jump size.
    pub theta_under: f64,
    /// `max(theta_tilde, theta_under)`.
    pub theta_p: f64,
    /// `∫ θ_p dν`, with the per-atom maximum taken inside the integral.
    pub varrho_p: f64,
    /// `μ∧μ̂ − (p−1)Σ/2 − ϱ_p/p`.
    pub delta_p: f64,
    pub verdicts: [bool; 5],
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|&v| v)
    }
}

/// `(1+x)^p − p·x − 1`, nonnegative for `x > −1`, `p ≥ 1`.
pub fn moment_theta(x: f64, p: f64) -> f64 {
    (p * x.ln_1p()).exp() - p * x - 1.0
}

/// Evaluates the moment constants and assumption verdicts for exponent `p`.
pub fn validate(
    params: &ModelParams,
    noise: &NoiseParams,
    jumps: &JumpMeasure,
    p: f64,
) -> Result<AssumptionReport, ModelError> {
    if !(p.is_finite() && p > 2.0) {
        return Err(ModelError::MomentExponent(p));
    }
    params.validate()?;
    noise.validate()?;
    jumps.validate()?;

    let m1 = jumps.max_component_integral(|x| x * x);
    let m2 = jumps.max_component_integral(|x| x - x.ln_1p());
    let m3 = jumps.max_component_integral(|x| {
        let g = (1.0 + x) * (1.0 + x) - 1.0;
        g * g
    });
    let m4 = jumps.max_component_integral(|x| {
        let l = x.ln_1p();
        l * l
    });
    let sigma_max = noise.sigma.iter().map(|s| s * s).fold(0.0, f64::max);

    let atom_max = |a: &Atom| a.xi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let atom_min = |a: &Atom| a.xi.iter().copied().fold(f64::INFINITY, f64::min);

    let (xi_max, xi_min) = if jumps.atoms.is_empty() {
        (0.0, 0.0)
    } else {
        (
            jumps.atoms.iter().map(atom_max).fold(f64::NEG_INFINITY, f64::max),
            jumps.atoms.iter().map(atom_min).fold(f64::INFINITY, f64::min),
        )
    };
    let theta_tilde = moment_theta(xi_max, p);
    let theta_under = moment_theta(xi_min, p);
    let theta_p = theta_tilde.max(theta_under);
    let varrho_p = jumps.integrate(|a| moment_theta(atom_max(a), p).max(moment_theta(atom_min(a), p)));
    let delta_p = params.mu_h.min(params.mu_m) - 0.5 * (p - 1.0) * sigma_max - varrho_p / p;

    let verdicts = [m1.is_finite(), m2.is_finite(), delta_p > 0.0, m3.is_finite(), m4.is_finite()];
    Ok(AssumptionReport {
        p,
        m1,
        m2,
        m3,
        m4,
        sigma_max,
        xi_max,
        xi_min,
        theta_tilde,
        theta_under,
        theta_p,
        varrho_p,
        delta_p,
        verdicts,
    })
}

/// Incidence `bβ S I_m / (1 + a I_m)`; mass action when not saturated.
fn human_incidence(x: &[f64; 4], params: &ModelParams, saturated: bool) -> f64 {
    let force = params.b * params.beta * x[0] * x[3];
    if saturated {
        force / (1.0 + params.a * x[3])
    } else {
        force
    }
}

/// Deterministic vector field of the underlying ODE system.
pub fn deterministic_drift(state: &State, params: &ModelParams, saturated: bool) -> [f64; 4] {
    let x = state.to_array();
    let inc_h = human_incidence(&x, params, saturated);
    let inc_m = params.b * params.beta_m * x[2] * x[1];
    [
        params.lambda_h - inc_h - params.mu_h * x[0],
        inc_h - (params.mu_h + params.rho()) * x[1],
        params.lambda_m - inc_m - params.mu_m * x[2],
        inc_m - params.mu_m * x[3],
    ]
}

/// Effective drift between jump events: the deterministic field plus the
/// compensator correction `−xᵢ ∫ ξᵢ dν` of the compensated jump integral.
pub fn drift(state: &State, params: &ModelParams, jumps: &JumpMeasure, saturated: bool) -> [f64; 4] {
    let mut f = deterministic_drift(state, params, saturated);
    let x = state.to_array();
    let comp = jumps.compensator();
    for k in 0..4 {
        f[k] -= x[k] * comp[k];
    }
    f
}

/// Diffusion coefficients `σᵢ xᵢ`.
pub fn diffusion(state: &State, noise: &NoiseParams) -> [f64; 4] {
    let x = state.to_array();
    std::array::from_fn(|k| noise.sigma[k] * x[k])
}

/// Basic reproduction number of the deterministic system.
pub fn deterministic_r0(params: &ModelParams) -> f64 {
    let ModelParams { lambda_h, b, beta, mu_h, lambda_m, beta_m, mu_m, .. } = *params;
    b * b * beta * lambda_h * beta_m * lambda_m / (mu_h * (mu_h + params.rho()) * mu_m * mu_m)
}

/// Infected-mosquito level at the endemic equilibrium, without the sign
/// check; zero at `R₀ = 1` and negative below.
pub fn endemic_infected_mosquitoes(params: &ModelParams) -> f64 {
    let r0 = deterministic_r0(params);
    let removal = params.mu_h + params.rho();
    let num = params.mu_h * params.mu_m * removal * (r0 - 1.0);
    let den = params.mu_m * (params.mu_h * params.a + params.b * params.beta) * removal
        + params.b * params.b * params.beta * params.beta_m * params.lambda_h;
    num / den
}

/// Endemic equilibrium of the deterministic system, present only when `R₀ > 1`.
pub fn endemic_equilibrium(params: &ModelParams) -> Option<State> {
    if deterministic_r0(params) <= 1.0 {
        return None;
    }
    let i_m = endemic_infected_mosquitoes(params);
    let mu_m = params.mu_m;
    let removal = params.mu_h + params.rho();
    // total mosquito population is Λ̂/μ̂ at equilibrium
    let s_m = params.lambda_m / mu_m - i_m;
    let denom = params.b * params.beta_m * (params.lambda_m - mu_m * i_m);
    let i = mu_m * mu_m * i_m / denom;
    let s = mu_m * mu_m * removal * (1.0 + params.a * i_m) / (params.b * params.beta * denom);
    Some(State::new(s, i, s_m, i_m))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn base() -> ModelParams {
        ModelParams {
            lambda_h: 0.5,
            b: 3.0,
            beta: 0.15,
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
        fn delta_p_monotone_in_sigma(
            sigma in prop::array::uniform4(0.0..1.0f64),
            k in 0usize..4,
            bump in 0.0..1.0f64,
            xi in prop::array::uniform4(-0.95..2.0f64),
            p in 2.01..6.0f64,
        ) {
            let j = JumpMeasure::single(xi).unwrap();
            let lo = validate(&base(), &NoiseParams::new(sigma), &j, p).unwrap();
            let mut s2 = sigma;
            s2[k] += bump;
            let hi = validate(&base(), &NoiseParams::new(s2), &j, p).unwrap();
            prop_assert!(hi.delta_p <= lo.delta_p);
        }

        #[test]
        fn delta_p_monotone_in_mass(
            xi in prop::array::uniform4(-0.95..2.0f64),
            mass in 0.01..3.0f64,
            extra in 0.0..3.0f64,
            p in 2.01..6.0f64,
        ) {
            let n = NoiseParams::new([0.1, 0.2, 0.3, 0.1]);
            let lo = validate(&base(), &n, &JumpMeasure::new(vec![Atom { mass, xi }]).unwrap(), p).unwrap();
            let hi = validate(&base(), &n, &JumpMeasure::new(vec![Atom { mass: mass + extra, xi }]).unwrap(), p).unwrap();
            prop_assert!(hi.delta_p <= lo.delta_p);
        }

        #[test]
        fn compensator_vanishes_for_zero_jumps(
            x in prop::array::uniform4(0.0..10.0f64),
            mass in 0.01..5.0f64,
        ) {
            let s = State::from_array(x);
            let zero = JumpMeasure::new(vec![Atom { mass, xi: [0.0; 4] }]).unwrap();
            prop_assert_eq!(
                drift(&s, &base(), &zero, false),
                drift(&s, &base(), &JumpMeasure::empty(), false)
            );
        }

        #[test]
        fn theta_nonnegative(x in -0.999..5.0f64, p in 2.0001..8.0f64) {
            prop_assert!(moment_theta(x, p) >= -1e-9 * (1.0 + x.abs()).powf(p));
        }
    }
}
