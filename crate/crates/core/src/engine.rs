//! Euler-Maruyama integration with exact compound-Poisson jump times.
//!
//! The grid is fixed; when a jump falls inside a grid step the step is split
//! at the jump time, the Brownian increment of the step is subdivided with a
//! Brownian bridge and the multiplicative jump is applied at its exact time.
//! Between jumps the compensated drift is used, so the compensator of an
//! atomic measure is integrated without approximation beyond Euler.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, JumpMeasure, ModelError, ModelParams, NoiseParams, State};
use crate::rng::{self, Digest, StreamRole};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("component {component} became negative ({value}) at t = {time}")]
    Negative { time: f64, component: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositivityPolicy {
    ClampToZero,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Base step size in days.
    pub dt: f64,
    /// Horizon in days.
    pub t_end: f64,
    pub seed: u64,
    /// Every `record_stride`-th grid point is stored; the last point always is.
    pub record_stride: usize,
    pub positivity: PositivityPolicy,
    /// Selects the saturated incidence `bβSI_m/(1+aI_m)`.
    pub saturated: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 200.0,
            seed: 0,
            record_stride: 1,
            positivity: PositivityPolicy::ClampToZero,
            saturated: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::InvalidConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(SimError::InvalidConfig(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if self.dt > self.t_end {
            return Err(SimError::InvalidConfig(format!("dt = {} exceeds t_end = {}", self.dt, self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(SimError::InvalidConfig("record_stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Non-fatal diagnostics for this config and jump measure.
    pub fn warnings(&self, jumps: &JumpMeasure) -> Vec<String> {
        let rate = jumps.total_mass();
        if self.dt * rate >= 1.0 {
            vec![format!("dt * nu(U) = {} >= 1: several jumps per step are likely", self.dt * rate)]
        } else {
            Vec::new()
        }
    }

    /// Number of grid steps; the last step is shortened when `t_end` is not
    /// a multiple of `dt`.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }

    fn grid_time(&self, k: usize, n: usize) -> f64 {
        if k == n {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub atom: usize,
    pub pre: State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxJumpEvent {
    pub t: f64,
    pub atom: usize,
    pub pre: f64,
}

/// Accumulated martingale terms at a checkpoint, per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSample {
    pub t: f64,
    /// `∫ xᵢ dBᵢ`
    pub brownian: Vec<f64>,
    /// `∫∫ ξᵢ xᵢ(s⁻) Ñ(ds,du)`
    pub jump: Vec<f64>,
    /// `∫∫ ((1+ξᵢ)² − 1) xᵢ²(s⁻) Ñ(ds,du)`
    pub jump_sq: Vec<f64>,
}

/// Fractions of the horizon at which martingale terms are sampled.
pub const MARTINGALE_CHECKPOINTS: [f64; 5] = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub jump_events: Vec<JumpEvent>,
    /// Number of component clamps applied under `ClampToZero`.
    pub clamp_count: usize,
    /// Number of integration sub-steps taken.
    pub steps: usize,
    pub brownian_increments_digest: u64,
    pub martingales: Vec<MartingaleSample>,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn terminal(&self) -> Option<&State> {
        self.states.last()
    }

    pub fn clamp_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.clamp_count as f64 / self.steps as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub jump_events: Vec<AuxJumpEvent>,
    pub clamp_count: usize,
    pub steps: usize,
    pub brownian_increments_digest: u64,
    pub martingales: Vec<MartingaleSample>,
}

/// Scalar auxiliary process `dΨ = (Λ − μΨ)dt + σΨ dB + ∫ ξ(u) Ψ(t⁻) Ñ(dt,du)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxParams {
    pub recruitment: f64,
    pub death: f64,
    pub sigma: f64,
    /// Index of the Brownian motion driving this process (0 for `B₁`).
    pub channel: u8,
    /// `(mass, ξ)` per atom.
    pub atoms: Vec<(f64, f64)>,
}

impl AuxParams {
    /// Dominating process of the susceptible humans.
    pub fn human(params: &ModelParams, noise: &NoiseParams, jumps: &JumpMeasure) -> Self {
        Self {
            recruitment: params.lambda_h,
            death: params.mu_h,
            sigma: noise.sigma[0],
            channel: 0,
            atoms: jumps.atoms.iter().map(|a| (a.mass, a.xi[0])).collect(),
        }
    }

    /// Dominating process of the susceptible mosquitoes.
    pub fn mosquito(params: &ModelParams, noise: &NoiseParams, jumps: &JumpMeasure) -> Self {
        Self {
            recruitment: params.lambda_m,
            death: params.mu_m,
            sigma: noise.sigma[2],
            channel: 2,
            atoms: jumps.atoms.iter().map(|a| (a.mass, a.xi[2])).collect(),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str, v: f64| SimError::InvalidConfig(format!("auxiliary {what} invalid: {v}"));
        if !(self.recruitment.is_finite() && self.recruitment > 0.0) {
            return Err(bad("recruitment", self.recruitment));
        }
        if !(self.death.is_finite() && self.death > 0.0) {
            return Err(bad("death rate", self.death));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(bad("sigma", self.sigma));
        }
        if self.channel > 3 {
            return Err(bad("channel", f64::from(self.channel)));
        }
        for (k, &(mass, xi)) in self.atoms.iter().enumerate() {
            if !(mass.is_finite() && mass > 0.0) {
                return Err(ModelError::InvalidAtomMass { atom: k, value: mass }.into());
            }
            if !(xi.is_finite() && xi > -1.0) {
                return Err(ModelError::JumpBelowMinusOne { atom: k, component: 1, value: xi }.into());
            }
        }
        Ok(())
    }
}

/// A jump-diffusion with proportional noise and proportional jumps.
trait JumpDiffusion<const N: usize> {
    const NAMES: [&'static str; N];
    /// Drift between jumps, compensator included.
    fn drift(&self, x: &[f64; N]) -> [f64; N];
    fn sigma(&self) -> [f64; N];
    /// Brownian channel driving each component.
    fn channels(&self) -> [u8; N];
    /// Jump sizes of each component at `atom`.
    fn jump(&self, atom: usize) -> [f64; N];
    /// `∫ ξᵢ dν` per component.
    fn compensator(&self) -> [f64; N];
    fn masses(&self) -> Vec<f64>;
}

struct Dengue<'a> {
    params: &'a ModelParams,
    noise: &'a NoiseParams,
    jumps: &'a JumpMeasure,
    saturated: bool,
}

impl JumpDiffusion<4> for Dengue<'_> {
    const NAMES: [&'static str; 4] = ["S", "I", "S_m", "I_m"];
    fn drift(&self, x: &[f64; 4]) -> [f64; 4] {
        model::drift(&State::from_array(*x), self.params, self.jumps, self.saturated)
    }
    fn sigma(&self) -> [f64; 4] {
        self.noise.sigma
    }
    fn channels(&self) -> [u8; 4] {
        [0, 1, 2, 3]
    }
    fn jump(&self, atom: usize) -> [f64; 4] {
        self.jumps.atoms[atom].xi
    }
    fn compensator(&self) -> [f64; 4] {
        self.jumps.compensator()
    }
    fn masses(&self) -> Vec<f64> {
        self.jumps.atoms.iter().map(|a| a.mass).collect()
    }
}

fn aux_compensator(aux: &AuxParams) -> f64 {
    aux.atoms.iter().map(|&(m, xi)| m * xi).sum()
}

fn aux_drift(aux: &AuxParams, comp: f64, x: f64) -> f64 {
    aux.recruitment - aux.death * x - x * comp
}

struct Scalar<'a> {
    aux: &'a AuxParams,
    comp: f64,
}

impl JumpDiffusion<1> for Scalar<'_> {
    const NAMES: [&'static str; 1] = ["Psi"];
    fn drift(&self, x: &[f64; 1]) -> [f64; 1] {
        [aux_drift(self.aux, self.comp, x[0])]
    }
    fn sigma(&self) -> [f64; 1] {
        [self.aux.sigma]
    }
    fn channels(&self) -> [u8; 1] {
        [self.aux.channel]
    }
    fn jump(&self, atom: usize) -> [f64; 1] {
        [self.aux.atoms[atom].1]
    }
    fn compensator(&self) -> [f64; 1] {
        [self.comp]
    }
    fn masses(&self) -> Vec<f64> {
        self.aux.atoms.iter().map(|a| a.0).collect()
    }
}

/// The four-compartment system together with both dominating processes,
/// sharing `B₁`, `B₃` and the jump stream.
struct Coupled<'a> {
    main: Dengue<'a>,
    human: Scalar<'a>,
    mosquito: Scalar<'a>,
}

impl JumpDiffusion<6> for Coupled<'_> {
    const NAMES: [&'static str; 6] = ["S", "I", "S_m", "I_m", "Psi", "Psi_m"];
    fn drift(&self, x: &[f64; 6]) -> [f64; 6] {
        let f = self.main.drift(&[x[0], x[1], x[2], x[3]]);
        [f[0], f[1], f[2], f[3], self.human.drift(&[x[4]])[0], self.mosquito.drift(&[x[5]])[0]]
    }
    fn sigma(&self) -> [f64; 6] {
        let s = self.main.sigma();
        [s[0], s[1], s[2], s[3], self.human.aux.sigma, self.mosquito.aux.sigma]
    }
    fn channels(&self) -> [u8; 6] {
        [0, 1, 2, 3, self.human.aux.channel, self.mosquito.aux.channel]
    }
    fn jump(&self, atom: usize) -> [f64; 6] {
        let j = self.main.jump(atom);
        [j[0], j[1], j[2], j[3], self.human.aux.atoms[atom].1, self.mosquito.aux.atoms[atom].1]
    }
    fn compensator(&self) -> [f64; 6] {
        let c = self.main.compensator();
        [c[0], c[1], c[2], c[3], self.human.comp, self.mosquito.comp]
    }
    fn masses(&self) -> Vec<f64> {
        self.main.masses()
    }
}

/// Brownian increments for one grid step and their bridge refinements.
trait BrownianSource {
    fn step(&mut self, channel: usize, h: f64) -> f64;
    /// Increment over the first `h1` of a remaining interval `h` whose total
    /// increment is `w`.
    fn bridge(&mut self, channel: usize, w: f64, h1: f64, h: f64) -> f64;
}

struct StreamSource {
    rngs: Vec<ChaCha8Rng>,
}

impl StreamSource {
    fn new(seed: u64) -> Self {
        Self { rngs: (0..4u8).map(|c| rng::stream(seed, StreamRole::Brownian(c))).collect() }
    }
}

impl BrownianSource for StreamSource {
    fn step(&mut self, channel: usize, h: f64) -> f64 {
        let z: f64 = self.rngs[channel].sample(StandardNormal);
        h.sqrt() * z
    }

    fn bridge(&mut self, channel: usize, w: f64, h1: f64, h: f64) -> f64 {
        let z: f64 = self.rngs[channel].sample(StandardNormal);
        if h <= 0.0 {
            return 0.0;
        }
        w * h1 / h + (h1 * (h - h1) / h).max(0.0).sqrt() * z
    }
}

struct GivenIncrements<'a> {
    increments: &'a [[f64; 4]],
    cursor: usize,
    pending: [f64; 4],
    taken: usize,
}

impl BrownianSource for GivenIncrements<'_> {
    fn step(&mut self, channel: usize, _h: f64) -> f64 {
        if self.taken == 0 {
            self.pending = self.increments[self.cursor];
            self.cursor += 1;
        }
        self.taken = (self.taken + 1) % 4;
        self.pending[channel]
    }

    fn bridge(&mut self, _channel: usize, _w: f64, _h1: f64, _h: f64) -> f64 {
        unreachable!("explicit increments are only used without jumps")
    }
}

/// Exact marked Poisson clock.
struct JumpClock {
    times: ChaCha8Rng,
    marks: ChaCha8Rng,
    rate: f64,
    cumulative: Vec<f64>,
    next: f64,
}

impl JumpClock {
    fn new(seed: u64, masses: &[f64]) -> Self {
        let mut cumulative = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in masses {
            acc += m;
            cumulative.push(acc);
        }
        let mut clock = Self {
            times: rng::stream(seed, StreamRole::JumpTimes),
            marks: rng::stream(seed, StreamRole::JumpMarks),
            rate: acc,
            cumulative,
            next: f64::INFINITY,
        };
        clock.next = clock.after(0.0);
        clock
    }

    fn after(&mut self, t: f64) -> f64 {
        if self.rate > 0.0 {
            let e: f64 = self.times.sample(Exp1);
            t + e / self.rate
        } else {
            f64::INFINITY
        }
    }

    fn mark(&mut self) -> usize {
        let u: f64 = self.marks.random::<f64>() * self.rate;
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1)
    }
}

struct RawPath<const N: usize> {
    times: Vec<f64>,
    states: Vec<[f64; N]>,
    events: Vec<(f64, usize, [f64; N])>,
    clamps: [usize; N],
    steps: usize,
    digest: u64,
    martingales: Vec<Checkpoint<N>>,
}

#[derive(Clone, Copy)]
struct Checkpoint<const N: usize> {
    t: f64,
    brownian: [f64; N],
    jump: [f64; N],
    jump_sq: [f64; N],
}

struct Integrator<'s, const N: usize, S: JumpDiffusion<N>> {
    sys: &'s S,
    sigma: [f64; N],
    channels: [u8; N],
    used: [bool; 4],
    comp: [f64; N],
    comp_sq: [f64; N],
    policy: PositivityPolicy,
    x: [f64; N],
    brownian_mart: [f64; N],
    jump_mart: [f64; N],
    jump_sq_mart: [f64; N],
    clamps: [usize; N],
    steps: usize,
    digest: Digest,
}

impl<const N: usize, S: JumpDiffusion<N>> Integrator<'_, N, S> {
    fn euler(&mut self, t_after: f64, h: f64, db: &[f64; 4]) -> Result<(), SimError> {
        let f = self.sys.drift(&self.x);
        for (c, &on) in self.used.iter().enumerate() {
            if on {
                self.digest.push(db[c]);
            }
        }
        let mut next = [0.0; N];
        for i in 0..N {
            let x = self.x[i];
            let dbi = db[self.channels[i] as usize];
            self.brownian_mart[i] += x * dbi;
            self.jump_mart[i] -= x * self.comp[i] * h;
            self.jump_sq_mart[i] -= x * x * self.comp_sq[i] * h;
            next[i] = x + f[i] * h + self.sigma[i] * x * dbi;
        }
        for (i, v) in next.iter_mut().enumerate() {
            if *v < 0.0 {
                match self.policy {
                    PositivityPolicy::ClampToZero => {
                        *v = 0.0;
                        self.clamps[i] += 1;
                    }
                    PositivityPolicy::Reject => {
                        return Err(SimError::Negative { time: t_after, component: S::NAMES[i], value: *v });
                    }
                }
            }
        }
        self.x = next;
        self.steps += 1;
        Ok(())
    }

    fn apply_jump(&mut self, atom: usize) -> [f64; N] {
        let xi = self.sys.jump(atom);
        let pre = self.x;
        for i in 0..N {
            self.jump_mart[i] += xi[i] * pre[i];
            self.jump_sq_mart[i] += ((1.0 + xi[i]) * (1.0 + xi[i]) - 1.0) * pre[i] * pre[i];
            self.x[i] = pre[i] * (1.0 + xi[i]);
        }
        pre
    }
}

fn integrate<const N: usize, S: JumpDiffusion<N>, B: BrownianSource>(
    sys: &S,
    config: &SimConfig,
    init: [f64; N],
    brownian: &mut B,
) -> Result<RawPath<N>, SimError> {
    config.validate()?;
    if init.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(SimError::InvalidConfig(format!("initial state must be finite and >= 0: {init:?}")));
    }
    let channels = sys.channels();
    let mut used = [false; 4];
    for &c in &channels {
        used[c as usize] = true;
    }
    let masses = sys.masses();
    let mut comp_sq = [0.0; N];
    for (k, m) in masses.iter().enumerate() {
        let xi = sys.jump(k);
        for i in 0..N {
            comp_sq[i] += m * ((1.0 + xi[i]) * (1.0 + xi[i]) - 1.0);
        }
    }
    let mut clock = JumpClock::new(config.seed, &masses);
    let mut it = Integrator {
        sys,
        sigma: sys.sigma(),
        channels,
        used,
        comp: sys.compensator(),
        comp_sq,
        policy: config.positivity,
        x: init,
        brownian_mart: [0.0; N],
        jump_mart: [0.0; N],
        jump_sq_mart: [0.0; N],
        clamps: [0; N],
        steps: 0,
        digest: Digest::default(),
    };

    let n = config.n_steps();
    let stride = config.record_stride;
    let capacity = n / stride + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    times.push(0.0);
    states.push(init);
    let mut events = Vec::new();
    let mut martingales = Vec::with_capacity(MARTINGALE_CHECKPOINTS.len());
    let mut checkpoint = 0;

    let mut w = [0.0; 4];
    let mut db = [0.0; 4];
    for k in 0..n {
        let t0 = config.grid_time(k, n);
        let t1 = config.grid_time(k + 1, n);
        for c in 0..4 {
            if used[c] {
                w[c] = brownian.step(c, t1 - t0);
            }
        }
        let mut t = t0;
        while clock.next <= t1 {
            let tau = clock.next.max(t);
            let h1 = tau - t;
            let rest = t1 - t;
            for c in 0..4 {
                if used[c] {
                    db[c] = brownian.bridge(c, w[c], h1, rest);
                    w[c] -= db[c];
                }
            }
            it.euler(tau, h1, &db)?;
            let atom = clock.mark();
            let pre = it.apply_jump(atom);
            events.push((tau, atom, pre));
            t = tau;
            clock.next = clock.after(tau);
        }
        it.euler(t1, t1 - t, &w)?;

        if (k + 1) % stride == 0 || k + 1 == n {
            times.push(t1);
            states.push(it.x);
        }
        while checkpoint < MARTINGALE_CHECKPOINTS.len()
            && t1 >= MARTINGALE_CHECKPOINTS[checkpoint] * config.t_end - 0.5 * config.dt
        {
            martingales.push(Checkpoint {
                t: t1,
                brownian: it.brownian_mart,
                jump: it.jump_mart,
                jump_sq: it.jump_sq_mart,
            });
            checkpoint += 1;
        }
    }

    Ok(RawPath { times, states, events, clamps: it.clamps, steps: it.steps, digest: it.digest.value(), martingales })
}

fn validate_inputs(
    params: &ModelParams,
    noise: &NoiseParams,
    jumps: &JumpMeasure,
    init: &State,
) -> Result<(), SimError> {
    params.validate()?;
    noise.validate()?;
    jumps.validate()?;
    init.validate()?;
    Ok(())
}

fn into_trajectory<const N: usize>(raw: &RawPath<N>, offset: usize) -> Trajectory {
    let pick = |x: &[f64; N]| State::new(x[offset], x[offset + 1], x[offset + 2], x[offset + 3]);
    Trajectory {
        times: raw.times.clone(),
        states: raw.states.iter().map(pick).collect(),
        jump_events: raw.events.iter().map(|(t, atom, pre)| JumpEvent { t: *t, atom: *atom, pre: pick(pre) }).collect(),
        clamp_count: raw.clamps[offset..offset + 4].iter().sum(),
        steps: raw.steps,
        brownian_increments_digest: raw.digest,
        martingales: raw
            .martingales
            .iter()
            .map(|c| MartingaleSample {
                t: c.t,
                brownian: c.brownian[offset..offset + 4].to_vec(),
                jump: c.jump[offset..offset + 4].to_vec(),
                jump_sq: c.jump_sq[offset..offset + 4].to_vec(),
            })
            .collect(),
    }
}

fn into_aux<const N: usize>(raw: &RawPath<N>, idx: usize) -> AuxTrajectory {
    AuxTrajectory {
        times: raw.times.clone(),
        values: raw.states.iter().map(|x| x[idx]).collect(),
        jump_events: raw
            .events
            .iter()
            .map(|(t, atom, pre)| AuxJumpEvent { t: *t, atom: *atom, pre: pre[idx] })
            .collect(),
        clamp_count: raw.clamps[idx],
        steps: raw.steps,
        brownian_increments_digest: raw.digest,
        martingales: raw
            .martingales
            .iter()
            .map(|c| MartingaleSample {
                t: c.t,
                brownian: vec![c.brownian[idx]],
                jump: vec![c.jump[idx]],
                jump_sq: vec![c.jump_sq[idx]],
            })
            .collect(),
    }
}

/// Simulates the four-compartment jump-diffusion.
pub fn simulate(
    params: &ModelParams,
    noise: &NoiseParams,
    jumps: &JumpMeasure,
    config: &SimConfig,
    init: &State,
) -> Result<Trajectory, SimError> {
    validate_inputs(params, noise, jumps, init)?;
    let sys = Dengue { params, noise, jumps, saturated: config.saturated };
    let raw = integrate(&sys, config, init.to_array(), &mut StreamSource::new(config.seed))?;
    Ok(into_trajectory(&raw, 0))
}

/// Simulates without jumps, driven by caller-supplied Brownian increments,
/// one `[ΔB₁, ΔB₂, ΔB₃, ΔB₄]` per grid step. Used for refinement coupling.
pub fn simulate_with_increments(
    params: &ModelParams,
    noise: &NoiseParams,
    config: &SimConfig,
    init: &State,
    increments: &[[f64; 4]],
) -> Result<Trajectory, SimError> {
    let jumps = JumpMeasure::empty();
    validate_inputs(params, noise, &jumps, init)?;
    config.validate()?;
    if increments.len() != config.n_steps() {
        return Err(SimError::InvalidConfig(format!(
            "expected {} increments, got {}",
            config.n_steps(),
            increments.len()
        )));
    }
    let sys = Dengue { params, noise, jumps: &jumps, saturated: config.saturated };
    let mut source = GivenIncrements { increments, cursor: 0, pending: [0.0; 4], taken: 0 };
    let raw = integrate(&sys, config, init.to_array(), &mut source)?;
    Ok(into_trajectory(&raw, 0))
}

/// Simulates one auxiliary scalar process.
pub fn simulate_aux(aux: &AuxParams, config: &SimConfig, init: f64) -> Result<AuxTrajectory, SimError> {
    aux.validate()?;
    if !(init.is_finite() && init > 0.0) {
        return Err(SimError::InvalidConfig(format!("auxiliary initial value must be > 0, got {init}")));
    }
    let sys = Scalar { aux, comp: aux_compensator(aux) };
    let raw = integrate(&sys, config, [init], &mut StreamSource::new(config.seed))?;
    Ok(into_aux(&raw, 0))
}

/// Simulates the system together with its dominating processes `Ψ` and
/// `Ψ_m`, started at `S(0)` and `S_m(0)` and driven by the same `B₁`, `B₃`
/// and jump events.
pub fn simulate_coupled(
    params: &ModelParams,
    noise: &NoiseParams,
    jumps: &JumpMeasure,
    config: &SimConfig,
    init: &State,
) -> Result<(Trajectory, AuxTrajectory, AuxTrajectory), SimError> {
    validate_inputs(params, noise, jumps, init)?;
    let human = AuxParams::human(params, noise, jumps);
    let mosquito = AuxParams::mosquito(params, noise, jumps);
    let sys = Coupled {
        main: Dengue { params, noise, jumps, saturated: config.saturated },
        human: Scalar { aux: &human, comp: aux_compensator(&human) },
        mosquito: Scalar { aux: &mosquito, comp: aux_compensator(&mosquito) },
    };
    let x0 = [init.s, init.i, init.s_m, init.i_m, init.s, init.s_m];
    let raw = integrate(&sys, config, x0, &mut StreamSource::new(config.seed))?;
    Ok((into_trajectory(&raw, 0), into_aux(&raw, 4), into_aux(&raw, 5)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn config(dt: f64, t_end: f64, seed: u64) -> SimConfig {
        SimConfig { dt, t_end, seed, ..SimConfig::default() }
    }

    #[test]
    fn grid_covers_horizon() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let c = SimConfig { record_stride: 7, ..config(0.01, 1.0, 1) };
        let tr = simulate(&s.model, &s.noise, &s.jumps, &c, &s.init).unwrap();
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(tr.t_end(), 1.0);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(tr.times.len(), tr.states.len());

        let odd = config(0.3, 1.0, 1);
        assert_eq!(odd.n_steps(), 4);
        let tr = simulate(&s.model, &s.noise, &s.jumps, &odd, &s.init).unwrap();
        assert_eq!(tr.times, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    #[test]
    fn disease_free_point_is_constant() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let dfe = s.model.disease_free();
        let tr = simulate(&s.model, &NoiseParams::zero(), &JumpMeasure::empty(), &config(1e-2, 20.0, 3), &dfe).unwrap();
        for st in &tr.states {
            assert!((st.s - dfe.s).abs() < 1e-14);
            assert!((st.s_m - dfe.s_m).abs() < 1e-14);
            assert_eq!(st.i, 0.0);
            assert_eq!(st.i_m, 0.0);
        }
    }

    #[test]
    fn stride_does_not_change_path() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let a = simulate(&s.model, &s.noise, &s.jumps, &config(1e-2, 10.0, 9), &s.init).unwrap();
        let c = SimConfig { record_stride: 5, ..config(1e-2, 10.0, 9) };
        let b = simulate(&s.model, &s.noise, &s.jumps, &c, &s.init).unwrap();
        for (t, st) in b.times.iter().zip(&b.states) {
            let k = a.times.iter().position(|x| x == t).unwrap();
            assert_eq!(a.states[k], *st);
        }
        assert_eq!(a.brownian_increments_digest, b.brownian_increments_digest);
        assert_eq!(a.jump_events, b.jump_events);
    }

    #[test]
    fn jumps_are_multiplicative() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let tr = simulate(&s.model, &NoiseParams::zero(), &s.jumps, &config(1e-2, 20.0, 5), &s.init).unwrap();
        assert!(!tr.jump_events.is_empty());
        assert!(tr.jump_events.windows(2).all(|w| w[1].t >= w[0].t));
        assert!(tr.jump_events.iter().all(|e| e.atom == 0 && e.t > 0.0 && e.t <= 20.0));
    }

    #[test]
    fn reject_policy_reports_component() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let noisy = NoiseParams::new([40.0, 0.0, 0.0, 0.0]);
        let c = SimConfig { positivity: PositivityPolicy::Reject, ..config(0.05, 50.0, 1) };
        match simulate(&s.model, &noisy, &JumpMeasure::empty(), &c, &s.init) {
            Err(SimError::Negative { component, .. }) => assert_eq!(component, "S"),
            other => panic!("expected negativity error, got {other:?}"),
        }
        let c = SimConfig { positivity: PositivityPolicy::ClampToZero, ..c };
        let tr = simulate(&s.model, &noisy, &JumpMeasure::empty(), &c, &s.init).unwrap();
        assert!(tr.clamp_count > 0);
        assert!(tr.states.iter().all(|x| x.validate().is_ok()));
    }

    #[test]
    fn invalid_configs() {
        let s = Scenario::preset("table1-extinction").unwrap();
        for c in [config(0.0, 1.0, 0), config(2.0, 1.0, 0), config(0.1, -1.0, 0)] {
            assert!(matches!(simulate(&s.model, &s.noise, &s.jumps, &c, &s.init), Err(SimError::InvalidConfig(_))));
        }
        let c = SimConfig { record_stride: 0, ..config(0.1, 1.0, 0) };
        assert!(c.validate().is_err());
        assert!(!config(2.0, 10.0, 0).warnings(&s.jumps).is_empty());
        assert!(config(1e-3, 10.0, 0).warnings(&s.jumps).is_empty());
    }

    #[test]
    fn aux_constant_at_fixed_point() {
        let aux = AuxParams { recruitment: 0.5, death: 0.8, sigma: 0.0, channel: 0, atoms: vec![] };
        let tr = simulate_aux(&aux, &config(1e-2, 10.0, 0), 0.625).unwrap();
        assert!(tr.values.iter().all(|v| (v - 0.625).abs() < 1e-14));
    }

    #[test]
    fn standalone_aux_matches_coupled_component() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let c = config(1e-2, 30.0, 77);
        let (_, psi, psi_m) = simulate_coupled(&s.model, &s.noise, &s.jumps, &c, &s.init).unwrap();
        let alone = simulate_aux(&AuxParams::human(&s.model, &s.noise, &s.jumps), &c, s.init.s).unwrap();
        assert_eq!(alone.values, psi.values);
        let alone_m = simulate_aux(&AuxParams::mosquito(&s.model, &s.noise, &s.jumps), &c, s.init.s_m).unwrap();
        assert_eq!(alone_m.values, psi_m.values);
    }

    #[test]
    fn coupled_main_path_matches_plain_simulation() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let c = config(1e-2, 30.0, 78);
        let (tr, _, _) = simulate_coupled(&s.model, &s.noise, &s.jumps, &c, &s.init).unwrap();
        let plain = simulate(&s.model, &s.noise, &s.jumps, &c, &s.init).unwrap();
        assert_eq!(tr.states, plain.states);
    }

    #[test]
    fn comparison_without_noise() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let (tr, psi, psi_m) =
            simulate_coupled(&s.model, &NoiseParams::zero(), &JumpMeasure::empty(), &config(1e-2, 30.0, 0), &s.init)
                .unwrap();
        for k in 0..tr.states.len() {
            assert!(tr.states[k].s <= psi.values[k]);
            assert!(tr.states[k].s_m <= psi_m.values[k]);
        }
    }

    #[test]
    fn no_transmission_means_s_equals_psi() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let init = State::new(s.init.s, 0.0, s.init.s_m, 0.0);
        let (tr, psi, psi_m) = simulate_coupled(&s.model, &s.noise, &s.jumps, &config(1e-2, 30.0, 11), &init).unwrap();
        for k in 0..tr.states.len() {
            assert_eq!(tr.states[k].s, psi.values[k]);
            assert_eq!(tr.states[k].s_m, psi_m.values[k]);
        }
    }

    #[test]
    fn martingale_checkpoints_recorded() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let tr = simulate(&s.model, &s.noise, &s.jumps, &config(1e-2, 16.0, 2), &s.init).unwrap();
        let ts: Vec<f64> = tr.martingales.iter().map(|m| m.t).collect();
        assert_eq!(ts.len(), 5);
        for (t, f) in ts.iter().zip(MARTINGALE_CHECKPOINTS) {
            assert!((t - 16.0 * f).abs() < 1e-2 + 1e-12, "{t} vs {}", 16.0 * f);
        }
        let z =
            simulate(&s.model, &NoiseParams::zero(), &JumpMeasure::empty(), &config(1e-2, 16.0, 2), &s.init).unwrap();
        for m in &z.martingales {
            assert!(m.jump.iter().chain(&m.jump_sq).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn given_increments_reproduce_stream_free_path() {
        let s = Scenario::preset("table1-extinction").unwrap();
        let c = config(0.01, 1.0, 0);
        let zeros = vec![[0.0; 4]; c.n_steps()];
        let a = simulate_with_increments(&s.model, &s.noise, &c, &s.init, &zeros).unwrap();
        let b = simulate(&s.model, &NoiseParams::zero(), &JumpMeasure::empty(), &c, &s.init).unwrap();
        assert_eq!(a.states, b.states);
        assert!(simulate_with_increments(&s.model, &s.noise, &c, &s.init, &zeros[1..]).is_err());
    }
}
