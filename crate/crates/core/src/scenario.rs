//! Scenario definitions, presets and the flat `key = value` file format.
//!
//! ```text
//! name = my-run
//! p = 2.5
//! model.lambda_h = 0.5
//! noise.sigma1 = 0.269
//! jumps.atom.0.mass = 1
//! jumps.atom.0.xi1 = -0.75
//! init.s = 0.2
//! sim.dt = 0.001
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{PositivityPolicy, SimConfig, SimError};
use crate::model::{Atom, JumpMeasure, ModelError, ModelParams, NoiseParams, State};
use crate::output::fmt_f64;

pub const PRESET_NAMES: [&str; 2] = ["table1-extinction", "table1-persistence"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: key `{key}`: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("unknown preset `{0}` (available: table1-extinction, table1-persistence)")]
    UnknownPreset(String),
    #[error("scenario name must not be empty")]
    EmptyName,
    #[error("invalid scenario: {0}")]
    Model(#[from] ModelError),
    #[error("invalid scenario: {0}")]
    Sim(#[from] SimError),
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub model: ModelParams,
    pub noise: NoiseParams,
    pub jumps: JumpMeasure,
    /// Moment exponent used by the assumption checks.
    pub p: f64,
    pub init: State,
    pub sim: SimConfig,
}

const MODEL_KEYS: [&str; 10] = ["lambda_h", "b", "beta", "a", "mu_h", "rho0", "rho1", "lambda_m", "beta_m", "mu_m"];

fn model_field<'a>(m: &'a mut ModelParams, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "lambda_h" => &mut m.lambda_h,
        "b" => &mut m.b,
        "beta" => &mut m.beta,
        "a" => &mut m.a,
        "mu_h" => &mut m.mu_h,
        "rho0" => &mut m.rho0,
        "rho1" => &mut m.rho1,
        "lambda_m" => &mut m.lambda_m,
        "beta_m" => &mut m.beta_m,
        "mu_m" => &mut m.mu_m,
        _ => return None,
    })
}

fn model_value(m: &ModelParams, key: &str) -> f64 {
    let mut copy = *m;
    *model_field(&mut copy, key).expect("known model key")
}

impl Scenario {
    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        let extinction = Scenario {
            name: "table1-extinction".into(),
            model: ModelParams {
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
            },
            noise: NoiseParams::new([0.269, 0.25, 0.25, 0.13]),
            jumps: JumpMeasure::single([-0.75, 0.8, -0.9, 0.85])?,
            p: 2.5,
            init: State::new(0.2, 0.1, 0.3, 0.4),
            sim: SimConfig {
                dt: 1e-3,
                t_end: 200.0,
                seed: 0,
                record_stride: 10,
                positivity: PositivityPolicy::ClampToZero,
                saturated: false,
            },
        };
        match name {
            "table1-extinction" => Ok(extinction),
            "table1-persistence" => {
                let mut s = extinction;
                s.name = "table1-persistence".into();
                s.model.lambda_h = 0.85;
                s.model.b = 7.0;
                s.model.beta = 0.65;
                s.model.rho1 = 0.25;
                s.model.mu_m = 0.88;
                s.noise.sigma[2] = 0.245;
                s.noise.sigma[3] = 0.14;
                s.jumps = JumpMeasure::single([-0.75, 0.78, -0.9, 0.85])?;
                s.sim.t_end = 500.0;
                Ok(s)
            }
            other => Err(ScenarioError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.name.trim().is_empty() {
            return Err(ScenarioError::EmptyName);
        }
        self.model.validate()?;
        self.noise.validate()?;
        self.jumps.validate()?;
        self.init.validate()?;
        if !(self.p.is_finite() && self.p > 2.0) {
            return Err(ModelError::MomentExponent(self.p).into());
        }
        self.sim.validate()?;
        Ok(())
    }

    /// Parses and validates the text format.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ScenarioError::Syntax {
                    line,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(ScenarioError::Syntax { line, message: "empty key".into() });
            }
            if entries.contains_key(&key) {
                return Err(ScenarioError::Duplicate { line, key });
            }
            entries.insert(key, (line, value.trim().to_string()));
        }

        let mut s = Scenario {
            name: String::new(),
            model: ModelParams {
                lambda_h: f64::NAN,
                b: f64::NAN,
                beta: f64::NAN,
                a: 0.0,
                mu_h: f64::NAN,
                rho0: f64::NAN,
                rho1: f64::NAN,
                lambda_m: f64::NAN,
                beta_m: f64::NAN,
                mu_m: f64::NAN,
            },
            noise: NoiseParams::zero(),
            jumps: JumpMeasure::empty(),
            p: 2.5,
            init: State::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            sim: SimConfig::default(),
        };
        let mut atoms: BTreeMap<usize, (Option<f64>, [Option<f64>; 4])> = BTreeMap::new();
        let mut init_seen = [false; 4];

        for (key, (line, value)) in &entries {
            let line = *line;
            let num = || -> Result<f64, ScenarioError> {
                value.parse::<f64>().map_err(|_| ScenarioError::Value {
                    line,
                    key: key.clone(),
                    message: format!("`{value}` is not a number"),
                })
            };
            let unknown = || ScenarioError::UnknownKey { line, key: key.clone() };
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["name"] => s.name = value.clone(),
                ["p"] => s.p = num()?,
                ["model", field] => *model_field(&mut s.model, field).ok_or_else(unknown)? = num()?,
                ["noise", field] => {
                    let k = sigma_index(field).ok_or_else(unknown)?;
                    s.noise.sigma[k] = num()?;
                }
                ["init", field] => {
                    let k = ["s", "i", "s_m", "i_m"].iter().position(|f| f == field).ok_or_else(unknown)?;
                    let v = num()?;
                    match k {
                        0 => s.init.s = v,
                        1 => s.init.i = v,
                        2 => s.init.s_m = v,
                        _ => s.init.i_m = v,
                    }
                    init_seen[k] = true;
                }
                ["jumps", "atom", idx, field] => {
                    let idx: usize = idx.parse().map_err(|_| unknown())?;
                    let slot = atoms.entry(idx).or_default();
                    match *field {
                        "mass" => slot.0 = Some(num()?),
                        f => {
                            let k = f.strip_prefix("xi").and_then(|d| d.parse::<usize>().ok());
                            match k {
                                Some(k @ 1..=4) => slot.1[k - 1] = Some(num()?),
                                _ => return Err(unknown()),
                            }
                        }
                    }
                }
                ["sim", field] => match *field {
                    "dt" => s.sim.dt = num()?,
                    "t_end" => s.sim.t_end = num()?,
                    "seed" => s.sim.seed = parse_with(value, line, key)?,
                    "record_stride" => s.sim.record_stride = parse_with(value, line, key)?,
                    "saturated" => s.sim.saturated = parse_with(value, line, key)?,
                    "positivity" => {
                        s.sim.positivity = match value.as_str() {
                            "clamp" => PositivityPolicy::ClampToZero,
                            "reject" => PositivityPolicy::Reject,
                            _ => {
                                return Err(ScenarioError::Value {
                                    line,
                                    key: key.clone(),
                                    message: format!("expected `clamp` or `reject`, got `{value}`"),
                                })
                            }
                        }
                    }
                    _ => return Err(unknown()),
                },
                _ => return Err(unknown()),
            }
        }

        if !entries.contains_key("name") {
            return Err(ScenarioError::Missing("name".into()));
        }
        for key in MODEL_KEYS {
            if key != "a" && !entries.contains_key(&format!("model.{key}")) {
                return Err(ScenarioError::Missing(format!("model.{key}")));
            }
        }
        for (k, seen) in init_seen.iter().enumerate() {
            if !seen {
                return Err(ScenarioError::Missing(format!("init.{}", ["s", "i", "s_m", "i_m"][k])));
            }
        }
        let mut list = Vec::with_capacity(atoms.len());
        for (expected, (idx, (mass, xi))) in atoms.into_iter().enumerate() {
            if idx != expected {
                return Err(ScenarioError::Missing(format!("jumps.atom.{expected}.mass")));
            }
            let mass = mass.ok_or_else(|| ScenarioError::Missing(format!("jumps.atom.{idx}.mass")))?;
            let mut sizes = [0.0; 4];
            for (k, v) in xi.iter().enumerate() {
                sizes[k] = v.ok_or_else(|| ScenarioError::Missing(format!("jumps.atom.{idx}.xi{}", k + 1)))?;
            }
            list.push(Atom { mass, xi: sizes });
        }
        s.jumps = JumpMeasure { atoms: list };
        s.validate()?;
        Ok(s)
    }

    /// Serializes to the text format; `parse(to_text())` is field-identical.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "p = {}", fmt_f64(self.p));
        for key in MODEL_KEYS {
            let _ = writeln!(out, "model.{key} = {}", fmt_f64(model_value(&self.model, key)));
        }
        for (k, v) in self.noise.sigma.iter().enumerate() {
            let _ = writeln!(out, "noise.sigma{} = {}", k + 1, fmt_f64(*v));
        }
        for (idx, atom) in self.jumps.atoms.iter().enumerate() {
            let _ = writeln!(out, "jumps.atom.{idx}.mass = {}", fmt_f64(atom.mass));
            for (k, v) in atom.xi.iter().enumerate() {
                let _ = writeln!(out, "jumps.atom.{idx}.xi{} = {}", k + 1, fmt_f64(*v));
            }
        }
        let _ = writeln!(out, "init.s = {}", fmt_f64(self.init.s));
        let _ = writeln!(out, "init.i = {}", fmt_f64(self.init.i));
        let _ = writeln!(out, "init.s_m = {}", fmt_f64(self.init.s_m));
        let _ = writeln!(out, "init.i_m = {}", fmt_f64(self.init.i_m));
        let _ = writeln!(out, "sim.dt = {}", fmt_f64(self.sim.dt));
        let _ = writeln!(out, "sim.t_end = {}", fmt_f64(self.sim.t_end));
        let _ = writeln!(out, "sim.seed = {}", self.sim.seed);
        let _ = writeln!(out, "sim.record_stride = {}", self.sim.record_stride);
        let policy = match self.sim.positivity {
            PositivityPolicy::ClampToZero => "clamp",
            PositivityPolicy::Reject => "reject",
        };
        let _ = writeln!(out, "sim.positivity = {policy}");
        let _ = writeln!(out, "sim.saturated = {}", self.sim.saturated);
        out
    }
}

fn sigma_index(field: &str) -> Option<usize> {
    match field {
        "sigma1" => Some(0),
        "sigma2" => Some(1),
        "sigma3" => Some(2),
        "sigma4" => Some(3),
        _ => None,
    }
}

fn parse_with<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T, ScenarioError> {
    value.parse::<T>().map_err(|_| ScenarioError::Value {
        line,
        key: key.to_string(),
        message: format!("cannot parse `{value}`"),
    })
}

/// Loads a preset by name, or else a scenario file at `source`.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    if PRESET_NAMES.contains(&source) {
        return Scenario::preset(source);
    }
    load_file(Path::new(source))
}

pub fn load_file(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::parse(&text)
}
