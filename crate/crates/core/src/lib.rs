//! Stochastic SIR-SI dengue model with white noise and Lévy jumps:
//! closed-form extinction and persistence thresholds, a jump-adapted
//! Euler-Maruyama engine and Monte Carlo estimators of the long-run
//! functionals.

pub mod engine;
pub mod estimators;
pub mod model;
pub mod output;
pub mod reference;
pub mod rng;
pub mod scenario;
pub mod thresholds;
pub mod verify;
