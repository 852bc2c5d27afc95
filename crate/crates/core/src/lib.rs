//! District-heating secondary-network control lab.
//!
//! The crate bundles a multi-apartment RC plant used as ground truth, an LSTM
//! surrogate identified from it, a Markov decision process wrapper, deep
//! Q-learning agents, water-curve/PID baselines and an experiment harness
//! that scores every policy on comfort, energy and CO2.

pub mod checkpoint;
pub mod control;
pub mod dqn;
pub mod error;
pub mod exec;
pub mod harness;
pub mod mdp;
pub mod nn;
pub mod rng;
pub mod surrogate;
pub mod thermal;
pub mod trajectory;
pub mod weather;

pub use error::{Error, Result};
pub use exec::Exec;
