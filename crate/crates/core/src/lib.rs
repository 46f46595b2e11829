//! Deterministic 2D swarm simulator plus a Differential Evolution
//! optimizer that trains a shared reservoir controller for collective
//! gradient ascent, with the measurement suite and experiment harness
//! around them.
//!
//! Robots sense only the local value of an environmental scalar field
//! (never its direction) plus the nearest neighbor in four body-frame
//! quadrants. A single genotype encodes the output layer of the shared
//! controller, so one genotype is one homogeneous swarm; fitness is the
//! swarm's time-averaged field value. Everything downstream of a master
//! seed is bit-reproducible.

pub mod controller;
pub mod de;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
