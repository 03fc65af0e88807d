//! Exact and stochastic analysis of bullet-collision processes.

pub mod engine;
pub mod enumeration;
pub mod error;
pub mod geometry;
pub mod law;
pub mod perm;
pub mod rational;
pub mod rng;
pub mod scheme;
pub mod stochastic;

pub use error::{Error, Result};
pub use rational::Rational;
