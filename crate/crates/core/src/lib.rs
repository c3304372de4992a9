//! Cutting-and-stacking construction of a measure-preserving system and a
//! set whose normalized Birkhoff sums approach a prescribed sequence of
//! zero-mean laws along a rapidly increasing subsequence.

pub mod builder;
pub mod cli;
pub mod error;
pub mod measures;
pub mod quantizer;
pub mod rational;
pub mod sequence;
pub mod tower_space;
pub mod verifier;

pub use error::{Error, Result};
pub use rational::Rational;
