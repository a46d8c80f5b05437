//! Space explanations for ReLU classifiers.
//!
//! A space explanation of class `c` is a linear formula over the input
//! features whose every model is classified as `c`. Explanations are obtained
//! by encoding the network into linear real arithmetic, refuting
//! `explanation ∧ network ∧ ¬c` with an exact case-splitting simplex, and then
//! generalizing the refutation with Craig interpolation or shrinking it with
//! unsatisfiable cores.

pub mod error;
pub mod rational;
pub mod model;
pub mod formula;
pub mod encoder;
pub mod simplex;
pub mod search;
pub mod interpolation;
pub mod strategies;
pub mod analysis;
pub mod cli;

pub use error::{Error, Result};
pub use formula::{Atom, Formula, LinearTerm, Rel};
pub use model::{Dataset, Network, Point};
pub use rational::Rational;
