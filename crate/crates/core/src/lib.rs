//! Inhomogeneous perturbations of quarter-plane random walks and explicit
//! Markov-reward error bounds on their stationary performance.

pub mod biaslp;
pub mod config;
pub mod error;
pub mod errorbound;
pub mod experiment;
pub mod geomsum;
pub mod model;
pub mod oracle;
pub mod perturb;
pub mod polylog;
pub mod simplex;

pub use error::{Error, Result};
pub use geomsum::{GeometricSum, GeometricTerm, Monomial, Reward};
pub use model::{Component, Curve, Dir, RandomWalk, RateField, Rates, State};
pub use perturb::{build_perturbation, thresholds, PerturbedWalk, ThresholdStatus};
