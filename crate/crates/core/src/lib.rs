//! Particle-flow variational inference.
//!
//! A cloud of uniformly weighted particles is pushed toward a target density
//! by a kernelized drift built from the target's score. The crate also
//! provides the kernelized Stein discrepancy with a bootstrap goodness-of-fit
//! test, Gaussian and mixture baselines, and an EM loop that uses the flow as
//! its E-step for latent variable models.
//!
//! Interchangeable pieces (targets, drift rules, bandwidth policies,
//! approximation methods) are looked up by name through [`registry::Registry`].

pub mod baselines;
pub mod config;
pub mod discrepancy;
pub mod error;
pub mod inference;
pub mod kernels;
pub mod metrics;
pub mod particles;
pub mod plvm;
pub mod record;
pub mod registry;
pub mod rng;
pub mod targets;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use particles::{ParticleSet, Point};
pub use rng::Rng;
