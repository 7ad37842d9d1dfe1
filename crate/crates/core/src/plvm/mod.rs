//! Latent variable models with a particle-flow E-step.
//!
//! Observations follow x | z ~ N(decode(z), σ²I) with z ~ N(0, I), where
//! decode is affine or a one-hidden-layer tanh network. Training alternates
//! a particle approximation of each datapoint's posterior with a maximization
//! of the particle-averaged log-likelihood.

mod data;
mod em;
mod model;

pub use data::{generate, Dataset, Generator, SyntheticSpec};
pub use em::{
    e_step, e_step_from, expected_loglik, m_step, m_step_closed_form, predict, run_info_em, stable_config, EmConfig,
    EmRun, MStep,
};
pub use model::{
    grad_theta_loglik, loglik, loglik_masked, posterior_score, Decoder, Matrix, ObservationMask, PlvmModel,
    PosteriorTarget,
};
