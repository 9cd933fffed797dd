//! Exponential-family random network models (ERNMs): joint models of ties and
//! categorical nodal attributes, simulated by Metropolis–Hastings and fitted
//! by Monte Carlo maximum likelihood from partially observed networks.

pub mod change;
pub mod error;
pub mod fixtures;
pub mod homophily;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod mechanisms;
pub mod mle;
pub mod model;
pub mod network;
pub mod observation;

pub use change::{change_statistics, Move, StatTracker};
pub use error::{Error, Result};
pub use homophily::{regularized_homophily, Centering};
pub use likelihood::{
    alt_loglik_ratio, fisher_se, importance_stat_estimate, loglik_ratio, mean_value_params,
    score_and_hessian, LogLikRatioEstimate,
};
pub use mcmc::{sample_conditional, sample_full, ChainConfig, SampleBatch, Sampler};
pub use mechanisms::{MechanismSummary, SamplingMechanism};
pub use mle::{
    class_membership_posterior, fit, fit_alternate, occupied_class_count, Algorithm, FitConfig,
    FitResult,
};
pub use model::{compute_statistics, ModelSpec, Term};
pub use network::{Dyad, Network, Variable};
pub use observation::ObservationPattern;
