//! Grid-uniform copulas with Bayesian priors and a rectangle-exchange
//! Metropolis-within-Gibbs sampler.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod copula;
pub mod error;
pub mod exchange;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod measures;
pub mod normal;
pub mod priors;
pub mod reference;

pub use copula::GridCopula;
pub use error::{Error, Result};
pub use exchange::{ExchangeProposal, ExchangeSite};
pub use grid::{CellIndex, Grid};
pub use reference::{CorrMatrix, Family, ReferenceCopula};
pub use likelihood::{CellCounts, Dataset, KnownMarginal, MarginalModel};
pub use priors::{Centering, Distance, Prior, PriorSpec, WeightKind};
