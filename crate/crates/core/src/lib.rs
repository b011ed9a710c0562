//! Stackelberg pricing of differentially private linear queries.
//!
//! A market maker posts a balanced price `max{(k f(q)^2 / sigma)^p, sum_i mu_i}`
//! for a linear query `q` answered through the Laplace mechanism at noise
//! variance `sigma`. The buyer picks `sigma`, the maker picks the pricing level
//! `k`, and the data owners are paid micro-payments proportional to their
//! privacy-loss bound.
//!
//! The crate is split into:
//!
//! * [`market_model`]: queries, scenarios, the Laplace mechanism, privacy-loss
//!   bounds, micro-payments and the aggregate threshold `Gamma(q)`.
//! * [`pricing`]: price functions, utilities, linear answerability and
//!   arbitrage checks.
//! * [`equilibrium`]: closed-form regimes, best responses and equilibria.
//! * [`oracle`]: brute-force grid search built only on [`pricing`].
//! * [`crosscheck`]: compares [`oracle`] against [`equilibrium`].
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod crosscheck;
pub mod equilibrium;
mod error;
pub mod market_model;
pub mod oracle;
pub mod pricing;
mod rng;

pub use error::{Error, Result};
pub use market_model::{
    Database, IntensityKind, LinearQuery, MarketScenario, NormKind, PricedQuery,
};
pub use equilibrium::{EquilibriumResult, GameInstance, PricingLevel, Regime, VarianceChoice};
