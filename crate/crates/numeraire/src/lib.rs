//! Growth-optimal portfolios and asymptotic arbitrage diagnostics.
//!
//! The crate answers one question in several model classes: given a sequence
//! of markets, does wealth relative to the numeraire (log-optimal) portfolio
//! stay tight, or can an asymptotic arbitrage be manufactured? It provides
//!
//! - exact numeraire portfolios, martingale measures and entropy duality on
//!   finite event trees ([`market`], [`log_optimal`]);
//! - model-free sequence diagnostics: tail curves, moment curves,
//!   Neyman-Pearson power profiles and a verdict policy ([`diagnostics`]);
//! - Monte Carlo for diffusion market sequences and the integrated
//!   risk-premium criterion ([`diffusion`]);
//! - the discrete lognormal model with closed-form series criteria
//!   ([`lognormal`]);
//! - reproducible scenario running behind a small CLI ([`scenario`]).
//!
//! Each major capability has a runnable demonstration under `examples/`;
//! start with `binomial_duality`.

pub mod diagnostics;
pub mod diffusion;
pub mod error;
pub mod lognormal;
pub mod log_optimal;
pub mod market;
pub mod quadrature;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
