//! Stochastic simulation and spectral verification of martingale transform
//! estimates on flat tori.
//!
//! The crate has two halves that meet in the middle:
//!
//! * a **path half** ([`process`], [`drift`], [`bellman`], [`sparse`]) that
//!   samples martingale pairs `(X, Y)` with `Y` differentially subordinate to
//!   `X`, evolves the drifted semimartingale `Z` solving
//!   `dZ = V Z dt + dY` for negative semidefinite `V`, and verifies the
//!   weak-type maximal bound and the pointwise sparse domination
//!   `Z* <= 8 S(X)` by direct Monte Carlo;
//! * a **spectral half** ([`torus`], [`radiation`]) that carries exact
//!   Fourier-side operators on `T^1`/`T^2` (Poisson extension, gradient,
//!   Riesz vector, weighted norms, the flow characteristic of a weight) and a
//!   background-radiation Monte Carlo estimator of the Riesz vector, whose
//!   output is compared cell by cell against the spectral oracle.
//!
//! Everything is deterministic given a master seed: each path owns a
//! counter-derived RNG stream ([`rng::stream_rng`]) and ensemble reductions
//! run in a fixed order, so results are bit-identical at any thread count.
//! The `parallel` feature (on by default) fans path generation out through
//! rayon; disabling it yields the same numbers sequentially.

pub mod bellman;
pub mod drift;
pub mod ensemble;
pub mod error;
pub mod process;
pub mod radiation;
pub mod rng;
pub mod sparse;
pub mod torus;

pub use error::{Result, SimError};

/// Diffusion speed shared by every Brownian driver in the crate: components
/// have variance `speed * t`, so the quadratic variation of a single
/// component over `[0, t]` concentrates at `2t`.
pub const BROWNIAN_SPEED: f64 = 2.0;
