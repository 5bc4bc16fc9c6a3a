//! Time discretisation of SDEs driven by multidimensional fractional Brownian
//! motion with Hurst parameter `H > 1/2`.
//!
//! The crate covers the whole pipeline used to study strong convergence of
//! the Euler, modified Euler and Crank-Nicolson schemes:
//!
//! * [`fbm`]: exact fractional Gaussian noise samplers (Cholesky and
//!   circulant embedding) and coupled coarse/fine driving paths.
//! * [`field`]: vector fields with analytic derivatives and a registry of
//!   built-in test equations.
//! * [`schemes`]: the three one-step schemes, interpolations and reference
//!   solutions.
//! * [`constants`]: quadrature evaluation of the Lévy-area variance
//!   constants `κ(H)` and `ρ(H)`.
//! * [`levy`]: simulation of discrete Lévy areas and their scaled variances.
//! * [`analysis`]: Monte Carlo strong errors, log-log rate fits and limit
//!   error studies.
//!
//! Component `0` of every driving path is the deterministic clock
//! `B^0_t = t`, so drift terms are handled exactly like the stochastic
//! components.

pub mod analysis;
pub mod constants;
pub mod error;
pub mod fbm;
pub mod field;
pub mod grid;
pub mod levy;
pub mod output;
pub mod quadrature;
pub mod rng;
pub mod schemes;
pub mod stats;

pub use analysis::{ErrorStudy, ErrorStudyConfig, LimitCase, RateCase, RateFit};
pub use constants::{ConstantKind, ConstantResult};
pub use error::{Error, Result};
pub use fbm::{DrivingPath, SamplerMethod};
pub use field::{SdeInstance, VectorField};
pub use grid::TimeGrid;
pub use schemes::{CnConfig, ReferenceKind, Scheme, Trajectory};
