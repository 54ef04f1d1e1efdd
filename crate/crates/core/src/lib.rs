//! Simulation and numerical verification toolkit for eternal additive
//! coalescents viewed as fragmentation processes.
//!
//! The crate simulates the Brownian (standard) fragmentation through
//! excursions of a Brownian bridge and finite-n additive coalescents, and
//! evaluates the multiplicative density 𝐡 that changes the Brownian
//! fragmentation law into the law of the fragmentation driven by
//! `X = B − Γ + ct` for a drift-free subordinator `Γ`.
//!
//! Module map:
//!
//! * [`model`] subordinator specifications and Laplace-exponent functionals.
//! * [`coalescent`] exact Marcus–Lushnikov dynamics of the additive coalescent.
//! * [`excursion`] bridges, the Vervaat transform and constancy intervals.
//! * [`density`] Gaussian densities, the ratio `q/p` and the densities `g`, `h`, 𝐡, `h_n`.
//! * [`measure`] size-biased rearrangement, martingale and importance-sampling checks.
//! * [`pde`] dislocation-measure quadrature, generator and integro-differential residual.
//! * [`cli`] the `coalfrag` command line front end.
//!
//! Analytic kernels are generic over [`Real`]; the Monte Carlo layers work
//! in `f64` and the aliases below name the concrete instantiations.

pub mod cli;
pub mod coalescent;
pub mod density;
pub mod error;
pub mod excursion;
pub mod measure;
pub mod model;
pub mod parallel;
pub mod partition;
pub mod pde;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use partition::MassPartition;
pub use scalar::Real;
pub use stats::MCEstimate;

/// Subordinator specification in double precision.
pub type Spec = model::SubordinatorSpec<f64>;
/// Compound-Poisson jump law in double precision.
pub type Jump = model::JumpLaw<f64>;
/// Subordinator kind in double precision.
pub type Kind = model::SubordinatorKind<f64>;
/// Quadrature options in double precision.
pub type QuadOptions = quad::QuadOptions<f64>;
/// Quadrature result in double precision.
pub type QuadResult = quad::QuadResult<f64>;
/// The binary dislocation kernel in double precision.
pub type Kernel = pde::DislocationKernel;

/// Library version recorded in every manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
