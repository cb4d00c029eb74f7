//! Linear relaying for the two-hop interference channel.
//!
//! Two sources talk to two destinations through two amplify-and-forward
//! relays. Time-varying relay kernels shape the end-to-end channel into
//! S, Z and X interference topologies; coding across three such phases
//! gives 4/3 sum-DoF on real scalar channels, `2M - 2/3` with `M` real
//! antennas and `2M - 1/3` with complex gains.
//!
//! Modules, bottom up:
//!
//! - [`linalg`]: tolerant rank, Sylvester solver, eigenvalue separation,
//!   Krylov controllability.
//! - [`channel`]: channel pairs, random ensembles, genericity checks,
//!   complex-to-real augmentation.
//! - [`relaying`]: kernels realizing the S/Z/X topologies and the resulting
//!   end-to-end channel and noise covariance.
//! - [`schemes`]: achievable rates of the three-phase schemes and baselines,
//!   kernel refinement and a symbol-level simulator.
//! - [`converse`]: decomposition identities and rank-based DoF bounds.
//! - [`bench`]: Monte Carlo SNR sweeps, slope fitting and result files.

pub mod bench;
pub mod channel;
pub mod converse;
pub mod error;
pub mod linalg;
pub mod relaying;
pub mod schemes;

pub use error::{Error, Result};
