//! Spectral Galerkin toolkit for the one-dimensional stochastic Gross-Pitaevskii
//! (complex Ginzburg-Landau) equation with harmonic trap and additive space-time
//! white noise,
//!
//! ```text
//! dX = (i + gamma) (H X + eta X - |X|^2 X) dt + sqrt(2 gamma) dW,   H = d^2/dx^2 - x^2,
//! ```
//!
//! discretized in the Hermite eigenbasis of `H`. The crate provides
//!
//! * [`hermite`] — the eigenbasis, Gauss-Hermite quadrature exact for the
//!   products the cubic nonlinearity generates, spectral projectors and the
//!   smooth cutoff `S_N`,
//! * [`measures`] — the Gaussian free measure, the Gibbs measure and its
//!   samplers (pCN and an importance-sampling oracle),
//! * [`mehler`] — the closed-form Mehler kernel of `exp(t (i + gamma) H)` and
//!   smoothing-estimate scans,
//! * [`dynamics`] — exponential-Euler integrators for the Galerkin flow, its
//!   purely dissipative counterpart, tangent (linearized) flows, the exact
//!   stationary Ornstein-Uhlenbeck process and the shifted deterministic
//!   equation with its discrete energy certificate,
//! * [`observables`] — norms, Hamiltonians, the two-replica variance-decay
//!   estimator, Poincare checks, structure functions and a strong-Feller
//!   finite-difference probe,
//! * [`stats`] — the small statistical helpers (standard errors, fits,
//!   bootstrap) shared by the estimators and the verification suites.
//!
//! Everything is deterministic given a master seed: random streams are derived
//! per `(seed, role, replica)` with [`rng::stream`], so results do not depend
//! on thread scheduling.

pub mod dynamics;
pub mod error;
pub mod field;
pub mod hermite;
pub mod io;
pub mod measures;
pub mod mehler;
pub mod observables;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use field::{SpectralField, C64};
pub use hermite::{eigenvalue_sq, CutoffProfile, QuadratureGrid};
