//! Certified exponential convergence rates for switched systems under
//! dwell-time switching.
//!
//! A switched system `ẋ = f_u(x)` is described by a finite family of vector
//! fields ([`dynamics::Subsystem`]) sharing a common weak Lyapunov function
//! ([`lyapunov::LyapunovForm`]). The crate provides:
//!
//! - flows and switched trajectories ([`integrate`]), exact for linear fields
//!   through the matrix exponential and Runge–Kutta otherwise;
//! - switching signals of the usual dwell-time classes, with generators and
//!   finite-horizon verifiers ([`signals`]);
//! - the homogeneous rate `M(δ)` / `β(r, t)` and the two-region nonlinear
//!   certificate `(m₁, r₁, r, m₂, α, γ)`, each with Monte-Carlo verification
//!   ([`rates`]).
//!
//! ```
//! use switchrate::catalog;
//! use switchrate::rates::{compute_m, MSearch, RateFunction};
//!
//! let sys = catalog::example_system();
//! let cert = compute_m(&sys, 1.0, &MSearch::ExactSvd).unwrap();
//! assert!(cert.m > 0.0 && cert.m < 1.0);
//! let rate = RateFunction::from(&cert);
//! assert_eq!(rate.beta(2.0, 0.0), 2.0);
//! ```

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod dynamics;
pub mod error;
pub mod integrate;
pub mod io;
pub mod lyapunov;
pub mod rates;
pub mod sampling;
pub mod signals;

pub use error::{Error, Result};

/// Version string recorded in emitted certificates.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
