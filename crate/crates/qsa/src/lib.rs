// `!(x > 0.0)` deliberately rejects NaN alongside nonpositive values, and
// multi-array range loops read better than zipped iterators here.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::type_complexity)]

//! Quasi-stochastic approximation toolkit.
//!
//! Root-finding ODEs driven by deterministic probing signals, with the
//! supporting machinery the experiments need: small dense matrix kernels,
//! probing-signal algebra with exact integrals, a forward-Euler simulator
//! with trajectory recording, quasi-Monte-Carlo estimation, gradient-free
//! optimization, off-policy policy evaluation for LQR, and scaled-error
//! coupling diagnostics.

pub mod acceptance;
pub mod coupling;
pub mod error;
pub mod gradfree;
pub mod lqr;
pub mod matrix;
pub mod qmc;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod signals;

pub use error::{Error, Result};
pub use sim::{Field, GainSchedule, SimOptions, Trajectory};
pub use signals::{ProbingSignal, SawtoothSignal, SinusoidTerm};
