//! Numerics for semilinear evolution equations
//!
//! ```text
//! dy = (A y + f(y)) dt + g(y) dw,      y(0) = ξ,
//! ```
//!
//! driven by a level-2 γ-Hölder rough path `(w, w²)` with `1/3 < γ ≤ 1/2`.
//!
//! The crate is organised bottom-up:
//!
//! * [`rough_driver`]: uniform time grids and grid-sampled rough paths (Chen audit,
//!   Hölder norms, time shifts, the rough metric, geometric lifts).
//! * [`spectral`]: the linear part `A` in its eigenbasis, the analytic semigroup,
//!   interpolation norms and the unstable/stable splitting.
//! * [`nonlinearity`]: drift and diffusion maps with derivative access.
//! * [`controlled`]: mildly controlled paths, their remainders and norms,
//!   composition with nonlinearities.
//! * [`cutoff`]: the norm cut-off `χ_R`, truncated nonlinearities and the
//!   random cut-off radius.
//! * [`integrator`]: semigroup-convolved rough integrals via compensated Riemann
//!   sums, the drift convolution and the local-error probe.
//! * [`solver`]: Picard iteration for local mild solutions, global concatenation,
//!   cocycle checks and temperedness statistics.
//! * [`manifold`]: the discrete Lyapunov-Perron map, its fixed point and the
//!   local unstable manifold graph.
//!
//! Everything here is `no_std` + `alloc`; IO and the command line live in the
//! `roughflow` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x <= tol)` is meant to fail on NaN
#![allow(clippy::needless_range_loop)]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controlled;
pub mod cutoff;
pub mod error;
pub mod integrator;
pub mod manifold;
pub mod math;
pub mod nonlinearity;
pub mod rough_driver;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
