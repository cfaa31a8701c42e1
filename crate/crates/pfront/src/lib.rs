//! Pulsating traveling fronts of spatially periodic bistable
//! reaction–diffusion equations `u_t = Δu + f(x,u)`.
//!
//! The crate computes front profiles and direction-dependent speeds on a
//! truncated cylinder, integrates the Cauchy problem on a box to measure
//! spreading rates, and checks explicit sub/supersolution barriers.

pub mod barrier;
pub mod cauchy;
pub mod config;
pub mod cylinder;
pub mod front;
pub mod io;
pub mod linear;
pub mod medium;
pub mod pipeline;
pub mod spline;
pub mod sweep;
