//! Discounted optimal control with cost shaping by a control Lyapunov function.
//!
//! The crate solves the standard discounted problem with running cost
//! `ℓ(x,u) = Q(x) + R(u)` and the reshaped problem whose running cost is
//! `W(F(x,u)) − W(x) + ℓ(x,u)` for a candidate CLF `W`, both by grid value
//! iteration, and checks the stability conditions that tie the discount
//! factor to the growth of the optimal value.
//!
//! Everything works in cost convention (rewards are negated costs).
//!
//! The crate is `no_std` with `alloc`. The `std` feature enables the
//! standard library, and `parallel` runs grid sweeps on rayon with results
//! bitwise identical to the sequential path.
#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod analysis;
pub mod costs;
pub mod dynamics;
mod error;
pub mod gridsolve;
mod math;
pub mod quadratics;

pub use error::{Error, Result};
pub use math::wrap_angle;
