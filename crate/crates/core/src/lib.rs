//! GNSS-denied inertial navigation for fixed-wing aircraft: air-data,
//! attitude and position filters, a kinematic flight and sensor simulator,
//! and a Monte Carlo harness computing navigation system error metrics.

// `!(x > 0.0)` is used on purpose so that NaN fails the guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod altnav;
pub mod atmo;
pub mod config;
pub mod env;
pub mod error;
pub mod geo;
pub mod harness;
pub mod nav;
pub mod output;
pub mod seed;
pub mod sensors;
pub mod truth;
