//! Simulation and voltage optimization for two electrons trapped in a
//! double-well potential above superfluid helium.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ci;
pub mod dvr;
pub mod effective;
pub mod electrostatics;
pub mod hartree;
pub mod linalg;
pub mod optimizer;
pub mod units;
