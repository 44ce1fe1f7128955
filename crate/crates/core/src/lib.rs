//! Tail-inheritance laboratory: tail estimators, contraction-bounded
//! recursions, an income fluctuation problem solver, wealth panel
//! simulation and a heterogeneous-discount-factor economy with an exact
//! Pareto tail.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contraction;
pub mod rng;
pub mod tails;
pub mod utility;
pub mod ifp;
pub mod wealth;
pub mod hetbeta;
pub mod io;
pub mod reproduce;
pub mod experiment;
