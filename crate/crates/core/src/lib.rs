//! Numerical study of complete Calabi-Yau metrics on a radial model end.
//!
//! The [`solver`] module computes the radially reduced Monge-Ampere
//! solutions `u_eps` and their `eps -> 0` limit, [`estimates`] checks the
//! decay and pointwise bounds they are expected to satisfy, and [`config`],
//! [`experiment`] and [`io`] drive reproducible runs from a config file.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod config;
pub mod estimates;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod solver;
