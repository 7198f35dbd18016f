//! Penalization solver for gradient-constrained HJB equations with
//! bounded-variation jump operators, and a Monte Carlo verifier for the
//! penalized feedback control.

pub mod expr;
pub mod geometry;
pub mod levy;
pub mod linalg;
pub mod numerics;
pub mod operator;
pub mod penalty;
pub mod nidd;
pub mod problem;
pub mod hjb;
pub mod control;
pub mod config;
pub mod io;
