//! Finite-scale experiments on Floyd boundaries, divergence and thickness of
//! Cayley graphs.

pub mod cli;
pub mod divergence;
pub mod floyd;
pub mod graph;
pub mod groups;
pub mod quasigeodesic;
pub mod thickness;
