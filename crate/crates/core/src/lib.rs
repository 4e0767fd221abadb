//! Distributed synchronization of orthogonal matrices over directed graphs.
//!
//! A collection of pairwise transforms `{R_ij}` on the edges of a graph is
//! *synchronized* (transitively consistent) when compositions along every
//! loop equal the identity, equivalently when `R_ij = R_i^{-1} R_j` for some
//! node labels `{R_i}`. This crate implements:
//!
//! - block connection Laplacians `L_undir` / `L_dir` and the synchronization
//!   objectives they induce ([`sync`]);
//! - the centralized spectral relaxation that rounds the bottom eigenvectors
//!   of `L_undir` into node labels ([`sync::spectral`]);
//! - two distributed iterations: a power-method-like scheme with a dynamic
//!   average consensus rescaling for symmetric graphs ([`algo1`]) and a plain
//!   directed iteration for quasi-strongly connected graphs ([`algo2`]);
//! - a synchronous message-passing simulator with locality enforcement and
//!   instance synthesis ([`netsim`]).

pub mod algo1;
pub mod algo2;
pub mod error;
pub mod graph;
pub mod netsim;
pub mod ortho;
pub mod sync;
pub mod trace;

pub use error::{Error, Result};
