//! Nonlinear Markov chains and mean-field (McKean–Vlasov) particle systems:
//! exact law propagation, Dobrushin-type ergodicity certificates,
//! reproductions of the known non-ergodic constructions, and Monte-Carlo
//! diagnostics for perturbed McKean–Vlasov diffusions.

pub mod cli;
pub mod counterexamples;
pub mod ergodicity;
pub mod error;
pub mod kernels;
pub mod mckean_vlasov;
pub mod measures;
pub mod report;

pub use error::{Error, Result};
