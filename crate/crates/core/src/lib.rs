//! Variational synthesis of physically realizable linear open quantum systems
//! whose unique steady state minimizes a bosonic cost Hamiltonian.

pub mod cli;
pub mod cost;
pub mod error;
pub mod fock;
pub mod gradients;
pub mod hinf;
pub mod linalg;
pub mod moments;
pub mod optimizers;
pub mod qaoa;
pub mod qsys;

pub use error::{Error, Result};
