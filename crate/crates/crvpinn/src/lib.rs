//! Robust variational physics-informed neural networks on a collocation grid.
//!
//! The library trains small tanh networks to solve 2D PDEs on the unit
//! square. Instead of the usual mean-square residual, the training loss is
//! the quadratic form `RESᵀ G⁻¹ RES`, where `G` is the sparse Gram matrix of
//! a problem-dependent discrete inner product assembled over Kronecker-delta
//! test functions. `G` is factorized once per run; every iteration then costs
//! two triangular solves. The square root of this loss bounds the energy-norm
//! error from above and below, which is what makes it usable as a stopping
//! criterion when the exact solution is unknown.
//!
//! Module map:
//! - [`grid`]: discrete function spaces and finite-difference operators
//! - [`sparse`]: CSR storage, LDLᵀ factorization, dense generalized eigensolve
//! - [`gram`]: Gram matrices (Laplace, variable diffusion, Stokes blocks)
//! - [`nn`]: multilayer perceptron and strong Dirichlet enforcement
//! - [`problems`]: the six benchmark problems
//! - [`loss`]: robust loss, residual representative, error bounds
//! - [`train`]: Adam training loop, direct-solve oracles, run artifacts
//! - [`infsup`]: numerical inf-sup verification for the Stokes system

pub mod error;
pub mod grid;
pub mod sparse;
pub mod gram;
pub mod nn;
pub mod problems;
pub mod loss;
pub mod train;
pub mod infsup;

pub use error::{Error, Result};
