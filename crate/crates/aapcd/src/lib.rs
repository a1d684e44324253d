//! Asynchronous accelerated proximal coordinate descent (AAPCD) for composite
//! minimization `F(x) = f(x) + g(x)` with smooth possibly nonconvex `f` and
//! separable possibly nonconvex `g`.
//!
//! The crate contains the solver engines (simulated single-threaded, and a
//! real lock-free multi-worker engine), exact proximal operators including the
//! nonconvex capped-L1, delay/staleness machinery, and trace diagnostics
//! (Lyapunov descent verification, stationarity residuals, rate fitting).

pub mod baselines;
pub mod cli;
pub mod delays;
pub mod diagnostics;
pub mod manifest;
pub mod model;
pub mod prox;
pub mod solver;
pub mod trace;

mod error;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
