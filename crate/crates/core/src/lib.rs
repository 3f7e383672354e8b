//! Nonlinear eigenfunctions of one-homogeneous regularizers (TV, TGV²).
//!
//! The forward flow drives an initial field towards an eigenfunction
//! `p(u) = λu`, `p(u) ∈ ∂J(u)`, with a smaller eigenvalue; the inverse flow
//! towards a larger one. Each semi-implicit step is a prox problem solved by
//! a primal-dual method.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod flows;
pub mod functional;
pub mod grid;
pub mod ipm;
pub mod operators;
pub mod solver;

pub use analysis::{affinity, rayleigh_lambda, theta_deg, validate_eigenfunction, SpectralResult};
pub use error::{Error, Result};
pub use flows::{run_forward, run_gradient_flow, run_inverse, run_linear, EigenResult, FlowConfig, FlowTrace};
pub use functional::{evaluate, one_hom_check, subgrad_inequality_check, tgv2_value, tv_value, FunctionalKind};
pub use grid::{GridField, Shape, SymTensorField, VecField};
pub use solver::{prox, prox_warm, subgradient_at, PdState, ProxResult, SolverParams};
