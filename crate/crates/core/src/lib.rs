//! Robust PCA: recover a low-rank `L` and a sparse `S` from `D = L + S`.
//!
//! The main solver, [`riecur_solve`], works only with sampled rows and
//! columns of `D`. It projects them onto the tangent space of the rank-`r`
//! manifold at the current estimate and keeps the low-rank part as CUR
//! factors. [`ircur_solve`] and [`accaltproj_solve`] are the two reference
//! solvers it is benchmarked against.

pub mod cur;
pub mod error;
pub mod experiment;
pub mod io;
pub mod matrix;
pub mod selftest;
pub mod solver;
mod svd;
pub mod tangent;

pub use cur::{cur_build, cur_cols, cur_full, cur_rows, cur_truncated_svd, CURFactors};
pub use error::{Result, RpcaError};
pub use matrix::{
    hard_threshold, incoherence_estimate, pinv_truncated, sample_uniform_indices, sparsity_profile, truncated_svd,
    DenseMatrix, IndexSet, TruncatedSVD,
};
pub use solver::{
    accaltproj_solve, compute_error, init_cur, ircur_solve, riecur_solve, riecur_step, SolveResult, SolverConfig,
    SolverKind, SparseBlocks,
};
pub use tangent::{project_tangent_dense, projected_cols, projected_intersection, projected_rows};
