//! Robust PCA solvers sharing one configuration and result type.
//!
//! * [`riecur_solve`]: CUR iteration on tangent-space-projected slices.
//! * [`ircur_solve`]: the same iteration on raw slices of `D − S`.
//! * [`accaltproj_solve`]: dense tangent projection followed by rank-`r`
//!   truncation.

mod accaltproj;
mod cur_iter;

use std::time::Duration;

use nalgebra::DMatrix;

pub use accaltproj::accaltproj_solve;
pub use cur_iter::{compute_error, cur_iterate, init_cur, ircur_solve, riecur_solve, riecur_step, CurState, SliceRule};

use crate::cur::{cur_full, CURFactors, PinvPolicy};
use crate::error::{invalid, Result};
use crate::matrix::{DenseMatrix, IndexSet, TruncatedSVD, DEFAULT_PINV_REL_TOL};

/// Which algorithm to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    RieCur,
    IrCur,
    AccAltProj,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::RieCur, SolverKind::IrCur, SolverKind::AccAltProj];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::RieCur => "riecur",
            SolverKind::IrCur => "ircur",
            SolverKind::AccAltProj => "accaltproj",
        }
    }

    pub fn solve(self, d: &DenseMatrix, cfg: &SolverConfig) -> Result<SolveResult> {
        match self {
            SolverKind::RieCur => riecur_solve(d, cfg),
            SolverKind::IrCur => ircur_solve(d, cfg),
            SolverKind::AccAltProj => accaltproj_solve(d, cfg),
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = crate::RpcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "riecur" => Ok(SolverKind::RieCur),
            "ircur" => Ok(SolverKind::IrCur),
            "accaltproj" => Ok(SolverKind::AccAltProj),
            other => invalid(format!(
                "unknown solver '{other}' (expected riecur, ircur or accaltproj)"
            )),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Solver hyperparameters. Unset optional values fall back to data-driven
/// defaults computed at solve time.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Target rank `r`.
    pub rank: usize,
    /// Stop once the relative residual falls to this value.
    pub tol: f64,
    /// Initial threshold. Default: largest residual magnitude after
    /// initialization, over the sampled rows and columns.
    pub zeta0: Option<f64>,
    /// Threshold decay rate, `ζ_{k+1} = γ^k ζ₀`.
    pub gamma: f64,
    /// Number of sampled rows. Default `max(⌈3 ln m⌉, r + 2)`.
    pub rows_sampled: Option<usize>,
    /// Number of sampled columns. Default `max(⌈3 ln n⌉, r + 2)`.
    pub cols_sampled: Option<usize>,
    pub max_iters: usize,
    /// Draw fresh row/column indices every iteration.
    pub resample: bool,
    /// First initialization threshold. Default: half the largest sampled
    /// magnitude of `D`.
    pub beta1: Option<f64>,
    /// Second initialization threshold. Default `γ·β₁`.
    pub beta2: Option<f64>,
    pub seed: u64,
    pub pinv_rel_tol: f64,
    /// Regularize ill-conditioned intersections instead of failing.
    pub ridge_fallback: bool,
    /// AccAltProj only: truncate with a dense SVD of the projected matrix.
    pub dense_svd: bool,
}

impl SolverConfig {
    pub fn new(rank: usize) -> Self {
        SolverConfig {
            rank,
            tol: 1e-6,
            zeta0: None,
            gamma: 0.65,
            rows_sampled: None,
            cols_sampled: None,
            max_iters: 100,
            resample: false,
            beta1: None,
            beta2: None,
            seed: 0,
            pinv_rel_tol: DEFAULT_PINV_REL_TOL,
            ridge_fallback: false,
            dense_svd: false,
        }
    }

    pub(crate) fn pinv_policy(&self) -> PinvPolicy {
        PinvPolicy {
            rel_tol: self.pinv_rel_tol,
            ridge: self.ridge_fallback,
        }
    }

    /// Checks the scalar hyperparameters against a `rows × cols` input.
    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rank == 0 || self.rank > rows.min(cols) {
            return invalid(format!("rank {} out of range for a {rows}x{cols} matrix", self.rank));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return invalid(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return invalid(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if let Some(z) = self.zeta0 {
            if !(z > 0.0 && z.is_finite()) {
                return invalid(format!("zeta0 must be positive and finite, got {z}"));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if let Some(b) = b {
                if !(b >= 0.0 && b.is_finite()) {
                    return invalid(format!("{name} must be non-negative and finite, got {b}"));
                }
            }
        }
        if self.pinv_rel_tol.is_nan() || self.pinv_rel_tol < 0.0 {
            return invalid("pinv_rel_tol must be non-negative");
        }
        Ok(())
    }

    /// Resolved `(rows_sampled, cols_sampled)` for a `rows × cols` input.
    pub fn sample_sizes(&self, rows: usize, cols: usize) -> Result<(usize, usize)> {
        let ni = self
            .rows_sampled
            .unwrap_or_else(|| default_sample_size(rows, self.rank));
        let nj = self
            .cols_sampled
            .unwrap_or_else(|| default_sample_size(cols, self.rank));
        if ni > rows || nj > cols {
            return invalid(format!("cannot sample {ni}x{nj} from a {rows}x{cols} matrix"));
        }
        if self.rank > ni || self.rank > nj {
            return invalid(format!("rank {} exceeds sample sizes {ni}x{nj}", self.rank));
        }
        Ok((ni, nj))
    }
}

/// `max(⌈3 ln n⌉, r + 2)`, capped at `n`.
pub fn default_sample_size(n: usize, rank: usize) -> usize {
    let by_log = (3.0 * (n as f64).ln()).ceil() as usize;
    by_log.max(rank + 2).min(n)
}

/// The sparse estimate restricted to sampled rows and columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseBlocks {
    rows: DMatrix<f64>,
    cols: DMatrix<f64>,
    row_idx: IndexSet,
    col_idx: IndexSet,
}

impl SparseBlocks {
    /// `rows` is `S[I, :]` and `cols` is `S[:, J]`; they must agree exactly
    /// on `S[I, J]`.
    pub fn new(rows: DMatrix<f64>, cols: DMatrix<f64>, row_idx: IndexSet, col_idx: IndexSet) -> Result<Self> {
        if rows.nrows() != row_idx.len() || rows.ncols() != col_idx.ambient() {
            return invalid(format!("row block has shape {:?}", rows.shape()));
        }
        if cols.ncols() != col_idx.len() || cols.nrows() != row_idx.ambient() {
            return invalid(format!("column block has shape {:?}", cols.shape()));
        }
        let blocks = SparseBlocks {
            rows,
            cols,
            row_idx,
            col_idx,
        };
        if !blocks.intersection_consistent() {
            return invalid("row and column blocks disagree on the intersection");
        }
        Ok(blocks)
    }

    pub(crate) fn new_unchecked(rows: DMatrix<f64>, cols: DMatrix<f64>, row_idx: IndexSet, col_idx: IndexSet) -> Self {
        SparseBlocks {
            rows,
            cols,
            row_idx,
            col_idx,
        }
    }

    pub fn rows_block(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn cols_block(&self) -> &DMatrix<f64> {
        &self.cols
    }

    pub fn row_indices(&self) -> &IndexSet {
        &self.row_idx
    }

    pub fn col_indices(&self) -> &IndexSet {
        &self.col_idx
    }

    pub fn intersection_consistent(&self) -> bool {
        self.row_idx.iter().enumerate().all(|(a, i)| {
            self.col_idx
                .iter()
                .enumerate()
                .all(|(b, j)| self.rows[(a, j)].to_bits() == self.cols[(i, b)].to_bits())
        })
    }
}

/// Final low-rank estimate.
#[derive(Clone, Debug)]
pub enum LowRankEstimate {
    Cur(CURFactors),
    Svd(TruncatedSVD),
}

impl LowRankEstimate {
    /// Dense `L̂`. Costs `O(mn)` memory.
    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            LowRankEstimate::Cur(f) => cur_full(f),
            LowRankEstimate::Svd(s) => s.reconstruct(),
        }
    }

    pub fn as_cur(&self) -> Option<&CURFactors> {
        match self {
            LowRankEstimate::Cur(f) => Some(f),
            LowRankEstimate::Svd(_) => None,
        }
    }
}

/// Final sparse estimate.
#[derive(Clone, Debug)]
pub enum SparseEstimate {
    Blocks(SparseBlocks),
    Dense(DenseMatrix),
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub solver: SolverKind,
    pub low_rank: LowRankEstimate,
    pub sparse: SparseEstimate,
    pub iterations: usize,
    /// Relative residual after each iteration.
    pub error_history: Vec<f64>,
    /// Threshold applied at each iteration.
    pub thresholds: Vec<f64>,
    pub wall_time_per_iter: Vec<Duration>,
    pub init_time: Duration,
    pub converged: bool,
}

impl SolveResult {
    pub fn final_error(&self) -> f64 {
        self.error_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn total_time(&self) -> Duration {
        self.init_time + self.wall_time_per_iter.iter().sum::<Duration>()
    }

    /// Mean wall time of one iteration, in seconds.
    pub fn mean_iter_time(&self) -> f64 {
        if self.wall_time_per_iter.is_empty() {
            return 0.0;
        }
        self.wall_time_per_iter.iter().map(Duration::as_secs_f64).sum::<f64>() / self.wall_time_per_iter.len() as f64
    }
}
