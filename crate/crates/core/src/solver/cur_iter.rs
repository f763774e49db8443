//! CUR-based iteration shared by RieCUR and IRCUR. The two differ only in
//! how the next column, row and intersection blocks are formed from the
//! blocks of `D − S_k` ([`SliceRule`]).

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LowRankEstimate, SolveResult, SolverConfig, SolverKind, SparseBlocks, SparseEstimate};
use crate::cur::CURFactors;
use crate::error::{invalid, Result, RpcaError};
use crate::matrix::{pinv_core, sample_uniform_indices, threshold_in_place, DenseMatrix, IndexSet};
use crate::tangent::FactoredInput;

/// How the next CUR blocks are derived from the blocks of `D − S_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceRule {
    /// Slices of the tangent-space projection `P_{T_k}(D − S_k)` (RieCUR).
    Tangent,
    /// Raw slices of `D − S_k` (IRCUR).
    Raw,
}

impl SliceRule {
    fn solver(self) -> SolverKind {
        match self {
            SliceRule::Tangent => SolverKind::RieCur,
            SliceRule::Raw => SolverKind::IrCur,
        }
    }
}

/// Iteration state. `basis` holds the rank-`r` singular vector blocks
/// `(W, V)` of the current low-rank estimate when the rule needs them.
#[derive(Clone, Debug)]
pub struct CurState {
    pub low_rank: CURFactors,
    pub sparse: SparseBlocks,
    pub basis: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// Threshold that produced the current sparse blocks.
    pub zeta: f64,
    pub zeta0: f64,
    /// Completed iterations.
    pub k: usize,
    /// Residual after the last completed iteration.
    pub last_error: Option<f64>,
    rng: ChaCha8Rng,
}

impl CurState {
    /// Starts from an initialization (see [`init_cur`]). `seed` drives
    /// resampling only.
    pub fn new(
        low_rank: CURFactors,
        sparse: SparseBlocks,
        zeta0: f64,
        init_threshold: f64,
        rule: SliceRule,
        seed: u64,
    ) -> Self {
        let basis = (rule == SliceRule::Tangent).then(|| {
            let (w, _, v) = low_rank.svd(low_rank.rank());
            (w, v)
        });
        CurState {
            low_rank,
            sparse,
            basis,
            zeta: init_threshold,
            zeta0,
            k: 0,
            last_error: None,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7265_7361_6d70),
        }
    }
}

struct Init {
    low_rank: CURFactors,
    sparse: SparseBlocks,
    beta2: f64,
    max_residual: f64,
}

fn max_abs_on_slices(d: &DMatrix<f64>, rows: &IndexSet, cols: &IndexSet) -> f64 {
    let c = cols.iter().map(|j| d.column(j).amax()).fold(0.0, f64::max);
    let r = rows.iter().map(|i| d.row(i).amax()).fold(0.0, f64::max);
    c.max(r)
}

/// Keeps entries strictly below `beta` in magnitude, i.e. `X − T_β(X)`.
fn keep_below(mut m: DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    for x in m.iter_mut() {
        if x.abs() >= beta {
            *x = 0.0;
        }
    }
    m
}

/// Residual slices `(D − L)[I, :]` and `(D − L)[:, J]`, with the shared
/// intersection copied from the column computation so both agree bitwise.
fn residual_slices(
    d: &DMatrix<f64>,
    low_rank: &CURFactors,
    rows: &IndexSet,
    cols: &IndexSet,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let col_res = d.select_columns(cols.as_slice()) - low_rank.cols_of(cols.as_slice());
    let mut row_res = d.select_rows(rows.as_slice()) - low_rank.rows_of(rows.as_slice());
    for (a, i) in rows.iter().enumerate() {
        for (b, j) in cols.iter().enumerate() {
            row_res[(a, j)] = col_res[(i, b)];
        }
    }
    (row_res, col_res)
}

/// Thresholds residual slices into sparse blocks and returns them with the
/// numerator `‖(D−L−S)[I,:]‖_F + ‖(D−L−S)[:,J]‖_F` of the residual.
fn threshold_slices(
    d: &DMatrix<f64>,
    low_rank: &CURFactors,
    rows: &IndexSet,
    cols: &IndexSet,
    zeta: f64,
) -> (SparseBlocks, f64) {
    let (row_res, col_res) = residual_slices(d, low_rank, rows, cols);
    let mut s_rows = row_res.clone();
    let mut s_cols = col_res.clone();
    threshold_in_place(&mut s_rows, zeta);
    threshold_in_place(&mut s_cols, zeta);
    let numer = (row_res - &s_rows).norm() + (col_res - &s_cols).norm();
    (
        SparseBlocks::new_unchecked(s_rows, s_cols, rows.clone(), cols.clone()),
        numer,
    )
}

fn slice_norms(d: &DMatrix<f64>, rows: &IndexSet, cols: &IndexSet) -> f64 {
    let r: f64 = rows.iter().map(|i| d.row(i).norm_squared()).sum();
    let c: f64 = cols.iter().map(|j| d.column(j).norm_squared()).sum();
    r.sqrt() + c.sqrt()
}

fn initialize(d: &DMatrix<f64>, cfg: &SolverConfig, rows: &IndexSet, cols: &IndexSet) -> Result<Init> {
    let beta1 = cfg.beta1.unwrap_or_else(|| 0.5 * max_abs_on_slices(d, rows, cols));
    let beta2 = cfg.beta2.unwrap_or(cfg.gamma * beta1);
    let c = keep_below(d.select_columns(cols.as_slice()), beta1);
    let r = keep_below(d.select_rows(rows.as_slice()), beta1);
    let u = c.select_rows(rows.as_slice());
    let low_rank = CURFactors::build(c, &u, r, rows.clone(), cols.clone(), cfg.rank, cfg.pinv_policy())?;
    if low_rank.numerical_rank() < cfg.rank {
        return Err(RpcaError::SingularInitialization {
            rank: low_rank.numerical_rank(),
            required: cfg.rank,
        });
    }
    let (row_res, col_res) = residual_slices(d, &low_rank, rows, cols);
    let max_residual = row_res.amax().max(col_res.amax());
    let mut s_rows = row_res;
    let mut s_cols = col_res;
    threshold_in_place(&mut s_rows, beta2);
    threshold_in_place(&mut s_cols, beta2);
    Ok(Init {
        low_rank,
        sparse: SparseBlocks::new_unchecked(s_rows, s_cols, rows.clone(), cols.clone()),
        beta2,
        max_residual,
    })
}

fn check_indices(d: &DenseMatrix, rows: &IndexSet, cols: &IndexSet) -> Result<()> {
    if rows.ambient() != d.rows() || cols.ambient() != d.cols() {
        return invalid("index sets do not match the matrix dimensions");
    }
    Ok(())
}

/// CUR-based initialization on the sampled rows `rows` and columns `cols`:
/// large entries (`|D| ≥ β₁`) are removed from the sampled slices, the rest
/// is factored as `C U_r† R`, and the residual on the slices is
/// thresholded at `β₂`.
pub fn init_cur(
    d: &DenseMatrix,
    cfg: &SolverConfig,
    rows: &IndexSet,
    cols: &IndexSet,
) -> Result<(CURFactors, SparseBlocks)> {
    cfg.validate(d.rows(), d.cols())?;
    check_indices(d, rows, cols)?;
    if cfg.rank > rows.len() || cfg.rank > cols.len() {
        return invalid("rank exceeds the number of sampled rows or columns");
    }
    let init = initialize(d.as_dmatrix(), cfg, rows, cols)?;
    Ok((init.low_rank, init.sparse))
}

/// Relative residual on the sampled slices:
/// `(‖(D−L−S)[I,:]‖_F + ‖(D−L−S)[:,J]‖_F) / (‖D[I,:]‖_F + ‖D[:,J]‖_F)`.
pub fn compute_error(d: &DenseMatrix, low_rank: &CURFactors, sparse: &SparseBlocks) -> Result<f64> {
    let (rows, cols) = (sparse.row_indices(), sparse.col_indices());
    check_indices(d, rows, cols)?;
    if low_rank.shape() != d.shape() {
        return invalid("low-rank factors do not match the matrix dimensions");
    }
    let d = d.as_dmatrix();
    let denom = slice_norms(d, rows, cols);
    if denom == 0.0 {
        return Err(RpcaError::DegenerateInput(
            "sampled rows and columns of D are all zero".into(),
        ));
    }
    let row_res = d.select_rows(rows.as_slice()) - low_rank.rows_of(rows.as_slice()) - sparse.rows_block();
    let col_res = d.select_columns(cols.as_slice()) - low_rank.cols_of(cols.as_slice()) - sparse.cols_block();
    Ok((row_res.norm() + col_res.norm()) / denom)
}

/// One RieCUR iteration. Returns the relative residual after the step.
pub fn riecur_step(d: &DenseMatrix, state: &mut CurState, cfg: &SolverConfig) -> Result<f64> {
    step(d.as_dmatrix(), state, cfg, SliceRule::Tangent)
}

fn step(d: &DMatrix<f64>, state: &mut CurState, cfg: &SolverConfig, rule: SliceRule) -> Result<f64> {
    let iteration = state.k + 1;
    step_inner(d, state, cfg, rule).map_err(|e| RpcaError::StepFailure {
        iteration,
        source: Box::new(e),
    })
}

fn step_inner(d: &DMatrix<f64>, state: &mut CurState, cfg: &SolverConfig, rule: SliceRule) -> Result<f64> {
    let r = cfg.rank;
    let policy = cfg.pinv_policy();

    let resampled = if cfg.resample {
        let rows = sample_uniform_indices(d.nrows(), state.sparse.row_indices().len(), &mut state.rng)?;
        let cols = sample_uniform_indices(d.ncols(), state.sparse.col_indices().len(), &mut state.rng)?;
        Some(threshold_slices(d, &state.low_rank, &rows, &cols, state.zeta).0)
    } else {
        None
    };
    let sparse = resampled.as_ref().unwrap_or(&state.sparse);
    let (rows, cols) = (sparse.row_indices().clone(), sparse.col_indices().clone());

    // Blocks of D − S_k.
    let c_ds = d.select_columns(cols.as_slice()) - sparse.cols_block();
    let r_ds = d.select_rows(rows.as_slice()) - sparse.rows_block();
    let u_ds = r_ds.select_columns(cols.as_slice());

    let (c_next, u_next, r_next) = match rule {
        SliceRule::Raw => (c_ds, u_ds, r_ds),
        SliceRule::Tangent => {
            let (w, v) = state
                .basis
                .as_ref()
                .ok_or_else(|| RpcaError::InvalidArgument("tangent rule needs the singular vector basis".into()))?;
            let u_pinv = pinv_core(&u_ds, r, policy.rel_tol, policy.ridge);
            if u_pinv.numerical_rank < r {
                return Err(RpcaError::SingularIntersection {
                    rank: u_pinv.numerical_rank,
                    required: r,
                });
            }
            let input = FactoredInput::new(&c_ds, &u_pinv.matrix, &r_ds, w, v)?;
            (
                input.cols(cols.as_slice()),
                input.intersection(rows.as_slice(), cols.as_slice()),
                input.rows(rows.as_slice()),
            )
        }
    };

    let low_rank = CURFactors::build(c_next, &u_next, r_next, rows.clone(), cols.clone(), r, policy)?;
    if low_rank.numerical_rank() < r {
        return Err(RpcaError::SingularIntersection {
            rank: low_rank.numerical_rank(),
            required: r,
        });
    }

    let zeta = cfg.gamma.powi(state.k as i32) * state.zeta0;
    let (sparse, numer) = threshold_slices(d, &low_rank, &rows, &cols, zeta);
    let denom = slice_norms(d, &rows, &cols);
    if denom == 0.0 {
        return Err(RpcaError::DegenerateInput(
            "sampled rows and columns of D are all zero".into(),
        ));
    }
    let err = numer / denom;

    if rule == SliceRule::Tangent {
        let (w, _, v) = low_rank.svd(r);
        state.basis = Some((w, v));
    }
    state.low_rank = low_rank;
    state.sparse = sparse;
    state.zeta = zeta;
    state.k += 1;
    state.last_error = Some(err);
    Ok(err)
}

/// Runs the CUR iteration with the given slice rule until the sampled
/// residual drops to `cfg.tol` or `cfg.max_iters` is reached. Running out of
/// iterations is reported through `converged`, not as an error.
pub fn cur_iterate(d: &DenseMatrix, cfg: &SolverConfig, rule: SliceRule) -> Result<SolveResult> {
    let (m, n) = d.shape();
    cfg.validate(m, n)?;
    let (ni, nj) = cfg.sample_sizes(m, n)?;
    let dm = d.as_dmatrix();

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rows = sample_uniform_indices(m, ni, &mut rng)?;
    let cols = sample_uniform_indices(n, nj, &mut rng)?;
    let init = initialize(dm, cfg, &rows, &cols)?;
    let zeta0 = cfg.zeta0.unwrap_or(if init.max_residual > 0.0 {
        init.max_residual
    } else {
        f64::MIN_POSITIVE
    });
    let mut state = CurState::new(init.low_rank, init.sparse, zeta0, init.beta2, rule, cfg.seed);
    let init_time = start.elapsed();

    let mut error_history = Vec::new();
    let mut thresholds = Vec::new();
    let mut times: Vec<Duration> = Vec::new();
    for _ in 0..cfg.max_iters {
        let t = Instant::now();
        let err = step(dm, &mut state, cfg, rule)?;
        times.push(t.elapsed());
        error_history.push(err);
        thresholds.push(state.zeta);
        if err <= cfg.tol {
            break;
        }
    }
    let converged = error_history.last().is_some_and(|e| *e <= cfg.tol);
    Ok(SolveResult {
        solver: rule.solver(),
        iterations: error_history.len(),
        low_rank: LowRankEstimate::Cur(state.low_rank),
        sparse: SparseEstimate::Blocks(state.sparse),
        error_history,
        thresholds,
        wall_time_per_iter: times,
        init_time,
        converged,
    })
}

/// Riemannian CUR: iterate on slices of the tangent-space projection.
pub fn riecur_solve(d: &DenseMatrix, cfg: &SolverConfig) -> Result<SolveResult> {
    cur_iterate(d, cfg, SliceRule::Tangent)
}

/// Iterated robust CUR: iterate on raw slices of `D − S_k`.
pub fn ircur_solve(d: &DenseMatrix, cfg: &SolverConfig) -> Result<SolveResult> {
    cur_iterate(d, cfg, SliceRule::Raw)
}
