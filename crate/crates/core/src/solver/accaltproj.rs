//! Accelerated alternating projections on the full matrix.
//!
//! Each iteration projects `D − S_k` onto the tangent space at `L_k` and
//! truncates to rank `r`. The projection has rank at most `2r`, so the
//! truncation only needs QR factorizations of two `n × r` blocks and an SVD
//! of a `2r × 2r` core.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use super::{LowRankEstimate, SolveResult, SolverConfig, SolverKind, SparseEstimate};
use crate::error::Result;
use crate::matrix::{fix_signs, svd_top, threshold_in_place, DenseMatrix, TruncatedSVD};
use crate::tangent::project_dense;

struct Factors {
    w: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

impl Factors {
    fn scaled_w(&self) -> DMatrix<f64> {
        let mut ws = self.w.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            ws.column_mut(j).scale_mut(*s);
        }
        ws
    }
}

/// Rank-`r` truncation of `P_T(x)` through the `2r × 2r` core
/// `[[WᵀXV, R₂ᵀ], [R₁, 0]]` with `Q₁R₁ = (I − WWᵀ)XV`, `Q₂R₂ = (I − VVᵀ)XᵀW`.
fn truncate_projection(x: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>, r: usize) -> Factors {
    let k = w.ncols();
    let xv = x * v;
    let xt_w = x.tr_mul(w);
    let core_m = w.tr_mul(&xv);
    let y1 = &xv - w * &core_m;
    let y2 = &xt_w - v * core_m.transpose();
    let qr1 = y1.qr();
    let qr2 = y2.qr();
    let (q1, r1) = (qr1.q(), qr1.r());
    let (q2, r2) = (qr2.q(), qr2.r());

    let (k1, k2) = (q1.ncols(), q2.ncols());
    let mut core = DMatrix::<f64>::zeros(k + k1, k + k2);
    core.view_mut((0, 0), (k, k)).copy_from(&core_m);
    core.view_mut((0, k), (k, k2)).copy_from(&r2.transpose());
    core.view_mut((k, 0), (k1, k)).copy_from(&r1);

    let (uc, sigma, vc) = svd_top(&core, r);
    let mut w_new = w * uc.rows(0, k) + &q1 * uc.rows(k, k1);
    let mut v_new = v * vc.rows(0, k) + &q2 * vc.rows(k, k2);
    fix_signs(&mut w_new, &mut v_new);
    Factors {
        w: w_new,
        sigma,
        v: v_new,
    }
}

/// `‖R − T_ζ(R)‖_F` where `r` is overwritten by `T_ζ(R)`.
fn threshold_with_residual(res: &mut DMatrix<f64>, zeta: f64) -> f64 {
    let mut acc = 0.0;
    for x in res.iter_mut() {
        if x.abs() < zeta {
            acc += *x * *x;
            *x = 0.0;
        }
    }
    acc.sqrt()
}

/// `out ← D − W Σ Vᵀ`.
fn residual_into(out: &mut DMatrix<f64>, d: &DMatrix<f64>, f: &Factors) {
    out.copy_from(d);
    out.gemm(-1.0, &f.scaled_w(), &f.v.transpose(), 1.0);
}

pub fn accaltproj_solve(d: &DenseMatrix, cfg: &SolverConfig) -> Result<SolveResult> {
    let (m, n) = d.shape();
    cfg.validate(m, n)?;
    let r = cfg.rank;
    let dm = d.as_dmatrix();
    let d_norm = dm.norm();
    if d_norm == 0.0 {
        return Err(crate::RpcaError::DegenerateInput("D is the zero matrix".into()));
    }

    let start = Instant::now();
    // Dense analogue of the CUR initialization: SVD instead of CUR.
    let beta1 = cfg.beta1.unwrap_or_else(|| 0.5 * dm.amax());
    let beta2 = cfg.beta2.unwrap_or(cfg.gamma * beta1);
    let mut work = dm.clone();
    for x in work.iter_mut() {
        if x.abs() >= beta1 {
            *x = 0.0;
        }
    }
    let (w, sigma, v) = svd_top(&work, r);
    let mut lr = Factors { w, sigma, v };
    residual_into(&mut work, dm, &lr);
    let zeta0 = cfg.zeta0.unwrap_or(if work.amax() > 0.0 {
        work.amax()
    } else {
        f64::MIN_POSITIVE
    });
    let mut sparse = work.clone();
    threshold_in_place(&mut sparse, beta2);
    let init_time = start.elapsed();

    let mut error_history = Vec::new();
    let mut thresholds = Vec::new();
    let mut times: Vec<Duration> = Vec::new();
    for k in 0..cfg.max_iters {
        let t = Instant::now();
        work.copy_from(dm);
        work -= &sparse;
        lr = if cfg.dense_svd {
            let p = project_dense(&work, &lr.w, &lr.v);
            let (w, sigma, v) = svd_top(&p, r);
            Factors { w, sigma, v }
        } else {
            truncate_projection(&work, &lr.w, &lr.v, r)
        };
        let zeta = cfg.gamma.powi(k as i32) * zeta0;
        residual_into(&mut work, dm, &lr);
        let resid = threshold_with_residual(&mut work, zeta);
        std::mem::swap(&mut sparse, &mut work);
        let err = resid / d_norm;
        times.push(t.elapsed());
        error_history.push(err);
        thresholds.push(zeta);
        if err <= cfg.tol {
            break;
        }
    }
    let converged = error_history.last().is_some_and(|e| *e <= cfg.tol);
    Ok(SolveResult {
        solver: SolverKind::AccAltProj,
        iterations: error_history.len(),
        low_rank: LowRankEstimate::Svd(TruncatedSVD::from_parts(lr.w, lr.sigma, lr.v)),
        sparse: SparseEstimate::Dense(DenseMatrix::wrap(sparse)),
        error_history,
        thresholds,
        wall_time_per_iter: times,
        init_time,
        converged,
    })
}
