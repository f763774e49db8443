//! A quick battery of invariant checks on random instances, run by the
//! `selftest` command to validate a build on the target machine.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cur::{cur_build, cur_full};
use crate::experiment::gen_low_rank;
use crate::io::{decode_matrix, decode_pgm, encode_matrix, encode_pgm, GrayImage};
use crate::matrix::{hard_threshold, pinv_truncated, sample_uniform_indices, truncated_svd, DenseMatrix};
use crate::solver::{SolverConfig, SolverKind};
use crate::tangent::{project_tangent_dense, projected_cols, projected_intersection, projected_rows};

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&mut ChaCha8Rng) -> Result<String, String>;

const CHECKS: [(&str, Check); 8] = [
    ("hard_threshold idempotent", check_threshold),
    ("truncated_svd optimal residual", check_svd),
    ("pinv Penrose identities", check_pinv),
    ("CUR exact on rank-r input", check_cur),
    ("tangent projection idempotent and self-adjoint", check_projection),
    ("slice formulas match dense projection", check_slices),
    ("solvers fixed on noiseless input", check_fixed_point),
    ("matrix and PGM round trips", check_round_trips),
];

/// Runs every check with a generator seeded from `seed`.
pub fn run_selftest(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(k, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let (passed, detail) = match check(&mut rng) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckOutcome { name, passed, detail }
        })
        .collect()
}

fn gauss(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

fn dense(m: DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_dmatrix(m).expect("finite random matrix")
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn err_str(e: crate::RpcaError) -> String {
    e.to_string()
}

fn check_threshold(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let a = dense(gauss(rng, 30, 20));
    let once = hard_threshold(&a, 0.7).map_err(err_str)?;
    let twice = hard_threshold(&once, 0.7).map_err(err_str)?;
    ensure(once == twice, || "second application changed the result".into())?;
    Ok("30x20, zeta 0.7".into())
}

fn check_svd(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let a = gauss(rng, 25, 18);
    let all = a.singular_values();
    let mut tail: Vec<f64> = all.iter().copied().collect();
    tail.sort_by(|x, y| y.total_cmp(x));
    let mut worst: f64 = 0.0;
    for r in 1..=18 {
        let svd = truncated_svd(&dense(a.clone()), r).map_err(err_str)?;
        let resid = (&a - svd.reconstruct().as_dmatrix()).norm_squared();
        let opt: f64 = tail[r..].iter().map(|s| s * s).sum();
        worst = worst.max((resid - opt).abs() / a.norm_squared());
    }
    ensure(worst < 1e-10, || format!("residual deviates from optimum by {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn check_pinv(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let a = gauss(rng, 9, 3) * gauss(rng, 3, 7);
    let p = pinv_truncated(&dense(a.clone()), 3).map_err(err_str)?.into_dmatrix();
    let checks = [
        rel(&(&a * &p * &a), &a),
        rel(&(&p * &a * &p), &p),
        rel(&(&a * &p).transpose(), &(&a * &p)),
        rel(&(&p * &a).transpose(), &(&p * &a)),
    ];
    let worst = checks.iter().copied().fold(0.0, f64::max);
    ensure(worst < 1e-9, || format!("identity residuals {checks:?}"))?;
    Ok(format!("max residual {worst:.1e}"))
}

fn check_cur(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (n, r) = (60, 4);
    let a = gen_low_rank(n, r, rng).map_err(err_str)?;
    let rows = sample_uniform_indices(n, 12, rng).map_err(err_str)?;
    let cols = sample_uniform_indices(n, 12, rng).map_err(err_str)?;
    let c = a.select_cols(&cols).map_err(err_str)?;
    let rr = a.select_rows(&rows).map_err(err_str)?;
    let u = c.select_rows(&rows).map_err(err_str)?;
    let f = cur_build(&c, &u, &rr, &rows, &cols, r).map_err(err_str)?;
    let e = rel(cur_full(&f).as_dmatrix(), a.as_dmatrix());
    ensure(e < 1e-9, || format!("relative error {e:e}"))?;
    Ok(format!("relative error {e:.1e}"))
}

fn orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DMatrix<f64> {
    gauss(rng, n, r).qr().q()
}

fn check_projection(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (n, r) = (40, 3);
    let w = dense(orthonormal(rng, n, r));
    let v = dense(orthonormal(rng, n, r));
    let x = dense(gauss(rng, n, n));
    let y = dense(gauss(rng, n, n));
    let px = project_tangent_dense(&x, &w, &v).map_err(err_str)?;
    let ppx = project_tangent_dense(&px, &w, &v).map_err(err_str)?;
    let py = project_tangent_dense(&y, &w, &v).map_err(err_str)?;
    let idem = rel(ppx.as_dmatrix(), px.as_dmatrix());
    let lhs = px.as_dmatrix().dot(y.as_dmatrix());
    let rhs = x.as_dmatrix().dot(py.as_dmatrix());
    let adj = (lhs - rhs).abs() / (x.frobenius_norm() * y.frobenius_norm());
    ensure(idem < 1e-11 && adj < 1e-11, || {
        format!("idempotence {idem:e}, adjointness {adj:e}")
    })?;
    Ok(format!("idempotence {idem:.1e}, adjointness {adj:.1e}"))
}

fn check_slices(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (n, r, s) = (50, 3, 10);
    let rows = sample_uniform_indices(n, s, rng).map_err(err_str)?;
    let cols = sample_uniform_indices(n, s, rng).map_err(err_str)?;
    let c = dense(gauss(rng, n, s));
    let rr = dense(gauss(rng, s, n));
    let u = dense(gauss(rng, s, s));
    let up = pinv_truncated(&u, s).map_err(err_str)?;
    let w = dense(orthonormal(rng, n, r));
    let v = dense(orthonormal(rng, n, r));
    let x = dense(c.as_dmatrix() * up.as_dmatrix() * rr.as_dmatrix());
    let p = project_tangent_dense(&x, &w, &v).map_err(err_str)?;
    let got_rows = projected_rows(&c, &up, &rr, &w, &v, &rows).map_err(err_str)?;
    let got_cols = projected_cols(&c, &up, &rr, &w, &v, &cols).map_err(err_str)?;
    let got_int = projected_intersection(&c, &up, &rr, &w, &v, &rows, &cols).map_err(err_str)?;
    let want_rows = p.select_rows(&rows).map_err(err_str)?;
    let want_cols = p.select_cols(&cols).map_err(err_str)?;
    let want_int = want_rows.select_cols(&cols).map_err(err_str)?;
    let worst = [
        rel(got_rows.as_dmatrix(), want_rows.as_dmatrix()),
        rel(got_cols.as_dmatrix(), want_cols.as_dmatrix()),
        rel(got_int.as_dmatrix(), want_int.as_dmatrix()),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    ensure(worst < 1e-10, || format!("max relative deviation {worst:e}"))?;
    Ok(format!("max relative deviation {worst:.1e}"))
}

fn check_fixed_point(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (n, r) = (120, 3);
    let d = gen_low_rank(n, r, rng).map_err(err_str)?;
    let mut cfg = SolverConfig::new(r);
    cfg.beta1 = Some(2.0 * d.max_abs());
    cfg.tol = 1e-10;
    let mut notes = Vec::new();
    for kind in SolverKind::ALL {
        let res = kind.solve(&d, &cfg).map_err(err_str)?;
        let e = rel(res.low_rank.to_dense().as_dmatrix(), d.as_dmatrix());
        ensure(res.converged && res.iterations <= 3 && e < 1e-9, || {
            format!("{kind}: {} iterations, relative error {e:e}", res.iterations)
        })?;
        notes.push(format!("{kind} {}", res.iterations));
    }
    Ok(format!("iterations: {}", notes.join(", ")))
}

fn check_round_trips(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let m = dense(gauss(rng, 7, 5));
    let back = decode_matrix(&encode_matrix(&m), "selftest").map_err(err_str)?;
    let same_bits = m
        .to_row_major()
        .iter()
        .zip(back.to_row_major())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(same_bits, || "matrix file round trip changed bits".into())?;
    let pixels: Vec<u8> = (0..48).map(|_| rng.random()).collect();
    let img = GrayImage::new(8, 6, pixels).map_err(err_str)?;
    let img_back = decode_pgm(&encode_pgm(&img), "selftest").map_err(err_str)?;
    ensure(img == img_back, || "PGM round trip changed pixels".into())?;
    Ok("7x5 matrix, 8x6 frame".into())
}
