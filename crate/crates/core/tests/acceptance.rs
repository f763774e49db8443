//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Numeric arguments select
//! criteria, e.g. `cargo test --test acceptance -- 4 5`. The process exits
//! zero even when a criterion fails, so that the workspace test run stays
//! usable; set `ACCEPTANCE_STRICT=1` to turn any FAIL into a non-zero exit.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use riecur::experiment::{gen_low_rank, SyntheticProblem};
use riecur::io::{
    decode_matrix, decode_pgm, encode_matrix, encode_pgm, frames_to_matrix, matrix_to_frames, read_matrix,
    separate_background, video_to_matrix, write_matrix, GrayImage,
};
use riecur::{
    cur_build, cur_full, pinv_truncated, project_tangent_dense, projected_cols, projected_intersection, projected_rows,
    sample_uniform_indices, DenseMatrix, SolveResult, SolverConfig, SolverKind,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn gauss(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
}

fn dense(m: DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_dmatrix(m).unwrap()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DMatrix<f64> {
    gauss(rng, n, r).qr().q()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

/// Least-squares slope of `ln t` against `ln n`.
fn loglog_slope(ns: &[usize], ts: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn dense_error(p: &SyntheticProblem, res: &SolveResult) -> f64 {
    p.relative_error(&res.low_rank.to_dense())
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let (n, r, alpha) = (1000, 5, 0.3);
    let mut errors = Vec::new();
    let mut converged = 0;
    for seed in 0..5 {
        let p = SyntheticProblem::generate(n, r, alpha, None, seed).unwrap();
        let cfg = SolverConfig {
            tol: 1e-6,
            max_iters: 40,
            seed,
            ..SolverConfig::new(r)
        };
        match SolverKind::RieCur.solve(&p.d, &cfg) {
            Ok(res) => {
                let e = dense_error(&p, &res);
                if res.converged && e <= 1e-5 {
                    converged += 1;
                }
                errors.push(format!("{e:.1e}"));
            }
            Err(e) => errors.push(format!("error: {e}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        converged >= 4 && elapsed <= Duration::from_secs(120),
        format!(
            "{converged}/5 seeds converged with dense error <= 1e-5 (errors {}), {:.1}s",
            errors.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn complexity_scaling() -> Outcome {
    let ns = [500, 1000, 2000, 4000];
    let (r, alpha) = (5, 0.3);
    let mut per_iter = [[0.0; 4]; 3];
    let mut total = [0.0; 3];
    for (k, &n) in ns.iter().enumerate() {
        let p = SyntheticProblem::generate(n, r, alpha, None, 11).unwrap();
        let cfg = SolverConfig {
            tol: 1e-6,
            max_iters: 40,
            seed: 11,
            ..SolverConfig::new(r)
        };
        for (s, kind) in SolverKind::ALL.iter().enumerate() {
            // Best of a few repeats for the fast solvers damps timer noise.
            let repeats = if *kind == SolverKind::AccAltProj { 1 } else { 3 };
            let mut best_iter = f64::INFINITY;
            let mut best_total = f64::INFINITY;
            for _ in 0..repeats {
                let res = kind.solve(&p.d, &cfg).unwrap();
                best_iter = best_iter.min(res.mean_iter_time());
                best_total = best_total.min(res.total_time().as_secs_f64());
            }
            per_iter[s][k] = best_iter;
            if n == 4000 {
                total[s] = best_total;
            }
        }
    }
    let slope_rie = loglog_slope(&ns, &per_iter[0]);
    let slope_acc = loglog_slope(&ns, &per_iter[2]);
    let ircur_faster = (0..ns.len()).all(|k| per_iter[1][k] <= per_iter[0][k]);
    let ms = |v: &[f64; 4]| {
        v.iter()
            .map(|t| format!("{:.2}", t * 1e3))
            .collect::<Vec<_>>()
            .join("/")
    };
    outcome(
        slope_rie <= 1.4 && slope_acc >= 1.7 && total[0] < total[2] && ircur_faster,
        format!(
            "exponents riecur {slope_rie:.2}, accaltproj {slope_acc:.2}; per-iteration ms riecur {}, ircur {}, accaltproj {}; total at n=4000 riecur {:.2}s vs accaltproj {:.2}s",
            ms(&per_iter[0]),
            ms(&per_iter[1]),
            ms(&per_iter[2]),
            total[0],
            total[2]
        ),
    )
}

fn outlier_tolerance() -> Outcome {
    let (n, r) = (2000, 5);
    let mut ordered = true;
    let mut ratio_at_07 = 0.0;
    let mut lines = Vec::new();
    for alpha in [0.5, 0.6, 0.7] {
        let mut errors = [Vec::new(), Vec::new(), Vec::new()];
        for seed in 0..5 {
            let p = SyntheticProblem::generate(n, r, alpha, None, 100 + seed).unwrap();
            // Fixed budget of 100 iterations: the tolerance is never met.
            let cfg = SolverConfig {
                tol: f64::MIN_POSITIVE,
                max_iters: 100,
                seed,
                ..SolverConfig::new(r)
            };
            for (s, kind) in SolverKind::ALL.iter().enumerate() {
                let e = kind
                    .solve(&p.d, &cfg)
                    .map(|res| dense_error(&p, &res))
                    .unwrap_or(f64::INFINITY);
                errors[s].push(e);
            }
        }
        let [rie, ir, acc] = errors.map(median);
        ordered &= acc <= rie && rie <= ir;
        if alpha == 0.7 {
            ratio_at_07 = ir / rie;
        }
        lines.push(format!(
            "alpha {alpha}: accaltproj {acc:.2e}, riecur {rie:.3e}, ircur {ir:.3e}"
        ));
    }
    outcome(
        ordered && ratio_at_07 >= 10.0,
        format!(
            "medians {}; ircur/riecur at alpha 0.7 = {ratio_at_07:.3}",
            lines.join("; ")
        ),
    )
}

fn slice_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(20..=100);
        let r = rng.random_range(1..=5);
        let s = rng.random_range(r..=r + 10);
        let rows = sample_uniform_indices(n, s, &mut rng).unwrap();
        let cols = sample_uniform_indices(n, s, &mut rng).unwrap();
        let c = dense(gauss(&mut rng, n, s));
        let rr = dense(gauss(&mut rng, s, n));
        let up = pinv_truncated(&dense(gauss(&mut rng, s, s)), s).unwrap();
        let w = dense(orthonormal(&mut rng, n, r));
        let v = dense(orthonormal(&mut rng, n, r));
        let x = dense(c.as_dmatrix() * up.as_dmatrix() * rr.as_dmatrix());
        let p = project_tangent_dense(&x, &w, &v).unwrap();
        let want_rows = p.select_rows(&rows).unwrap();
        let want_cols = p.select_cols(&cols).unwrap();
        let want_int = want_rows.select_cols(&cols).unwrap();
        let got_rows = projected_rows(&c, &up, &rr, &w, &v, &rows).unwrap();
        let got_cols = projected_cols(&c, &up, &rr, &w, &v, &cols).unwrap();
        let got_int = projected_intersection(&c, &up, &rr, &w, &v, &rows, &cols).unwrap();
        worst = worst
            .max(rel(got_rows.as_dmatrix(), want_rows.as_dmatrix()))
            .max(rel(got_cols.as_dmatrix(), want_cols.as_dmatrix()))
            .max(rel(got_int.as_dmatrix(), want_int.as_dmatrix()));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed <= Duration::from_secs(30),
        format!(
            "1000 instances, worst relative deviation {worst:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn projection_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut idem, mut adj) = (0.0f64, 0.0f64);
    let mut rank_ok = true;
    for _ in 0..100 {
        let n = rng.random_range(10..=80);
        let r = rng.random_range(1..=5);
        let w = dense(orthonormal(&mut rng, n, r));
        let v = dense(orthonormal(&mut rng, n, r));
        let x = gauss(&mut rng, n, n);
        let y = gauss(&mut rng, n, n);
        let px = project_tangent_dense(&dense(x.clone()), &w, &v).unwrap().into_dmatrix();
        let ppx = project_tangent_dense(&dense(px.clone()), &w, &v)
            .unwrap()
            .into_dmatrix();
        let py = project_tangent_dense(&dense(y.clone()), &w, &v).unwrap().into_dmatrix();
        idem = idem.max(rel(&ppx, &px));
        adj = adj.max((px.dot(&y) - x.dot(&py)).abs() / (x.norm() * y.norm()));
        let sv = px.singular_values();
        let s1 = sv.max();
        rank_ok &= sv.iter().filter(|&&s| s > 1e-9 * s1).count() <= 2 * r;
    }
    outcome(
        idem <= 1e-11 && adj <= 1e-11 && rank_ok,
        format!("100 instances, idempotence {idem:.1e}, adjointness {adj:.1e}, rank <= 2r: {rank_ok}"),
    )
}

fn cur_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst, mut accepted, mut redrawn) = (0.0f64, 0, 0);
    while accepted < 100 {
        let n = rng.random_range(20..=80);
        let r = rng.random_range(1..=5);
        let k = rng.random_range(r..=r + 6);
        let a = dense(gauss(&mut rng, n, r) * gauss(&mut rng, r, n));
        let rows = sample_uniform_indices(n, k, &mut rng).unwrap();
        let cols = sample_uniform_indices(n, k, &mut rng).unwrap();
        let c = a.select_cols(&cols).unwrap();
        let rr = a.select_rows(&rows).unwrap();
        let u = c.select_rows(&rows).unwrap();
        let f = cur_build(&c, &u, &rr, &rows, &cols, r).unwrap();
        if f.numerical_rank() != r {
            redrawn += 1;
            continue;
        }
        worst = worst.max(rel(cur_full(&f).as_dmatrix(), a.as_dmatrix()));
        accepted += 1;
    }
    outcome(
        worst <= 1e-9,
        format!("100 instances ({redrawn} redrawn for rank-deficient intersections), worst relative error {worst:.1e}"),
    )
}

fn fixed_point_and_determinism() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let d = gen_low_rank(300, 5, &mut ChaCha8Rng::seed_from_u64(70 + seed)).unwrap();
        // beta1 above max|D| leaves a clean input untouched at initialization.
        let cfg = SolverConfig {
            beta1: Some(2.0 * d.max_abs()),
            seed,
            ..SolverConfig::new(5)
        };
        for kind in SolverKind::ALL {
            let res = kind.solve(&d, &cfg).unwrap();
            let pass = res.converged && res.iterations <= 3;
            ok &= pass;
            if !pass || seed == 0 {
                notes.push(format!("{kind} {} it", res.iterations));
            }
        }
    }
    let p = SyntheticProblem::generate(400, 5, 0.1, None, 77).unwrap();
    let bits = |res: &SolveResult| res.error_history.iter().map(|e| e.to_bits()).collect::<Vec<_>>();
    let mut identical = true;
    for resample in [false, true] {
        let cfg = SolverConfig {
            seed: 9,
            resample,
            max_iters: 30,
            ..SolverConfig::new(5)
        };
        for kind in SolverKind::ALL {
            identical &= bits(&kind.solve(&p.d, &cfg).unwrap()) == bits(&kind.solve(&p.d, &cfg).unwrap());
        }
    }
    outcome(
        ok && identical,
        format!(
            "noiseless: {}; repeated fixed-seed histories bitwise identical: {identical}",
            notes.join(", ")
        ),
    )
}

fn video_pipeline() -> Outcome {
    let start = Instant::now();
    let (h, w, frames, intensity) = (40usize, 60usize, 50usize, 100u8);
    let mut images = Vec::with_capacity(frames);
    let mut truth = Vec::with_capacity(frames);
    for f in 0..frames {
        let (r0, c0) = (5 + f * 27 / frames, f * 53 / frames);
        let mut px = Vec::with_capacity(h * w);
        let mut mask = Vec::with_capacity(h * w);
        for i in 0..h {
            for j in 0..w {
                let a = 0.5 + 0.5 * (0.3 * i as f64).sin();
                let b = 0.5 + 0.5 * (0.17 * j as f64).cos();
                let inside = (r0..r0 + 6).contains(&i) && (c0..c0 + 6).contains(&j);
                px.push((20.0 + 100.0 * a * b).round() as u8 + if inside { intensity } else { 0 });
                mask.push(inside);
            }
        }
        images.push(GrayImage::new(w, h, px).unwrap());
        truth.push(mask);
    }
    let (d, _) = frames_to_matrix(&images).unwrap();
    let cfg = SolverConfig {
        ridge_fallback: true,
        ..SolverConfig::new(1)
    };
    let sep = separate_background(&d, SolverKind::RieCur, &cfg).unwrap();
    let fg = sep.foreground_magnitude();
    let cut = f64::from(intensity) / 2.0;
    let mut f1_sum = 0.0;
    for (f, mask) in truth.iter().enumerate() {
        let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
        for (p, &inside) in mask.iter().enumerate() {
            match (fg.get(p, f) >= cut, inside) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                (false, false) => {}
            }
        }
        f1_sum += 2.0 * tp / (2.0 * tp + fp + fneg);
    }
    let f1 = f1_sum / frames as f64;
    let elapsed = start.elapsed();
    outcome(
        f1 >= 0.9 && elapsed <= Duration::from_secs(60),
        format!(
            "mean per-frame F1 {f1:.4}, {} iterations, {:.2}s",
            sep.result.iterations,
            elapsed.as_secs_f64()
        ),
    )
}

fn io_round_trips() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ok = true;
    let specials = [0.0, -0.0, f64::MIN_POSITIVE, 5e-324, f64::MAX, -f64::MAX, 1.0 / 3.0];
    for k in 0..20 {
        let (m, n) = (rng.random_range(1..12), rng.random_range(1..12));
        let mut a = gauss(&mut rng, m, n) * 10f64.powi(rng.random_range(-200..200));
        for (slot, x) in a
            .iter_mut()
            .zip(specials.iter().cycle())
            .take(specials.len().min(m * n))
        {
            *slot = *x;
        }
        let a = dense(a);
        let same = |b: &DenseMatrix| {
            a.to_row_major()
                .iter()
                .zip(b.to_row_major())
                .all(|(x, y)| x.to_bits() == y.to_bits())
        };
        ok &= same(&decode_matrix(&encode_matrix(&a), "mem").unwrap());
        for ext in ["rpcamat", "csv"] {
            let path = dir.path().join(format!("m{k}.{ext}"));
            write_matrix(&a, &path).unwrap();
            ok &= same(&read_matrix(&path).unwrap());
        }
    }
    for _ in 0..20 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap();
        ok &= decode_pgm(&encode_pgm(&img), "mem").unwrap() == img;
    }
    let frames: Vec<GrayImage> = (0..6)
        .map(|_| GrayImage::new(16, 9, (0..144).map(|_| rng.random()).collect()).unwrap())
        .collect();
    let (m, meta) = frames_to_matrix(&frames).unwrap();
    let vdir = dir.path().join("frames");
    matrix_to_frames(&m, &meta, &vdir).unwrap();
    let (back, back_meta) = video_to_matrix(&vdir).unwrap();
    ok &= back == m && back_meta == meta;
    outcome(
        ok,
        "20 matrices (binary, file, CSV), 20 PGM images, 6-frame video directory: exact".into(),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "exact recovery", exact_recovery),
    (2, "complexity scaling", complexity_scaling),
    (3, "outlier tolerance ordering", outlier_tolerance),
    (4, "slice formula equivalence", slice_equivalence),
    (5, "tangent projection properties", projection_properties),
    (6, "CUR exactness", cur_exactness),
    (7, "fixed point and determinism", fixed_point_and_determinism),
    (8, "video pipeline", video_pipeline),
    (9, "I/O round trips", io_round_trips),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let o = run();
        println!(
            "criterion {id} ({name}): {} - {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
