use std::str::FromStr;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riecur::experiment::{
    gen_low_rank, gen_sparse_outliers, low_rank_from_factors, read_grid_csv, run_grid, run_grid_to_csv, write_grid_csv,
    GridSpec, GridVariable, SyntheticProblem, CSV_HEADER,
};
use riecur::{sparsity_profile, truncated_svd, DenseMatrix, RpcaError, SolverKind};

#[test]
fn low_rank_entries_have_variance_r() {
    let (n, r) = (2000, 5);
    let l = gen_low_rank(n, r, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let xs = l.to_row_major();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    assert!((var - r as f64).abs() <= 0.05 * r as f64, "variance {var}");
    assert!(mean.abs() < 0.05, "mean {mean}");
}

#[test]
fn identity_factors() {
    let i = DMatrix::<f64>::identity(6, 6);
    assert_eq!(
        low_rank_from_factors(&i, &i).unwrap(),
        DenseMatrix::identity(6).unwrap()
    );
    assert!(low_rank_from_factors(&i, &DMatrix::identity(6, 5)).is_err());
}

#[test]
fn outliers_respect_amplitude_and_line_budget() {
    let s = gen_sparse_outliers(300, 0.2, 3.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(s.max_abs() <= 3.0);
    assert!(sparsity_profile(&s) <= 0.2);
    // Runs straddling two passes drop at most one repeat each.
    let nnz = s.to_row_major().iter().filter(|x| **x != 0.0).count();
    assert!(nnz as f64 >= 0.99 * 300.0 * 60.0, "nnz {nnz}");
}

#[test]
fn bad_synthetic_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!(matches!(
        gen_low_rank(10, 0, &mut rng),
        Err(RpcaError::InvalidArgument(_))
    ));
    assert!(matches!(
        gen_low_rank(10, 11, &mut rng),
        Err(RpcaError::InvalidArgument(_))
    ));
    assert!(gen_sparse_outliers(10, 1.5, 1.0, &mut rng).is_err());
    assert!(gen_sparse_outliers(10, 0.1, -1.0, &mut rng).is_err());
    assert!(gen_sparse_outliers(0, 0.1, 1.0, &mut rng).is_err());
}

#[test]
fn problem_is_reproducible_and_consistent() {
    let a = SyntheticProblem::generate(80, 3, 0.1, None, 4).unwrap();
    let b = SyntheticProblem::generate(80, 3, 0.1, None, 4).unwrap();
    assert_eq!(a.d, b.d);
    let sum = a.l_true.as_dmatrix() + a.s_true.as_dmatrix();
    assert_eq!(&sum, a.d.as_dmatrix());
    assert!(a.s_true.max_abs() <= 3.0);
    let svd = truncated_svd(&a.l_true, 4).unwrap();
    assert!(svd.sigma()[3] <= 1e-10 * svd.sigma()[0]);
    assert_eq!(a.relative_error(&a.l_true), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn outlier_density_never_exceeds_alpha(seed in any::<u64>(), n in 1usize..120, alpha in 0.0f64..=1.0, amp in 0.0f64..10.0) {
        let s = gen_sparse_outliers(n, alpha, amp, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let budget = (alpha * n as f64).floor() / n as f64;
        prop_assert!(sparsity_profile(&s) <= budget + 1e-15);
        prop_assert!(s.max_abs() <= amp);
    }
}

const SMALL_SPEC: &str = "\
# two trials on a tiny dimension sweep
variable = dimension
values = 60, 80
alpha = 0.1
r = 2
tol = 1e-8
max_iters = 30
samples = 30
trials = 2
solvers = riecur, ircur
seed = 9
";

#[test]
fn spec_parses_and_reports_bad_lines() {
    let spec = GridSpec::from_str(SMALL_SPEC).unwrap();
    assert_eq!(spec.variable, GridVariable::Dimension);
    assert_eq!(spec.points(), vec![(60, 0.1), (80, 0.1)]);
    assert_eq!(spec.solvers, vec![SolverKind::RieCur, SolverKind::IrCur]);

    let dup = format!("{SMALL_SPEC}r = 3\n");
    let msg = GridSpec::from_str(&dup).unwrap_err().to_string();
    let dup_line = SMALL_SPEC.lines().count() + 1;
    assert!(msg.contains(&format!("line {dup_line}")), "{msg}");
    assert!(GridSpec::from_str("variable = dimension\nvalues = 10\n").is_err());
    assert!(GridSpec::from_str(&SMALL_SPEC.replace("alpha = 0.1\n", "")).is_err());
    assert!(GridSpec::from_str(&format!("{SMALL_SPEC}colour = blue\n")).is_err());
}

#[test]
fn grid_rows_and_aggregates() {
    let spec = GridSpec::from_str(SMALL_SPEC).unwrap();
    let rows = run_grid(&spec).unwrap();
    // 2 points x 2 solvers x (2 trials + 1 aggregate).
    assert_eq!(rows.len(), 12);
    assert_eq!(rows.iter().filter(|r| r.is_aggregate()).count(), 4);
    for r in rows.iter().filter(|r| !r.is_aggregate()) {
        assert_eq!(r.status, "ok");
        assert!(r.final_rel_error < 1e-4, "{r:?}");
    }
    let again = run_grid(&spec).unwrap();
    let strip = |rows: &[riecur::experiment::GridRow]| {
        rows.iter()
            .map(|r| {
                let mut rec = r.to_record();
                rec[10].clear();
                rec
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&rows), strip(&again));

    let mut buf = Vec::new();
    write_grid_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(&CSV_HEADER.join(",")));
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn csv_run_resumes_without_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let mut spec = GridSpec::from_str(SMALL_SPEC).unwrap();
    spec.values = vec![60.0];
    spec.trials = 1;
    let first = run_grid_to_csv(&spec, &path).unwrap();
    assert_eq!(first.len(), 4);

    // A second identical run adds nothing.
    assert!(run_grid_to_csv(&spec, &path).unwrap().is_empty());

    // More trials: only the new trial and the point's aggregate are added.
    spec.trials = 2;
    let second = run_grid_to_csv(&spec, &path).unwrap();
    assert_eq!(second.iter().filter(|r| !r.is_aggregate()).count(), 2);
    assert!(second.iter().all(|r| r.is_aggregate() || r.trial == Some(1)));
    let all = read_grid_csv(&path).unwrap();
    // The stale one-trial aggregates stay; fresh two-trial ones follow.
    assert_eq!(all.len(), 8);
    let fresh: Vec<_> = all.iter().filter(|r| r.status == "aggregate 2/2 ok").collect();
    assert_eq!(fresh.len(), 2);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.matches("solver,n,r").count(), 1);
}
