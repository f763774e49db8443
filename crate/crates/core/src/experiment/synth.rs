use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::matrix::DenseMatrix;

/// `A Bᵀ` with `A, B ∈ R^{n×r}` filled with i.i.d. standard normals.
pub fn gen_low_rank<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Result<DenseMatrix> {
    if r == 0 || r > n {
        return invalid(format!("rank {r} out of range for dimension {n}"));
    }
    let a = DMatrix::<f64>::from_fn(n, r, |_, _| rng.sample(StandardNormal));
    let b = DMatrix::<f64>::from_fn(n, r, |_, _| rng.sample(StandardNormal));
    low_rank_from_factors(&a, &b)
}

/// `A Bᵀ` from explicit factors.
pub fn low_rank_from_factors(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DenseMatrix> {
    if a.ncols() != b.ncols() {
        return invalid("factors must have the same number of columns");
    }
    DenseMatrix::from_dmatrix(a * b.transpose())
}

/// An `n × n` outlier matrix whose every row and column has at most
/// `⌊αn⌋` nonzeros, with values uniform on `[−amplitude, amplitude]`.
///
/// Support: the `n⌊αn⌋` slots are dealt to rows in contiguous runs of
/// `⌊αn⌋` over a cyclic sequence of columns. Each pass over the cycle uses
/// a fresh random column permutation, so every column is hit at most once
/// per pass and at most `⌊αn⌋` times overall. A run straddling two passes
/// may repeat a column; the repeat is dropped.
pub fn gen_sparse_outliers<R: Rng + ?Sized>(n: usize, alpha: f64, amplitude: f64, rng: &mut R) -> Result<DenseMatrix> {
    if n == 0 {
        return invalid("dimension must be positive");
    }
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    if !(amplitude >= 0.0 && amplitude.is_finite()) {
        return invalid(format!("amplitude must be non-negative and finite, got {amplitude}"));
    }
    let per_line = (alpha * n as f64).floor() as usize;
    let mut s = DMatrix::<f64>::zeros(n, n);
    if per_line == 0 || amplitude == 0.0 {
        return DenseMatrix::from_dmatrix(s);
    }
    let mut row_order: Vec<usize> = (0..n).collect();
    row_order.shuffle(rng);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut slot = 0usize;
    for &row in &row_order {
        for _ in 0..per_line {
            if slot == n {
                perm.shuffle(rng);
                slot = 0;
            }
            let col = perm[slot];
            slot += 1;
            if s[(row, col)] == 0.0 {
                s[(row, col)] = nonzero_uniform(rng, amplitude);
            }
        }
    }
    DenseMatrix::from_dmatrix(s)
}

fn nonzero_uniform<R: Rng + ?Sized>(rng: &mut R, amplitude: f64) -> f64 {
    loop {
        let x = rng.random_range(-amplitude..=amplitude);
        if x != 0.0 {
            return x;
        }
    }
}

/// A synthetic instance `D = L + S`.
#[derive(Clone, Debug)]
pub struct SyntheticProblem {
    pub d: DenseMatrix,
    pub l_true: DenseMatrix,
    pub s_true: DenseMatrix,
    pub n: usize,
    pub r: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl SyntheticProblem {
    /// Outlier amplitude defaults to `r`.
    pub fn generate(n: usize, r: usize, alpha: f64, amplitude: Option<f64>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l_true = gen_low_rank(n, r, &mut rng)?;
        let s_true = gen_sparse_outliers(n, alpha, amplitude.unwrap_or(r as f64), &mut rng)?;
        let d = DenseMatrix::from_dmatrix(l_true.as_dmatrix() + s_true.as_dmatrix())?;
        Ok(SyntheticProblem {
            d,
            l_true,
            s_true,
            n,
            r,
            alpha,
            seed,
        })
    }

    /// `‖L̂ − L‖_F / ‖L‖_F`.
    pub fn relative_error(&self, l_hat: &DenseMatrix) -> f64 {
        l_hat.relative_error_to(&self.l_true)
    }
}
