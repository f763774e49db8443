//! Dense matrix carrier and the primitive operators used by every solver:
//! hard thresholding, truncated SVD, rank-truncated pseudoinverse, uniform
//! index sampling, and the incoherence / sparsity diagnostics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::svd::thin_svd;

/// Default relative cutoff below which singular values are not inverted.
pub const DEFAULT_PINV_REL_TOL: f64 = 1e-12;

/// Orthonormality tolerance accepted by [`TruncatedSVD::new`].
const ORTHO_TOL: f64 = 1e-10;

/// A real `rows × cols` matrix with finite entries.
///
/// Storage is an [`nalgebra::DMatrix`]; the logical entry order used by
/// constructors and serializers is row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix(DMatrix<f64>);

impl DenseMatrix {
    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("matrix dimensions must be positive, got {rows}x{cols}"));
        }
        if rows.checked_mul(cols) != Some(data.len()) {
            return invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows.saturating_mul(cols),
                data.len()
            ));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, &data))
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("rows have differing lengths");
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return invalid(format!(
                "matrix dimensions must be positive, got {}x{}",
                m.nrows(),
                m.ncols()
            ));
        }
        if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
            let (i, j) = (pos % m.nrows(), pos / m.nrows());
            return invalid(format!("non-finite entry at ({i}, {j})"));
        }
        Ok(DenseMatrix(m))
    }

    /// Wraps a matrix produced internally from finite inputs.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() > 0 && m.ncols() > 0);
        DenseMatrix(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::from_dmatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_dmatrix(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix(self.0.transpose())
    }

    pub fn select_rows(&self, idx: &IndexSet) -> Result<DenseMatrix> {
        check_dim(idx, self.rows(), "row")?;
        Ok(DenseMatrix(self.0.select_rows(idx.as_slice())))
    }

    pub fn select_cols(&self, idx: &IndexSet) -> Result<DenseMatrix> {
        check_dim(idx, self.cols(), "column")?;
        Ok(DenseMatrix(self.0.select_columns(idx.as_slice())))
    }

    /// `‖self − other‖_F / ‖other‖_F`; absolute error when `other` is zero.
    pub fn relative_error_to(&self, other: &DenseMatrix) -> f64 {
        relative_frobenius(&self.0, &other.0)
    }
}

impl From<DenseMatrix> for DMatrix<f64> {
    fn from(m: DenseMatrix) -> Self {
        m.0
    }
}

fn check_dim(idx: &IndexSet, n: usize, what: &str) -> Result<()> {
    if idx.is_empty() {
        return invalid(format!("empty {what} index set"));
    }
    if idx.ambient() != n {
        return invalid(format!(
            "{what} index set has ambient dimension {}, matrix has {n}",
            idx.ambient()
        ));
    }
    Ok(())
}

pub(crate) fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let base = b.norm();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// A strictly increasing list of indices into `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndexSet {
    indices: Vec<usize>,
    n: usize,
}

impl IndexSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return invalid(format!(
                "indices must be strictly increasing, found {} before {}",
                w[0], w[1]
            ));
        }
        if let Some(&last) = indices.last() {
            if last >= n {
                return invalid(format!("index {last} out of bounds for dimension {n}"));
            }
        }
        Ok(IndexSet { indices, n })
    }

    /// Sorts and deduplicates before validating bounds.
    pub fn from_unsorted(mut indices: Vec<usize>, n: usize) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, n)
    }

    pub fn all(n: usize) -> Self {
        IndexSet {
            indices: (0..n).collect(),
            n,
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Dimension of the space the indices select from.
    pub fn ambient(&self) -> usize {
        self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    /// Position of `index` within the set, if present.
    pub fn position(&self, index: usize) -> Option<usize> {
        self.indices.binary_search(&index).ok()
    }
}

/// Rank-`r` singular value decomposition `W · diag(sigma) · Vᵀ`.
#[derive(Clone, Debug)]
pub struct TruncatedSVD {
    w: DenseMatrix,
    sigma: Vec<f64>,
    v: DenseMatrix,
}

impl TruncatedSVD {
    /// Validates orthonormality of `W` and `V` and the ordering of `sigma`.
    pub fn new(w: DenseMatrix, sigma: Vec<f64>, v: DenseMatrix) -> Result<Self> {
        let r = sigma.len();
        if r == 0 || w.cols() != r || v.cols() != r {
            return invalid(format!(
                "inconsistent SVD blocks: W has {} columns, V has {}, {} singular values",
                w.cols(),
                v.cols(),
                r
            ));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return invalid("singular values must be finite and non-negative");
        }
        if sigma.windows(2).any(|p| p[0] < p[1]) {
            return invalid("singular values must be non-increasing");
        }
        if orthonormality_defect(w.as_dmatrix()) > ORTHO_TOL {
            return invalid("W does not have orthonormal columns");
        }
        if orthonormality_defect(v.as_dmatrix()) > ORTHO_TOL {
            return invalid("V does not have orthonormal columns");
        }
        Ok(TruncatedSVD { w, sigma, v })
    }

    pub(crate) fn from_parts(w: DMatrix<f64>, sigma: Vec<f64>, v: DMatrix<f64>) -> Self {
        TruncatedSVD {
            w: DenseMatrix(w),
            sigma,
            v: DenseMatrix(v),
        }
    }

    pub fn w(&self) -> &DenseMatrix {
        &self.w
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Dense `W Σ Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut ws = self.w.0.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            ws.column_mut(j).scale_mut(*s);
        }
        DenseMatrix(ws * self.v.0.transpose())
    }
}

/// `‖MᵀM − I‖_F / √r` for an `m × r` block.
pub(crate) fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let r = m.ncols();
    if r == 0 {
        return 0.0;
    }
    let gram = m.tr_mul(m);
    (gram - DMatrix::<f64>::identity(r, r)).norm() / (r as f64).sqrt()
}

/// Entrywise hard thresholding: keeps `A[i,j]` when `|A[i,j]| ≥ zeta`.
pub fn hard_threshold(a: &DenseMatrix, zeta: f64) -> Result<DenseMatrix> {
    check_zeta(zeta)?;
    let mut out = a.0.clone();
    threshold_in_place(&mut out, zeta);
    Ok(DenseMatrix(out))
}

pub(crate) fn check_zeta(zeta: f64) -> Result<()> {
    if !zeta.is_finite() || zeta < 0.0 {
        return invalid(format!("threshold must be finite and non-negative, got {zeta}"));
    }
    Ok(())
}

pub(crate) fn threshold_in_place(m: &mut DMatrix<f64>, zeta: f64) {
    for x in m.iter_mut() {
        if x.abs() < zeta {
            *x = 0.0;
        }
    }
}

/// Rank-`r` truncated SVD, singular values non-increasing, with the sign
/// of each left singular vector fixed so its first non-negligible entry is
/// positive.
pub fn truncated_svd(a: &DenseMatrix, r: usize) -> Result<TruncatedSVD> {
    let (m, n) = a.shape();
    if r == 0 || r > m.min(n) {
        return invalid(format!("rank {r} out of range for a {m}x{n} matrix"));
    }
    let (w, sigma, v) = svd_top(&a.0, r);
    Ok(TruncatedSVD::from_parts(w, sigma, v))
}

/// Below this smaller dimension a full dense SVD is always used.
const FULL_SVD_MAX_DIM: usize = 400;
const SUBSPACE_OVERSAMPLE: usize = 10;
const SUBSPACE_MAX_ITERS: usize = 100;

/// Top-`r` singular triplets of `a`. Requires `1 ≤ r ≤ min(shape)`.
pub(crate) fn svd_top(a: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let min_dim = a.nrows().min(a.ncols());
    let (mut w, sigma, mut v) = if min_dim <= FULL_SVD_MAX_DIM || 4 * (r + SUBSPACE_OVERSAMPLE) > min_dim {
        full_svd_top(a, r)
    } else {
        subspace_svd_top(a, r)
    };
    fix_signs(&mut w, &mut v);
    (w, sigma, v)
}

fn full_svd_top(a: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (u, mut s, v) = thin_svd(a);
    s.truncate(r);
    (u.columns(0, r).into_owned(), s, v.columns(0, r).into_owned())
}

/// Block subspace iteration with a fixed internal seed, run until the
/// leading singular value estimates stop changing.
fn subspace_svd_top(a: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let k = (r + SUBSPACE_OVERSAMPLE).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d5bd);
    let omega = DMatrix::<f64>::from_fn(n, k, |_, _| rng.sample(StandardNormal));
    let mut q = (a * omega).qr().q();
    let mut prev: Option<Vec<f64>> = None;
    for _ in 0..SUBSPACE_MAX_ITERS {
        let qz = a.tr_mul(&q).qr().q();
        let qr = (a * qz).qr();
        let core = qr.r();
        q = qr.q();
        let (_, mut s, _) = thin_svd(&core);
        s.truncate(r);
        if let Some(p) = &prev {
            let scale = s[0].max(f64::MIN_POSITIVE);
            let change = s.iter().zip(p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if change <= 1e-15 * scale {
                break;
            }
        }
        prev = Some(s);
    }
    let b = q.tr_mul(a);
    let (wb, sigma, v) = full_svd_top(&b, r);
    (q * wb, sigma, v)
}

/// Flips paired columns so the first entry of each `W` column with
/// magnitude above 1e-12 is positive.
pub(crate) fn fix_signs(w: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for j in 0..w.ncols() {
        let flip = w.column(j).iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0);
        if flip {
            w.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
}

/// Result of a rank-truncated pseudoinversion.
#[derive(Clone, Debug)]
pub(crate) struct Pinv {
    pub matrix: DMatrix<f64>,
    /// Number of inverted singular values among the leading `r`.
    pub numerical_rank: usize,
}

/// `V_r Σ_r† W_rᵀ`, inverting only `σ_i > rel_tol·σ₁`. With `ridge`, every
/// positive leading `σ_i` is shifted by `1e-10·σ₁` before inversion and the
/// reported rank counts all of them.
pub(crate) fn pinv_core(a: &DMatrix<f64>, r: usize, rel_tol: f64, ridge: bool) -> Pinv {
    let (m, n) = a.shape();
    let (u, s, v) = thin_svd(a);
    let order: Vec<usize> = (0..r.min(s.len())).collect();
    let s_max = order.first().map_or(0.0, |&i| s[i]);
    let shift = if ridge { 1e-10 * s_max } else { 0.0 };
    let mut out = DMatrix::<f64>::zeros(n, m);
    let mut rank = 0;
    for &i in &order {
        let si = s[i];
        let keep = if ridge {
            si > 0.0
        } else {
            si > rel_tol * s_max && si > 0.0
        };
        if !keep {
            continue;
        }
        rank += 1;
        let inv = 1.0 / (si + shift);
        // out += v_i * inv * u_iᵀ
        let vi = v.column(i);
        let ui = u.column(i);
        out.ger(inv, &vi, &ui, 1.0);
    }
    Pinv {
        matrix: out,
        numerical_rank: rank,
    }
}

/// Moore–Penrose pseudoinverse of the rank-`r` truncation of `a`, with the
/// default relative cutoff.
pub fn pinv_truncated(a: &DenseMatrix, r: usize) -> Result<DenseMatrix> {
    pinv_truncated_with_tol(a, r, DEFAULT_PINV_REL_TOL)
}

pub fn pinv_truncated_with_tol(a: &DenseMatrix, r: usize, rel_tol: f64) -> Result<DenseMatrix> {
    let (m, n) = a.shape();
    if r == 0 || r > m.min(n) {
        return invalid(format!("rank {r} out of range for a {m}x{n} matrix"));
    }
    if rel_tol.is_nan() || rel_tol < 0.0 {
        return invalid(format!("relative tolerance must be non-negative, got {rel_tol}"));
    }
    Ok(DenseMatrix(pinv_core(&a.0, r, rel_tol, false).matrix))
}

/// Draws `m` distinct indices uniformly from `0..n`, returned sorted.
pub fn sample_uniform_indices<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<IndexSet> {
    if m == 0 || m > n {
        return invalid(format!("cannot sample {m} distinct indices from {n}"));
    }
    let mut idx = rand::seq::index::sample(rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(IndexSet { indices: idx, n })
}

/// Smallest `μ` for which the singular vector blocks satisfy the
/// `μ`-incoherence row-norm bounds.
pub fn incoherence_estimate(svd: &TruncatedSVD) -> f64 {
    let r = svd.rank() as f64;
    let scan = |b: &DMatrix<f64>| {
        let rows = b.nrows() as f64;
        let max_sq = b.row_iter().map(|row| row.norm_squared()).fold(0.0, f64::max);
        rows / r * max_sq
    };
    scan(svd.w.as_dmatrix()).max(scan(svd.v.as_dmatrix()))
}

/// Smallest `α` such that every row and every column has at most an `α`
/// fraction of nonzero entries.
pub fn sparsity_profile(s: &DenseMatrix) -> f64 {
    let (m, n) = s.shape();
    let mut row_nnz = vec![0usize; m];
    let mut col_nnz = vec![0usize; n];
    for (j, count) in col_nnz.iter_mut().enumerate() {
        for (i, x) in s.0.column(j).iter().enumerate() {
            if *x != 0.0 {
                row_nnz[i] += 1;
                *count += 1;
            }
        }
    }
    let row_frac = row_nnz.iter().max().map_or(0.0, |&c| c as f64 / n as f64);
    let col_frac = col_nnz.iter().max().map_or(0.0, |&c| c as f64 / m as f64);
    row_frac.max(col_frac)
}
