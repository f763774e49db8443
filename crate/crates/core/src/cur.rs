//! Low-rank matrices held as `C · U† · R`.
//!
//! `C` is a column block, `R` a row block and `U` their intersection. The
//! product is never formed during iteration; slices and the leading
//! singular subspaces are computed straight from the factors.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::matrix::{fix_signs, pinv_core, svd_top, DenseMatrix, IndexSet, TruncatedSVD, DEFAULT_PINV_REL_TOL};

/// CUR representation with the intersection pseudoinverse already applied.
#[derive(Clone, Debug)]
pub struct CURFactors {
    c: DMatrix<f64>,
    u_pinv: DMatrix<f64>,
    r: DMatrix<f64>,
    row_idx: IndexSet,
    col_idx: IndexSet,
    rank: usize,
    numerical_rank: usize,
}

/// How the intersection block is inverted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinvPolicy {
    pub rel_tol: f64,
    /// Shift singular values by `1e-10·σ₁` instead of cutting them off.
    pub ridge: bool,
}

impl Default for PinvPolicy {
    fn default() -> Self {
        PinvPolicy {
            rel_tol: DEFAULT_PINV_REL_TOL,
            ridge: false,
        }
    }
}

/// Builds `C · pinv_r(U) · R` with the default pseudoinverse cutoff.
pub fn cur_build(
    c: &DenseMatrix,
    u: &DenseMatrix,
    r: &DenseMatrix,
    rows: &IndexSet,
    cols: &IndexSet,
    rank: usize,
) -> Result<CURFactors> {
    CURFactors::build(
        c.as_dmatrix().clone(),
        u.as_dmatrix(),
        r.as_dmatrix().clone(),
        rows.clone(),
        cols.clone(),
        rank,
        PinvPolicy::default(),
    )
}

impl CURFactors {
    pub(crate) fn build(
        c: DMatrix<f64>,
        u: &DMatrix<f64>,
        r: DMatrix<f64>,
        rows: IndexSet,
        cols: IndexSet,
        rank: usize,
        policy: PinvPolicy,
    ) -> Result<Self> {
        let (ni, nj) = (rows.len(), cols.len());
        if ni == 0 || nj == 0 {
            return invalid("CUR index sets must be non-empty");
        }
        if u.shape() != (ni, nj) {
            return invalid(format!("intersection is {:?}, expected {ni}x{nj}", u.shape()));
        }
        if c.shape() != (rows.ambient(), nj) {
            return invalid(format!(
                "column block is {:?}, expected {}x{nj}",
                c.shape(),
                rows.ambient()
            ));
        }
        if r.shape() != (ni, cols.ambient()) {
            return invalid(format!(
                "row block is {:?}, expected {ni}x{}",
                r.shape(),
                cols.ambient()
            ));
        }
        if rank == 0 || rank > ni.min(nj) {
            return invalid(format!("rank {rank} out of range for a {ni}x{nj} intersection"));
        }
        let pinv = pinv_core(u, rank, policy.rel_tol, policy.ridge);
        Ok(CURFactors {
            c,
            u_pinv: pinv.matrix,
            r,
            row_idx: rows,
            col_idx: cols,
            rank,
            numerical_rank: pinv.numerical_rank,
        })
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn u_pinv(&self) -> &DMatrix<f64> {
        &self.u_pinv
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn row_indices(&self) -> &IndexSet {
        &self.row_idx
    }

    pub fn col_indices(&self) -> &IndexSet {
        &self.col_idx
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of intersection singular values that were inverted.
    pub fn numerical_rank(&self) -> usize {
        self.numerical_rank
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.c.nrows(), self.r.ncols())
    }

    pub(crate) fn cols_of(&self, cols: &[usize]) -> DMatrix<f64> {
        let r_sel = self.r.select_columns(cols);
        &self.c * (&self.u_pinv * r_sel)
    }

    pub(crate) fn rows_of(&self, rows: &[usize]) -> DMatrix<f64> {
        let c_sel = self.c.select_rows(rows);
        (c_sel * &self.u_pinv) * &self.r
    }

    pub(crate) fn full(&self) -> DMatrix<f64> {
        &self.c * (&self.u_pinv * &self.r)
    }

    /// Leading `r` singular triplets via thin QR of `C` and `Rᵀ`.
    pub(crate) fn svd(&self, r: usize) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
        let qr_c = self.c.clone().qr();
        let qr_r = self.r.transpose().qr();
        let core = qr_c.r() * &self.u_pinv * qr_r.r().transpose();
        let (wc, sigma, vc) = svd_top(&core, r);
        let mut w = qr_c.q() * wc;
        let mut v = qr_r.q() * vc;
        fix_signs(&mut w, &mut v);
        (w, sigma, v)
    }
}

fn check_slice(idx: &IndexSet, n: usize, what: &str) -> Result<()> {
    if idx.is_empty() {
        return invalid(format!("empty {what} selection"));
    }
    if idx.ambient() != n {
        return invalid(format!(
            "{what} selection has ambient dimension {}, matrix has {n}",
            idx.ambient()
        ));
    }
    Ok(())
}

/// Columns `cols` of the represented matrix, as `C · (U† · R[:, cols])`.
pub fn cur_cols(f: &CURFactors, cols: &IndexSet) -> Result<DenseMatrix> {
    check_slice(cols, f.shape().1, "column")?;
    Ok(DenseMatrix::wrap(f.cols_of(cols.as_slice())))
}

/// Rows `rows` of the represented matrix, as `(C[rows, :] · U†) · R`.
pub fn cur_rows(f: &CURFactors, rows: &IndexSet) -> Result<DenseMatrix> {
    check_slice(rows, f.shape().0, "row")?;
    Ok(DenseMatrix::wrap(f.rows_of(rows.as_slice())))
}

/// Dense `C · U† · R`. Costs `O(mn)` memory.
pub fn cur_full(f: &CURFactors) -> DenseMatrix {
    DenseMatrix::wrap(f.full())
}

pub fn cur_truncated_svd(f: &CURFactors, r: usize) -> Result<TruncatedSVD> {
    let (m, n) = f.shape();
    let max_rank = f.row_idx.len().min(f.col_idx.len()).min(m).min(n);
    if r == 0 || r > max_rank {
        return invalid(format!("rank {r} out of range (max {max_rank})"));
    }
    let (w, sigma, v) = f.svd(r);
    Ok(TruncatedSVD::from_parts(w, sigma, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn idx(v: &[usize], n: usize) -> IndexSet {
        IndexSet::new(v.to_vec(), n).unwrap()
    }

    fn wrap(m: DMatrix<f64>) -> DenseMatrix {
        DenseMatrix::from_dmatrix(m).unwrap()
    }

    fn identity_factors() -> CURFactors {
        let a = DenseMatrix::identity(4).unwrap();
        let (i, j) = (idx(&[0, 1], 4), idx(&[0, 1], 4));
        let c = a.select_cols(&j).unwrap();
        let r = a.select_rows(&i).unwrap();
        let u = c.select_rows(&i).unwrap();
        cur_build(&c, &u, &r, &i, &j, 2).unwrap()
    }

    fn rank2() -> (DMatrix<f64>, CURFactors) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let f = DMatrix::<f64>::from_fn(5, 2, |_, _| rng.sample(StandardNormal));
        let g = DMatrix::<f64>::from_fn(5, 2, |_, _| rng.sample(StandardNormal));
        let a = f * g.transpose();
        let (i, j) = (idx(&[0, 2, 4], 5), idx(&[1, 2, 3], 5));
        let c = a.select_columns(j.as_slice());
        let r = a.select_rows(i.as_slice());
        let u = c.select_rows(i.as_slice());
        let fac = cur_build(&wrap(c), &wrap(u), &wrap(r), &i, &j, 2).unwrap();
        (a, fac)
    }

    #[test]
    fn identity_blocks_give_projector() {
        let f = identity_factors();
        let full = cur_full(&f).into_dmatrix();
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1., 1., 0., 0.]));
        assert!((full - expect).norm() < 1e-15);
        let col = cur_cols(&f, &idx(&[2], 4)).unwrap();
        assert_eq!(col.max_abs(), 0.0);
        assert_eq!(col.shape(), (4, 1));
        let svd = cur_truncated_svd(&f, 2).unwrap();
        assert!((svd.sigma()[0] - 1.0).abs() < 1e-14 && (svd.sigma()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_recovery_of_rank_two() {
        let (a, f) = rank2();
        let full = cur_full(&f).into_dmatrix();
        assert!((&full - &a).norm() / a.norm() < 1e-10);
        let cols = cur_cols(&f, &IndexSet::all(5)).unwrap().into_dmatrix();
        assert!((&cols - &a).norm() / a.norm() < 1e-10);
        let rows = cur_rows(&f, &IndexSet::all(5)).unwrap().into_dmatrix();
        assert!((&rows - &a).norm() / a.norm() < 1e-10);
    }

    #[test]
    fn zero_intersection_represents_zero() {
        let z = DenseMatrix::zeros(4, 2).unwrap();
        let zr = DenseMatrix::zeros(2, 4).unwrap();
        let zu = DenseMatrix::zeros(2, 2).unwrap();
        let (i, j) = (idx(&[0, 3], 4), idx(&[1, 2], 4));
        let f = cur_build(&z, &zu, &zr, &i, &j, 2).unwrap();
        assert_eq!(f.numerical_rank(), 0);
        assert_eq!(cur_full(&f).max_abs(), 0.0);
    }

    #[test]
    fn slicing_contracts() {
        let f = identity_factors();
        assert!(cur_cols(&f, &IndexSet::new(vec![], 4).unwrap()).is_err());
        assert!(cur_rows(&f, &IndexSet::new(vec![], 4).unwrap()).is_err());
        assert!(cur_cols(&f, &idx(&[0], 5)).is_err());
        assert!(cur_truncated_svd(&f, 3).is_err());
    }

    #[test]
    fn build_rejects_shape_mismatch() {
        let a = DenseMatrix::identity(4).unwrap();
        let (i, j) = (idx(&[0, 1], 4), idx(&[0, 1, 2], 4));
        let c = a.select_cols(&j).unwrap();
        let r = a.select_rows(&i).unwrap();
        let bad_u = DenseMatrix::zeros(3, 2).unwrap();
        assert!(cur_build(&c, &bad_u, &r, &i, &j, 2).is_err());
        let u = c.select_rows(&i).unwrap();
        assert!(cur_build(&c, &u, &r, &i, &j, 3).is_err());
        assert!(cur_build(&r, &u, &r, &i, &j, 2).is_err());
    }
}
