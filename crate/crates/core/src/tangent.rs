//! Projection onto the tangent space of the rank-`r` manifold at a point
//! with singular vector blocks `(W, V)`:
//!
//! `P(X) = W Wᵀ X + X V Vᵀ − W Wᵀ X V Vᵀ`.
//!
//! The dense operator is the reference. The sliced variants evaluate rows or
//! columns of `P(C U† R)` from the factors alone, with `C̃ = W(WᵀC)` and
//! `R̃ = (RV)Vᵀ`. They are exact for the factored input they are given; they
//! equal slices of `P(D − S)` only when `D − S` is exactly `C U† R`.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::matrix::{orthonormality_defect, DenseMatrix, IndexSet};

const ORTHO_CHECK: f64 = 1e-8;

fn check_basis(w: &DMatrix<f64>, v: &DMatrix<f64>, m: usize, n: usize) -> Result<()> {
    if w.nrows() != m || v.nrows() != n {
        return invalid(format!(
            "basis shapes {:?} and {:?} do not fit a {m}x{n} matrix",
            w.shape(),
            v.shape()
        ));
    }
    if w.ncols() != v.ncols() || w.ncols() == 0 {
        return invalid("W and V must have the same positive number of columns");
    }
    if orthonormality_defect(w) > ORTHO_CHECK || orthonormality_defect(v) > ORTHO_CHECK {
        return invalid("W and V must have orthonormal columns");
    }
    Ok(())
}

/// Dense reference projection.
pub fn project_tangent_dense(x: &DenseMatrix, w: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let (x, w, v) = (x.as_dmatrix(), w.as_dmatrix(), v.as_dmatrix());
    check_basis(w, v, x.nrows(), x.ncols())?;
    Ok(DenseMatrix::wrap(project_dense(x, w, v)))
}

pub(crate) fn project_dense(x: &DMatrix<f64>, w: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let wt_x = w.tr_mul(x);
    let x_v = x * v;
    let core = &wt_x * v;
    let mut out = w * &wt_x;
    out.gemm(1.0, &x_v, &v.transpose(), 1.0);
    out.gemm(-1.0, &(w * core), &v.transpose(), 1.0);
    out
}

/// Borrowed factor blocks of the matrix being projected, together with
/// the tangent basis. Shapes are validated once on construction.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FactoredInput<'a> {
    pub c: &'a DMatrix<f64>,
    pub u_pinv: &'a DMatrix<f64>,
    pub r: &'a DMatrix<f64>,
    pub w: &'a DMatrix<f64>,
    pub v: &'a DMatrix<f64>,
}

impl<'a> FactoredInput<'a> {
    pub fn new(
        c: &'a DMatrix<f64>,
        u_pinv: &'a DMatrix<f64>,
        r: &'a DMatrix<f64>,
        w: &'a DMatrix<f64>,
        v: &'a DMatrix<f64>,
    ) -> Result<Self> {
        if u_pinv.nrows() != c.ncols() || u_pinv.ncols() != r.nrows() {
            return invalid(format!(
                "factor shapes {:?}, {:?}, {:?} are not conformable",
                c.shape(),
                u_pinv.shape(),
                r.shape()
            ));
        }
        check_basis(w, v, c.nrows(), r.ncols())?;
        Ok(FactoredInput { c, u_pinv, r, w, v })
    }

    /// Projected rows `rows` (an `|rows| × n` block).
    pub fn rows(&self, rows: &[usize]) -> DMatrix<f64> {
        let FactoredInput { c, u_pinv, r, w, v } = *self;
        let wt_c = w.tr_mul(c);
        let c_rows = c.select_rows(rows);
        let c_tilde_rows = w.select_rows(rows) * &wt_c;
        let rv = r * v;
        let mut out = (&c_tilde_rows * u_pinv) * r;
        let rest = ((c_rows - c_tilde_rows) * u_pinv) * rv;
        out.gemm(1.0, &rest, &v.transpose(), 1.0);
        out
    }

    /// Projected columns `cols` (an `m × |cols|` block).
    pub fn cols(&self, cols: &[usize]) -> DMatrix<f64> {
        let FactoredInput { c, u_pinv, r, w, v } = *self;
        let r_cols = r.select_columns(cols);
        let r_tilde_cols = (r * v) * v.select_rows(cols).transpose();
        let wt_c = w.tr_mul(c);
        let inner = (wt_c * u_pinv) * (r_cols - &r_tilde_cols);
        let mut out = w * inner;
        out.gemm(1.0, c, &(u_pinv * r_tilde_cols), 1.0);
        out
    }

    /// The `|rows| × |cols|` intersection block.
    pub fn intersection(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let FactoredInput { c, u_pinv, r, w, v } = *self;
        let c_rows = c.select_rows(rows);
        let c_tilde_rows = w.select_rows(rows) * w.tr_mul(c);
        let r_cols = r.select_columns(cols);
        let r_tilde_cols = (r * v) * v.select_rows(cols).transpose();
        let mut out = (&c_tilde_rows * u_pinv) * r_cols;
        out.gemm(1.0, &((c_rows - c_tilde_rows) * u_pinv), &r_tilde_cols, 1.0);
        out
    }
}

fn check_rows(idx: &IndexSet, m: usize) -> Result<()> {
    if idx.is_empty() || idx.ambient() != m {
        return invalid(format!("row selection must be non-empty with ambient dimension {m}"));
    }
    Ok(())
}

fn check_cols(idx: &IndexSet, n: usize) -> Result<()> {
    if idx.is_empty() || idx.ambient() != n {
        return invalid(format!("column selection must be non-empty with ambient dimension {n}"));
    }
    Ok(())
}

/// Rows `rows` of `P(C · U† · R)`.
pub fn projected_rows(
    c: &DenseMatrix,
    u_pinv: &DenseMatrix,
    r: &DenseMatrix,
    w: &DenseMatrix,
    v: &DenseMatrix,
    rows: &IndexSet,
) -> Result<DenseMatrix> {
    let input = FactoredInput::new(
        c.as_dmatrix(),
        u_pinv.as_dmatrix(),
        r.as_dmatrix(),
        w.as_dmatrix(),
        v.as_dmatrix(),
    )?;
    check_rows(rows, c.rows())?;
    Ok(DenseMatrix::wrap(input.rows(rows.as_slice())))
}

/// Columns `cols` of `P(C · U† · R)`.
pub fn projected_cols(
    c: &DenseMatrix,
    u_pinv: &DenseMatrix,
    r: &DenseMatrix,
    w: &DenseMatrix,
    v: &DenseMatrix,
    cols: &IndexSet,
) -> Result<DenseMatrix> {
    let input = FactoredInput::new(
        c.as_dmatrix(),
        u_pinv.as_dmatrix(),
        r.as_dmatrix(),
        w.as_dmatrix(),
        v.as_dmatrix(),
    )?;
    check_cols(cols, r.cols())?;
    Ok(DenseMatrix::wrap(input.cols(cols.as_slice())))
}

/// Block `(rows, cols)` of `P(C · U† · R)`.
pub fn projected_intersection(
    c: &DenseMatrix,
    u_pinv: &DenseMatrix,
    r: &DenseMatrix,
    w: &DenseMatrix,
    v: &DenseMatrix,
    rows: &IndexSet,
    cols: &IndexSet,
) -> Result<DenseMatrix> {
    let input = FactoredInput::new(
        c.as_dmatrix(),
        u_pinv.as_dmatrix(),
        r.as_dmatrix(),
        w.as_dmatrix(),
        v.as_dmatrix(),
    )?;
    check_rows(rows, c.rows())?;
    check_cols(cols, r.cols())?;
    Ok(DenseMatrix::wrap(input.intersection(rows.as_slice(), cols.as_slice())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gauss(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
    }

    fn orth(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DMatrix<f64> {
        gauss(rng, n, r).qr().q()
    }

    fn d(m: DMatrix<f64>) -> DenseMatrix {
        DenseMatrix::from_dmatrix(m).unwrap()
    }

    #[test]
    fn tangent_member_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, v) = (orth(&mut rng, 12, 3), orth(&mut rng, 12, 3));
        let x = &w * gauss(&mut rng, 12, 3).transpose() + gauss(&mut rng, 12, 3) * v.transpose();
        let p = project_tangent_dense(&d(x.clone()), &d(w), &d(v)).unwrap();
        assert!((p.into_dmatrix() - &x).norm() / x.norm() < 1e-12);
    }

    #[test]
    fn full_rank_basis_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (w, v) = (orth(&mut rng, 6, 6), orth(&mut rng, 6, 6));
        let x = gauss(&mut rng, 6, 6);
        let p = project_tangent_dense(&d(x.clone()), &d(w), &d(v)).unwrap();
        assert!((p.into_dmatrix() - &x).norm() / x.norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_bases() {
        let x = d(DMatrix::from_element(5, 5, 1.0));
        let zero = d(DMatrix::zeros(5, 2));
        assert!(project_tangent_dense(&x, &zero, &zero).is_err());
        let c = DMatrix::from_element(5, 2, 1.0);
        let up = DMatrix::from_element(2, 2, 1.0);
        let r = DMatrix::from_element(2, 5, 1.0);
        let z = DMatrix::zeros(5, 1);
        assert!(FactoredInput::new(&c, &up, &r, &z, &z).is_err());
        let i2 = DMatrix::identity(5, 1);
        assert!(FactoredInput::new(&c, &up.transpose().resize(3, 2, 0.0), &r, &i2, &i2).is_err());
        assert!(projected_rows(
            &d(c.clone()),
            &d(up.clone()),
            &d(r.clone()),
            &d(i2.clone()),
            &d(i2.clone()),
            &IndexSet::all(4)
        )
        .is_err());
    }

    #[test]
    fn slices_of_tangent_member_are_exact() {
        // X = C U† R with W, V spanning its column and row spaces.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, rank) = (20, 3);
        let a = gauss(&mut rng, n, rank) * gauss(&mut rng, n, rank).transpose();
        let rows = IndexSet::new(vec![1, 4, 7, 9, 15], n).unwrap();
        let cols = IndexSet::new(vec![0, 3, 8, 12, 19], n).unwrap();
        let c = a.select_columns(cols.as_slice());
        let r = a.select_rows(rows.as_slice());
        let u = c.select_rows(rows.as_slice());
        let up = crate::matrix::pinv_core(&u, rank, 1e-12, false).matrix;
        let svd = a.clone().svd(true, true);
        let w = svd.u.unwrap().columns(0, rank).into_owned();
        let v = svd.v_t.unwrap().rows(0, rank).transpose();
        let input = FactoredInput::new(&c, &up, &r, &w, &v).unwrap();
        let got_rows = input.rows(rows.as_slice());
        assert!((&got_rows - a.select_rows(rows.as_slice())).norm() / a.norm() < 1e-10);
        let got_cols = input.cols(cols.as_slice());
        assert!((&got_cols - a.select_columns(cols.as_slice())).norm() / a.norm() < 1e-10);
        let got_u = input.intersection(rows.as_slice(), cols.as_slice());
        assert!((&got_u - &u).norm() / u.norm() < 1e-10);
    }

    #[test]
    fn zero_blocks_project_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (w, v) = (orth(&mut rng, 10, 2), orth(&mut rng, 10, 2));
        let c = DMatrix::zeros(10, 3);
        let up = DMatrix::zeros(3, 3);
        let r = DMatrix::zeros(3, 10);
        let input = FactoredInput::new(&c, &up, &r, &w, &v).unwrap();
        assert_eq!(input.intersection(&[0, 1, 2], &[4, 5, 6]).amax(), 0.0);
    }
}
