//! One-sided Jacobi SVD for the small dense blocks in the solvers.

use nalgebra::DMatrix;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `a = U diag(s) Vᵀ` with `k = min(m, n)` columns in `U` and
/// `V`, singular values sorted non-increasing. `U` columns belonging to
/// zero singular values are completed to an orthonormal set.
pub(crate) fn thin_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    if a.nrows() < a.ncols() {
        let (u, s, v) = thin_svd(&a.transpose());
        return (v, s, u);
    }
    // Tall: reduce to the square triangular factor first when it pays off.
    if a.nrows() > 2 * a.ncols() {
        let qr = a.clone().qr();
        let (ur, s, v) = jacobi(qr.r());
        return (qr.q() * ur, s, v);
    }
    jacobi(a.clone())
}

fn jacobi(mut work: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = work.shape();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = f64::EPSILON * (m as f64).sqrt();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = work.column(p);
                    let cq = work.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut work, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = work.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s_max = norms.iter().copied().fold(0.0, f64::max);
    let negligible = s_max * f64::EPSILON * (m.max(n) as f64);

    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut s = Vec::with_capacity(n);
    let mut v_sorted = DMatrix::<f64>::zeros(n, n);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        v_sorted.set_column(dst, &v.column(src));
        if sigma > negligible && sigma > 0.0 {
            u.set_column(dst, &(work.column(src) / sigma));
        } else {
            missing.push(dst);
        }
    }
    complete_basis(&mut u, &missing);
    (u, s, v_sorted)
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (xp, xq) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * xp - s * xq;
        m[(i, q)] = s * xp + c * xq;
    }
}

/// Fills the listed columns with unit vectors orthogonal to all others.
fn complete_basis(u: &mut DMatrix<f64>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|j| !missing.contains(j)).collect();
    for &dst in missing {
        // Gram–Schmidt twice on the candidate with the largest remainder.
        let mut best: Option<(f64, nalgebra::DVector<f64>)> = None;
        for e in 0..m {
            let mut x = nalgebra::DVector::<f64>::zeros(m);
            x[e] = 1.0;
            for _ in 0..2 {
                for &j in &filled {
                    let proj = u.column(j).dot(&x);
                    x.axpy(-proj, &u.column(j), 1.0);
                }
            }
            let norm = x.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, x));
            }
            if norm > 0.5 {
                break;
            }
        }
        let (norm, x) = best.expect("at least one candidate");
        u.set_column(dst, &(x / norm));
        filled.push(dst);
    }
}
