//! One-sided Jacobi (Hestenes) SVD.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 80;

/// `a = u * diag(s) * v^T`, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.transpose()
    }
}

/// Thin SVD with `min(rows, cols)` components.
pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    if a.nrows() < a.ncols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd { u: t.v, s: t.s, v: t.u });
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = m as f64 * f64::EPSILON;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::ConvergenceFailure(MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        vs.set_column(k, &v.column(j));
        s.push(norms[j]);
        if norms[j] > scale * 1e-13 && norms[j] > 0.0 {
            u.set_column(k, &(w.column(j) / norms[j]));
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(Svd { u, s, v: vs })
}

fn rotate(x: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..x.nrows() {
        let (xp, xq) = (x[(i, p)], x[(i, q)]);
        x[(i, p)] = c * xp - s * xq;
        x[(i, q)] = s * xp + c * xq;
    }
}

/// Fills the listed columns with unit vectors orthogonal to all others.
fn complete_orthonormal(u: &mut DMatrix<f64>, missing: &[usize]) {
    let m = u.nrows();
    let mut filled: Vec<bool> = (0..u.ncols()).map(|j| !missing.contains(&j)).collect();
    for &k in missing {
        let mut best: Option<DVector<f64>> = None;
        for e in 0..m {
            let mut cand = DVector::<f64>::zeros(m);
            cand[e] = 1.0;
            for _ in 0..2 {
                for j in (0..u.ncols()).filter(|&j| filled[j]) {
                    let proj = u.column(j).dot(&cand);
                    cand -= u.column(j) * proj;
                }
            }
            if best.as_ref().is_none_or(|b| cand.norm() > b.norm()) {
                best = Some(cand);
            }
        }
        let col = best.expect("at least one basis vector");
        u.set_column(k, &(&col / col.norm()));
        filled[k] = true;
    }
}

/// Top-`r` singular triplets.
pub fn truncated_svd(a: &DMatrix<f64>, r: usize) -> Result<Svd> {
    let k = a.nrows().min(a.ncols());
    if r > k {
        return Err(Error::InvalidParameter(format!("rank {r} exceeds min dimension {k}")));
    }
    let full = svd(a)?;
    Ok(Svd { u: full.u.columns(0, r).into_owned(), s: full.s[..r].to_vec(), v: full.v.columns(0, r).into_owned() })
}

/// Best rank-`r` approximation in Frobenius norm.
pub fn low_rank(a: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    Ok(truncated_svd(a, r)?.reconstruct())
}

pub fn nuclear_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(svd(a)?.s.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
        (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).abs().max()
    }

    #[test]
    fn diagonal_values() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let t = truncated_svd(&a, 2).unwrap();
        assert!((t.s[0] - 3.0).abs() < 1e-14 && (t.s[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_exact() {
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(vec![0.3, 0.4, 2.0, -1.0]);
        let a = &u * v.transpose();
        let err = (low_rank(&a, 1).unwrap() - &a).abs().max();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn zero_matrix_has_orthonormal_factors() {
        let s = svd(&DMatrix::zeros(4, 3)).unwrap();
        assert!(s.s.iter().all(|&x| x == 0.0));
        assert!(orthonormality_error(&s.u) < 1e-12);
        assert!(orthonormality_error(&s.v) < 1e-12);
    }

    #[test]
    fn wide_and_tall_reconstruct() {
        let a = DMatrix::from_fn(3, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
        for m in [a.clone(), a.transpose()] {
            let s = svd(&m).unwrap();
            assert!((s.reconstruct() - &m).abs().max() < 1e-12);
            assert!(orthonormality_error(&s.u) < 1e-12);
            assert!(orthonormality_error(&s.v) < 1e-12);
            assert!(s.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_too_large() {
        assert!(truncated_svd(&DMatrix::zeros(2, 3), 3).is_err());
    }
}
