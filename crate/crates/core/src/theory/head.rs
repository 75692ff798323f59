//! Regularized linear contrastive head `M = G_v G_l^T` and its losses.
//!
//! Pair scores are `s(v, l) = v^T M l`.

use nalgebra::{DMatrix, DVector};

use super::svd::truncated_svd;
use super::world::Pairs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHeadProduct {
    pub m: DMatrix<f64>,
    pub rho: f64,
    pub r: usize,
}

fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    x.row_mean().transpose()
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    Ok(())
}

/// `(1/(n-1)) sum v l^T - (n/(n-1)) vbar lbar^T`.
pub fn compute_gamma(pairs: &Pairs) -> Result<DMatrix<f64>> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::SubsetTooSmall(n));
    }
    let nf = n as f64;
    let raw = pairs.v.transpose() * &pairs.l;
    let centering = column_mean(&pairs.v) * column_mean(&pairs.l).transpose();
    Ok(raw / (nf - 1.0) - centering * (nf / (nf - 1.0)))
}

/// Global minimizer of the regularized loss over products of rank at most `r`.
pub fn closed_form_train(pairs: &Pairs, rho: f64, r: usize) -> Result<LinearHeadProduct> {
    check_rho(rho)?;
    let gamma = compute_gamma(pairs)?;
    let nf = pairs.len() as f64;
    let m = truncated_svd(&gamma, r)?.reconstruct() * ((nf - 1.0) / (nf * rho));
    Ok(LinearHeadProduct { m, rho, r })
}

/// `sum_ij (s_ij - s_ii) / (n(n-1)) + (rho/2)(n/(n-1)) ||M||_F^2`.
pub fn evaluate_train_loss(m: &DMatrix<f64>, pairs: &Pairs, rho: f64) -> Result<f64> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::SubsetTooSmall(n));
    }
    let nf = n as f64;
    let cross = column_mean(&pairs.v).dot(&(m * column_mean(&pairs.l))) * nf * nf;
    let diag = self_scores(m, pairs).iter().sum::<f64>() * nf;
    Ok((cross - diag) / (nf * (nf - 1.0)) + 0.5 * rho * nf / (nf - 1.0) * m.norm_squared())
}

fn self_scores(m: &DMatrix<f64>, pairs: &Pairs) -> Vec<f64> {
    let vm = &pairs.v * m;
    (0..pairs.len()).map(|i| vm.row(i).dot(&pairs.l.row(i))).collect()
}

/// Mean score over all ordered test pairs minus mean self-pair score.
pub fn test_loss_gap(m: &DMatrix<f64>, test: &Pairs) -> Result<f64> {
    if test.len() < 2 {
        return Err(Error::TooFewSamples(test.len(), 2));
    }
    let cross = column_mean(&test.v).dot(&(m * column_mean(&test.l)));
    Ok(cross - mean(&self_scores(m, test)))
}

/// Negative mean self-pair score.
pub fn test_loss_self(m: &DMatrix<f64>, test: &Pairs) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    -mean(&self_scores(m, test))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `(1/n) sum a_i b_i^T` over aligned rows.
pub fn empirical_cross_cov(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() || a.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!("rows {} vs {}", a.nrows(), b.nrows())));
    }
    Ok(a.transpose() * b / a.nrows() as f64)
}

/// `Tr(sigma_target (sigma_a - sigma_b))`.
pub fn vas_gap(sigma_target: &DMatrix<f64>, sigma_a: &DMatrix<f64>, sigma_b: &DMatrix<f64>) -> Result<f64> {
    let k = sigma_target.nrows();
    let square = |m: &DMatrix<f64>| m.nrows() == k && m.ncols() == k;
    if !(square(sigma_target) && square(sigma_a) && square(sigma_b)) {
        return Err(Error::ShapeMismatch("vas_gap needs three square matrices of equal size".into()));
    }
    Ok((sigma_target * (sigma_a - sigma_b)).trace())
}

/// Mean over ordered class pairs `c != c'` of the fraction of class-`c`
/// vision rows scoring strictly higher against template `c` than `c'`.
pub fn classification_accuracy(m: &DMatrix<f64>, class_samples: &[DMatrix<f64>], templates: &DMatrix<f64>) -> Result<f64> {
    let c = class_samples.len();
    if c < 2 {
        return Err(Error::TooFewClasses(c));
    }
    if templates.nrows() != c {
        return Err(Error::ShapeMismatch(format!("{} templates for {c} classes", templates.nrows())));
    }
    if let Some(k) = class_samples.iter().position(|s| s.nrows() == 0) {
        return Err(Error::EmptySelection(format!("class {k} has no samples")));
    }
    let mut total = 0.0;
    for (ci, samples) in class_samples.iter().enumerate() {
        let scores = samples * m * templates.transpose();
        for cj in (0..c).filter(|&cj| cj != ci) {
            let wins = (0..samples.nrows()).filter(|&i| scores[(i, ci)] > scores[(i, cj)]).count();
            total += wins as f64 / samples.nrows() as f64;
        }
    }
    Ok(total / (c * (c - 1)) as f64)
}
