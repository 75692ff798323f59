//! Direct numerical minimization of the regularized loss over factor pairs
//! `(A, B)`, `M = A B^T`, by gradient descent with backtracking. Works from
//! the raw pair sums and never forms the centered cross-covariance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::world::Pairs;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub m: DMatrix<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

struct Objective {
    /// `sum_i v_i l_i^T`
    diag_sum: DMatrix<f64>,
    /// `(sum_i v_i)(sum_j l_j)^T`
    full_sum: DMatrix<f64>,
    n: f64,
    rho: f64,
}

impl Objective {
    fn new(pairs: &Pairs, rho: f64) -> Self {
        let n = pairs.len();
        let mut diag_sum = DMatrix::zeros(pairs.dim(), pairs.dim());
        for i in 0..n {
            diag_sum += pairs.v.row(i).transpose() * pairs.l.row(i);
        }
        let sv = pairs.v.row_sum().transpose();
        let sl = pairs.l.row_sum().transpose();
        Objective { diag_sum, full_sum: sv * sl.transpose(), n: n as f64, rho }
    }

    /// Loss and its gradient with respect to `M`.
    fn eval(&self, m: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let n = self.n;
        let pair_term = (&self.full_sum - &self.diag_sum * n) / (n * (n - 1.0));
        let c = 0.5 * self.rho * n / (n - 1.0);
        let loss = pair_term.dot(m) + c * m.norm_squared();
        (loss, pair_term + m * (2.0 * c))
    }

    fn eval_factors(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> (f64, DMatrix<f64>, DMatrix<f64>) {
        let (loss, g) = self.eval(&(a * b.transpose()));
        let ga = &g * b;
        let gb = g.transpose() * a;
        (loss, ga, gb)
    }
}

/// Runs until the factor-gradient norm drops to `tol` or `max_iter` steps.
pub fn minimize_loss(pairs: &Pairs, rho: f64, r: usize, seed: u64, tol: f64, max_iter: usize) -> Result<DescentResult> {
    if pairs.len() < 2 {
        return Err(Error::SubsetTooSmall(pairs.len()));
    }
    let obj = Objective::new(pairs, rho);
    let d = pairs.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal);
    let mut a = DMatrix::from_fn(d, r, &mut init);
    let mut b = DMatrix::from_fn(d, r, &mut init);

    let (mut loss, mut ga, mut gb) = obj.eval_factors(&a, &b);
    let mut step = 1.0;
    for it in 0..max_iter {
        let gnorm2 = ga.norm_squared() + gb.norm_squared();
        if gnorm2.sqrt() <= tol {
            return Ok(DescentResult { m: &a * b.transpose(), loss, grad_norm: gnorm2.sqrt(), iterations: it });
        }
        loop {
            let a2 = &a - &ga * step;
            let b2 = &b - &gb * step;
            let (l2, ga2, gb2) = obj.eval_factors(&a2, &b2);
            let armijo = l2 <= loss - 0.25 * step * gnorm2;
            // Near the optimum the decrease is below loss resolution; fall back to gradient progress.
            let flat = l2 <= loss + 4.0 * f64::EPSILON * (1.0 + loss.abs()) && ga2.norm_squared() + gb2.norm_squared() < gnorm2;
            if armijo || flat || step < 1e-14 {
                (a, b, loss, ga, gb) = (a2, b2, l2, ga2, gb2);
                break;
            }
            step *= 0.5;
        }
        step *= 1.5;
    }
    let grad_norm = (ga.norm_squared() + gb.norm_squared()).sqrt();
    if grad_norm <= tol {
        Ok(DescentResult { m: &a * b.transpose(), loss, grad_norm, iterations: max_iter })
    } else {
        Err(Error::ConvergenceFailure(max_iter))
    }
}
