//! Teacher-recovery errors, selection surrogates, the exhaustive best subset
//! and the noise split of `Gamma`.

use nalgebra::DMatrix;

use super::svd::nuclear_norm;
use super::world::{Sample, SyntheticWorld};
use crate::error::{Error, Result};
use crate::select::Selection;

pub const BRUTE_FORCE_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TeacherError {
    pub eps_v: f64,
    pub eps_l: f64,
    pub eps_vl: f64,
}

/// Nuclear-norm gaps between teacher-recovered and true latent second moments,
/// averaged over `subset`.
pub fn measure_teacher_error(gbar_v: &DMatrix<f64>, gbar_l: &DMatrix<f64>, sample: &Sample, subset: &[usize]) -> Result<TeacherError> {
    if subset.is_empty() {
        return Err(Error::EmptySelection("teacher error needs a nonempty subset".into()));
    }
    if gbar_v.shape() != (sample.x_v.ncols(), sample.z_v.ncols()) || gbar_l.shape() != gbar_v.shape() {
        return Err(Error::ShapeMismatch("teacher maps must be d x r".into()));
    }
    let s = sample.subset(subset);
    embedding_teacher_error(&(&s.x_v * gbar_v), &(&s.x_l * gbar_l), &s.z_v, &s.z_l)
}

/// Teacher errors from already-embedded rows `u` (vision) and `w` (language)
/// against the true latents.
pub fn embedding_teacher_error(u: &DMatrix<f64>, w: &DMatrix<f64>, z_v: &DMatrix<f64>, z_l: &DMatrix<f64>) -> Result<TeacherError> {
    if u.shape() != z_v.shape() || w.shape() != z_l.shape() || u.nrows() == 0 {
        return Err(Error::ShapeMismatch("teacher embeddings must match the latent rows".into()));
    }
    let k = u.nrows() as f64;
    let gap = |a: &DMatrix<f64>, b: &DMatrix<f64>, za: &DMatrix<f64>, zb: &DMatrix<f64>| -> Result<f64> {
        Ok(nuclear_norm(&(a.transpose() * b - za.transpose() * zb))? / k)
    };
    Ok(TeacherError { eps_v: gap(u, u, z_v, z_v)?, eps_l: gap(w, w, z_l, z_l)?, eps_vl: gap(u, w, z_v, z_l)? })
}

/// Per-sample `w_i^T sigma_bar u_i`: the summands of
/// `Tr(sigma_bar * sum u w^T)` for teacher embeddings `u` (vision) and `w`
/// (language).
pub fn vision_language_surrogate(u: &DMatrix<f64>, w: &DMatrix<f64>, sigma_bar: &DMatrix<f64>) -> Vec<f64> {
    let us = u * sigma_bar.transpose();
    (0..u.nrows()).map(|i| us.row(i).dot(&w.row(i))).collect()
}

/// Same with the vision embedding standing in for both sides.
pub fn vision_only_surrogate(u: &DMatrix<f64>, sigma_bar: &DMatrix<f64>) -> Vec<f64> {
    vision_language_surrogate(u, u, sigma_bar)
}

/// Size-`k` subset maximizing `Tr(sigma_target * (1/k) sum a_i b_i^T)` by
/// enumerating every subset in lexicographic order; ties keep the earliest.
pub fn brute_force_best_subset(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize, sigma_target: &DMatrix<f64>) -> Result<Selection> {
    let n = a.nrows();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge(format!("exhaustive search over n={n} > {BRUTE_FORCE_MAX_N}")));
    }
    if k < 1 || k > n {
        return Err(Error::InvalidTarget { target: k, pool_n: n });
    }
    if b.shape() != a.shape() || sigma_target.shape() != (a.ncols(), a.ncols()) {
        return Err(Error::ShapeMismatch("rows and target covariance must agree".into()));
    }
    // Tr(T a b^T) = b^T T a
    let ta = a * sigma_target.transpose();
    let terms: Vec<f64> = (0..n).map(|i| ta.row(i).dot(&b.row(i))).collect();

    let mut current: Vec<usize> = (0..k).collect();
    let mut best = current.clone();
    let mut best_value = current.iter().map(|&i| terms[i]).sum::<f64>();
    while next_combination(&mut current, n) {
        let value = current.iter().map(|&i| terms[i]).sum::<f64>();
        if value > best_value {
            best_value = value;
            best.clone_from(&current);
        }
    }
    Selection::new(n, best)
}

/// Advances to the next k-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
        return false;
    };
    c[i] += 1;
    for j in i + 1..k {
        c[j] = c[j - 1] + 1;
    }
    true
}

/// `Gamma = P0 + P1 + P2 + P3 + P4` for the pairs in `subset`:
/// signal, vision-latent x language-noise, vision-noise x language-latent,
/// noise x noise, and the centering term.
pub fn decompose_gamma_noise(world: &SyntheticWorld, sample: &Sample, subset: &[usize]) -> Result<[DMatrix<f64>; 5]> {
    let n = subset.len();
    if n < 2 {
        return Err(Error::SubsetTooSmall(n));
    }
    let s = sample.subset(subset);
    let nf = n as f64;
    let c = 1.0 / (nf - 1.0);
    let (gv, gl) = (&world.g_v, &world.g_l);
    let p0 = gv * (s.z_v.transpose() * &s.z_l) * gl.transpose() * c;
    let p1 = gv * (s.z_v.transpose() * &s.xi_l) * c;
    let p2 = (s.xi_v.transpose() * &s.z_l) * gl.transpose() * c;
    let p3 = s.xi_v.transpose() * &s.xi_l * c;
    let mv = s.x_v.row_mean().transpose();
    let ml = s.x_l.row_mean().transpose();
    let p4 = mv * ml.transpose() * (-nf * c);
    Ok([p0, p1, p2, p3, p4])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::head::compute_gamma;
    use crate::theory::world::{generate_world, WorldConfig};

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut seen = vec![c.clone()];
        while next_combination(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }

    #[test]
    fn brute_force_cases() {
        let e = DMatrix::<f64>::identity(3, 3);
        let t = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(brute_force_best_subset(&e, &e, 1, &t).unwrap().indices(), &[0]);
        assert_eq!(brute_force_best_subset(&e, &e, 3, &t).unwrap().indices(), &[0, 1, 2]);
        // ties between items 1 and 2 resolve to the earliest set
        assert_eq!(brute_force_best_subset(&e, &e, 2, &t).unwrap().indices(), &[0, 1]);
        let big = DMatrix::<f64>::zeros(21, 3);
        assert!(matches!(brute_force_best_subset(&big, &big, 2, &t), Err(Error::TooLarge(_))));
    }

    #[test]
    fn exact_teacher_has_zero_error() {
        let w = generate_world(&WorldConfig::new(6, 3, 40, 2).with_noise(0.0)).unwrap();
        let idx: Vec<usize> = (0..40).collect();
        let e = measure_teacher_error(&w.g_v, &w.g_l, &w.train, &idx).unwrap();
        assert!(e.eps_v < 1e-12 && e.eps_l < 1e-12 && e.eps_vl < 1e-12, "{e:?}");
    }

    #[test]
    fn null_language_teacher() {
        let w = generate_world(&WorldConfig::new(6, 3, 40, 2)).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        let e = measure_teacher_error(&w.g_v, &DMatrix::zeros(6, 3), &w.train, &idx).unwrap();
        // latent rows are unit, so the Gram mean is PSD with trace one
        assert!((e.eps_l - 1.0).abs() < 1e-12, "{e:?}");
    }

    #[test]
    fn noise_terms_sum_to_gamma() {
        let w = generate_world(&WorldConfig::new(5, 2, 30, 4)).unwrap();
        let idx: Vec<usize> = (3..20).collect();
        let parts = decompose_gamma_noise(&w, &w.train, &idx).unwrap();
        let sum = parts.iter().fold(DMatrix::zeros(5, 5), |acc, p| acc + p);
        let gamma = compute_gamma(&w.train.subset(&idx).pairs()).unwrap();
        assert!((sum - gamma).abs().max() < 1e-12);
    }

    #[test]
    fn noiseless_noise_terms_vanish() {
        let w = generate_world(&WorldConfig::new(5, 2, 30, 4).with_noise(0.0)).unwrap();
        let idx: Vec<usize> = (0..30).collect();
        let parts = decompose_gamma_noise(&w, &w.train, &idx).unwrap();
        for p in &parts[1..4] {
            assert_eq!(p.abs().max(), 0.0);
        }
    }
}
