//! Greedy batch removal against the surviving pool's own covariance
//! (VAS-D / NormSim2-D).
//!
//! Starting from the full pool, each of `T` steps recomputes
//! `sigma = mean_{j in S} f_j f_j^T`, scores the survivors by `f^T sigma f`
//! and keeps the best `N_t`, where `N_t` interpolates linearly from the pool
//! size down to the target size.

use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::kernels::{mean_outer, quadratic_forms};
use crate::scores::ScoreVector;
use crate::select::{Amount, Restricted, Selection};

pub const DEFAULT_STEPS: usize = 500;
/// Shorter preset for large pools.
pub const VAS_D_STEPS: usize = 168;

/// `N_t = N0 - (t/T)(N0 - N)` rounded half up, clamped to be nonincreasing.
pub fn size_schedule(n0: usize, target: usize, steps: usize) -> Vec<usize> {
    let (n0w, diff, tw) = (n0 as u128, (n0 - target) as u128, steps as u128);
    let mut prev = n0;
    (1..=steps)
        .map(|t| {
            let t = t as u128;
            let nt = ((2 * n0w * tw + tw - 2 * t * diff) / (2 * tw)) as usize;
            prev = nt.min(prev);
            prev
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DynamicTrace {
    pub selection: Selection,
    /// Survivor count after each step.
    pub sizes: Vec<usize>,
    /// Mean self-score of the survivors after each step, under their own covariance.
    pub mean_scores: Vec<f64>,
}

pub fn dynamic_select(pool: &EmbeddingSet, target_n: usize, steps: usize) -> Result<Selection> {
    dynamic_select_traced(pool, target_n, steps).map(|t| t.selection)
}

pub fn dynamic_select_traced(pool: &EmbeddingSet, target_n: usize, steps: usize) -> Result<DynamicTrace> {
    let n = pool.n();
    if target_n < 1 || target_n > n {
        return Err(Error::InvalidTarget { target: target_n, pool_n: n });
    }
    if steps < 1 {
        return Err(Error::InvalidParameter("at least one greedy step is required".into()));
    }
    let d = pool.d();
    let x = pool.to_f64();
    let mut survivors = Selection::all(n);
    let mut sizes = Vec::with_capacity(steps);
    let mut mean_scores = Vec::with_capacity(steps);

    for nt in size_schedule(n, target_n, steps) {
        if nt < survivors.len() {
            let sigma = mean_outer(&x, &x, d, survivors.indices());
            let scored = quadratic_forms(&x, &x, d, &sigma, survivors.indices());
            let mut values = vec![0.0; n];
            for (&i, v) in survivors.indices().iter().zip(scored) {
                values[i] = v;
            }
            let scores = ScoreVector::new("vas-d", values);
            survivors = Restricted { scores: &scores, within: &survivors }.select_top(Amount::Count(nt))?;
        }
        sizes.push(survivors.len());
        let sigma = mean_outer(&x, &x, d, survivors.indices());
        let v = quadratic_forms(&x, &x, d, &sigma, survivors.indices());
        mean_scores.push(v.iter().sum::<f64>() / v.len() as f64);
    }
    Ok(DynamicTrace { selection: survivors, sizes, mean_scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::Modality;

    #[test]
    fn schedule_endpoints_and_monotone() {
        for &(n0, n, t) in &[(10, 3, 4), (7, 7, 3), (100, 1, 7), (5, 4, 10), (1000, 300, 168)] {
            let s = size_schedule(n0, n, t);
            assert_eq!(s.len(), t);
            assert_eq!(*s.last().unwrap(), n);
            assert!(s.windows(2).all(|w| w[0] >= w[1]));
            assert!(s[0] <= n0);
        }
        // 10 -> 3 over 4 steps: 8.25, 6.5, 4.75, 3 -> 8, 7 (half up), 5, 3
        assert_eq!(size_schedule(10, 3, 4), vec![8, 7, 5, 3]);
    }

    #[test]
    fn identical_rows_keep_lowest_indices() {
        let pool = EmbeddingSet::from_rows(Modality::Vision, &vec![vec![0.6, 0.8]; 5]).unwrap();
        assert_eq!(dynamic_select(&pool, 2, 3).unwrap().indices(), &[0, 1]);
    }

    #[test]
    fn invalid_targets() {
        let pool = EmbeddingSet::from_rows(Modality::Vision, &vec![vec![1.0, 0.0]; 3]).unwrap();
        assert!(matches!(dynamic_select(&pool, 0, 1), Err(Error::InvalidTarget { .. })));
        assert!(matches!(dynamic_select(&pool, 4, 1), Err(Error::InvalidTarget { .. })));
        assert_eq!(dynamic_select(&pool, 3, 5).unwrap().len(), 3);
    }

    #[test]
    fn hand_stepped_two_step_run() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]];
        let pool = EmbeddingSet::from_f64_rows(Modality::Vision, &rows).unwrap();
        // Step 1 (N_1 = 3): sigma = [[2.5, .5], [.5, 1.5]] / 4; scores .625, .625, .375, .5
        //   -> drop index 2.
        // Step 2 (N_2 = 2): sigma over {0, 1, 3} = [[2.5, .5], [.5, .5]] / 3;
        //   scores .833, .833, .667 -> keep {0, 1}.
        let trace = dynamic_select_traced(&pool, 2, 2).unwrap();
        assert_eq!(trace.sizes, vec![3, 2]);
        assert_eq!(trace.selection.indices(), &[0, 1]);
    }
}
