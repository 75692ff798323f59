//! Distribution-alignment scores against a target set: VAS, NormSim_p and
//! the nearest-neighbor rank baseline.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::embeddings::{EmbeddingSet, Modality};
use crate::error::{Error, Result};
use crate::kernels::{dot, mean_outer, quadratic_forms, row, TILE};
use crate::scores::ScoreVector;

/// Upper bound on `m * n` for [`nn_rank_score`].
pub const NN_RANK_MAX_WORK: u128 = 1_000_000_000;

/// Mean (cross-)second-moment matrix of a target set.
#[derive(Debug, Clone)]
pub struct TargetStatistics {
    pub d: usize,
    pub sigma: DMatrix<f64>,
    pub m: usize,
    pub modalities: (Modality, Modality),
    pub target_ref: Option<(EmbeddingSet, EmbeddingSet)>,
}

impl TargetStatistics {
    pub fn with_target_ref(mut self, m1: EmbeddingSet, m2: EmbeddingSet) -> Self {
        self.target_ref = Some((m1, m2));
        self
    }
}

pub fn target_statistics(target_m1: &EmbeddingSet, target_m2: &EmbeddingSet) -> Result<TargetStatistics> {
    if target_m1.n() != target_m2.n() || target_m1.d() != target_m2.d() {
        return Err(Error::ShapeMismatch(format!(
            "target sets are {}x{} and {}x{}",
            target_m1.n(),
            target_m1.d(),
            target_m2.n(),
            target_m2.d()
        )));
    }
    let m = target_m1.n();
    if m == 0 {
        return Err(Error::EmptyTarget);
    }
    let d = target_m1.d();
    let a = target_m1.to_f64();
    let idx: Vec<usize> = (0..m).collect();
    let sigma = if std::ptr::eq(target_m1, target_m2) { mean_outer(&a, &a, d, &idx) } else { mean_outer(&a, &target_m2.to_f64(), d, &idx) };
    Ok(TargetStatistics { d, sigma, m, modalities: (target_m1.modality(), target_m2.modality()), target_ref: None })
}

/// `f_{m1}(x_i)^T sigma f_{m2}(x_i)` for every pool row.
pub fn vas(pool_m1: &EmbeddingSet, pool_m2: &EmbeddingSet, stats: &TargetStatistics) -> Result<ScoreVector> {
    if pool_m1.n() != pool_m2.n() {
        return Err(Error::ShapeMismatch(format!("pool sizes {} and {}", pool_m1.n(), pool_m2.n())));
    }
    if pool_m1.d() != stats.d || pool_m2.d() != stats.d {
        return Err(Error::ShapeMismatch(format!("pool dims ({}, {}) vs target dim {}", pool_m1.d(), pool_m2.d(), stats.d)));
    }
    let d = stats.d;
    let idx: Vec<usize> = (0..pool_m1.n()).collect();
    let a = pool_m1.to_f64();
    let values = if std::ptr::eq(pool_m1, pool_m2) {
        quadratic_forms(&a, &a, d, &stats.sigma, &idx)
    } else {
        quadratic_forms(&a, &pool_m2.to_f64(), d, &stats.sigma, &idx)
    };
    Ok(ScoreVector::new("vas", values)
        .with_param("target_m", stats.m)
        .with_param("modalities", format!("{:?}x{:?}", stats.modalities.0, stats.modalities.1).to_lowercase()))
}

/// Order of the norm taken over a sample's target similarities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    /// `max_t <f_t, f_i>`; `absolute` switches to `max_t |<f_t, f_i>|`.
    Infinity {
        absolute: bool,
    },
}

impl NormOrder {
    pub const INF: NormOrder = NormOrder::Infinity { absolute: false };

    fn label(&self) -> String {
        match self {
            NormOrder::Finite(p) => p.to_string(),
            NormOrder::Infinity { absolute: false } => "inf".into(),
            NormOrder::Infinity { absolute: true } => "inf-abs".into(),
        }
    }
}

/// Streaming `(sum_t |x_t|^p)^{1/p}` kept as `max * (sum (|x_t|/max)^p)^{1/p}`
/// so large `p` neither underflows nor overflows.
#[derive(Clone, Copy)]
struct PowerSum {
    max: f64,
    sum: f64,
}

impl PowerSum {
    fn push(&mut self, x: f64, p: f64) {
        let x = x.abs();
        if x > self.max {
            self.sum = self.sum * (self.max / x).powf(p) + 1.0;
            self.max = x;
        } else if x > 0.0 {
            self.sum += (x / self.max).powf(p);
        }
    }

    fn value(&self, p: f64) -> f64 {
        if self.max == 0.0 {
            0.0
        } else {
            self.max * self.sum.powf(1.0 / p)
        }
    }
}

pub fn normsim(pool: &EmbeddingSet, target: &EmbeddingSet, p: NormOrder) -> Result<ScoreVector> {
    if pool.d() != target.d() {
        return Err(Error::ShapeMismatch(format!("pool d={} vs target d={}", pool.d(), target.d())));
    }
    if let NormOrder::Finite(p) = p {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidNormOrder(p));
        }
    }
    let d = pool.d();
    let (x, t) = (pool.to_f64(), target.to_f64());
    let m = target.n();
    let values: Vec<f64> = (0..pool.n())
        .into_par_iter()
        .with_min_len(16)
        .map(|i| {
            let xi = row(&x, d, i);
            match p {
                NormOrder::Finite(p) => {
                    let mut acc = PowerSum { max: 0.0, sum: 0.0 };
                    for start in (0..m).step_by(TILE) {
                        for j in start..(start + TILE).min(m) {
                            acc.push(dot(row(&t, d, j), xi), p);
                        }
                    }
                    acc.value(p)
                }
                NormOrder::Infinity { absolute } => (0..m)
                    .map(|j| {
                        let s = dot(row(&t, d, j), xi);
                        if absolute {
                            s.abs()
                        } else {
                            s
                        }
                    })
                    .fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(ScoreVector::new("normsim", values).with_param("p", p.label()).with_param("target_m", m))
}

/// Highest per-target rank of each pool item: for every target the pool is
/// sorted by similarity (descending, ties by lower index) and position `k`
/// scores `n - k`.
pub fn nn_rank_score(pool: &EmbeddingSet, target: &EmbeddingSet) -> Result<ScoreVector> {
    if pool.d() != target.d() {
        return Err(Error::ShapeMismatch(format!("pool d={} vs target d={}", pool.d(), target.d())));
    }
    let (n, m, d) = (pool.n(), target.n(), pool.d());
    if (n as u128) * (m as u128) > NN_RANK_MAX_WORK {
        return Err(Error::TooLarge(format!("nn-rank over {n} pool items and {m} targets")));
    }
    let (x, t) = (pool.to_f64(), target.to_f64());
    let best = (0..m)
        .into_par_iter()
        .fold(
            || vec![0usize; n],
            |mut best, j| {
                let tj = row(&t, d, j);
                let sims: Vec<f64> = (0..n).map(|i| dot(row(&x, d, i), tj)).collect();
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
                for (pos, &i) in order.iter().enumerate() {
                    best[i] = best[i].max(n - pos);
                }
                best
            },
        )
        .reduce(
            || vec![0usize; n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x = (*x).max(y));
                a
            },
        );
    Ok(ScoreVector::new("nnrank", best.into_iter().map(|v| v as f64).collect()).with_param("target_m", m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[Vec<f64>]) -> EmbeddingSet {
        EmbeddingSet::from_f64_rows(Modality::Vision, rows).unwrap()
    }

    fn e(d: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        v
    }

    #[test]
    fn single_target_outer_product() {
        let t = set(&[e(3, 0)]);
        let s = target_statistics(&t, &t).unwrap();
        assert_eq!(s.sigma, DMatrix::from_fn(3, 3, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 }));
        assert_eq!(s.m, 1);
    }

    #[test]
    fn two_basis_targets() {
        let t = set(&[e(4, 0), e(4, 1)]);
        let s = target_statistics(&t, &t).unwrap();
        let want = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.5, 0.0, 0.0]));
        assert_eq!(s.sigma, want);
    }

    #[test]
    fn shape_errors() {
        let a = set(&[e(3, 0)]);
        let b = set(&[e(3, 0), e(3, 1)]);
        assert!(matches!(target_statistics(&a, &b), Err(Error::ShapeMismatch(_))));
        let c = set(&[e(2, 0)]);
        let s = target_statistics(&a, &a).unwrap();
        assert!(matches!(vas(&c, &c, &s), Err(Error::ShapeMismatch(_))));
        assert!(matches!(normsim(&c, &a, NormOrder::Finite(2.0)), Err(Error::ShapeMismatch(_))));
        assert!(matches!(nn_rank_score(&c, &a), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn vas_with_identity_and_orthogonal_sigma() {
        let x = set(&[vec![0.6, 0.8, 0.0]]);
        let stats = TargetStatistics {
            d: 3,
            sigma: DMatrix::identity(3, 3),
            m: 1,
            modalities: (Modality::Vision, Modality::Vision),
            target_ref: None,
        };
        let v = vas(&x, &x, &stats).unwrap().values[0];
        assert!((v - 1.0).abs() < 1e-7);

        let t = set(&[e(3, 0)]);
        let s = target_statistics(&t, &t).unwrap();
        let y = set(&[e(3, 1)]);
        assert_eq!(vas(&y, &y, &s).unwrap().values, vec![0.0]);
    }

    #[test]
    fn vas_matches_triple_loop() {
        let targets = [vec![0.5, 0.5, 0.5, 0.5], vec![0.0, 0.6, 0.0, 0.8]];
        let pool = [vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.8, 0.6, 0.0], vec![0.5, -0.5, 0.5, -0.5]];
        let t = set(&targets);
        let x = set(&pool);
        let got = vas(&x, &x, &target_statistics(&t, &t).unwrap()).unwrap().values;

        let tf = t.to_f64();
        let xf = x.to_f64();
        for i in 0..3 {
            let mut oracle = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    let mut sig = 0.0;
                    for k in 0..2 {
                        sig += tf[k * 4 + a] * tf[k * 4 + b];
                    }
                    oracle += xf[i * 4 + a] * (sig / 2.0) * xf[i * 4 + b];
                }
            }
            assert!((got[i] - oracle).abs() <= 1e-10);
        }
    }

    #[test]
    fn normsim_basic_cases() {
        let t = set(&[e(3, 0), e(3, 1)]);
        let inside = set(&[e(3, 1)]);
        assert_eq!(normsim(&inside, &t, NormOrder::INF).unwrap().values, vec![1.0]);
        let ortho = set(&[e(3, 2)]);
        assert_eq!(normsim(&ortho, &t, NormOrder::Finite(2.0)).unwrap().values, vec![0.0]);
        assert!(matches!(normsim(&ortho, &t, NormOrder::Finite(0.5)), Err(Error::InvalidNormOrder(_))));
    }

    #[test]
    fn normsim_matches_loop_oracle() {
        let targets = [vec![0.6, 0.8, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.6, -0.8]];
        let pool = [vec![1.0, 0.0, 0.0], vec![0.0, 0.8, 0.6], vec![-0.6, 0.0, 0.8]];
        let t = set(&targets);
        let x = set(&pool);
        let tf = t.to_f64();
        let xf = x.to_f64();
        let dots = |i: usize| -> Vec<f64> { (0..3).map(|k| (0..3).map(|c| tf[k * 3 + c] * xf[i * 3 + c]).sum()).collect() };
        let two = normsim(&x, &t, NormOrder::Finite(2.0)).unwrap().values;
        let inf = normsim(&x, &t, NormOrder::INF).unwrap().values;
        let inf_abs = normsim(&x, &t, NormOrder::Infinity { absolute: true }).unwrap().values;
        for i in 0..3 {
            let ds = dots(i);
            let l2 = ds.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mx = ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mxa = ds.iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!((two[i] - l2).abs() <= 1e-10);
            assert!((inf[i] - mx).abs() <= 1e-10);
            assert!((inf_abs[i] - mxa).abs() <= 1e-10);
        }
        // Row 2 has only non-positive target similarities: signed and absolute maxima differ.
        assert!(inf[2] < inf_abs[2]);
    }

    #[test]
    fn nn_rank_cases() {
        let t = set(&[e(2, 0)]);
        let one = set(&[vec![0.6, 0.8]]);
        assert_eq!(nn_rank_score(&one, &t).unwrap().values, vec![1.0]);

        let pool = set(&[vec![0.6, 0.8], e(2, 0), e(2, 1)]);
        assert_eq!(nn_rank_score(&pool, &t).unwrap().values[1], 3.0);
    }

    #[test]
    fn nn_rank_matches_exhaustive_sort() {
        let targets = [vec![1.0, 0.0], vec![0.0, 1.0]];
        let pool = [vec![0.8, 0.6], vec![0.6, 0.8], vec![-1.0, 0.0], vec![0.8, 0.6]];
        let got = nn_rank_score(&set(&pool), &set(&targets)).unwrap().values;
        // target e1: sims .8,.6,-1,.8 -> order 0,3,1,2 -> ranks 4,2,1,3
        // target e2: sims .6,.8,0,.6 -> order 1,0,3,2 -> ranks 3,4,1,2
        assert_eq!(got, vec![4.0, 4.0, 1.0, 3.0]);
    }
}
