//! Pair-quality scores: CLIPScore and negCLIPLoss.
//!
//! negCLIPLoss is CLIPScore minus a normalization term: half the sum of the
//! image-to-text and text-to-image temperature log-sum-exp of the sample's
//! similarities inside its batch, averaged over `K` random batch divisions.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::embeddings::PairedEmbeddings;
use crate::error::{Error, Result};
use crate::kernels::{block_logsumexp, dot, row};
use crate::rng::CounterRng;
use crate::scores::ScoreVector;

pub const DEFAULT_TEMPERATURE: f64 = 0.01;
pub const DEFAULT_BATCH_SIZE: usize = 32_768;
pub const DEFAULT_ROUNDS: usize = 10;

/// Rows further than this from unit norm are rejected by the scorers.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;

fn check_pool(pool: &PairedEmbeddings<'_>) -> Result<()> {
    pool.image.check_unit_rows("image", UNIT_NORM_TOLERANCE)?;
    pool.text.check_unit_rows("text", UNIT_NORM_TOLERANCE)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature(tau))
    }
}

pub fn clip_score(pool: &PairedEmbeddings<'_>) -> Result<ScoreVector> {
    check_pool(pool)?;
    let d = pool.d();
    let (img, txt) = (pool.image.to_f64(), pool.text.to_f64());
    let values = (0..pool.n()).map(|i| dot(row(&img, d, i), row(&txt, d, i))).collect();
    Ok(ScoreVector::new("clipscore", values))
}

/// `K` random divisions of `0..n` into consecutive chunks of `batch_size`.
///
/// Round `k` is a Fisher-Yates permutation driven by the counter stream
/// `(seed, k)`; only the four parameters are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchDivisionPlan {
    pub n: usize,
    pub batch_size: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl BatchDivisionPlan {
    pub fn new(n: usize, batch_size: usize, rounds: usize, seed: u64) -> Result<Self> {
        if n == 0 || batch_size == 0 || rounds == 0 {
            return Err(Error::InvalidParameter(format!("batch plan needs n, b, K >= 1 (got n={n}, b={batch_size}, K={rounds})")));
        }
        Ok(BatchDivisionPlan { n, batch_size, rounds, seed })
    }

    pub fn chunk_count(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    pub fn round_permutation(&self, k: usize) -> Vec<usize> {
        CounterRng::new(self.seed, k as u64).permutation(self.n)
    }

    /// Materialized chunks of round `k`.
    pub fn round(&self, k: usize) -> Vec<Vec<usize>> {
        self.round_permutation(k).chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn partitions(&self) -> Vec<Vec<Vec<usize>>> {
        (0..self.rounds).map(|k| self.round(k)).collect()
    }
}

pub fn make_batch_plan(n: usize, b: usize, k: usize, seed: u64) -> Result<BatchDivisionPlan> {
    BatchDivisionPlan::new(n, b, k, seed)
}

/// Pool rows widened once to binary64.
struct Widened {
    img: Vec<f64>,
    txt: Vec<f64>,
    d: usize,
}

impl Widened {
    fn new(pool: &PairedEmbeddings<'_>) -> Self {
        Widened { img: pool.image.to_f64(), txt: pool.text.to_f64(), d: pool.d() }
    }

    /// `(s_ii, R_i)` for every member of `batch`, in batch order.
    fn batch_terms(&self, batch: &[usize], tau: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.d;
        let mut a = Vec::with_capacity(batch.len() * d);
        let mut b = Vec::with_capacity(batch.len() * d);
        for &i in batch {
            a.extend_from_slice(row(&self.img, d, i));
            b.extend_from_slice(row(&self.txt, d, i));
        }
        let lse = block_logsumexp(&a, &b, d, tau);
        let norm = lse.rows.iter().zip(&lse.cols).map(|(r, c)| (r + c) / 2.0).collect();
        (lse.diag, norm)
    }
}

/// The normalization term of every batch member, in batch order.
pub fn normalization_terms(pool: &PairedEmbeddings<'_>, batch: &[usize], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    let mut seen = HashSet::with_capacity(batch.len());
    for &i in batch {
        if i >= pool.n() {
            return Err(Error::IndexOutOfRange { index: i, len: pool.n() });
        }
        if !seen.insert(i) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    Ok(Widened::new(pool).batch_terms(batch, tau).1)
}

/// Per-round `s_ii - R_i`, indexed by pool position.
fn round_scores(w: &Widened, plan: &BatchDivisionPlan, k: usize, tau: f64) -> Vec<f64> {
    let perm = plan.round_permutation(k);
    let per_batch: Vec<(Vec<f64>, Vec<f64>)> = perm.par_chunks(plan.batch_size).map(|batch| w.batch_terms(batch, tau)).collect();
    let mut out = vec![0.0; plan.n];
    for (batch, (clip, norm)) in perm.chunks(plan.batch_size).zip(per_batch) {
        for (k, &i) in batch.iter().enumerate() {
            out[i] = clip[k] - norm[k];
        }
    }
    out
}

pub fn neg_clip_loss(pool: &PairedEmbeddings<'_>, plan: &BatchDivisionPlan, tau: f64) -> Result<ScoreVector> {
    check_tau(tau)?;
    if plan.n != pool.n() {
        return Err(Error::PlanMismatch { plan_n: plan.n, pool_n: pool.n() });
    }
    check_pool(pool)?;
    let w = Widened::new(pool);
    let mut acc = vec![0.0; plan.n];
    for k in 0..plan.rounds {
        for (a, v) in acc.iter_mut().zip(round_scores(&w, plan, k, tau)) {
            *a += v;
        }
    }
    let rounds = plan.rounds as f64;
    acc.iter_mut().for_each(|v| *v /= rounds);
    Ok(ScoreVector::new("negcliploss", acc)
        .with_param("tau", tau)
        .with_param("batch_size", plan.batch_size)
        .with_param("k", plan.rounds)
        .with_param("seed", plan.seed))
}
