//! Turning scores into selections and composing selections.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scores::ScoreVector;

/// Sorted, duplicate-free positions into a pool of `pool_n` items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pool_n: usize,
    indices: Vec<usize>,
}

impl Selection {
    /// Validates that `indices` is strictly increasing and in range.
    pub fn new(pool_n: usize, indices: Vec<usize>) -> Result<Self> {
        if let Some(&last) = indices.last() {
            if last >= pool_n {
                return Err(Error::IndexOutOfRange { index: last, len: pool_n });
            }
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!("selection indices must be strictly increasing ({} then {})", w[0], w[1])));
        }
        Ok(Selection { pool_n, indices })
    }

    pub fn from_unsorted(pool_n: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(pool_n, indices)
    }

    pub fn all(pool_n: usize) -> Self {
        Selection { pool_n, indices: (0..pool_n).collect() }
    }

    pub fn pool_n(&self) -> usize {
        self.pool_n
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Training manifest that may repeat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingList {
    pub pool_n: usize,
    pub entries: Vec<usize>,
}

impl TrainingList {
    pub fn unique_count(&self) -> usize {
        let mut e = self.entries.clone();
        e.sort_unstable();
        e.dedup();
        e.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amount {
    Count(usize),
    Fraction(f64),
}

impl Amount {
    /// Resolves against `available` items; fractions round half up with a
    /// floor of one item.
    pub fn resolve(self, available: usize) -> Result<usize> {
        match self {
            Amount::Count(n) if n >= 1 && n <= available => Ok(n),
            Amount::Count(n) => Err(Error::EmptySelection(format!("count {n} is outside 1..={available}"))),
            Amount::Fraction(f) if f > 0.0 && f <= 1.0 && available > 0 => {
                let n = (f * available as f64 + 0.5).floor() as usize;
                Ok(n.clamp(1, available))
            }
            Amount::Fraction(f) => Err(Error::EmptySelection(format!("fraction {f} of {available} items"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    AtLeast,
    AtMost,
}

/// Best-first order: by score (direction per `higher_is_better`), then index.
fn rank_cmp(scores: &ScoreVector) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        let (x, y) = (scores.values[a], scores.values[b]);
        let by_score = if scores.higher_is_better { y.total_cmp(&x) } else { x.total_cmp(&y) };
        by_score.then(a.cmp(&b))
    }
}

fn top_of(scores: &ScoreVector, mut candidates: Vec<usize>, amount: Amount) -> Result<Selection> {
    let k = amount.resolve(candidates.len())?;
    let cmp = rank_cmp(scores);
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable();
    Selection::new(scores.len(), candidates)
}

pub fn select_top(scores: &ScoreVector, amount: Amount) -> Result<Selection> {
    top_of(scores, (0..scores.len()).collect(), amount)
}

/// Inclusive threshold cut. An empty result is allowed.
pub fn select_threshold(scores: &ScoreVector, threshold: f64, keep: Keep) -> Result<Selection> {
    if !threshold.is_finite() {
        return Err(Error::InvalidParameter(format!("threshold {threshold} is not finite")));
    }
    let indices = scores
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| match keep {
            Keep::AtLeast => v >= threshold,
            Keep::AtMost => v <= threshold,
        })
        .map(|(i, _)| i)
        .collect();
    Selection::new(scores.len(), indices)
}

/// Scores seen through a mask; selections still use original indices.
#[derive(Debug, Clone, Copy)]
pub struct Restricted<'a> {
    pub scores: &'a ScoreVector,
    pub within: &'a Selection,
}

impl Restricted<'_> {
    pub fn len(&self) -> usize {
        self.within.len()
    }

    pub fn is_empty(&self) -> bool {
        self.within.is_empty()
    }

    /// Masked values; entries outside the mask are `None`.
    pub fn masked_values(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.scores.len()];
        for &i in self.within.indices() {
            out[i] = Some(self.scores.values[i]);
        }
        out
    }

    pub fn select_top(&self, amount: Amount) -> Result<Selection> {
        top_of(self.scores, self.within.indices().to_vec(), amount)
    }
}

pub fn restrict<'a>(scores: &'a ScoreVector, within: &'a Selection) -> Result<Restricted<'a>> {
    if within.pool_n() != scores.len() {
        return Err(Error::PoolMismatch { left: scores.len(), right: within.pool_n() });
    }
    if let Some(&last) = within.indices().last() {
        if last >= scores.len() {
            return Err(Error::IndexOutOfRange { index: last, len: scores.len() });
        }
    }
    Ok(Restricted { scores, within })
}

/// Keep the best `frac_a` by `scores_a`, then the best `final_amount` of the
/// survivors by `scores_b`.
pub fn two_stage(scores_a: &ScoreVector, frac_a: f64, scores_b: &ScoreVector, final_amount: Amount) -> Result<Selection> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::PoolMismatch { left: scores_a.len(), right: scores_b.len() });
    }
    let stage_a = select_top(scores_a, Amount::Fraction(frac_a))?;
    restrict(scores_b, &stage_a)?.select_top(final_amount)
}

fn same_pool(a: &Selection, b: &Selection) -> Result<()> {
    if a.pool_n != b.pool_n {
        return Err(Error::PoolMismatch { left: a.pool_n, right: b.pool_n });
    }
    Ok(())
}

pub fn intersect(a: &Selection, b: &Selection) -> Result<Selection> {
    same_pool(a, b)?;
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a.indices[i]);
                i += 1;
                j += 1;
            }
        }
    }
    Ok(Selection { pool_n: a.pool_n, indices: out })
}

/// `a` followed by `b`; shared items appear twice.
pub fn union_oversample(a: &Selection, b: &Selection) -> Result<TrainingList> {
    same_pool(a, b)?;
    let entries = a.indices.iter().chain(&b.indices).copied().collect();
    Ok(TrainingList { pool_n: a.pool_n, entries })
}
