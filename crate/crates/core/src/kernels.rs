//! Tiled binary64 kernels shared by the scoring modules.
//!
//! Parallel work is split on fixed tile boundaries and partial results are
//! merged in tile order, so outputs do not depend on the thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;

/// Edge length of the row/column tiles used by every blocked kernel.
pub const TILE: usize = 1024;

/// Inner product with four interleaved partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn row(data: &[f64], d: usize, i: usize) -> &[f64] {
    &data[i * d..(i + 1) * d]
}

/// Running `m + tau * ln(sum exp((s - m) / tau))` over a stream of
/// similarities, kept in similarity units so a single term is reproduced
/// exactly.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, sum: 0.0 }
    }
}

impl LogSumExp {
    #[inline]
    pub fn push(&mut self, s: f64, tau: f64) {
        if s > self.max {
            self.sum = self.sum * ((self.max - s) / tau).exp() + 1.0;
            self.max = s;
        } else {
            self.sum += ((s - self.max) / tau).exp();
        }
    }

    #[inline]
    pub fn merge(self, other: LogSumExp, tau: f64) -> LogSumExp {
        if other.sum == 0.0 {
            return self;
        }
        if self.sum == 0.0 {
            return other;
        }
        let max = self.max.max(other.max);
        let sum = self.sum * ((self.max - max) / tau).exp() + other.sum * ((other.max - max) / tau).exp();
        LogSumExp { max, sum }
    }

    #[inline]
    pub fn value(&self, tau: f64) -> f64 {
        self.max + tau * self.sum.ln()
    }
}

/// Largest shift-to-temperature ratio for which `exp((s - c) / tau)` stays
/// comfortably above the binary64 underflow threshold.
const MAX_SHIFT_RATIO: f64 = 600.0;

fn max_row_norm(x: &[f64], d: usize) -> f64 {
    x.chunks_exact(d).map(|r| dot(r, r).sqrt()).fold(0.0, f64::max)
}

/// Temperature log-sum-exp over the rows and columns of `S = A B^T`, plus
/// its diagonal, for two row-major `b x d` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLse {
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    /// `S_kk` exactly as entered into the sums above.
    pub diag: Vec<f64>,
}

/// Works tile by tile; only one `TILE x TILE` block of `S` exists at a time.
pub fn block_logsumexp(a: &[f64], bm: &[f64], d: usize, tau: f64) -> BlockLse {
    // Every |s| is at most c; a common shift lets rows and columns share one exp per entry.
    let c = max_row_norm(a, d) * max_row_norm(bm, d);
    if 2.0 * c / tau <= MAX_SHIFT_RATIO {
        shared_shift_logsumexp(a, bm, d, tau, c)
    } else {
        streaming_logsumexp(a, bm, d, tau)
    }
}

/// `A[r0..r1] * B[c0..c1]^T` through the blocked matrix product.
fn sim_block(a: &[f64], bm: &[f64], d: usize, (r0, r1): (usize, usize), (c0, c1): (usize, usize)) -> DMatrix<f64> {
    let at = DMatrix::from_row_slice(r1 - r0, d, &a[r0 * d..r1 * d]);
    let bt = DMatrix::from_column_slice(d, c1 - c0, &bm[c0 * d..c1 * d]);
    at * bt
}

fn tile_pairs(n: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let tiles: Vec<(usize, usize)> = (0..n).step_by(TILE).map(|s| (s, (s + TILE).min(n))).collect();
    let pairs = (0..tiles.len()).flat_map(|r| (0..tiles.len()).map(move |c| (r, c))).collect();
    (tiles, pairs)
}

/// Sum of `exp((s - c) / tau)` and the largest `s` seen.
#[derive(Clone, Copy)]
struct Shifted {
    sum: f64,
    max: f64,
}

impl Shifted {
    const EMPTY: Shifted = Shifted { sum: 0.0, max: f64::NEG_INFINITY };

    /// `max + tau * ln(sum / exp((max - c) / tau))`; a single term gives `s` exactly.
    fn value(self, tau: f64, c: f64) -> f64 {
        self.max + tau * (self.sum / ((self.max - c) / tau).exp()).ln()
    }
}

fn shared_shift_logsumexp(a: &[f64], bm: &[f64], d: usize, tau: f64, c: f64) -> BlockLse {
    let n = a.len() / d;
    let (tiles, pairs) = tile_pairs(n);
    let mut diag = vec![0.0; n];
    let partials: Vec<(Vec<Shifted>, Vec<Shifted>, Vec<f64>)> = pairs
        .par_iter()
        .map(|&(rt, ct)| {
            let (r0, r1) = tiles[rt];
            let (c0, c1) = tiles[ct];
            // column-major: entry (i, j) sits at j * rows + i
            let sim = sim_block(a, bm, d, tiles[rt], tiles[ct]);
            let h = r1 - r0;
            let mut rows = vec![Shifted::EMPTY; h];
            let mut cols = vec![Shifted::EMPTY; c1 - c0];
            for (col, sj) in cols.iter_mut().zip(sim.as_slice().chunks_exact(h)) {
                for (r, &s) in rows.iter_mut().zip(sj) {
                    let e = ((s - c) / tau).exp();
                    r.sum += e;
                    r.max = r.max.max(s);
                    col.sum += e;
                    col.max = col.max.max(s);
                }
            }
            let diag = if rt == ct { (0..h).map(|k| sim[(k, k)]).collect() } else { Vec::new() };
            (rows, cols, diag)
        })
        .collect();
    for (t, &(s0, _)) in tiles.iter().enumerate() {
        let block = &partials[t * tiles.len() + t].2;
        diag[s0..s0 + block.len()].copy_from_slice(block);
    }

    let nt = tiles.len();
    let mut row_out = vec![0.0; n];
    let mut col_out = vec![0.0; n];
    for (t, &(s0, s1)) in tiles.iter().enumerate() {
        for k in s0..s1 {
            let (mut racc, mut cacc) = (Shifted::EMPTY, Shifted::EMPTY);
            for o in 0..nt {
                let (r, cl) = (partials[t * nt + o].0[k - s0], partials[o * nt + t].1[k - s0]);
                racc = Shifted { sum: racc.sum + r.sum, max: racc.max.max(r.max) };
                cacc = Shifted { sum: cacc.sum + cl.sum, max: cacc.max.max(cl.max) };
            }
            row_out[k] = racc.value(tau, c);
            col_out[k] = cacc.value(tau, c);
        }
    }
    BlockLse { rows: row_out, cols: col_out, diag }
}

fn streaming_logsumexp(a: &[f64], bm: &[f64], d: usize, tau: f64) -> BlockLse {
    let n = a.len() / d;
    let (tiles, pairs) = tile_pairs(n);

    // (row partials, column partials) for every (row tile, column tile) block.
    let partials: Vec<(Vec<LogSumExp>, Vec<LogSumExp>)> = pairs
        .par_iter()
        .map(|&(rt, ct)| {
            let (r0, r1) = tiles[rt];
            let (c0, c1) = tiles[ct];
            let mut rows = vec![LogSumExp::default(); r1 - r0];
            let mut cols = vec![LogSumExp::default(); c1 - c0];
            for i in r0..r1 {
                let ai = row(a, d, i);
                for j in c0..c1 {
                    let s = dot(ai, row(bm, d, j));
                    rows[i - r0].push(s, tau);
                    cols[j - c0].push(s, tau);
                }
            }
            (rows, cols)
        })
        .collect();

    let nt = tiles.len();
    let mut row_out = vec![0.0; n];
    let mut col_out = vec![0.0; n];
    for (t, &(s0, s1)) in tiles.iter().enumerate() {
        for k in s0..s1 {
            let mut racc = LogSumExp::default();
            let mut cacc = LogSumExp::default();
            for o in 0..nt {
                racc = racc.merge(partials[t * nt + o].0[k - s0], tau);
                cacc = cacc.merge(partials[o * nt + t].1[k - s0], tau);
            }
            row_out[k] = racc.value(tau);
            col_out[k] = cacc.value(tau);
        }
    }
    let diag = (0..n).map(|k| dot(row(a, d, k), row(bm, d, k))).collect();
    BlockLse { rows: row_out, cols: col_out, diag }
}

/// `(1/|idx|) * sum_{i in idx} a_i b_i^T` for row-major `a`, `b`.
pub fn mean_outer(a: &[f64], b: &[f64], d: usize, idx: &[usize]) -> DMatrix<f64> {
    let partials: Vec<Vec<f64>> = idx
        .par_chunks(TILE)
        .map(|chunk| {
            let mut acc = vec![0.0; d * d];
            for &i in chunk {
                let ai = row(a, d, i);
                let bi = row(b, d, i);
                for (p, &x) in ai.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let out = &mut acc[p * d..(p + 1) * d];
                    for (o, &y) in out.iter_mut().zip(bi) {
                        *o += x * y;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; d * d];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let scale = 1.0 / idx.len() as f64;
    total.iter_mut().for_each(|v| *v *= scale);
    DMatrix::from_row_slice(d, d, &total)
}

/// `a_i^T sigma b_i` for each `i` in `idx`.
pub fn quadratic_forms(a: &[f64], b: &[f64], d: usize, sigma: &DMatrix<f64>, idx: &[usize]) -> Vec<f64> {
    // Row-major copy so each inner product walks contiguous memory.
    let sig: Vec<f64> = (0..d).flat_map(|p| (0..d).map(move |q| (p, q))).map(|(p, q)| sigma[(p, q)]).collect();
    idx.par_iter()
        .with_min_len(64)
        .map(|&i| {
            let ai = row(a, d, i);
            let bi = row(b, d, i);
            ai.iter().enumerate().map(|(p, &x)| x * dot(&sig[p * d..(p + 1) * d], bi)).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_lse(xs: &[f64], tau: f64) -> f64 {
        tau * xs.iter().map(|x| (x / tau).exp()).sum::<f64>().ln()
    }

    #[test]
    fn single_term_is_exact() {
        let mut acc = LogSumExp::default();
        acc.push(0.3, 0.01);
        assert_eq!(acc.value(0.01), 0.3);
    }

    #[test]
    fn matches_naive_sum() {
        let xs = [0.1, -0.4, 0.25, 0.9, 0.0];
        let mut acc = LogSumExp::default();
        for &x in &xs {
            acc.push(x, 0.5);
        }
        assert!((acc.value(0.5) - naive_lse(&xs, 0.5)).abs() < 1e-14);
    }

    #[test]
    fn merge_is_consistent_with_push() {
        let xs = [0.3, 0.7, -0.2, 0.1];
        let (mut a, mut b, mut all) = (LogSumExp::default(), LogSumExp::default(), LogSumExp::default());
        for &x in &xs[..2] {
            a.push(x, 0.1);
        }
        for &x in &xs[2..] {
            b.push(x, 0.1);
        }
        for &x in &xs {
            all.push(x, 0.1);
        }
        assert!((a.merge(b, 0.1).value(0.1) - all.value(0.1)).abs() < 1e-14);
    }

    #[test]
    fn tiny_temperature_stays_finite() {
        let mut acc = LogSumExp::default();
        for x in [1.0, 0.999, -1.0] {
            acc.push(x, 1e-3);
        }
        assert!(acc.value(1e-3).is_finite());
    }

    fn naive_block(a: &[f64], b: &[f64], d: usize, tau: f64) -> (Vec<f64>, Vec<f64>) {
        let n = a.len() / d;
        let s = |i: usize, j: usize| dot(row(a, d, i), row(b, d, j));
        let rows = (0..n).map(|i| naive_lse(&(0..n).map(|j| s(i, j)).collect::<Vec<_>>(), tau)).collect();
        let cols = (0..n).map(|j| naive_lse(&(0..n).map(|i| s(i, j)).collect::<Vec<_>>(), tau)).collect();
        (rows, cols)
    }

    #[test]
    fn both_paths_match_naive_block() {
        let a: Vec<f64> = (0..15).map(|k| ((k * 7 % 11) as f64 - 5.0) / 9.0).collect();
        let b: Vec<f64> = (0..15).map(|k| ((k * 5 % 13) as f64 - 6.0) / 10.0).collect();
        for tau in [0.05, 0.5] {
            let (nr, nc) = naive_block(&a, &b, 3, tau);
            let shared = shared_shift_logsumexp(&a, &b, 3, tau, max_row_norm(&a, 3) * max_row_norm(&b, 3));
            let streamed = streaming_logsumexp(&a, &b, 3, tau);
            for out in [&shared, &streamed] {
                for k in 0..5 {
                    assert!((out.rows[k] - nr[k]).abs() < 1e-13, "{} vs {}", out.rows[k], nr[k]);
                    assert!((out.cols[k] - nc[k]).abs() < 1e-13, "{} vs {}", out.cols[k], nc[k]);
                    assert!((out.diag[k] - dot(row(&a, 3, k), row(&b, 3, k))).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn single_entry_block_is_exact() {
        let (a, b) = ([0.6, 0.8], [0.8, -0.6]);
        for tau in [0.01, 1e-4] {
            let out = block_logsumexp(&a, &b, 2, tau);
            assert_eq!(out.rows, out.diag);
            assert_eq!(out.cols, out.diag);
        }
    }

    #[test]
    fn dot_with_remainder() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 1.0, 1.0, 1.0, 2.0, -1.0];
        assert_eq!(dot(&a, &b), 14.0);
    }

    #[test]
    fn mean_outer_of_basis() {
        let a = [1.0, 0.0, 0.0, 1.0];
        let m = mean_outer(&a, &a, 2, &[0, 1]);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }
}
