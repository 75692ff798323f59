//! Seeded desk-scale experiments over synthetic worlds. Each returns per-run
//! rows plus named checks; a report passes when every check does.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::descent::minimize_loss;
use super::head::{closed_form_train, empirical_cross_cov, evaluate_train_loss, test_loss_gap, test_loss_self};
use super::teacher::{
    decompose_gamma_noise, embedding_teacher_error, measure_teacher_error, vision_language_surrogate, vision_only_surrogate,
};
use super::world::{generate_world, WorldConfig};
use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scores::ScoreVector;
use crate::select::{select_top, Amount};
use crate::stats::{log_log_slope, mean, spearman, std_dev};

pub const EXPERIMENTS: [&str; 5] = ["lemma1", "eym", "testloss", "theorem-main", "noise-decomp"];

pub const CSV_COLUMNS: [&str; 11] =
    ["seed", "n", "d", "r", "subset_id", "trace_term", "test_loss_gap", "test_loss_self", "eps_v", "eps_l", "eps_vl"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentRow {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub subset_id: usize,
    pub trace_term: Option<f64>,
    pub test_loss_gap: Option<f64>,
    pub test_loss_self: Option<f64>,
    pub eps_v: Option<f64>,
    pub eps_l: Option<f64>,
    pub eps_vl: Option<f64>,
    /// Experiment-specific columns, in `ExperimentReport::extra_columns` order.
    pub extra: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.to_string(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub extra_columns: Vec<String>,
    pub rows: Vec<ExperimentRow>,
    pub checks: Vec<Check>,
    /// Headline statistics the checks were decided on.
    pub summary: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# experiment={}", self.name);
        for (k, v) in &self.params {
            let _ = writeln!(s, "# {k}={v}");
        }
        for (k, v) in &self.summary {
            let _ = writeln!(s, "# result.{k}={v:?}");
        }
        for c in &self.checks {
            let _ = writeln!(s, "# check.{}={}", c.name, if c.passed { "pass" } else { "fail" });
        }
        let cols: Vec<&str> = CSV_COLUMNS.iter().copied().chain(self.extra_columns.iter().map(String::as_str)).collect();
        let _ = writeln!(s, "{}", cols.join(","));
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        for row in &self.rows {
            let mut fields = vec![
                row.seed.to_string(),
                row.n.to_string(),
                row.d.to_string(),
                row.r.to_string(),
                row.subset_id.to_string(),
                opt(row.trace_term),
                opt(row.test_loss_gap),
                opt(row.test_loss_self),
                opt(row.eps_v),
                opt(row.eps_l),
                opt(row.eps_vl),
            ];
            fields.extend(row.extra.iter().cloned());
            let _ = writeln!(s, "{}", fields.join(","));
        }
        s
    }
}

/// Independent child seed number `index` of `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    CounterRng::new(seed, 0x5eed).at(index)
}

fn params<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Geometric latent scales `decay^k`, used for shifted test distributions.
pub fn decaying_scale(r: usize, decay: f64) -> Vec<f64> {
    (0..r).map(|k| decay.powi(k as i32)).collect()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Weighted sample of `k` distinct indices without replacement, weight
/// `exp(tilt * z_i)` (exponential-key method).
fn tilted_subset(rng: &mut ChaCha8Rng, z: &[f64], tilt: f64, k: usize) -> Vec<usize> {
    let keys: Vec<f64> = z
        .iter()
        .map(|&zi| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            u.ln() / (tilt * zi).exp()
        })
        .collect();
    let scores = ScoreVector::new("key", keys);
    select_top(&scores, Amount::Count(k)).expect("k within range").indices().to_vec()
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let (m, s) = (mean(x), std_dev(x));
    x.iter().map(|v| (v - m) / s).collect()
}

// ---------------------------------------------------------------- lemma1

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Params {
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub subset_size: usize,
    pub subsets: usize,
    pub noise: f64,
    pub eta: f64,
    pub rho: f64,
    pub test_n: usize,
    pub test_decay: f64,
    pub max_tilt: f64,
    pub seed: u64,
}

impl Default for Lemma1Params {
    fn default() -> Self {
        Lemma1Params {
            d: 32,
            r: 8,
            n: 2000,
            subset_size: 500,
            subsets: 50,
            noise: 1.0 / 32f64.sqrt(),
            eta: 0.5,
            rho: 1.0,
            test_n: 20_000,
            test_decay: 0.7,
            max_tilt: 1.0,
            seed: 7,
        }
    }
}

/// Correlates the target-alignment trace of random subsets with the test loss
/// of heads trained on them.
pub fn run_lemma1(p: &Lemma1Params) -> Result<ExperimentReport> {
    if p.subset_size < 2 || p.subset_size > p.n || p.subsets < 3 {
        return Err(Error::InvalidParameter("lemma1 needs 2 <= subset_size <= n and at least 3 subsets".into()));
    }
    let mut cfg = WorldConfig::new(p.d, p.r, p.n, p.seed).with_noise(p.noise);
    cfg.eta = p.eta;
    let world = generate_world(&cfg)?;
    let mut test_cfg = cfg.clone();
    test_cfg.latent_scale = decaying_scale(p.r, p.test_decay);
    let test = world.sample_with(&test_cfg, p.test_n, 2)?;
    let sigma_t = empirical_cross_cov(&test.z_v, &test.z_l)?;
    let test_pairs = test.pairs();

    let align: Vec<f64> = (0..p.n).map(|i| (world.train.z_v.row(i) * &sigma_t * world.train.z_l.row(i).transpose())[(0, 0)]).collect();
    let align_std = standardize(&align);

    let rows: Vec<ExperimentRow> = (0..p.subsets)
        .into_par_iter()
        .map(|j| -> Result<ExperimentRow> {
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(p.seed, j as u64));
            let tilt = p.max_tilt * (2.0 * rng.random::<f64>() - 1.0);
            let subset = tilted_subset(&mut rng, &align_std, tilt, p.subset_size);
            let s = world.train.subset(&subset);
            let sigma_s = empirical_cross_cov(&s.z_v, &s.z_l)?;
            let head = closed_form_train(&s.pairs(), p.rho, p.r)?;
            let eps = measure_teacher_error(&world.g_v, &world.g_l, &world.train, &subset)?;
            Ok(ExperimentRow {
                seed: p.seed,
                n: p.n,
                d: p.d,
                r: p.r,
                subset_id: j,
                trace_term: Some((&sigma_t * sigma_s).trace()),
                test_loss_gap: Some(test_loss_gap(&head.m, &test_pairs)?),
                test_loss_self: Some(test_loss_self(&head.m, &test_pairs)),
                eps_v: Some(eps.eps_v),
                eps_l: Some(eps.eps_l),
                eps_vl: Some(eps.eps_vl),
                extra: vec![format!("{tilt:?}")],
            })
        })
        .collect::<Result<_>>()?;

    let trace: Vec<f64> = rows.iter().map(|r| r.trace_term.unwrap()).collect();
    let gap: Vec<f64> = rows.iter().map(|r| r.test_loss_gap.unwrap()).collect();
    let rho_s = spearman(&trace, &gap);
    let checks = vec![Check::new(
        "trace_vs_test_loss_spearman",
        rho_s <= -0.9,
        format!("Spearman(trace term, test loss gap) = {rho_s:.4}, required <= -0.9"),
    )];
    Ok(ExperimentReport {
        name: "lemma1".into(),
        params: params([
            ("d", p.d.to_string()),
            ("r", p.r.to_string()),
            ("n", p.n.to_string()),
            ("subset_size", p.subset_size.to_string()),
            ("subsets", p.subsets.to_string()),
            ("noise", format!("{:?}", p.noise)),
            ("eta", format!("{:?}", p.eta)),
            ("rho", format!("{:?}", p.rho)),
            ("test_n", p.test_n.to_string()),
            ("test_decay", format!("{:?}", p.test_decay)),
            ("max_tilt", format!("{:?}", p.max_tilt)),
            ("seed", p.seed.to_string()),
        ]),
        extra_columns: vec!["tilt".into()],
        rows,
        checks,
        summary: BTreeMap::from([("spearman".to_string(), rho_s)]),
    })
}

// ---------------------------------------------------------------- eym

#[derive(Debug, Clone, PartialEq)]
pub struct EymParams {
    pub instances: usize,
    pub max_d: usize,
    pub max_r: usize,
    pub max_subset: usize,
    pub competitors: usize,
    pub rho: f64,
    pub gd_tol: f64,
    pub gd_max_iter: usize,
    pub seed: u64,
}

impl Default for EymParams {
    fn default() -> Self {
        EymParams {
            instances: 50,
            max_d: 8,
            max_r: 3,
            max_subset: 10,
            competitors: 1000,
            rho: 1.0,
            gd_tol: 1e-9,
            gd_max_iter: 2_000_000,
            seed: 11,
        }
    }
}

/// `count` random rank-`r` products `A B^T` rescaled to Frobenius norm `target_norm`.
pub fn random_competitors(d: usize, r: usize, target_norm: f64, count: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let b = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let m = a * b.transpose();
            let norm = m.norm();
            m * (target_norm / norm)
        })
        .collect()
}

/// Closed-form head against random rank-`r` competitors and a descent minimizer.
pub fn run_eym(p: &EymParams) -> Result<ExperimentReport> {
    if p.max_d < 2 || p.max_r < 1 || p.max_subset < 3 {
        return Err(Error::InvalidParameter("eym needs max_d >= 2, max_r >= 1, max_subset >= 3".into()));
    }
    let rows: Vec<(ExperimentRow, bool, f64)> = (0..p.instances)
        .into_par_iter()
        .map(|i| -> Result<(ExperimentRow, bool, f64)> {
            let seed = child_seed(p.seed, i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = rng.random_range(2..=p.max_d);
            let r = rng.random_range(1..=p.max_r.min(d - 1).max(1));
            let size = rng.random_range((r + 2).min(p.max_subset)..=p.max_subset);
            let world = generate_world(&WorldConfig::new(d, r, size, seed))?;
            let pairs = world.train.pairs();
            let head = closed_form_train(&pairs, p.rho, r)?;
            let loss = evaluate_train_loss(&head.m, &pairs, p.rho)?;
            let norm = head.m.norm();
            let comps = random_competitors(d, r, if norm > 0.0 { norm } else { 1.0 }, p.competitors, seed ^ 0xc0);
            let best_comp = comps
                .iter()
                .map(|m| evaluate_train_loss(m, &pairs, p.rho))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let gd = minimize_loss(&pairs, p.rho, r, seed ^ 0x9d, p.gd_tol, p.gd_max_iter)?;
            let dist = (&gd.m - &head.m).norm();
            let row = ExperimentRow {
                seed,
                n: size,
                d,
                r,
                subset_id: i,
                extra: vec![format!("{loss:?}"), format!("{best_comp:?}"), format!("{:?}", gd.loss), format!("{dist:?}")],
                ..Default::default()
            };
            Ok((row, loss <= best_comp, dist))
        })
        .collect::<Result<_>>()?;

    let beaten = rows.iter().filter(|r| !r.1).count();
    let worst_dist = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let checks = vec![
        Check::new(
            "closed_form_beats_competitors",
            beaten == 0,
            format!("{beaten} of {} instances had a random competitor with lower loss", rows.len()),
        ),
        Check::new(
            "closed_form_matches_descent",
            worst_dist <= 1e-3,
            format!("max Frobenius distance to descent minimizer {worst_dist:.3e}, required <= 1e-3"),
        ),
    ];
    Ok(ExperimentReport {
        name: "eym".into(),
        params: params([
            ("instances", p.instances.to_string()),
            ("max_d", p.max_d.to_string()),
            ("max_r", p.max_r.to_string()),
            ("max_subset", p.max_subset.to_string()),
            ("competitors", p.competitors.to_string()),
            ("rho", format!("{:?}", p.rho)),
            ("gd_tol", format!("{:?}", p.gd_tol)),
            ("gd_max_iter", p.gd_max_iter.to_string()),
            ("seed", p.seed.to_string()),
        ]),
        extra_columns: vec!["train_loss".into(), "best_competitor_loss".into(), "descent_loss".into(), "descent_distance".into()],
        rows: rows.into_iter().map(|r| r.0).collect(),
        checks,
        summary: BTreeMap::from([("max_descent_distance".to_string(), worst_dist), ("instances_beaten".to_string(), beaten as f64)]),
    })
}

// ---------------------------------------------------------------- testloss

#[derive(Debug, Clone, PartialEq)]
pub struct TestLossParams {
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub rho: f64,
    pub seed: u64,
}

impl Default for TestLossParams {
    fn default() -> Self {
        TestLossParams { d: 16, r: 4, n: 2000, sizes: vec![100, 1000, 10_000], replicates: 40, rho: 1.0, seed: 3 }
    }
}

/// Disagreement between the all-pairs and self-pair test-loss estimators as
/// the test sample grows. Each replicate draws the two estimators' samples
/// independently, so the difference measures estimator error around the
/// common population value.
pub fn run_testloss(p: &TestLossParams) -> Result<ExperimentReport> {
    if p.sizes.len() < 2 || p.sizes.iter().any(|&m| m < 2) || p.replicates < 1 {
        return Err(Error::InvalidParameter("testloss needs at least two sizes >= 2 and one replicate".into()));
    }
    let world = generate_world(&WorldConfig::new(p.d, p.r, p.n, p.seed))?;
    let head = closed_form_train(&world.train.pairs(), p.rho, p.r)?;
    let jobs: Vec<(usize, usize)> = p.sizes.iter().enumerate().flat_map(|(si, _)| (0..p.replicates).map(move |k| (si, k))).collect();
    let rows: Vec<ExperimentRow> = jobs
        .par_iter()
        .map(|&(si, k)| -> Result<ExperimentRow> {
            let m = p.sizes[si];
            let id = (si * p.replicates + k) as u64;
            let a = world.sample(m, 1000 + 2 * id)?.pairs();
            let b = world.sample(m, 1001 + 2 * id)?.pairs();
            let gap = test_loss_gap(&head.m, &a)?;
            let selfl = test_loss_self(&head.m, &b);
            Ok(ExperimentRow {
                seed: p.seed,
                n: m,
                d: p.d,
                r: p.r,
                subset_id: id as usize,
                test_loss_gap: Some(gap),
                test_loss_self: Some(selfl),
                extra: vec![format!("{:?}", (gap - selfl).abs())],
                ..Default::default()
            })
        })
        .collect::<Result<_>>()?;

    let sizes: Vec<f64> = p.sizes.iter().map(|&m| m as f64).collect();
    let rms: Vec<f64> = p
        .sizes
        .iter()
        .map(|&m| {
            let e: Vec<f64> =
                rows.iter().filter(|r| r.n == m).map(|r| (r.test_loss_gap.unwrap() - r.test_loss_self.unwrap()).powi(2)).collect();
            mean(&e).sqrt()
        })
        .collect();
    let slope = log_log_slope(&sizes, &rms);
    let mut summary = BTreeMap::from([("slope".to_string(), slope)]);
    for (m, e) in p.sizes.iter().zip(&rms) {
        summary.insert(format!("rms_abs_diff_m{m}"), *e);
    }
    let checks = vec![Check::new(
        "estimator_difference_rate",
        (slope + 0.5).abs() <= 0.15,
        format!("log-log slope of |gap - self| vs m = {slope:.4}, required -0.5 +/- 0.15"),
    )];
    Ok(ExperimentReport {
        name: "testloss".into(),
        params: params([
            ("d", p.d.to_string()),
            ("r", p.r.to_string()),
            ("n", p.n.to_string()),
            ("sizes", p.sizes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";")),
            ("replicates", p.replicates.to_string()),
            ("rho", format!("{:?}", p.rho)),
            ("seed", p.seed.to_string()),
        ]),
        extra_columns: vec!["abs_diff".into()],
        rows,
        checks,
        summary,
    })
}

// ---------------------------------------------------------------- theorem-main

#[derive(Debug, Clone, PartialEq)]
pub struct TheoremMainParams {
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub select: usize,
    pub trials: usize,
    /// Observation noise seen by both the teacher and the student.
    pub noise: f64,
    /// Language-side observation noise (defaults to `noise`).
    pub noise_l: f64,
    /// Teacher-side embedding noise per modality.
    pub teacher_noise_v: f64,
    pub teacher_noise_l: f64,
    pub eta_low: f64,
    pub eta_high: f64,
    pub rho: f64,
    pub test_n: usize,
    pub test_decay: f64,
    pub seed: u64,
}

impl Default for TheoremMainParams {
    fn default() -> Self {
        TheoremMainParams {
            d: 16,
            r: 4,
            n: 1000,
            select: 300,
            trials: 50,
            noise: 0.05,
            noise_l: 0.05,
            teacher_noise_v: 0.05,
            teacher_noise_l: 0.5,
            eta_low: 0.1,
            eta_high: 2.0,
            rho: 1.0,
            test_n: 20_000,
            test_decay: 0.5,
            seed: 5,
        }
    }
}

struct TrialOutcome {
    vision_only: f64,
    vision_language: f64,
    eps: [f64; 3],
}

fn noisy(x: DMatrix<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let (rows, cols) = x.shape();
    x + DMatrix::from_fn(rows, cols, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

fn surrogate_trial(p: &TheoremMainParams, eta: f64, seed: u64) -> Result<TrialOutcome> {
    let mut cfg = WorldConfig::new(p.d, p.r, p.n, seed).with_noise(p.noise);
    cfg.noise_l = p.noise_l;
    cfg.eta = eta;
    let world = generate_world(&cfg)?;
    let mut test_cfg = cfg.clone();
    test_cfg.latent_scale = decaying_scale(p.r, p.test_decay);
    let test = world.sample_with(&test_cfg, p.test_n, 2)?;
    let sigma_bar = symmetrize(&empirical_cross_cov(&test.z_v, &test.z_l)?);
    let test_pairs = test.pairs();
    let train = &world.train;

    // The teacher inverts the true maps, then adds its own per-modality error.
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 0x7eac));
    let u = noisy(&train.x_v * &world.g_v, p.teacher_noise_v, &mut rng);
    let w = noisy(&train.x_l * &world.g_l, p.teacher_noise_l, &mut rng);

    let pick = |values: Vec<f64>| -> Result<Vec<usize>> {
        Ok(select_top(&ScoreVector::new("surrogate", values), Amount::Count(p.select))?.indices().to_vec())
    };
    let evaluate = |subset: &[usize]| -> Result<f64> {
        let head = closed_form_train(&train.subset(subset).pairs(), p.rho, p.r)?;
        test_loss_gap(&head.m, &test_pairs)
    };
    let s_vo = pick(vision_only_surrogate(&u, &sigma_bar))?;
    let s_vl = pick(vision_language_surrogate(&u, &w, &sigma_bar))?;
    let eps = embedding_teacher_error(&u, &w, &train.z_v, &train.z_l)?;
    Ok(TrialOutcome { vision_only: evaluate(&s_vo)?, vision_language: evaluate(&s_vl)?, eps: [eps.eps_v, eps.eps_l, eps.eps_vl] })
}

/// Vision-only versus vision+language selection surrogates under a noisy
/// language teacher, at low and high latent misalignment.
pub fn run_theorem_main(p: &TheoremMainParams) -> Result<ExperimentReport> {
    if p.select < 2 || p.select > p.n || p.trials < 1 {
        return Err(Error::InvalidParameter("theorem-main needs 2 <= select <= n and at least one trial".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..p.trials).flat_map(|t| [(t, 0), (t, 1)]).collect();
    let outcomes: Vec<TrialOutcome> = jobs
        .par_iter()
        .map(|&(t, regime)| {
            let eta = if regime == 0 { p.eta_low } else { p.eta_high };
            surrogate_trial(p, eta, child_seed(p.seed, t as u64))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let (mut low_wins, mut high_reversals) = (0, 0);
    for (&(t, regime), o) in jobs.iter().zip(&outcomes) {
        if regime == 0 && o.vision_only <= o.vision_language {
            low_wins += 1;
        }
        if regime == 1 && o.vision_language < o.vision_only {
            high_reversals += 1;
        }
        for (kind, value) in [("vision_only", o.vision_only), ("vision_language", o.vision_language)] {
            rows.push(ExperimentRow {
                seed: child_seed(p.seed, t as u64),
                n: p.n,
                d: p.d,
                r: p.r,
                subset_id: rows.len(),
                test_loss_gap: Some(value),
                eps_v: Some(o.eps[0]),
                eps_l: Some(o.eps[1]),
                eps_vl: Some(o.eps[2]),
                extra: vec![t.to_string(), if regime == 0 { "low_eta" } else { "high_eta" }.into(), kind.into()],
                ..Default::default()
            });
        }
    }
    let need_low = (p.trials * 9).div_ceil(10);
    let checks = vec![
        Check::new(
            "vision_only_wins_low_misalignment",
            low_wins >= need_low,
            format!("vision-only <= vision+language in {low_wins}/{} trials, required >= {need_low}", p.trials),
        ),
        Check::new(
            "ordering_reverses_high_misalignment",
            2 * high_reversals > p.trials,
            format!("vision+language < vision-only in {high_reversals}/{} trials, required a majority", p.trials),
        ),
    ];
    Ok(ExperimentReport {
        name: "theorem-main".into(),
        params: params([
            ("d", p.d.to_string()),
            ("r", p.r.to_string()),
            ("n", p.n.to_string()),
            ("select", p.select.to_string()),
            ("trials", p.trials.to_string()),
            ("noise", format!("{:?}", p.noise)),
            ("noise_l", format!("{:?}", p.noise_l)),
            ("teacher_noise_v", format!("{:?}", p.teacher_noise_v)),
            ("teacher_noise_l", format!("{:?}", p.teacher_noise_l)),
            ("eta_low", format!("{:?}", p.eta_low)),
            ("eta_high", format!("{:?}", p.eta_high)),
            ("rho", format!("{:?}", p.rho)),
            ("test_n", p.test_n.to_string()),
            ("test_decay", format!("{:?}", p.test_decay)),
            ("seed", p.seed.to_string()),
        ]),
        extra_columns: vec!["trial".into(), "regime".into(), "surrogate".into()],
        rows,
        checks,
        summary: BTreeMap::from([
            ("low_eta_vision_only_wins".to_string(), low_wins as f64),
            ("high_eta_reversals".to_string(), high_reversals as f64),
        ]),
    })
}

// ---------------------------------------------------------------- noise-decomp

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDecompParams {
    pub d: usize,
    pub r: usize,
    pub subset_size: usize,
    pub subsets: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for NoiseDecompParams {
    fn default() -> Self {
        NoiseDecompParams { d: 4, r: 2, subset_size: 50, subsets: 200, noise: 0.5, seed: 13 }
    }
}

/// Per-entry Monte-Carlo mean and standard error of a list of matrices.
pub fn entrywise_mean_se(mats: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let (rows, cols) = mats[0].shape();
    let k = mats.len() as f64;
    let mut m = DMatrix::zeros(rows, cols);
    let mut se = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let x: Vec<f64> = mats.iter().map(|a| a[(i, j)]).collect();
            m[(i, j)] = mean(&x);
            se[(i, j)] = std_dev(&x) / k.sqrt();
        }
    }
    (m, se)
}

/// Splits `Gamma` into signal and noise terms on independently drawn worlds
/// and checks the split and the zero mean of the noise terms.
pub fn run_noise_decomp(p: &NoiseDecompParams) -> Result<ExperimentReport> {
    if p.subsets < 2 {
        return Err(Error::InvalidParameter("noise-decomp needs at least two subsets".into()));
    }
    let draws: Vec<([DMatrix<f64>; 5], f64)> = (0..p.subsets)
        .into_par_iter()
        .map(|j| -> Result<([DMatrix<f64>; 5], f64)> {
            let world = generate_world(&WorldConfig::new(p.d, p.r, p.subset_size, child_seed(p.seed, j as u64)).with_noise(p.noise))?;
            let all: Vec<usize> = (0..p.subset_size).collect();
            let parts = decompose_gamma_noise(&world, &world.train, &all)?;
            let sum = parts.iter().fold(DMatrix::zeros(p.d, p.d), |acc, x| acc + x);
            let gamma = super::head::compute_gamma(&world.train.pairs())?;
            Ok((parts, (sum - gamma).abs().max()))
        })
        .collect::<Result<_>>()?;

    let recon = draws.iter().map(|d| d.1).fold(0.0, f64::max);
    let mut checks =
        vec![Check::new("terms_sum_to_gamma", recon <= 1e-10, format!("max |sum P_i - Gamma| = {recon:.3e}, required <= 1e-10"))];
    let mut summary = BTreeMap::from([("max_reconstruction_error".to_string(), recon)]);
    for i in 1..5 {
        let mats: Vec<DMatrix<f64>> = draws.iter().map(|d| d.0[i].clone()).collect();
        let (m, se) = entrywise_mean_se(&mats);
        let worst = m.zip_map(&se, |a, s| a.abs() / s).max();
        summary.insert(format!("p{i}_max_abs_mean_over_se"), worst);
        checks.push(Check::new(
            &format!("p{i}_zero_mean"),
            worst <= 3.0,
            format!("max entrywise |mean|/SE of P{i} over {} draws = {worst:.3}, required <= 3", p.subsets),
        ));
    }
    let rows = draws
        .iter()
        .enumerate()
        .map(|(j, (parts, err))| {
            let mut extra = vec![format!("{err:?}")];
            extra.extend(parts[1..].iter().map(|x| format!("{:?}", x.norm())));
            ExperimentRow {
                seed: child_seed(p.seed, j as u64),
                n: p.subset_size,
                d: p.d,
                r: p.r,
                subset_id: j,
                extra,
                ..Default::default()
            }
        })
        .collect();
    Ok(ExperimentReport {
        name: "noise-decomp".into(),
        params: params([
            ("d", p.d.to_string()),
            ("r", p.r.to_string()),
            ("subset_size", p.subset_size.to_string()),
            ("subsets", p.subsets.to_string()),
            ("noise", format!("{:?}", p.noise)),
            ("seed", p.seed.to_string()),
        ]),
        extra_columns: vec!["recon_error".into(), "p1_fro".into(), "p2_fro".into(), "p3_fro".into(), "p4_fro".into()],
        rows,
        checks,
        summary,
    })
}
