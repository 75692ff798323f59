use curate::scores::ScoreVector;
use curate::select::{select_top, Amount};
use curate::theory::descent::minimize_loss;
use curate::theory::experiments::{entrywise_mean_se, random_competitors, run_theorem_main, TheoremMainParams};
use curate::theory::svd::{low_rank, svd};
use curate::theory::{
    brute_force_best_subset, closed_form_train, compute_gamma, decompose_gamma_noise, evaluate_train_loss, generate_world,
    measure_teacher_error, test_loss_gap, test_loss_self, truncated_svd, Pairs, WorldConfig,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_pairs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Pairs {
    Pairs::new(random_matrix(rng, n, d), random_matrix(rng, n, d)).unwrap()
}

#[test]
fn singular_values_match_reference_decomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (rows, cols) in [(8, 8), (9, 5), (4, 7)] {
        let a = random_matrix(&mut rng, rows, cols);
        let ours = svd(&a).unwrap();
        let mut reference: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for (s, r) in ours.s.iter().zip(&reference) {
            assert!((s - r).abs() < 1e-12, "{s} vs {r}");
        }
        assert!((ours.reconstruct() - &a).abs().max() < 1e-12);
        let k = rows.min(cols);
        assert!((ours.u.transpose() * &ours.u - DMatrix::identity(k, k)).abs().max() < 1e-12);
        assert!((ours.v.transpose() * &ours.v - DMatrix::identity(k, k)).abs().max() < 1e-12);
    }
}

#[test]
fn truncation_beats_random_rank_three_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random_matrix(&mut rng, 8, 8);
    let best = (&a - low_rank(&a, 3).unwrap()).norm();
    let t = truncated_svd(&a, 3).unwrap();
    let tail: f64 = svd(&a).unwrap().s[3..].iter().map(|s| s * s).sum::<f64>().sqrt();
    assert!((best - tail).abs() < 1e-12);
    assert_eq!(t.s.len(), 3);
    for c in random_competitors(8, 3, a.norm(), 1000, 9) {
        assert!(best <= (&a - c).norm());
    }
}

#[test]
fn gamma_matches_pairwise_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_pairs(&mut rng, 6, 4);
    let n = 6;
    let mut oracle = DMatrix::zeros(4, 4);
    for i in 0..n {
        for j in 0..n {
            let vi = p.v.row(i).transpose();
            oracle += &vi * p.l.row(i) - &vi * p.l.row(j);
        }
    }
    oracle /= (n * (n - 1)) as f64;
    assert!((compute_gamma(&p).unwrap() - oracle).abs().max() < 1e-14);
}

#[test]
fn train_loss_matches_pairwise_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = random_pairs(&mut rng, 7, 3);
    let m = random_matrix(&mut rng, 3, 3);
    let s = |i: usize, j: usize| (p.v.row(i) * &m * p.l.row(j).transpose())[(0, 0)];
    let n = 7.0;
    let mut sum = 0.0;
    for i in 0..7 {
        for j in 0..7 {
            sum += s(i, j) - s(i, i);
        }
    }
    let rho = 0.8;
    let oracle = sum / (n * (n - 1.0)) + 0.5 * rho * n / (n - 1.0) * m.norm_squared();
    assert!((evaluate_train_loss(&m, &p, rho).unwrap() - oracle).abs() < 1e-13);
}

#[test]
fn head_scales_inversely_with_rho() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_pairs(&mut rng, 12, 5);
    let a = closed_form_train(&p, 0.7, 2).unwrap();
    let b = closed_form_train(&p, 1.4, 2).unwrap();
    assert!((b.m * 2.0 - a.m).abs().max() < 1e-12);
}

#[test]
fn descent_finds_the_closed_form_head() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_pairs(&mut rng, 4, 3);
    let head = closed_form_train(&p, 1.0, 2).unwrap();
    let gd = minimize_loss(&p, 1.0, 2, 17, 1e-10, 2_000_000).unwrap();
    assert!((&gd.m - &head.m).norm() < 1e-3, "distance {}", (&gd.m - &head.m).norm());
    assert!(evaluate_train_loss(&head.m, &p, 1.0).unwrap() <= gd.loss + 1e-12);
}

#[test]
fn world_latents_are_decorrelated() {
    let w = generate_world(&WorldConfig::new(6, 3, 20_000, 8)).unwrap();
    let cov = w.train.z_v.transpose() * &w.train.z_l / 20_000.0;
    for i in 0..3 {
        assert!((cov[(i, i)] - 1.0 / 3.0).abs() < 0.03, "{cov}");
        for j in (0..3).filter(|&j| j != i) {
            assert!(cov[(i, j)].abs() < 0.03, "{cov}");
        }
    }
    assert!((w.g_v.transpose() * &w.g_v - DMatrix::identity(3, 3)).abs().max() < 1e-12);
}

#[test]
fn teacher_error_matches_literal_sums() {
    let w = generate_world(&WorldConfig::new(5, 2, 30, 9)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let gbar_v = &w.g_v + random_matrix(&mut rng, 5, 2) * 0.1;
    let gbar_l = &w.g_l + random_matrix(&mut rng, 5, 2) * 0.3;
    let subset = [1, 4, 7, 11, 20];
    let e = measure_teacher_error(&gbar_v, &gbar_l, &w.train, &subset).unwrap();
    let nuclear = |m: DMatrix<f64>| m.svd(false, false).singular_values.sum();
    let mut dv = DMatrix::zeros(2, 2);
    let mut dl = DMatrix::zeros(2, 2);
    let mut dvl = DMatrix::zeros(2, 2);
    for &i in &subset {
        let u = gbar_v.transpose() * w.train.x_v.row(i).transpose();
        let t = gbar_l.transpose() * w.train.x_l.row(i).transpose();
        let zv = w.train.z_v.row(i).transpose();
        let zl = w.train.z_l.row(i).transpose();
        dv += &u * u.transpose() - &zv * zv.transpose();
        dl += &t * t.transpose() - &zl * zl.transpose();
        dvl += &u * t.transpose() - &zv * zl.transpose();
    }
    assert!((e.eps_v - nuclear(dv) / 5.0).abs() < 1e-12);
    assert!((e.eps_l - nuclear(dl) / 5.0).abs() < 1e-12);
    assert!((e.eps_vl - nuclear(dvl) / 5.0).abs() < 1e-12);
}

#[test]
fn exhaustive_best_subset_agrees_with_top_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=12 {
        let a = random_matrix(&mut rng, n, 3);
        let b = random_matrix(&mut rng, n, 3);
        let t = random_matrix(&mut rng, 3, 1);
        let sigma = &t * t.transpose();
        let scores: Vec<f64> = (0..n).map(|i| (b.row(i) * &sigma * a.row(i).transpose())[(0, 0)]).collect();
        for k in 1..=n {
            let brute = brute_force_best_subset(&a, &b, k, &sigma).unwrap();
            let top = select_top(&ScoreVector::new("vas", scores.clone()), Amount::Count(k)).unwrap();
            assert_eq!(brute.indices(), top.indices(), "n={n} k={k}");
        }
    }
}

#[test]
fn shared_sample_estimators_differ_by_mean_cross_score() {
    let w = generate_world(&WorldConfig::new(6, 2, 200, 12)).unwrap();
    let head = closed_form_train(&w.train.pairs(), 1.0, 2).unwrap();
    let test = w.sample(500, 3).unwrap().pairs();
    let mv = test.v.row_mean();
    let ml = test.l.row_mean();
    let cross = (mv * &head.m * ml.transpose())[(0, 0)];
    let diff = test_loss_gap(&head.m, &test).unwrap() - test_loss_self(&head.m, &test);
    assert!((diff - cross).abs() < 1e-14);
}

#[test]
fn gap_of_identity_head_on_balanced_pairs() {
    let rows: Vec<f64> = (0..4)
        .flat_map(|k| {
            let mut e = vec![0.0; 4];
            e[k] = 1.0;
            let neg: Vec<f64> = e.iter().map(|x| -x).collect();
            [e, neg].concat()
        })
        .collect();
    let x = DMatrix::from_row_slice(8, 4, &rows);
    let p = Pairs::new(x.clone(), x).unwrap();
    assert!((test_loss_gap(&DMatrix::identity(4, 4), &p).unwrap() + 1.0).abs() < 1e-15);
}

#[test]
fn centering_term_is_biased_for_fixed_maps() {
    let cfg = WorldConfig::new(4, 2, 50, 21).with_noise(0.5);
    let w = generate_world(&cfg).unwrap();
    let all: Vec<usize> = (0..50).collect();
    let p4: Vec<DMatrix<f64>> =
        (0..400).map(|k| decompose_gamma_noise(&w, &w.sample(50, 10 + k).unwrap(), &all).unwrap()[4].clone()).collect();
    let (mean, se) = entrywise_mean_se(&p4);
    // E[P4] = -(1/(S-1)) G_v E[z_v z_l^T] G_l^T with E[z_v z_l^T] = I/r
    let expected = &w.g_v * w.g_l.transpose() * (-1.0 / (49.0 * 2.0));
    let z = (&mean - &expected).zip_map(&se, |a, s| a.abs() / s);
    assert!(z.max() < 4.0, "{z}");
    assert!(mean.zip_map(&se, |a, s| a.abs() / s).max() > 3.0);
}

#[test]
fn language_noise_on_student_data_favors_both_modalities() {
    let p = TheoremMainParams { noise_l: 0.5, teacher_noise_l: 0.05, trials: 10, ..Default::default() };
    let report = run_theorem_main(&p).unwrap();
    assert_eq!(report.summary["low_eta_vision_only_wins"], 0.0);
    assert!(!report.passed());
}
